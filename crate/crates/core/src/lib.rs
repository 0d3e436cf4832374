//! Imminent loss-of-signal (ILOS) forecasting from daily port telemetry.
//!
//! This crate is the allocation-only algorithmic core. It has no IO: records
//! come in as values, models and metrics come out as values. File formats,
//! the CLI and the artifact workspace live in the `ilos` crate.
//!
//! Pipeline, in the order data flows through it:
//!
//! 1. [`ingest`]: shared feature schema, max-merge of facility rows into
//!    gap-free port series.
//! 2. [`dataset`]: 14-day sliding windows, future-scan labels, defect filter,
//!    chronological split, z-score statistics.
//! 3. [`missing`]: masks, time gaps, zero/median imputation, flattening.
//! 4. [`trees`]: random forest and sparsity-aware gradient boosting.
//! 5. [`rits`]: recurrent imputation network (one direction and the
//!    bidirectional pair) with hand-written backpropagation and Adam.
//! 6. [`transfer`]: feature-union mega-dataset and fine-tuning.
//! 7. [`eval`]: precision/recall curves and the recall-truncated PR-AUC.
//! 8. [`synth`]: seeded synthetic telemetry with degradation precursors.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod dataset;
pub mod eval;
pub mod ingest;
pub mod missing;
pub mod rits;
pub mod synth;
pub mod transfer;
pub mod trees;

mod linalg;
mod math;

pub use dataset::{Dataset, NormStats, Split, SplitAssignment, WindowSample, WindowSpec};
pub use ingest::{Day, FeatureSchema, PmRecord, PortSeries};
