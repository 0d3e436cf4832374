//! Files, workspace and command-line pipeline around `ilos-core`.

pub mod config;
pub mod container;
pub mod error;
pub mod models;
pub mod pipeline;
pub mod report;
pub mod tables;
pub mod workspace;

pub use config::{ModelKind, Overrides, RunConfig};
pub use error::{Error, Result};
pub use pipeline::{run, Stage};
