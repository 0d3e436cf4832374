//! Recurrent imputation network: one directional pass (temporal decay,
//! history and feature regressions, learned combination, LSTM cell and a
//! logistic head) and the bidirectional pair trained jointly.
//!
//! Tensors are laid out time-major: step `t` of a batch of `B` samples is
//! the row-major `B × F` block starting at `t · B · F`.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::EvalError;

mod brits;
mod cell;
mod data;
mod train;

pub use brits::{brits_forward, loss_and_grad, BritsOutput, Gradients, LossParts, LossWeights, BCE_LOGIT_CLAMP};
pub use cell::{rits_forward, RitsOutput};
pub use data::{Batch, SeqSet};
pub use train::{evaluate_losses, impute, predict, train_brits, EpochRecord, FitOptions, History, Phase, TrainSchedule};

pub const DEFAULT_HIDDEN: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum RitsError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("non-finite {0} input")]
    NonFiniteInput(&'static str),
    #[error("non-finite loss in epoch {epoch} ({phase})")]
    NonFiniteLoss { epoch: usize, phase: &'static str },
    #[error("no samples")]
    Empty,
    #[error("invalid schedule: {0}")]
    InvalidSchedule(&'static str),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Named parameter blocks of one direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Block {
    /// `H × F`, time gaps to hidden-state decay.
    DecayHiddenW,
    DecayHiddenB,
    /// `F`, per-feature input decay (diagonal).
    DecayInputW,
    DecayInputB,
    /// `F × H`, history regression.
    HistoryW,
    HistoryB,
    /// `F × F`, feature regression; the diagonal stays zero.
    FeatureW,
    FeatureB,
    /// `F × 2F`, combination weights over `[input decay; mask]`.
    CombineW,
    CombineB,
    /// `4H × 2F`, LSTM input weights over `[complement; mask]`, gates i, f, g, o.
    CellInputW,
    /// `4H × H`
    CellHiddenW,
    CellB,
    /// `H`
    ClassifierW,
    ClassifierB,
}

impl Block {
    pub const ALL: [Block; 15] = [
        Block::DecayHiddenW,
        Block::DecayHiddenB,
        Block::DecayInputW,
        Block::DecayInputB,
        Block::HistoryW,
        Block::HistoryB,
        Block::FeatureW,
        Block::FeatureB,
        Block::CombineW,
        Block::CombineB,
        Block::CellInputW,
        Block::CellHiddenW,
        Block::CellB,
        Block::ClassifierW,
        Block::ClassifierB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::DecayHiddenW => "decay_hidden_w",
            Block::DecayHiddenB => "decay_hidden_b",
            Block::DecayInputW => "decay_input_w",
            Block::DecayInputB => "decay_input_b",
            Block::HistoryW => "history_w",
            Block::HistoryB => "history_b",
            Block::FeatureW => "feature_w",
            Block::FeatureB => "feature_b",
            Block::CombineW => "combine_w",
            Block::CombineB => "combine_b",
            Block::CellInputW => "cell_input_w",
            Block::CellHiddenW => "cell_hidden_w",
            Block::CellB => "cell_b",
            Block::ClassifierW => "classifier_w",
            Block::ClassifierB => "classifier_b",
        }
    }

    pub fn from_name(name: &str) -> Option<Block> {
        Block::ALL.into_iter().find(|b| b.name() == name)
    }

    pub fn is_classifier(self) -> bool {
        matches!(self, Block::ClassifierW | Block::ClassifierB)
    }

    /// `(rows, cols)` for `F` features and hidden size `H`.
    pub fn shape(self, f: usize, h: usize) -> (usize, usize) {
        match self {
            Block::DecayHiddenW => (h, f),
            Block::DecayHiddenB => (1, h),
            Block::DecayInputW | Block::DecayInputB => (1, f),
            Block::HistoryW => (f, h),
            Block::HistoryB | Block::FeatureB | Block::CombineB => (1, f),
            Block::FeatureW => (f, f),
            Block::CombineW => (f, 2 * f),
            Block::CellInputW => (4 * h, 2 * f),
            Block::CellHiddenW => (4 * h, h),
            Block::CellB => (1, 4 * h),
            Block::ClassifierW => (1, h),
            Block::ClassifierB => (1, 1),
        }
    }
}

/// All blocks of one direction in one flat buffer, in [`Block::ALL`] order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RitsParams {
    pub n_features: usize,
    pub hidden: usize,
    pub data: Vec<f64>,
}

impl RitsParams {
    pub fn zeros(n_features: usize, hidden: usize) -> Self {
        let len = Block::ALL.iter().map(|b| {
            let (r, c) = b.shape(n_features, hidden);
            r * c
        });
        Self { n_features, hidden, data: vec![0.0; len.sum()] }
    }

    /// Uniform `±1/√fan_in` initialization (`±1/√H` for the LSTM) with the
    /// forget-gate bias set to 1.
    pub fn init(n_features: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::zeros(n_features, hidden);
        for b in Block::ALL {
            let fan_in = match b {
                Block::CellInputW | Block::CellHiddenW | Block::CellB => hidden,
                Block::DecayInputW | Block::DecayInputB => n_features,
                Block::DecayHiddenB => n_features,
                Block::HistoryB => hidden,
                Block::FeatureB => n_features,
                Block::CombineB => 2 * n_features,
                Block::ClassifierB => hidden,
                _ => b.shape(n_features, hidden).1,
            };
            let bound = 1.0 / crate::math::sqrt(fan_in.max(1) as f64);
            for w in p.block_mut(b) {
                *w = rng.random_range(-bound..bound);
            }
        }
        for w in &mut p.block_mut(Block::CellB)[hidden..2 * hidden] {
            *w = 1.0;
        }
        p.zero_feature_diagonal();
        p
    }

    pub fn range(&self, block: Block) -> core::ops::Range<usize> {
        let mut start = 0;
        for b in Block::ALL {
            let (r, c) = b.shape(self.n_features, self.hidden);
            if b == block {
                return start..start + r * c;
            }
            start += r * c;
        }
        unreachable!()
    }

    pub fn block(&self, block: Block) -> &[f64] {
        &self.data[self.range(block)]
    }

    pub fn block_mut(&mut self, block: Block) -> &mut [f64] {
        let r = self.range(block);
        &mut self.data[r]
    }

    pub fn zero_feature_diagonal(&mut self) {
        let f = self.n_features;
        let w = self.block_mut(Block::FeatureW);
        for d in 0..f {
            w[d * f + d] = 0.0;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn same_shape(&self, other: &RitsParams) -> bool {
        self.n_features == other.n_features && self.hidden == other.hidden
    }
}

/// Forward and backward directions plus the loss weighting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Brits {
    pub forward: RitsParams,
    pub backward: RitsParams,
    pub weights: LossWeights,
}

impl Brits {
    pub fn new(n_features: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let forward = RitsParams::init(n_features, hidden, &mut rng);
        let backward = RitsParams::init(n_features, hidden, &mut rng);
        Self { forward, backward, weights: LossWeights::default() }
    }

    pub fn n_features(&self) -> usize {
        self.forward.n_features
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden
    }

    pub fn directions(&self) -> [&RitsParams; 2] {
        [&self.forward, &self.backward]
    }

    pub fn is_consistent(&self) -> bool {
        self.forward.same_shape(&self.backward)
    }
}
