//! Feature-union merge of several network datasets and the two fine-tuning
//! strategies for a pre-trained recurrent model.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{zscore_fit, Dataset, Split, SplitAssignment, WindowSample};
use crate::ingest::{FeatureSchema, IngestError};
use crate::rits::{train_brits, Brits, FitOptions, History, RitsError, SeqSet, TrainSchedule};

pub const PRETRAIN_LEARNING_RATE: f64 = 1e-3;
pub const FINETUNE_LEARNING_RATE: f64 = 5e-4;

#[derive(Debug, Error, PartialEq)]
pub enum TransferError {
    #[error("need at least two datasets, got {0}")]
    TooFewDatasets(usize),
    #[error("network {0} appears in more than one dataset")]
    DuplicateNetwork(String),
    #[error("datasets use different window shapes")]
    WindowMismatch,
    #[error("network {0} has no samples in the requested split")]
    EmptySubset(String),
    #[error("sample width {found} does not match schema width {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Schema(#[from] IngestError),
    #[error(transparent)]
    Rits(#[from] RitsError),
}

/// Where each source column lands in the union schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub network_id: String,
    pub source: FeatureSchema,
    pub to_union: Vec<usize>,
}

impl ColumnMap {
    pub fn new(network_id: &str, source: &FeatureSchema, union: &FeatureSchema) -> Self {
        let mut to_union: Vec<usize> = source.numeric().iter().map(|n| union.numeric_index(n).expect("union covers source")).collect();
        to_union.extend(source.facilities().iter().map(|f| union.facility_column(f).expect("union covers source")));
        Self { network_id: network_id.into(), source: source.clone(), to_union }
    }

    /// Rewrites a source sample onto the union columns. Numeric columns the
    /// source lacks are absent; one-hot columns for foreign facilities are
    /// present and 0.
    pub fn project(&self, sample: &WindowSample, union: &FeatureSchema) -> Result<WindowSample, TransferError> {
        let (src_w, dst_w) = (self.source.n_columns(), union.n_columns());
        if sample.n_columns != src_w {
            return Err(TransferError::WidthMismatch { expected: src_w, found: sample.n_columns });
        }
        let rows = sample.rows();
        let mut values = alloc::vec![0.0; rows * dst_w];
        let mut observed = alloc::vec![false; rows * dst_w];
        for t in 0..rows {
            for c in union.n_numeric()..dst_w {
                observed[t * dst_w + c] = true;
            }
            for (s, &d) in self.to_union.iter().enumerate() {
                values[t * dst_w + d] = sample.values[t * src_w + s];
                observed[t * dst_w + d] = sample.observed[t * src_w + s];
            }
        }
        Ok(WindowSample { n_columns: dst_w, values, observed, ..sample.clone() })
    }

    /// Inverse of [`ColumnMap::project`] for samples of this network.
    pub fn project_back(&self, sample: &WindowSample) -> WindowSample {
        let (src_w, dst_w) = (self.source.n_columns(), sample.n_columns);
        let rows = sample.rows();
        let mut values = alloc::vec![0.0; rows * src_w];
        let mut observed = alloc::vec![false; rows * src_w];
        for t in 0..rows {
            for (s, &d) in self.to_union.iter().enumerate() {
                values[t * src_w + s] = sample.values[t * dst_w + d];
                observed[t * src_w + s] = sample.observed[t * dst_w + d];
            }
        }
        WindowSample { n_columns: src_w, values, observed, ..sample.clone() }
    }
}

/// Per-network sample counts of a merged dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkCounts {
    pub network_id: String,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

/// Union-schema merge of several networks. Each sample keeps its split tag
/// and its `network_id`, which is metadata only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MegaDataset {
    pub dataset: Dataset,
    pub maps: Vec<ColumnMap>,
}

impl MegaDataset {
    pub fn network_ids(&self) -> &[String] {
        &self.dataset.network_ids
    }

    pub fn map(&self, network: &str) -> Option<&ColumnMap> {
        self.maps.iter().find(|m| m.network_id == network)
    }

    pub fn network_indices(&self, network: &str, split: Split) -> Vec<usize> {
        let d = &self.dataset;
        (0..d.samples.len()).filter(|&i| d.split.tags[i] == split && d.samples[i].network_id == network).collect()
    }

    pub fn counts(&self) -> Vec<NetworkCounts> {
        self.network_ids()
            .iter()
            .map(|n| NetworkCounts {
                network_id: n.clone(),
                train: self.network_indices(n, Split::Train).len(),
                validation: self.network_indices(n, Split::Validation).len(),
                test: self.network_indices(n, Split::Test).len(),
            })
            .collect()
    }

    /// Normalized sequences of one network's split, ready for the recurrent
    /// model.
    pub fn network_set(&self, network: &str, split: Split) -> Result<SeqSet, TransferError> {
        let idx = self.network_indices(network, split);
        if idx.is_empty() {
            return Err(TransferError::EmptySubset(network.into()));
        }
        Ok(SeqSet::from_samples(idx.iter().map(|&i| &self.dataset.samples[i]), &self.dataset.norm)?)
    }
}

/// Merges datasets of distinct networks onto the union of their schemas and
/// refits normalization on the merged training split.
pub fn build_mega_dataset(datasets: &[Dataset]) -> Result<MegaDataset, TransferError> {
    if datasets.len() < 2 {
        return Err(TransferError::TooFewDatasets(datasets.len()));
    }
    let mut seen = BTreeSet::new();
    for d in datasets {
        for n in &d.network_ids {
            if !seen.insert(n.clone()) {
                return Err(TransferError::DuplicateNetwork(n.clone()));
            }
        }
        if d.spec != datasets[0].spec {
            return Err(TransferError::WindowMismatch);
        }
    }
    let union = FeatureSchema::union(datasets.iter().map(|d| &d.schema))?;
    let mut maps = Vec::new();
    let mut samples = Vec::new();
    let mut tags = Vec::new();
    for d in datasets {
        let per_network: Vec<ColumnMap> = d.network_ids.iter().map(|n| ColumnMap::new(n, &d.schema, &union)).collect();
        for (s, &tag) in d.samples.iter().zip(&d.split.tags) {
            let map = per_network.iter().find(|m| m.network_id == s.network_id).unwrap_or(&per_network[0]);
            samples.push(map.project(s, &union)?);
            tags.push(tag);
        }
        maps.extend(per_network);
    }
    let split = SplitAssignment { tags, boundaries: None };
    let norm = zscore_fit(samples.iter().zip(&split.tags).filter(|(_, &t)| t == Split::Train).map(|(s, _)| s), &union);
    let network_ids = maps.iter().map(|m| m.network_id.clone()).collect();
    Ok(MegaDataset { dataset: Dataset { network_ids, schema: union, spec: datasets[0].spec, samples, split, norm }, maps })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneStrategy {
    ClassifierOnly,
    Entirety,
}

impl FinetuneStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            FinetuneStrategy::ClassifierOnly => "classifier_only",
            FinetuneStrategy::Entirety => "entirety",
        }
    }
}

/// Fine-tuning runs only full-loss epochs at the reduced learning rate,
/// with the base schedule's early stopping.
pub fn finetune_schedule(base: &TrainSchedule) -> TrainSchedule {
    TrainSchedule { imputation_epochs: 0, learning_rate: FINETUNE_LEARNING_RATE, ..base.clone() }
}

pub fn finetune_with(
    pretrained: &Brits,
    train: &SeqSet,
    valid: &SeqSet,
    schedule: &TrainSchedule,
    options: &FitOptions<'_>,
) -> Result<(Brits, History), TransferError> {
    let mut model = pretrained.clone();
    let history = train_brits(&mut model, train, valid, &finetune_schedule(schedule), options)?;
    Ok((model, history))
}

/// Retrains only the classifier heads; every other block stays bit-equal.
pub fn finetune_classifier_only(
    pretrained: &Brits,
    train: &SeqSet,
    valid: &SeqSet,
    schedule: &TrainSchedule,
) -> Result<(Brits, History), TransferError> {
    finetune_with(pretrained, train, valid, schedule, &FitOptions::classifier_only())
}

pub fn finetune_entirety(
    pretrained: &Brits,
    train: &SeqSet,
    valid: &SeqSet,
    schedule: &TrainSchedule,
) -> Result<(Brits, History), TransferError> {
    finetune_with(pretrained, train, valid, schedule, &FitOptions::all())
}

pub fn finetune(
    strategy: FinetuneStrategy,
    pretrained: &Brits,
    train: &SeqSet,
    valid: &SeqSet,
    schedule: &TrainSchedule,
) -> Result<(Brits, History), TransferError> {
    match strategy {
        FinetuneStrategy::ClassifierOnly => finetune_classifier_only(pretrained, train, valid, schedule),
        FinetuneStrategy::Entirety => finetune_entirety(pretrained, train, valid, schedule),
    }
}
