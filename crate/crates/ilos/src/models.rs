//! Model families behind the CLI: input preparation, training on a dataset's
//! splits, scoring and model files.

use std::path::Path;

use ilos_core::dataset::{Dataset, NormStats, Split, WindowSample};
use ilos_core::eval::{truncated_pr_auc, EvalError};
use ilos_core::missing::{fit_medians, flatten_dense, flatten_sparse, impute_median, impute_zero, Medians};
use ilos_core::rits::{predict, train_brits, Brits, FitOptions, History, SeqSet};
use ilos_core::trees::{grid_search_trees, GridPoint, TreeEnsemble, TreeFamily, TreeInput};
use serde::{Deserialize, Serialize};

use crate::config::{ModelKind, RunConfig};
use crate::container;
use crate::error::{Error, Result};
use crate::workspace::{read_json, write_json};

/// A trained tree model as stored on disk (versioned JSON).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeModelFile {
    pub format_version: u32,
    pub kind: ModelKind,
    pub columns: Vec<String>,
    pub past_days: usize,
    pub medians: Option<Medians>,
    pub grid: Vec<GridPoint>,
    pub ensemble: TreeEnsemble,
}

pub const TREE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Tree(TreeModelFile),
    Brits(Brits),
}

impl Model {
    pub fn file_name(kind: ModelKind) -> String {
        if kind.is_tree() {
            format!("{}.json", kind.as_str())
        } else {
            format!("{}.ilos", kind.as_str())
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            Model::Tree(t) => write_json(path, t),
            Model::Brits(b) => container::save_brits(path, b),
        }
    }

    pub fn load(kind: ModelKind, path: &Path) -> Result<Model> {
        if kind.is_tree() {
            let t: TreeModelFile = read_json(path)?;
            if t.format_version != TREE_FORMAT_VERSION {
                return Err(Error::format(path, format!("unsupported tree model version {}", t.format_version)));
            }
            Ok(Model::Tree(t))
        } else {
            Ok(Model::Brits(container::load_brits(path)?))
        }
    }
}

/// Flattened rows for one tree family. Trees see raw values: forests get
/// zero- or median-imputed dense rows, boosted trees keep absent cells.
pub fn tree_input<'a>(kind: ModelKind, samples: impl IntoIterator<Item = &'a WindowSample>, medians: Option<&Medians>, width: usize) -> TreeInput {
    let mut input = TreeInput::new(width);
    for s in samples {
        match kind {
            ModelKind::RfZero => input.push_dense(&flatten_dense(&impute_zero(s))),
            ModelKind::RfMedian => input.push_dense(&flatten_dense(&impute_median(s, medians.expect("median model carries medians")))),
            ModelKind::Gbdt => input.push_sparse(&flatten_sparse(s)),
            ModelKind::Brits => unreachable!("not a tree model"),
        }
    }
    input
}

/// Grid-search metric. A validation split without positives scores 0 at
/// every point, so the smallest count wins.
fn grid_metric(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    match truncated_pr_auc(scores, labels) {
        Err(EvalError::NoPositives) => Ok(0.0),
        r => r,
    }
}

pub fn train_tree(kind: ModelKind, d: &Dataset, cfg: &RunConfig) -> Result<TreeModelFile> {
    let width = d.spec.past_days * d.schema.n_columns();
    let medians = (kind == ModelKind::RfMedian).then(|| fit_medians(d.split_samples(Split::Train), &d.schema));
    let train = tree_input(kind, d.split_samples(Split::Train), medians.as_ref(), width);
    let valid = tree_input(kind, d.split_samples(Split::Validation), medians.as_ref(), width);
    let (ty, vy) = (d.labels(&d.indices(Split::Train)), d.labels(&d.indices(Split::Validation)));
    let family = match kind {
        ModelKind::Gbdt => TreeFamily::Booster(cfg.booster_config()),
        _ => TreeFamily::Forest(cfg.forest_config()),
    };
    let (ensemble, grid) = grid_search_trees(&family, (&train, &ty), (&valid, &vy), &cfg.grid.counts(), grid_metric)?;
    Ok(TreeModelFile {
        format_version: TREE_FORMAT_VERSION,
        kind,
        columns: d.schema.column_names(),
        past_days: d.spec.past_days,
        medians,
        grid,
        ensemble,
    })
}

pub fn seq_set<'a>(samples: impl IntoIterator<Item = &'a WindowSample>, norm: &NormStats) -> Result<SeqSet> {
    Ok(SeqSet::from_samples(samples, norm)?)
}

pub fn train_brits_model(d: &Dataset, cfg: &RunConfig) -> Result<(Brits, History)> {
    let train = seq_set(d.split_samples(Split::Train), &d.norm)?;
    let valid = seq_set(d.split_samples(Split::Validation), &d.norm)?;
    let mut model = Brits::new(d.schema.n_columns(), cfg.brits.hidden, cfg.seed);
    model.weights = cfg.brits.loss_weights;
    let history = train_brits(&mut model, &train, &valid, &cfg.brits_schedule(), &FitOptions::all())?;
    Ok((model, history))
}

/// Positive-class scores for `samples`, which must follow the model's
/// column layout. `norm` is the normalization the model was trained with.
pub fn score(model: &Model, samples: &[&WindowSample], norm: &NormStats) -> Result<Vec<f64>> {
    match model {
        Model::Tree(t) => {
            let width = t.past_days * t.columns.len();
            let input = tree_input(t.kind, samples.iter().copied(), t.medians.as_ref(), width);
            Ok(t.ensemble.predict_proba(&input)?)
        }
        Model::Brits(b) => Ok(predict(b, &seq_set(samples.iter().copied(), norm)?)?),
    }
}
