//! Tree ensembles over flattened `past_days × F` rows.
//!
//! Every split node carries a default direction taken by absent cells, so
//! both model families accept rows with missing entries at prediction time.
//! Only the booster learns that direction from data; the forest sends
//! absent cells toward its larger child.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::EvalError;
use crate::math;

mod boost;
mod forest;
mod grid;

pub use boost::{train_gbdt, BoosterConfig, BASE_SCORE_CLAMP};
pub use forest::{train_random_forest, ForestConfig};
pub use grid::{grid_search_trees, full_tree_grid, GridPoint, TreeFamily};

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("row width {found} does not match model width {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{rows} rows but {labels} labels")]
    LabelMismatch { rows: usize, labels: usize },
    #[error("no training rows")]
    EmptyInput,
    #[error("absent cell at row {row}, column {col}; the forest needs imputed input")]
    AbsentInDenseInput { row: usize, col: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    #[error("empty hyper-parameter grid")]
    EmptyGrid,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Row-major table of flattened samples. `None` marks an absent cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeInput {
    pub n_cols: usize,
    pub cells: Vec<Option<f64>>,
}

impl TreeInput {
    pub fn new(n_cols: usize) -> Self {
        Self { n_cols, cells: Vec::new() }
    }

    pub fn from_sparse_rows<I: IntoIterator<Item = Vec<Option<f64>>>>(n_cols: usize, rows: I) -> Self {
        let mut t = Self::new(n_cols);
        for r in rows {
            t.push_sparse(&r);
        }
        t
    }

    pub fn from_dense_rows<I: IntoIterator<Item = Vec<f64>>>(n_cols: usize, rows: I) -> Self {
        let mut t = Self::new(n_cols);
        for r in rows {
            t.push_dense(&r);
        }
        t
    }

    pub fn push_sparse(&mut self, row: &[Option<f64>]) {
        assert_eq!(row.len(), self.n_cols);
        self.cells.extend_from_slice(row);
    }

    pub fn push_dense(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.n_cols);
        self.cells.extend(row.iter().map(|&v| Some(v)));
    }

    pub fn n_rows(&self) -> usize {
        self.cells.len().checked_div(self.n_cols).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[Option<f64>] {
        &self.cells[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row * self.n_cols + col]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// Present cells go left iff `value < threshold`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        default_left: bool,
        gain: f64,
    },
}

/// Flat node array; the root is node 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self { nodes: alloc::vec![Node::Leaf { value }] }
    }

    pub fn leaf_index(&self, row: &[Option<f64>]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split { feature, threshold, left, right, default_left, .. } => {
                    i = match row[*feature] {
                        Some(v) => {
                            if v < *threshold {
                                *left
                            } else {
                                *right
                            }
                        }
                        None => {
                            if *default_left {
                                *left
                            } else {
                                *right
                            }
                        }
                    };
                }
            }
        }
    }

    pub fn predict(&self, row: &[Option<f64>]) -> f64 {
        match &self.nodes[self.leaf_index(row)] {
            Node::Leaf { value } => *value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum EnsembleConfig {
    Forest(ForestConfig),
    Booster(BoosterConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub config: EnsembleConfig,
    pub n_features: usize,
    pub trees: Vec<Tree>,
    /// Prior logit for boosters; unused by forests.
    pub base_score: f64,
}

impl TreeEnsemble {
    pub fn is_booster(&self) -> bool {
        matches!(self.config, EnsembleConfig::Booster(_))
    }

    fn learning_rate(&self) -> f64 {
        match &self.config {
            EnsembleConfig::Booster(b) => b.learning_rate,
            EnsembleConfig::Forest(_) => 1.0,
        }
    }

    /// Same model restricted to its first `n` trees.
    pub fn truncated(&self, n: usize) -> TreeEnsemble {
        let mut m = self.clone();
        m.trees.truncate(n);
        match &mut m.config {
            EnsembleConfig::Booster(b) => b.n_trees = m.trees.len(),
            EnsembleConfig::Forest(f) => f.n_trees = m.trees.len(),
        }
        m
    }

    /// Raw output of one row: booster margin, or forest mean leaf value.
    pub fn raw_score(&self, row: &[Option<f64>]) -> f64 {
        if self.is_booster() {
            let eta = self.learning_rate();
            let mut margin = self.base_score;
            for t in &self.trees {
                margin += eta * t.predict(row);
            }
            margin
        } else if self.trees.is_empty() {
            0.0
        } else {
            self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
        }
    }

    pub fn predict_row(&self, row: &[Option<f64>]) -> f64 {
        let s = self.raw_score(row);
        if self.is_booster() {
            math::sigmoid(s)
        } else {
            s
        }
    }

    pub fn predict_proba(&self, rows: &TreeInput) -> Result<Vec<f64>, TreeError> {
        if rows.n_cols != self.n_features {
            return Err(TreeError::DimensionMismatch { expected: self.n_features, found: rows.n_cols });
        }
        Ok((0..rows.n_rows()).map(|i| self.predict_row(rows.row(i))).collect())
    }

    /// Probabilities after each requested prefix length, computed in one
    /// pass over the trees. `counts` must be ascending.
    pub fn staged_predict(&self, rows: &TreeInput, counts: &[usize]) -> Result<Vec<Vec<f64>>, TreeError> {
        if rows.n_cols != self.n_features {
            return Err(TreeError::DimensionMismatch { expected: self.n_features, found: rows.n_cols });
        }
        let n = rows.n_rows();
        let eta = self.learning_rate();
        let booster = self.is_booster();
        let mut acc = alloc::vec![if booster { self.base_score } else { 0.0 }; n];
        let mut out = Vec::with_capacity(counts.len());
        let mut next = 0;
        let emit = |k: usize, acc: &[f64], out: &mut Vec<Vec<f64>>| {
            out.push(
                acc.iter()
                    .map(|&a| {
                        if booster {
                            math::sigmoid(a)
                        } else if k == 0 {
                            0.0
                        } else {
                            a / k as f64
                        }
                    })
                    .collect(),
            )
        };
        while next < counts.len() && counts[next] == 0 {
            emit(0, &acc, &mut out);
            next += 1;
        }
        for (k, tree) in self.trees.iter().enumerate() {
            if next >= counts.len() {
                break;
            }
            for (i, a) in acc.iter_mut().enumerate() {
                let v = tree.predict(rows.row(i));
                *a += if booster { eta * v } else { v };
            }
            while next < counts.len() && counts[next] == k + 1 {
                emit(k + 1, &acc, &mut out);
                next += 1;
            }
        }
        Ok(out)
    }
}
