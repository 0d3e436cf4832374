//! Bagged Gini trees on dense (pre-imputed) rows.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnsembleConfig, Node, Tree, TreeEnsemble, TreeError, TreeInput};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Features tried per split; `None` means `ceil(sqrt(n_features))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 16, features_per_split: None, bootstrap: true, seed: 0 }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<(), TreeError> {
        if self.max_depth < 1 {
            return Err(TreeError::InvalidConfig("max_depth must be >= 1"));
        }
        if self.features_per_split == Some(0) {
            return Err(TreeError::InvalidConfig("features_per_split must be >= 1"));
        }
        Ok(())
    }

    fn mtry(&self, n_features: usize) -> usize {
        let m = self.features_per_split.unwrap_or_else(|| {
            let mut r = crate::math::sqrt(n_features as f64) as usize;
            while r * r < n_features {
                r += 1;
            }
            r
        });
        m.clamp(1, n_features.max(1))
    }
}

#[inline]
fn gini_weighted(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    n as f64 * 2.0 * p * (1.0 - p)
}

struct Grower<'a> {
    data: &'a [f64],
    n_cols: usize,
    labels: &'a [bool],
    max_depth: usize,
    mtry: usize,
    nodes: Vec<Node>,
    scratch: Vec<(f64, bool)>,
}

impl Grower<'_> {
    fn grow(&mut self, rows: &mut [u32], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let n = rows.len();
        let pos = rows.iter().filter(|&&r| self.labels[r as usize]).count();
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: pos as f64 / n as f64 });
        if depth >= self.max_depth || n < 2 || pos == 0 || pos == n {
            return id;
        }
        let parent = gini_weighted(pos, n);

        // partial Fisher-Yates for the feature subset
        let mut features: Vec<usize> = (0..self.n_cols).collect();
        for i in 0..self.mtry {
            let j = rng.random_range(i..self.n_cols);
            features.swap(i, j);
        }

        let mut best: Option<(f64, usize, f64)> = None;
        for &f in &features[..self.mtry] {
            self.scratch.clear();
            self.scratch.extend(rows.iter().map(|&r| (self.data[r as usize * self.n_cols + f], self.labels[r as usize])));
            self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0usize;
            for i in 1..n {
                left_pos += self.scratch[i - 1].1 as usize;
                let (lv, v) = (self.scratch[i - 1].0, self.scratch[i].0);
                if v <= lv {
                    continue;
                }
                let impurity = gini_weighted(left_pos, i) + gini_weighted(pos - left_pos, n - i);
                if best.is_none_or(|b| impurity < b.0) {
                    let mid = lv + (v - lv) / 2.0;
                    best = Some((impurity, f, if mid > lv { mid } else { v }));
                }
            }
        }
        let Some((impurity, feature, threshold)) = best else { return id };
        if !(impurity < parent) {
            return id;
        }

        let cols = self.n_cols;
        let data = self.data;
        let mut split = 0;
        for i in 0..n {
            if data[rows[i] as usize * cols + feature] < threshold {
                rows.swap(i, split);
                split += 1;
            }
        }
        let (lo, hi) = rows.split_at_mut(split);
        let default_left = lo.len() >= hi.len();
        let left = self.grow(lo, depth + 1, rng);
        let right = self.grow(hi, depth + 1, rng);
        self.nodes[id] = Node::Split { feature, threshold, left, right, default_left, gain: parent - impurity };
        id
    }
}

fn dense_copy(input: &TreeInput) -> Result<Vec<f64>, TreeError> {
    input
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| c.ok_or(TreeError::AbsentInDenseInput { row: i / input.n_cols, col: i % input.n_cols }))
        .collect()
}

/// Grows tree `index` of the forest; its randomness depends only on the
/// seed and the index, so any prefix of a forest equals a smaller forest.
fn grow_one(data: &[f64], n_cols: usize, labels: &[bool], cfg: &ForestConfig, index: usize) -> Tree {
    let n = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let mut rows: Vec<u32> = if cfg.bootstrap {
        (0..n).map(|_| rng.random_range(0..n) as u32).collect()
    } else {
        (0..n as u32).collect()
    };
    let mut g = Grower {
        data,
        n_cols,
        labels,
        max_depth: cfg.max_depth,
        mtry: cfg.mtry(n_cols),
        nodes: Vec::new(),
        scratch: Vec::with_capacity(n),
    };
    g.grow(&mut rows, 0, &mut rng);
    Tree { nodes: g.nodes }
}

pub fn train_random_forest(input: &TreeInput, labels: &[bool], cfg: &ForestConfig) -> Result<TreeEnsemble, TreeError> {
    cfg.validate()?;
    let n = input.n_rows();
    if n == 0 || input.n_cols == 0 {
        return Err(TreeError::EmptyInput);
    }
    if labels.len() != n {
        return Err(TreeError::LabelMismatch { rows: n, labels: labels.len() });
    }
    let data = dense_copy(input)?;
    let trees = (0..cfg.n_trees).map(|t| grow_one(&data, input.n_cols, labels, cfg, t)).collect();
    Ok(TreeEnsemble { config: EnsembleConfig::Forest(cfg.clone()), n_features: input.n_cols, trees, base_score: 0.0 })
}
