//! Second-order gradient boosting on logistic loss with exact greedy,
//! sparsity-aware split finding.
//!
//! Trees grow level by level. Each column is pre-sorted once over its
//! present cells; a level is two sweeps per column (present-cell totals per
//! node, then the prefix scan). Absent cells of a node form one block whose
//! gradient statistics are tried on both sides of every candidate split.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{EnsembleConfig, Node, Tree, TreeEnsemble, TreeError, TreeInput};
use crate::math;

/// Prior logit used when every training label is identical.
pub const BASE_SCORE_CLAMP: f64 = 15.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoosterConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub min_child_hessian: f64,
    pub seed: u64,
}

impl Default for BoosterConfig {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 6, learning_rate: 0.3, lambda: 1.0, min_child_hessian: 1.0, seed: 0 }
    }
}

impl BoosterConfig {
    pub fn validate(&self) -> Result<(), TreeError> {
        if self.max_depth < 1 {
            return Err(TreeError::InvalidConfig("max_depth must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(TreeError::InvalidConfig("learning_rate must be in (0, 1]"));
        }
        if !(self.lambda >= 0.0) {
            return Err(TreeError::InvalidConfig("lambda must be >= 0"));
        }
        if !(self.min_child_hessian >= 0.0) {
            return Err(TreeError::InvalidConfig("min_child_hessian must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    default_left: bool,
    left: (f64, f64),
    right: (f64, f64),
}

#[derive(Clone, Copy)]
struct NodeStats {
    g: f64,
    h: f64,
    count: usize,
}

/// Split gain with no complexity penalty.
#[inline]
fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64) -> f64 {
    let g = gl + gr;
    let h = hl + hr;
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda))
}

#[inline]
fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    if h + lambda > 0.0 {
        -g / (h + lambda)
    } else {
        0.0
    }
}

struct Presorted {
    // per column: (row, value) over present cells, ascending by value then row
    columns: Vec<Vec<(u32, f64)>>,
}

impl Presorted {
    fn new(input: &TreeInput) -> Self {
        let n = input.n_rows();
        let columns = (0..input.n_cols)
            .map(|c| {
                let mut col: Vec<(u32, f64)> =
                    (0..n).filter_map(|r| input.get(r, c).map(|v| (r as u32, v))).collect();
                col.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                col
            })
            .collect();
        Self { columns }
    }
}

const NO_SLOT: usize = usize::MAX;

/// Grows one tree on the current gradients. Returns the tree and each
/// row's final leaf node.
fn grow_tree(
    input: &TreeInput,
    sorted: &Presorted,
    grad: &[f64],
    hess: &[f64],
    cfg: &BoosterConfig,
) -> (Tree, Vec<u32>) {
    let n = input.n_rows();
    let lambda = cfg.lambda;
    let mut node_of = vec![0u32; n];
    let root = NodeStats {
        g: grad.iter().sum(),
        h: hess.iter().sum(),
        count: n,
    };
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut stats = vec![root];
    let mut frontier = vec![0usize];

    for _depth in 0..cfg.max_depth {
        if frontier.is_empty() {
            break;
        }
        let mut slot_of = vec![NO_SLOT; nodes.len()];
        for (s, &node) in frontier.iter().enumerate() {
            slot_of[node] = s;
        }
        let k = frontier.len();
        let mut best: Vec<Option<Candidate>> = vec![None; k];
        let mut gp = vec![0.0; k];
        let mut hp = vec![0.0; k];
        let mut cp = vec![0usize; k];
        let mut gl = vec![0.0; k];
        let mut hl = vec![0.0; k];
        let mut last: Vec<Option<f64>> = vec![None; k];

        for (feature, col) in sorted.columns.iter().enumerate() {
            gp.iter_mut().for_each(|x| *x = 0.0);
            hp.iter_mut().for_each(|x| *x = 0.0);
            cp.iter_mut().for_each(|x| *x = 0);
            for &(row, _) in col {
                let s = slot_of[node_of[row as usize] as usize];
                if s != NO_SLOT {
                    gp[s] += grad[row as usize];
                    hp[s] += hess[row as usize];
                    cp[s] += 1;
                }
            }
            gl.iter_mut().for_each(|x| *x = 0.0);
            hl.iter_mut().for_each(|x| *x = 0.0);
            last.iter_mut().for_each(|x| *x = None);

            for &(row, v) in col {
                let s = slot_of[node_of[row as usize] as usize];
                if s == NO_SLOT {
                    continue;
                }
                if let Some(lv) = last[s] {
                    if v > lv {
                        let node = stats[frontier[s]];
                        let (gm, hm) = if cp[s] == node.count { (0.0, 0.0) } else { (node.g - gp[s], node.h - hp[s]) };
                        let (gr, hr) = (gp[s] - gl[s], hp[s] - hl[s]);
                        let mid = lv + (v - lv) / 2.0;
                        let threshold = if mid > lv { mid } else { v };
                        for default_left in [true, false] {
                            let (l, r) = if default_left {
                                ((gl[s] + gm, hl[s] + hm), (gr, hr))
                            } else {
                                ((gl[s], hl[s]), (gr + gm, hr + hm))
                            };
                            if l.1 < cfg.min_child_hessian || r.1 < cfg.min_child_hessian {
                                continue;
                            }
                            let gain = split_gain(l.0, l.1, r.0, r.1, lambda);
                            if best[s].is_none_or(|b| gain > b.gain) {
                                best[s] = Some(Candidate { gain, feature, threshold, default_left, left: l, right: r });
                            }
                        }
                    }
                }
                gl[s] += grad[row as usize];
                hl[s] += hess[row as usize];
                last[s] = Some(v);
            }
        }

        let mut next_frontier = Vec::new();
        let mut split_of: Vec<Option<(usize, f64, bool, u32, u32)>> = vec![None; nodes.len()];
        for (s, &node) in frontier.iter().enumerate() {
            let Some(c) = best[s] else { continue };
            if !(c.gain > 0.0) {
                continue;
            }
            let left = nodes.len();
            let right = left + 1;
            nodes.push(Node::Leaf { value: 0.0 });
            nodes.push(Node::Leaf { value: 0.0 });
            stats.push(NodeStats { g: c.left.0, h: c.left.1, count: 0 });
            stats.push(NodeStats { g: c.right.0, h: c.right.1, count: 0 });
            nodes[node] = Node::Split {
                feature: c.feature,
                threshold: c.threshold,
                left,
                right,
                default_left: c.default_left,
                gain: c.gain,
            };
            split_of[node] = Some((c.feature, c.threshold, c.default_left, left as u32, right as u32));
            next_frontier.push(left);
            next_frontier.push(right);
        }
        if next_frontier.is_empty() {
            break;
        }
        for (row, node) in node_of.iter_mut().enumerate() {
            if let Some((feature, threshold, default_left, l, r)) = split_of[*node as usize] {
                let go_left = match input.get(row, feature) {
                    Some(v) => v < threshold,
                    None => default_left,
                };
                *node = if go_left { l } else { r };
                stats[*node as usize].count += 1;
            }
        }
        // Child totals are re-summed in row order rather than taken from the
        // scan, so they do not depend on column sort order.
        let mut is_child = vec![false; nodes.len()];
        for &c in &next_frontier {
            is_child[c] = true;
            stats[c].g = 0.0;
            stats[c].h = 0.0;
        }
        for (row, &node) in node_of.iter().enumerate() {
            let node = node as usize;
            if is_child[node] {
                stats[node].g += grad[row];
                stats[node].h += hess[row];
            }
        }
        frontier = next_frontier;
    }

    for (i, node) in nodes.iter_mut().enumerate() {
        if let Node::Leaf { value } = node {
            *value = leaf_weight(stats[i].g, stats[i].h, lambda);
        }
    }
    (Tree { nodes }, node_of)
}

fn logistic_grad(margin: &[f64], y: &[f64], grad: &mut [f64], hess: &mut [f64]) {
    for i in 0..margin.len() {
        let p = math::sigmoid(margin[i]);
        grad[i] = p - y[i];
        hess[i] = p * (1.0 - p);
    }
}

/// Trains a boosted ensemble. Rows may contain absent cells.
pub fn train_gbdt(input: &TreeInput, labels: &[bool], cfg: &BoosterConfig) -> Result<TreeEnsemble, TreeError> {
    cfg.validate()?;
    let n = input.n_rows();
    if n == 0 {
        return Err(TreeError::EmptyInput);
    }
    if labels.len() != n {
        return Err(TreeError::LabelMismatch { rows: n, labels: labels.len() });
    }
    let y: Vec<f64> = labels.iter().map(|&l| l as u8 as f64).collect();
    let positives = y.iter().sum::<f64>();
    let config = EnsembleConfig::Booster(cfg.clone());

    if positives == 0.0 || positives == n as f64 {
        let base = if positives == 0.0 { -BASE_SCORE_CLAMP } else { BASE_SCORE_CLAMP };
        return Ok(TreeEnsemble {
            config,
            n_features: input.n_cols,
            trees: vec![Tree::leaf(0.0); cfg.n_trees],
            base_score: base,
        });
    }

    let p0 = positives / n as f64;
    let base = math::ln(p0 / (1.0 - p0));
    let sorted = Presorted::new(input);
    let mut margin = vec![base; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(cfg.n_trees);
    for _ in 0..cfg.n_trees {
        logistic_grad(&margin, &y, &mut grad, &mut hess);
        let (tree, leaf_of) = grow_tree(input, &sorted, &grad, &hess, cfg);
        for (m, &leaf) in margin.iter_mut().zip(&leaf_of) {
            if let Node::Leaf { value } = tree.nodes[leaf as usize] {
                *m += cfg.learning_rate * value;
            }
        }
        trees.push(tree);
    }
    Ok(TreeEnsemble { config, n_features: input.n_cols, trees, base_score: base })
}
