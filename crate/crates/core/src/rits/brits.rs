use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::cell::{self, Input, RitsOutput, Tape, Upstream};
use super::data::{Batch, SeqSet};
use super::train::Phase;
use super::{Brits, RitsError, RitsParams};
use crate::math;
use crate::missing::{DenseMatrix, MaskMatrix};

/// Logits are clamped to this range inside the cross-entropy.
pub const BCE_LOGIT_CLAMP: f64 = 15.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub estimation: f64,
    pub consistency: f64,
    pub classification: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { estimation: 1.0, consistency: 1.0, classification: 1.0 }
    }
}

/// Unweighted loss components, each a batch mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub estimation_fwd: f64,
    pub estimation_bwd: f64,
    pub consistency: f64,
    pub classification_fwd: f64,
    pub classification_bwd: f64,
}

impl LossParts {
    pub fn estimation(&self) -> f64 {
        self.estimation_fwd + self.estimation_bwd
    }

    pub fn classification(&self) -> f64 {
        self.classification_fwd + self.classification_bwd
    }

    /// Weighted objective; the imputation phase leaves out classification.
    pub fn total(&self, w: &LossWeights, phase: Phase) -> f64 {
        let base = w.estimation * self.estimation() + w.consistency * self.consistency;
        match phase {
            Phase::Imputation => base,
            Phase::Full => base + w.classification * self.classification(),
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.estimation_fwd, self.estimation_bwd, self.consistency, self.classification_fwd, self.classification_bwd]
            .iter()
            .all(|v| v.is_finite())
    }

    pub(crate) fn add_scaled(&mut self, other: &LossParts, k: f64) {
        self.estimation_fwd += k * other.estimation_fwd;
        self.estimation_bwd += k * other.estimation_bwd;
        self.consistency += k * other.consistency;
        self.classification_fwd += k * other.classification_fwd;
        self.classification_bwd += k * other.classification_bwd;
    }
}

/// Gradients for both directions, laid out like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub forward: RitsParams,
    pub backward: RitsParams,
}

fn inputs(batch: &Batch) -> [Input<'_>; 2] {
    let (b, t, f) = (batch.size, batch.steps, batch.n_features);
    [
        Input { b, t, f, x: &batch.x, m: &batch.m, delta: &batch.delta },
        Input { b, t, f, x: &batch.x_rev, m: &batch.m_rev, delta: &batch.delta_rev },
    ]
}

fn check(model: &Brits, batch: &Batch) -> Result<(), RitsError> {
    if batch.n_features != model.n_features() {
        return Err(RitsError::ShapeMismatch { expected: model.n_features(), found: batch.n_features });
    }
    if batch.size == 0 || batch.steps == 0 {
        return Err(RitsError::Empty);
    }
    Ok(())
}

/// Mean BCE of clamped logits; writes `scale ×` its gradient into `grad`.
fn cross_entropy(logits: &[f64], labels: &[f64], scale: f64, grad: Option<&mut [f64]>) -> f64 {
    let n = logits.len() as f64;
    let mut total = 0.0;
    let mut grad = grad;
    for (i, (&z, &y)) in logits.iter().zip(labels).enumerate() {
        let zc = z.clamp(-BCE_LOGIT_CLAMP, BCE_LOGIT_CLAMP);
        total += math::softplus(zc) - y * zc;
        if let Some(g) = grad.as_deref_mut() {
            if z.abs() < BCE_LOGIT_CLAMP {
                g[i] += scale * (math::sigmoid(zc) - y) / n;
            }
        }
    }
    total / n
}

/// Mean `|ĉ_fwd[t] − ĉ_bwd[T−1−t]|` over all cells of the batch.
fn consistency(fwd: &Tape, bwd: &Tape, scale: f64, ups: Option<(&mut Upstream, &mut Upstream)>) -> f64 {
    let (b, t, f) = (fwd.b, fwd.t, fwd.f);
    let bf = b * f;
    let n = (t * bf) as f64;
    let mut total = 0.0;
    let mut ups = ups;
    for s in 0..t {
        for j in 0..bf {
            let (i, k) = (s * bf + j, (t - 1 - s) * bf + j);
            let diff = fwd.c_hat[i] - bwd.c_hat[k];
            total += diff.abs();
            if let Some((uf, ub)) = ups.as_mut() {
                let g = scale * math::sign(diff) / n;
                uf.c_hat[i] += g;
                ub.c_hat[k] -= g;
            }
        }
    }
    total / n
}

pub(crate) struct Pass {
    pub parts: LossParts,
    pub tapes: [Tape; 2],
}

pub(crate) fn run(model: &Brits, batch: &Batch) -> Result<Pass, RitsError> {
    check(model, batch)?;
    let inp = inputs(batch);
    let tapes = [cell::forward(&model.forward, &inp[0]), cell::forward(&model.backward, &inp[1])];
    let parts = LossParts {
        estimation_fwd: cell::estimation_loss(&tapes[0], &inp[0], 0.0, None),
        estimation_bwd: cell::estimation_loss(&tapes[1], &inp[1], 0.0, None),
        consistency: consistency(&tapes[0], &tapes[1], 0.0, None),
        classification_fwd: cross_entropy(&tapes[0].logit, &batch.labels, 0.0, None),
        classification_bwd: cross_entropy(&tapes[1].logit, &batch.labels, 0.0, None),
    };
    Ok(Pass { parts, tapes })
}

pub(crate) fn probabilities(pass: &Pass) -> Vec<f64> {
    pass.tapes[0]
        .logit
        .iter()
        .zip(&pass.tapes[1].logit)
        .map(|(&a, &b)| (cell::probability(a) + cell::probability(b)) / 2.0)
        .collect()
}

/// Loss components and the gradient of the weighted objective for `phase`.
pub fn loss_and_grad(model: &Brits, batch: &Batch, phase: Phase) -> Result<(LossParts, Gradients), RitsError> {
    check(model, batch)?;
    let w = &model.weights;
    let (b, t, f) = (batch.size, batch.steps, batch.n_features);
    let inp = inputs(batch);
    let tapes = [cell::forward(&model.forward, &inp[0]), cell::forward(&model.backward, &inp[1])];
    let mut uf = Upstream::zeros(b, t, f);
    let mut ub = Upstream::zeros(b, t, f);
    let cls_scale = match phase {
        Phase::Imputation => 0.0,
        Phase::Full => w.classification,
    };
    let parts = LossParts {
        estimation_fwd: cell::estimation_loss(&tapes[0], &inp[0], w.estimation, Some(&mut uf)),
        estimation_bwd: cell::estimation_loss(&tapes[1], &inp[1], w.estimation, Some(&mut ub)),
        consistency: consistency(&tapes[0], &tapes[1], w.consistency, Some((&mut uf, &mut ub))),
        classification_fwd: cross_entropy(&tapes[0].logit, &batch.labels, cls_scale, Some(&mut uf.logit)),
        classification_bwd: cross_entropy(&tapes[1].logit, &batch.labels, cls_scale, Some(&mut ub.logit)),
    };
    let mut grads = Gradients {
        forward: RitsParams::zeros(model.n_features(), model.hidden()),
        backward: RitsParams::zeros(model.n_features(), model.hidden()),
    };
    cell::backward(&model.forward, &inp[0], &tapes[0], &uf, &mut grads.forward);
    cell::backward(&model.backward, &inp[1], &tapes[1], &ub, &mut grads.backward);
    Ok((parts, grads))
}

/// Both directions on one sample, with the backward outputs re-aligned to
/// forward time.
#[derive(Clone, Debug, PartialEq)]
pub struct BritsOutput {
    pub forward: RitsOutput,
    pub backward: RitsOutput,
    /// `m ⊙ x + (1 − m) ⊙ mean(ĉ_fwd, ĉ_bwd)`, `steps × n_features`.
    pub imputation: Vec<f64>,
    pub probability: f64,
    pub consistency: f64,
}

fn reverse_rows(v: &[f64], width: usize) -> Vec<f64> {
    v.chunks_exact(width).rev().flatten().copied().collect()
}

fn realign(mut out: RitsOutput, hidden: usize) -> RitsOutput {
    let f = out.n_features;
    out.history_estimates = reverse_rows(&out.history_estimates, f);
    out.feature_estimates = reverse_rows(&out.feature_estimates, f);
    out.combined_estimates = reverse_rows(&out.combined_estimates, f);
    out.complement = reverse_rows(&out.complement, f);
    out.hidden_states = reverse_rows(&out.hidden_states, hidden);
    out
}

pub fn brits_forward(model: &Brits, x: &DenseMatrix, mask: &MaskMatrix) -> Result<BritsOutput, RitsError> {
    let f = model.n_features();
    if x.cols != f || mask.cols != f {
        return Err(RitsError::ShapeMismatch { expected: f, found: x.cols.min(mask.cols) });
    }
    if mask.rows != x.rows || x.data.len() != x.rows * f {
        return Err(RitsError::ShapeMismatch { expected: x.rows, found: mask.rows });
    }
    let observed: Vec<bool> = mask.data.iter().map(|&o| o == 1).collect();
    let mut set = SeqSet::new(x.rows, f);
    set.push(&x.data, &observed, false)?;
    let batch = set.all();
    let pass = run(model, &batch)?;
    let inp = inputs(&batch);
    let fwd = cell::output_of(&pass.tapes[0], &inp[0], 0);
    let bwd = realign(cell::output_of(&pass.tapes[1], &inp[1], 0), model.hidden());
    let imputation = (0..x.rows * f)
        .map(|j| {
            if observed[j] {
                x.data[j]
            } else {
                (fwd.combined_estimates[j] + bwd.combined_estimates[j]) / 2.0
            }
        })
        .collect();
    Ok(BritsOutput {
        probability: (fwd.probability + bwd.probability) / 2.0,
        consistency: pass.parts.consistency,
        forward: fwd,
        backward: bwd,
        imputation,
    })
}

/// Mean of the two directions' `ĉ`, aligned to forward time, per sample.
pub(crate) fn combined_estimates(pass: &Pass, sample: usize) -> Vec<f64> {
    let [fwd, bwd] = &pass.tapes;
    let (b, t, f) = (fwd.b, fwd.t, fwd.f);
    let mut out = vec![0.0; t * f];
    for s in 0..t {
        for k in 0..f {
            let a = fwd.c_hat[(s * b + sample) * f + k];
            let c = bwd.c_hat[((t - 1 - s) * b + sample) * f + k];
            out[s * f + k] = (a + c) / 2.0;
        }
    }
    out
}
