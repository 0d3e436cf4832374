use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::brits::{self, loss_and_grad, Gradients, LossParts};
use super::data::SeqSet;
use super::{Block, Brits, RitsError, RitsParams};
use crate::eval::{truncated_pr_auc, EvalError};
use crate::math;
use crate::missing::DenseMatrix;

const EVAL_BATCH: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Estimation and consistency terms only.
    Imputation,
    Full,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Imputation => "imputation",
            Phase::Full => "full",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    /// Upper bound on imputation-only epochs.
    pub imputation_epochs: usize,
    /// Upper bound on full-loss epochs.
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without improvement before a phase stops.
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            imputation_epochs: 20,
            epochs: 20,
            batch_size: 1024,
            learning_rate: 1e-3,
            patience: 5,
            min_delta: 1e-4,
            seed: 0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<(), RitsError> {
        if self.batch_size == 0 {
            return Err(RitsError::InvalidSchedule("batch_size must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(RitsError::InvalidSchedule("learning_rate must be positive"));
        }
        if self.patience == 0 {
            return Err(RitsError::InvalidSchedule("patience must be >= 1"));
        }
        if !(self.min_delta >= 0.0) {
            return Err(RitsError::InvalidSchedule("min_delta must be >= 0"));
        }
        Ok(())
    }
}

/// Which blocks the optimizer may change, plus an optional hook that sees
/// every gradient before the update.
#[derive(Clone, Copy)]
pub struct FitOptions<'a> {
    pub trainable: &'a [Block],
    pub grad_hook: Option<&'a dyn Fn(&mut Gradients)>,
}

impl FitOptions<'static> {
    pub fn all() -> Self {
        Self { trainable: &Block::ALL, grad_hook: None }
    }

    pub fn classifier_only() -> Self {
        Self { trainable: &[Block::ClassifierW, Block::ClassifierB], grad_hook: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub train: LossParts,
    pub valid: LossParts,
    /// Truncated PR-AUC on validation; `None` when it has no positives.
    pub valid_score: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
    /// Full-loss epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
    pub steps: u64,
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    b1t: f64,
    b2t: f64,
    m: [Vec<f64>; 2],
    v: [Vec<f64>; 2],
}

impl Adam {
    fn new(len: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, b1t: 1.0, b2t: 1.0, m: [vec![0.0; len], vec![0.0; len]], v: [vec![0.0; len], vec![0.0; len]] }
    }

    fn step(&mut self, model: &mut Brits, grads: &Gradients, trainable: &[Block]) {
        self.b1t *= self.beta1;
        self.b2t *= self.beta2;
        let (c1, c2) = (1.0 - self.b1t, 1.0 - self.b2t);
        let dirs: [(&mut RitsParams, &RitsParams); 2] = [(&mut model.forward, &grads.forward), (&mut model.backward, &grads.backward)];
        for (d, (p, g)) in dirs.into_iter().enumerate() {
            for &block in trainable {
                for i in p.range(block) {
                    let gi = g.data[i];
                    let m = &mut self.m[d][i];
                    let v = &mut self.v[d][i];
                    *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                    p.data[i] -= self.lr * (*m / c1) / (math::sqrt(*v / c2) + self.eps);
                }
            }
            if trainable.contains(&Block::FeatureW) {
                p.zero_feature_diagonal();
            }
        }
    }
}

fn check_shapes(model: &Brits, set: &SeqSet) -> Result<(), RitsError> {
    if !model.is_consistent() {
        return Err(RitsError::ShapeMismatch { expected: model.forward.data.len(), found: model.backward.data.len() });
    }
    if set.n_features != model.n_features() {
        return Err(RitsError::ShapeMismatch { expected: model.n_features(), found: set.n_features });
    }
    if set.is_empty() {
        return Err(RitsError::Empty);
    }
    Ok(())
}

/// Size-weighted mean loss components and averaged probabilities.
pub fn evaluate_losses(model: &Brits, set: &SeqSet) -> Result<(LossParts, Vec<f64>), RitsError> {
    check_shapes(model, set)?;
    let mut parts = LossParts::default();
    let mut probs = Vec::with_capacity(set.len());
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let pass = brits::run(model, &set.batch(chunk))?;
        parts.add_scaled(&pass.parts, chunk.len() as f64 / set.len() as f64);
        probs.extend(brits::probabilities(&pass));
    }
    Ok((parts, probs))
}

pub fn predict(model: &Brits, set: &SeqSet) -> Result<Vec<f64>, RitsError> {
    Ok(evaluate_losses(model, set)?.1)
}

/// Observed cells pass through; absent cells take the mean of the two
/// directions' combined estimates. Values stay in normalized units.
pub fn impute(model: &Brits, set: &SeqSet) -> Result<Vec<DenseMatrix>, RitsError> {
    check_shapes(model, set)?;
    let (t, f) = (set.steps, set.n_features);
    let mut out = Vec::with_capacity(set.len());
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let pass = brits::run(model, &set.batch(chunk))?;
        for (j, &i) in chunk.iter().enumerate() {
            let est = brits::combined_estimates(&pass, j);
            let (v, o) = set.sample(i);
            let data = (0..t * f).map(|c| if o[c] { v[c] } else { est[c] }).collect();
            out.push(DenseMatrix { rows: t, cols: f, data });
        }
    }
    Ok(out)
}

fn run_epoch(
    model: &mut Brits,
    adam: &mut Adam,
    train: &SeqSet,
    order: &[usize],
    batch_size: usize,
    phase: Phase,
    options: &FitOptions<'_>,
    epoch: usize,
) -> Result<(LossParts, u64), RitsError> {
    let mut parts = LossParts::default();
    let mut steps = 0;
    for chunk in order.chunks(batch_size) {
        let (p, mut g) = loss_and_grad(model, &train.batch(chunk), phase)?;
        if !p.is_finite() || !p.total(&model.weights, phase).is_finite() {
            return Err(RitsError::NonFiniteLoss { epoch, phase: phase.as_str() });
        }
        if let Some(hook) = options.grad_hook {
            hook(&mut g);
        }
        adam.step(model, &g, options.trainable);
        if !model.forward.is_finite() || !model.backward.is_finite() {
            return Err(RitsError::NonFiniteLoss { epoch, phase: phase.as_str() });
        }
        parts.add_scaled(&p, chunk.len() as f64 / train.len() as f64);
        steps += 1;
    }
    Ok((parts, steps))
}

fn score(valid: &SeqSet, probs: &[f64]) -> Result<Option<f64>, RitsError> {
    match truncated_pr_auc(probs, &valid.labels) {
        Ok(d) => Ok(Some(d)),
        Err(EvalError::NoPositives) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Two-phase training: imputation-only epochs until the validation
/// estimation loss stops improving by `min_delta` for `patience` epochs,
/// then full-loss epochs keeping the parameters of the best validation
/// epoch (truncated PR-AUC, ties and positive-free validation sets decided
/// by the validation loss).
pub fn train_brits(
    model: &mut Brits,
    train: &SeqSet,
    valid: &SeqSet,
    schedule: &TrainSchedule,
    options: &FitOptions<'_>,
) -> Result<History, RitsError> {
    schedule.validate()?;
    check_shapes(model, train)?;
    check_shapes(model, valid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut adam = Adam::new(model.forward.data.len(), schedule.learning_rate);
    let mut history = History::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch = 0;

    let mut best_est = f64::INFINITY;
    let mut stale = 0;
    for _ in 0..schedule.imputation_epochs {
        order.shuffle(&mut rng);
        let (tr, steps) = run_epoch(model, &mut adam, train, &order, schedule.batch_size, Phase::Imputation, options, epoch)?;
        history.steps += steps;
        let (va, _) = evaluate_losses(model, valid)?;
        if !va.is_finite() {
            return Err(RitsError::NonFiniteLoss { epoch, phase: Phase::Imputation.as_str() });
        }
        history.records.push(EpochRecord { epoch, phase: Phase::Imputation, train: tr, valid: va, valid_score: None });
        epoch += 1;
        if va.estimation() < best_est - schedule.min_delta {
            best_est = va.estimation();
            stale = 0;
        } else {
            stale += 1;
            if stale >= schedule.patience {
                break;
            }
        }
    }

    let mut best: Option<(Option<f64>, f64, Brits)> = None;
    stale = 0;
    for _ in 0..schedule.epochs {
        order.shuffle(&mut rng);
        let (tr, steps) = run_epoch(model, &mut adam, train, &order, schedule.batch_size, Phase::Full, options, epoch)?;
        history.steps += steps;
        let (va, probs) = evaluate_losses(model, valid)?;
        let loss = va.total(&model.weights, Phase::Full);
        if !loss.is_finite() {
            return Err(RitsError::NonFiniteLoss { epoch, phase: Phase::Full.as_str() });
        }
        let d = score(valid, &probs)?;
        history.records.push(EpochRecord { epoch, phase: Phase::Full, train: tr, valid: va, valid_score: d });
        let improved = match &best {
            None => true,
            Some((best_d, best_loss, _)) => match (d, best_d) {
                (Some(d), Some(bd)) => d > *bd || (d == *bd && loss < best_loss - schedule.min_delta),
                _ => loss < best_loss - schedule.min_delta,
            },
        };
        if improved {
            best = Some((d, loss, model.clone()));
            history.best_epoch = Some(epoch);
            stale = 0;
        } else {
            stale += 1;
        }
        epoch += 1;
        if stale >= schedule.patience {
            break;
        }
    }
    if let Some((_, _, m)) = best {
        *model = m;
    }
    Ok(history)
}
