use alloc::vec;
use alloc::vec::Vec;

use super::RitsError;
use crate::dataset::{NormStats, WindowSample};

/// Normalized windows ready for batching. Absent cells hold `0.0`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqSet {
    pub steps: usize,
    pub n_features: usize,
    /// `len × steps × n_features`, sample-major.
    pub values: Vec<f64>,
    pub observed: Vec<bool>,
    pub labels: Vec<bool>,
}

impl SeqSet {
    pub fn new(steps: usize, n_features: usize) -> Self {
        Self { steps, n_features, values: Vec::new(), observed: Vec::new(), labels: Vec::new() }
    }

    /// Normalizes each sample with `norm`. All samples must share the
    /// column count of `norm`.
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a WindowSample>, norm: &NormStats) -> Result<Self, RitsError> {
        let f = norm.mean.len();
        let mut set: Option<SeqSet> = None;
        for s in samples {
            if s.n_columns != f {
                return Err(RitsError::ShapeMismatch { expected: f, found: s.n_columns });
            }
            let set = set.get_or_insert_with(|| SeqSet::new(s.rows(), f));
            if s.rows() != set.steps {
                return Err(RitsError::ShapeMismatch { expected: set.steps, found: s.rows() });
            }
            let values: Vec<f64> = s
                .values
                .iter()
                .zip(&s.observed)
                .enumerate()
                .map(|(i, (&v, &o))| if o { norm.normalize(i % f, v) } else { 0.0 })
                .collect();
            set.push(&values, &s.observed, s.label)?;
        }
        set.ok_or(RitsError::Empty)
    }

    pub fn push(&mut self, values: &[f64], observed: &[bool], label: bool) -> Result<(), RitsError> {
        let n = self.steps * self.n_features;
        if values.len() != n || observed.len() != n {
            return Err(RitsError::ShapeMismatch { expected: n, found: values.len().min(observed.len()) });
        }
        if values.iter().zip(observed).any(|(v, &o)| o && !v.is_finite()) {
            return Err(RitsError::NonFiniteInput("observed value"));
        }
        self.values.extend(values.iter().zip(observed).map(|(&v, &o)| if o { v } else { 0.0 }));
        self.observed.extend_from_slice(observed);
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> (&[f64], &[bool]) {
        let n = self.steps * self.n_features;
        (&self.values[i * n..(i + 1) * n], &self.observed[i * n..(i + 1) * n])
    }

    pub fn subset(&self, idx: &[usize]) -> SeqSet {
        let mut out = SeqSet::new(self.steps, self.n_features);
        for &i in idx {
            let (v, o) = self.sample(i);
            out.values.extend_from_slice(v);
            out.observed.extend_from_slice(o);
            out.labels.push(self.labels[i]);
        }
        out
    }

    pub fn batch(&self, idx: &[usize]) -> Batch {
        Batch::gather(self, idx)
    }

    pub fn all(&self) -> Batch {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.batch(&idx)
    }
}

/// A time-major batch with both reading directions prepared.
///
/// `x`, `m` and `delta` are `steps × size × n_features`. The reversed
/// tensors hold the same data with time flipped; their gaps are recomputed
/// from the flipped mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub steps: usize,
    pub n_features: usize,
    pub x: Vec<f64>,
    pub m: Vec<f64>,
    pub delta: Vec<f64>,
    pub x_rev: Vec<f64>,
    pub m_rev: Vec<f64>,
    pub delta_rev: Vec<f64>,
    pub labels: Vec<f64>,
}

impl Batch {
    fn gather(set: &SeqSet, idx: &[usize]) -> Batch {
        let (b, t, f) = (idx.len(), set.steps, set.n_features);
        let mut out = Batch {
            size: b,
            steps: t,
            n_features: f,
            x: vec![0.0; t * b * f],
            m: vec![0.0; t * b * f],
            delta: vec![0.0; t * b * f],
            x_rev: vec![0.0; t * b * f],
            m_rev: vec![0.0; t * b * f],
            delta_rev: vec![0.0; t * b * f],
            labels: idx.iter().map(|&i| if set.labels[i] { 1.0 } else { 0.0 }).collect(),
        };
        for (j, &i) in idx.iter().enumerate() {
            let (v, o) = set.sample(i);
            for s in 0..t {
                let src = s * f;
                let fwd = (s * b + j) * f;
                let rev = ((t - 1 - s) * b + j) * f;
                for d in 0..f {
                    let mv = if o[src + d] { 1.0 } else { 0.0 };
                    out.x[fwd + d] = v[src + d];
                    out.m[fwd + d] = mv;
                    out.x_rev[rev + d] = v[src + d];
                    out.m_rev[rev + d] = mv;
                }
            }
        }
        fill_gaps(&out.m, &mut out.delta, t, b * f);
        fill_gaps(&out.m_rev, &mut out.delta_rev, t, b * f);
        out
    }
}

/// Same recurrence as [`crate::missing::compute_time_gaps`] on a
/// time-major layout with `width` cells per step.
fn fill_gaps(m: &[f64], delta: &mut [f64], steps: usize, width: usize) {
    for s in 1..steps {
        for k in 0..width {
            let prev = (s - 1) * width + k;
            delta[s * width + k] = if m[prev] == 1.0 { 1.0 } else { 1.0 + delta[prev] };
        }
    }
}
