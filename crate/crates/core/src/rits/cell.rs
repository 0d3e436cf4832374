use alloc::vec;
use alloc::vec::Vec;

use super::{Block, RitsError, RitsParams};
use crate::linalg::{add_row, gemm, sum_rows_into, View, ViewMut};
use crate::math;
use crate::missing::{DeltaMatrix, DenseMatrix, MaskMatrix};

/// Probabilities are computed from logits clamped to this range so they stay
/// strictly inside (0, 1).
const PROB_LOGIT_CLAMP: f64 = 30.0;

pub(crate) fn probability(logit: f64) -> f64 {
    math::sigmoid(logit.clamp(-PROB_LOGIT_CLAMP, PROB_LOGIT_CLAMP))
}

/// One direction's time-major inputs for a batch of `b` samples.
#[derive(Clone, Copy)]
pub(crate) struct Input<'a> {
    pub b: usize,
    pub t: usize,
    pub f: usize,
    pub x: &'a [f64],
    pub m: &'a [f64],
    pub delta: &'a [f64],
}

/// Activations saved by [`forward`] for the backward pass.
pub(crate) struct Tape {
    pub b: usize,
    pub t: usize,
    pub f: usize,
    pub h: usize,
    pub a_h: Vec<f64>,
    pub gamma_h: Vec<f64>,
    pub a_x: Vec<f64>,
    pub gamma_x: Vec<f64>,
    /// Previous hidden state after decay.
    pub h_dec: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub x_h: Vec<f64>,
    pub z_hat: Vec<f64>,
    pub beta: Vec<f64>,
    pub c_hat: Vec<f64>,
    pub x_c: Vec<f64>,
    /// Activated gates `[i, f, g, o]` per row.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h_out: Vec<f64>,
    pub logit: Vec<f64>,
}

impl Tape {
    fn step(v: &[f64], s: usize, width: usize) -> &[f64] {
        &v[s * width..(s + 1) * width]
    }
}

pub(crate) fn forward(p: &RitsParams, inp: &Input<'_>) -> Tape {
    let (b, t, f, h) = (inp.b, inp.t, inp.f, p.hidden);
    let (bf, bh) = (b * f, b * h);
    let mut tp = Tape {
        b,
        t,
        f,
        h,
        a_h: vec![0.0; t * bh],
        gamma_h: vec![0.0; t * bh],
        a_x: vec![0.0; t * bf],
        gamma_x: vec![0.0; t * bf],
        h_dec: vec![0.0; t * bh],
        x_hat: vec![0.0; t * bf],
        x_h: vec![0.0; t * bf],
        z_hat: vec![0.0; t * bf],
        beta: vec![0.0; t * bf],
        c_hat: vec![0.0; t * bf],
        x_c: vec![0.0; t * bf],
        gates: vec![0.0; t * 4 * bh],
        c: vec![0.0; t * bh],
        tanh_c: vec![0.0; t * bh],
        h_out: vec![0.0; t * bh],
        logit: vec![0.0; b],
    };
    let w_dh = View::new(p.block(Block::DecayHiddenW), h, f);
    let w_dx = p.block(Block::DecayInputW);
    let b_dx = p.block(Block::DecayInputB);
    let w_hist = View::new(p.block(Block::HistoryW), f, h);
    let w_feat = View::new(p.block(Block::FeatureW), f, f);
    let w_comb = View::new(p.block(Block::CombineW), f, 2 * f);
    let w_in = View::new(p.block(Block::CellInputW), 4 * h, 2 * f);
    let w_hh = View::new(p.block(Block::CellHiddenW), 4 * h, h);

    for s in 0..t {
        let (fs, hs) = (s * bf..(s + 1) * bf, s * bh..(s + 1) * bh);
        let x = &inp.x[fs.clone()];
        let m = &inp.m[fs.clone()];
        let d = &inp.delta[fs.clone()];

        let a_h = &mut tp.a_h[hs.clone()];
        gemm(1.0, View::new(d, b, f), w_dh.t(), 0.0, ViewMut::new(a_h, b, h));
        add_row(a_h, p.block(Block::DecayHiddenB));
        for (g, &a) in tp.gamma_h[hs.clone()].iter_mut().zip(a_h.iter()) {
            *g = math::exp(-a.max(0.0));
        }
        if s > 0 {
            let prev = &tp.h_out[(s - 1) * bh..s * bh];
            for ((hd, &hp), &g) in tp.h_dec[hs.clone()].iter_mut().zip(prev).zip(&tp.gamma_h[hs.clone()]) {
                *hd = hp * g;
            }
        }
        for i in 0..b {
            for k in 0..f {
                let j = s * bf + i * f + k;
                let a = d[i * f + k] * w_dx[k] + b_dx[k];
                tp.a_x[j] = a;
                tp.gamma_x[j] = math::exp(-a.max(0.0));
            }
        }

        let h_dec = View::new(&tp.h_dec[hs.clone()], b, h);
        let x_hat = &mut tp.x_hat[fs.clone()];
        gemm(1.0, h_dec, w_hist.t(), 0.0, ViewMut::new(x_hat, b, f));
        add_row(x_hat, p.block(Block::HistoryB));
        let x_h = &mut tp.x_h[fs.clone()];
        for j in 0..bf {
            x_h[j] = m[j] * x[j] + (1.0 - m[j]) * x_hat[j];
        }
        let z_hat = &mut tp.z_hat[fs.clone()];
        gemm(1.0, View::new(x_h, b, f), w_feat.t(), 0.0, ViewMut::new(z_hat, b, f));
        add_row(z_hat, p.block(Block::FeatureB));
        let beta = &mut tp.beta[fs.clone()];
        gemm(1.0, View::new(&tp.gamma_x[fs.clone()], b, f), w_comb.cols(0, f).t(), 0.0, ViewMut::new(beta, b, f));
        gemm(1.0, View::new(m, b, f), w_comb.cols(f, f).t(), 1.0, ViewMut::new(beta, b, f));
        add_row(beta, p.block(Block::CombineB));
        let c_hat = &mut tp.c_hat[fs.clone()];
        let x_c = &mut tp.x_c[fs.clone()];
        for j in 0..bf {
            beta[j] = math::sigmoid(beta[j]);
            c_hat[j] = beta[j] * z_hat[j] + (1.0 - beta[j]) * x_hat[j];
            x_c[j] = m[j] * x[j] + (1.0 - m[j]) * c_hat[j];
        }

        let gates = &mut tp.gates[s * 4 * bh..(s + 1) * 4 * bh];
        gemm(1.0, View::new(x_c, b, f), w_in.cols(0, f).t(), 0.0, ViewMut::new(gates, b, 4 * h));
        gemm(1.0, View::new(m, b, f), w_in.cols(f, f).t(), 1.0, ViewMut::new(gates, b, 4 * h));
        gemm(1.0, h_dec, w_hh.t(), 1.0, ViewMut::new(gates, b, 4 * h));
        add_row(gates, p.block(Block::CellB));
        for i in 0..b {
            let row = &mut gates[i * 4 * h..(i + 1) * 4 * h];
            for k in 0..h {
                let ig = math::sigmoid(row[k]);
                let fg = math::sigmoid(row[h + k]);
                let gg = math::tanh(row[2 * h + k]);
                let og = math::sigmoid(row[3 * h + k]);
                row[k] = ig;
                row[h + k] = fg;
                row[2 * h + k] = gg;
                row[3 * h + k] = og;
                let j = s * bh + i * h + k;
                let c_prev = if s > 0 { tp.c[j - bh] } else { 0.0 };
                let c = fg * c_prev + ig * gg;
                tp.c[j] = c;
                tp.tanh_c[j] = math::tanh(c);
                tp.h_out[j] = og * tp.tanh_c[j];
            }
        }
    }

    let w_c = p.block(Block::ClassifierW);
    let b_c = p.block(Block::ClassifierB)[0];
    let last = Tape::step(&tp.h_out, t - 1, bh);
    for i in 0..b {
        tp.logit[i] = b_c + last[i * h..(i + 1) * h].iter().zip(w_c).map(|(a, w)| a * w).sum::<f64>();
    }
    tp
}

/// Loss gradients with respect to the three estimates (`T × B × F`) and the
/// logits (`B`).
pub(crate) struct Upstream {
    pub x_hat: Vec<f64>,
    pub z_hat: Vec<f64>,
    pub c_hat: Vec<f64>,
    pub logit: Vec<f64>,
}

impl Upstream {
    pub fn zeros(b: usize, t: usize, f: usize) -> Self {
        Self { x_hat: vec![0.0; t * b * f], z_hat: vec![0.0; t * b * f], c_hat: vec![0.0; t * b * f], logit: vec![0.0; b] }
    }
}

/// Masked mean absolute error of the three estimates, averaged per sample
/// over its observed cells and then over the batch. When `up` is given,
/// `scale ×` the gradient is added to it.
pub(crate) fn estimation_loss(tp: &Tape, inp: &Input<'_>, scale: f64, up: Option<&mut Upstream>) -> f64 {
    let (b, t, f) = (tp.b, tp.t, tp.f);
    let mut counts = vec![0.0; b];
    for s in 0..t {
        for i in 0..b {
            counts[i] += inp.m[(s * b + i) * f..(s * b + i + 1) * f].iter().sum::<f64>();
        }
    }
    let mut per_sample = vec![0.0; b];
    let mut up = up;
    for s in 0..t {
        for i in 0..b {
            if counts[i] == 0.0 {
                continue;
            }
            let w = 1.0 / (3.0 * counts[i]);
            let g = scale * w / b as f64;
            for k in 0..f {
                let j = (s * b + i) * f + k;
                if inp.m[j] == 0.0 {
                    continue;
                }
                let x = inp.x[j];
                let (ex, ez, ec) = (tp.x_hat[j] - x, tp.z_hat[j] - x, tp.c_hat[j] - x);
                per_sample[i] += w * (ex.abs() + ez.abs() + ec.abs());
                if let Some(u) = up.as_deref_mut() {
                    u.x_hat[j] += g * math::sign(ex);
                    u.z_hat[j] += g * math::sign(ez);
                    u.c_hat[j] += g * math::sign(ec);
                }
            }
        }
    }
    per_sample.iter().sum::<f64>() / b as f64
}

/// Accumulates parameter gradients into `g`.
pub(crate) fn backward(p: &RitsParams, inp: &Input<'_>, tp: &Tape, up: &Upstream, g: &mut RitsParams) {
    let (b, t, f, h) = (tp.b, tp.t, tp.f, tp.h);
    let (bf, bh) = (b * f, b * h);
    let w_in = View::new(p.block(Block::CellInputW), 4 * h, 2 * f);
    let w_hh = View::new(p.block(Block::CellHiddenW), 4 * h, h);
    let w_comb = View::new(p.block(Block::CombineW), f, 2 * f);
    let w_feat = View::new(p.block(Block::FeatureW), f, f);
    let w_hist = View::new(p.block(Block::HistoryW), f, h);
    let w_c = p.block(Block::ClassifierW);

    let mut dh = vec![0.0; bh];
    let mut dc = vec![0.0; bh];
    let mut dgates = vec![0.0; 4 * bh];
    let mut dxc = vec![0.0; bf];
    let mut dbeta = vec![0.0; bf];
    let mut dz = vec![0.0; bf];
    let mut dxhat = vec![0.0; bf];
    let mut dgx = vec![0.0; bf];
    let mut dxh = vec![0.0; bf];
    let mut dhdec = vec![0.0; bh];
    let mut dah = vec![0.0; bh];

    {
        let last = Tape::step(&tp.h_out, t - 1, bh);
        let r = g.range(Block::ClassifierW);
        for i in 0..b {
            let gl = up.logit[i];
            for k in 0..h {
                dh[i * h + k] = gl * w_c[k];
                g.data[r.start + k] += gl * last[i * h + k];
            }
        }
        let r = g.range(Block::ClassifierB);
        g.data[r.start] += up.logit.iter().sum::<f64>();
    }

    for s in (0..t).rev() {
        let (fs, hs) = (s * bf..(s + 1) * bf, s * bh..(s + 1) * bh);
        let m = &inp.m[fs.clone()];
        let d = &inp.delta[fs.clone()];
        let gates = &tp.gates[s * 4 * bh..(s + 1) * 4 * bh];

        for i in 0..b {
            for k in 0..h {
                let j = i * h + k;
                let row = &gates[i * 4 * h..(i + 1) * 4 * h];
                let (ig, fg, gg, og) = (row[k], row[h + k], row[2 * h + k], row[3 * h + k]);
                let tc = tp.tanh_c[s * bh + j];
                let c_prev = if s > 0 { tp.c[(s - 1) * bh + j] } else { 0.0 };
                let dct = dc[j] + dh[j] * og * (1.0 - tc * tc);
                let drow = &mut dgates[i * 4 * h..(i + 1) * 4 * h];
                drow[k] = dct * gg * ig * (1.0 - ig);
                drow[h + k] = dct * c_prev * fg * (1.0 - fg);
                drow[2 * h + k] = dct * ig * (1.0 - gg * gg);
                drow[3 * h + k] = dh[j] * tc * og * (1.0 - og);
                dc[j] = dct * fg;
            }
        }
        let dg = View::new(&dgates, b, 4 * h);
        let x_c = View::new(&tp.x_c[fs.clone()], b, f);
        let mv = View::new(m, b, f);
        let h_dec = View::new(&tp.h_dec[hs.clone()], b, h);
        {
            let r = g.range(Block::CellInputW);
            let gw = ViewMut::new(&mut g.data[r.clone()], 4 * h, 2 * f);
            gemm(1.0, dg.t(), x_c, 1.0, gw.cols(0, f));
            let gw = ViewMut::new(&mut g.data[r], 4 * h, 2 * f);
            gemm(1.0, dg.t(), mv, 1.0, gw.cols(f, f));
            let r = g.range(Block::CellHiddenW);
            gemm(1.0, dg.t(), h_dec, 1.0, ViewMut::new(&mut g.data[r], 4 * h, h));
            let r = g.range(Block::CellB);
            sum_rows_into(&dgates, &mut g.data[r]);
        }
        gemm(1.0, dg, w_in.cols(0, f), 0.0, ViewMut::new(&mut dxc, b, f));
        gemm(1.0, dg, w_hh, 0.0, ViewMut::new(&mut dhdec, b, h));

        let beta = &tp.beta[fs.clone()];
        let z_hat = &tp.z_hat[fs.clone()];
        let x_hat = &tp.x_hat[fs.clone()];
        for j in 0..bf {
            let dchat = up.c_hat[s * bf + j] + (1.0 - m[j]) * dxc[j];
            let bj = beta[j];
            dbeta[j] = dchat * (z_hat[j] - x_hat[j]) * bj * (1.0 - bj);
            dz[j] = up.z_hat[s * bf + j] + dchat * bj;
            dxhat[j] = up.x_hat[s * bf + j] + dchat * (1.0 - bj);
        }

        let db = View::new(&dbeta, b, f);
        {
            let r = g.range(Block::CombineW);
            let gw = ViewMut::new(&mut g.data[r.clone()], f, 2 * f);
            gemm(1.0, db.t(), View::new(&tp.gamma_x[fs.clone()], b, f), 1.0, gw.cols(0, f));
            let gw = ViewMut::new(&mut g.data[r], f, 2 * f);
            gemm(1.0, db.t(), mv, 1.0, gw.cols(f, f));
            let r = g.range(Block::CombineB);
            sum_rows_into(&dbeta, &mut g.data[r]);
        }
        gemm(1.0, db, w_comb.cols(0, f), 0.0, ViewMut::new(&mut dgx, b, f));
        {
            let rw = g.range(Block::DecayInputW);
            let rb = g.range(Block::DecayInputB);
            for i in 0..b {
                for k in 0..f {
                    let j = i * f + k;
                    let a = tp.a_x[s * bf + j];
                    if a > 0.0 {
                        let dax = -dgx[j] * tp.gamma_x[s * bf + j];
                        g.data[rw.start + k] += dax * d[j];
                        g.data[rb.start + k] += dax;
                    }
                }
            }
        }

        let dzv = View::new(&dz, b, f);
        {
            let r = g.range(Block::FeatureW);
            gemm(1.0, dzv.t(), View::new(&tp.x_h[fs.clone()], b, f), 1.0, ViewMut::new(&mut g.data[r], f, f));
            let r = g.range(Block::FeatureB);
            sum_rows_into(&dz, &mut g.data[r]);
        }
        gemm(1.0, dzv, w_feat, 0.0, ViewMut::new(&mut dxh, b, f));
        for j in 0..bf {
            dxhat[j] += (1.0 - m[j]) * dxh[j];
        }

        let dxv = View::new(&dxhat, b, f);
        {
            let r = g.range(Block::HistoryW);
            gemm(1.0, dxv.t(), h_dec, 1.0, ViewMut::new(&mut g.data[r], f, h));
            let r = g.range(Block::HistoryB);
            sum_rows_into(&dxhat, &mut g.data[r]);
        }
        gemm(1.0, dxv, w_hist, 1.0, ViewMut::new(&mut dhdec, b, h));

        for j in 0..bh {
            let gamma = tp.gamma_h[s * bh + j];
            let h_prev = if s > 0 { tp.h_out[(s - 1) * bh + j] } else { 0.0 };
            dah[j] = if tp.a_h[s * bh + j] > 0.0 { -dhdec[j] * h_prev * gamma } else { 0.0 };
            dh[j] = dhdec[j] * gamma;
        }
        {
            let r = g.range(Block::DecayHiddenW);
            gemm(1.0, View::new(&dah, b, h).t(), View::new(d, b, f), 1.0, ViewMut::new(&mut g.data[r], h, f));
            let r = g.range(Block::DecayHiddenB);
            sum_rows_into(&dah, &mut g.data[r]);
        }
    }

    let r = g.range(Block::FeatureW);
    for k in 0..f {
        g.data[r.start + k * f + k] = 0.0;
    }
}

/// One direction's outputs for a single sample, each `steps × n_features`
/// (hidden states `steps × hidden`).
#[derive(Clone, Debug, PartialEq)]
pub struct RitsOutput {
    pub steps: usize,
    pub n_features: usize,
    pub history_estimates: Vec<f64>,
    pub feature_estimates: Vec<f64>,
    pub combined_estimates: Vec<f64>,
    pub complement: Vec<f64>,
    pub hidden_states: Vec<f64>,
    pub logit: f64,
    pub probability: f64,
    pub estimation_loss: f64,
}

pub(crate) fn output_of(tp: &Tape, inp: &Input<'_>, i: usize) -> RitsOutput {
    let (b, t, f, h) = (tp.b, tp.t, tp.f, tp.h);
    let pick = |v: &[f64], w: usize| -> Vec<f64> { (0..t).flat_map(|s| v[(s * b + i) * w..(s * b + i + 1) * w].iter().copied()).collect() };
    let one = Input {
        b: 1,
        t,
        f,
        x: &pick(inp.x, f),
        m: &pick(inp.m, f),
        delta: &[],
    };
    let single = Tape {
        b: 1,
        t,
        f,
        h,
        a_h: Vec::new(),
        gamma_h: Vec::new(),
        a_x: Vec::new(),
        gamma_x: Vec::new(),
        h_dec: Vec::new(),
        x_hat: pick(&tp.x_hat, f),
        x_h: Vec::new(),
        z_hat: pick(&tp.z_hat, f),
        beta: Vec::new(),
        c_hat: pick(&tp.c_hat, f),
        x_c: pick(&tp.x_c, f),
        gates: Vec::new(),
        c: Vec::new(),
        tanh_c: Vec::new(),
        h_out: pick(&tp.h_out, h),
        logit: vec![tp.logit[i]],
    };
    let estimation_loss = estimation_loss(&single, &one, 1.0, None);
    RitsOutput {
        steps: t,
        n_features: f,
        history_estimates: single.x_hat,
        feature_estimates: single.z_hat,
        combined_estimates: single.c_hat,
        complement: single.x_c,
        hidden_states: single.h_out,
        logit: tp.logit[i],
        probability: probability(tp.logit[i]),
        estimation_loss,
    }
}

/// Runs one direction over a single sample given its values (absent cells
/// are ignored), mask and time gaps.
pub fn rits_forward(p: &RitsParams, x: &DenseMatrix, mask: &MaskMatrix, delta: &DeltaMatrix) -> Result<RitsOutput, RitsError> {
    let f = p.n_features;
    for cols in [x.cols, mask.cols, delta.cols] {
        if cols != f {
            return Err(RitsError::ShapeMismatch { expected: f, found: cols });
        }
    }
    if mask.rows != x.rows || delta.rows != x.rows || x.data.len() != x.rows * f {
        return Err(RitsError::ShapeMismatch { expected: x.rows, found: mask.rows.min(delta.rows) });
    }
    if x.rows == 0 {
        return Err(RitsError::Empty);
    }
    if x.data.iter().zip(&mask.data).any(|(v, &o)| o == 1 && !v.is_finite()) {
        return Err(RitsError::NonFiniteInput("observed value"));
    }
    let m: Vec<f64> = mask.data.iter().map(|&o| o as f64).collect();
    let xv: Vec<f64> = x.data.iter().zip(&m).map(|(&v, &o)| if o == 1.0 { v } else { 0.0 }).collect();
    let dv: Vec<f64> = delta.data.iter().map(|&d| d as f64).collect();
    let inp = Input { b: 1, t: x.rows, f, x: &xv, m: &m, delta: &dv };
    let tp = forward(p, &inp);
    Ok(output_of(&tp, &inp, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::missing::compute_time_gaps;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(f: usize, h: usize, seed: u64) -> RitsParams {
        RitsParams::init(f, h, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn fully_observed_complement_is_input() {
        let p = params(3, 5, 1);
        let x = DenseMatrix { rows: 7, cols: 3, data: (0..21).map(|i| (i as f64 * 0.37).sin()).collect() };
        let mask = MaskMatrix::from_column_major(7, 3, |_, _| true);
        let out = rits_forward(&p, &x, &mask, &compute_time_gaps(&mask)).unwrap();
        assert_eq!(out.complement, x.data);
        assert!(out.probability > 0.0 && out.probability < 1.0);
    }

    #[test]
    fn all_absent_gives_finite_output_and_zero_loss() {
        let p = params(4, 6, 2);
        let x = DenseMatrix { rows: 7, cols: 4, data: vec![0.0; 28] };
        let mask = MaskMatrix::from_column_major(7, 4, |_, _| false);
        let out = rits_forward(&p, &x, &mask, &compute_time_gaps(&mask)).unwrap();
        assert!(out.probability.is_finite() && out.logit.is_finite());
        assert_eq!(out.estimation_loss, 0.0);
        assert_eq!(out.complement, out.combined_estimates);
    }

    #[test]
    fn first_step_sees_zero_state() {
        let mut p = params(2, 3, 3);
        for v in p.block_mut(Block::DecayHiddenB) {
            *v = 0.0;
        }
        let mask = MaskMatrix::from_column_major(7, 2, |t, _| t % 2 == 0);
        let x = DenseMatrix { rows: 7, cols: 2, data: vec![1.0; 14] };
        let out = rits_forward(&p, &x, &mask, &compute_time_gaps(&mask)).unwrap();
        let b_hist = p.block(Block::HistoryB);
        assert_eq!(&out.history_estimates[..2], b_hist);
    }

    #[test]
    fn absent_values_do_not_matter() {
        let p = params(3, 4, 4);
        let mask = MaskMatrix::from_column_major(7, 3, |t, d| (t + d) % 3 != 0);
        let delta = compute_time_gaps(&mask);
        let a = DenseMatrix { rows: 7, cols: 3, data: (0..21).map(|i| i as f64 * 0.1).collect() };
        let mut b = a.clone();
        for (i, v) in b.data.iter_mut().enumerate() {
            if mask.data[i] == 0 {
                *v = 1e6;
            }
        }
        assert_eq!(rits_forward(&p, &a, &mask, &delta).unwrap(), rits_forward(&p, &b, &mask, &delta).unwrap());
    }

    #[test]
    fn shape_and_value_errors() {
        let p = params(3, 4, 5);
        let mask = MaskMatrix::from_column_major(7, 2, |_, _| true);
        let x = DenseMatrix { rows: 7, cols: 2, data: vec![0.0; 14] };
        assert!(matches!(rits_forward(&p, &x, &mask, &compute_time_gaps(&mask)), Err(RitsError::ShapeMismatch { .. })));
        let mask = MaskMatrix::from_column_major(7, 3, |_, _| true);
        let mut x = DenseMatrix { rows: 7, cols: 3, data: vec![0.0; 21] };
        x.data[4] = f64::INFINITY;
        assert_eq!(rits_forward(&p, &x, &mask, &compute_time_gaps(&mask)), Err(RitsError::NonFiniteInput("observed value")));
    }
}
