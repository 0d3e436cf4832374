//! Missing-value bookkeeping: presence masks, days-since-last-observation
//! gaps, the two baseline imputations and the flattening used by trees.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::WindowSample;
use crate::ingest::FeatureSchema;

/// `rows × cols` presence indicators (1 = observed).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u8>,
}

impl MaskMatrix {
    pub fn from_column_major(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = vec![0; rows * cols];
        for t in 0..rows {
            for d in 0..cols {
                data[t * cols + d] = f(t, d) as u8;
            }
        }
        Self { rows, cols, data }
    }

    pub fn get(&self, t: usize, d: usize) -> u8 {
        self.data[t * self.cols + d]
    }

    /// Same mask with the time axis reversed.
    pub fn reversed(&self) -> MaskMatrix {
        Self::from_column_major(self.rows, self.cols, |t, d| self.get(self.rows - 1 - t, d) == 1)
    }
}

/// `rows × cols` gaps in days since the previous observation of each column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeltaMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u32>,
}

impl DeltaMatrix {
    pub fn get(&self, t: usize, d: usize) -> u32 {
        self.data[t * self.cols + d]
    }
}

pub fn compute_mask(sample: &WindowSample) -> MaskMatrix {
    MaskMatrix {
        rows: sample.rows(),
        cols: sample.n_columns,
        data: sample.observed.iter().map(|&o| o as u8).collect(),
    }
}

/// Time-gap recurrence over consecutive daily rows:
/// `δ_0 = 0`; for `t ≥ 1`, `δ_t = 1` after an observed row and
/// `1 + δ_{t-1}` after an absent one.
pub fn compute_time_gaps(mask: &MaskMatrix) -> DeltaMatrix {
    let (rows, cols) = (mask.rows, mask.cols);
    let mut data = vec![0u32; rows * cols];
    for t in 1..rows {
        for d in 0..cols {
            data[t * cols + d] = if mask.get(t - 1, d) == 1 { 1 } else { 1 + data[(t - 1) * cols + d] };
        }
    }
    DeltaMatrix { rows, cols, data }
}

/// A dense `rows × cols` matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn get(&self, t: usize, d: usize) -> f64 {
        self.data[t * self.cols + d]
    }
}

pub fn impute_zero(sample: &WindowSample) -> DenseMatrix {
    let data = sample.values.iter().zip(&sample.observed).map(|(&v, &o)| if o { v } else { 0.0 }).collect();
    DenseMatrix { rows: sample.rows(), cols: sample.n_columns, data }
}

/// Per-column training medians. Columns never observed in training fall
/// back to 0 and are flagged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Medians {
    pub values: Vec<f64>,
    pub fallback: Vec<bool>,
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { (values[n / 2 - 1] + values[n / 2]) / 2.0 })
}

/// Medians of observed entries, numeric columns only. Pass the training
/// split; one-hot columns are never imputed.
pub fn fit_medians<'a>(train: impl IntoIterator<Item = &'a WindowSample>, schema: &FeatureSchema) -> Medians {
    let n_num = schema.n_numeric();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); n_num];
    for s in train {
        for t in 0..s.rows() {
            for (d, col) in cols.iter_mut().enumerate() {
                if let Some(v) = s.get(t, d) {
                    col.push(v);
                }
            }
        }
    }
    let mut values = vec![0.0; schema.n_columns()];
    let mut fallback = vec![false; schema.n_columns()];
    for (d, col) in cols.iter_mut().enumerate() {
        match median(col) {
            Some(m) => values[d] = m,
            None => fallback[d] = true,
        }
    }
    Medians { values, fallback }
}

pub fn impute_median(sample: &WindowSample, medians: &Medians) -> DenseMatrix {
    let cols = sample.n_columns;
    let data = sample
        .values
        .iter()
        .zip(&sample.observed)
        .enumerate()
        .map(|(i, (&v, &o))| if o { v } else { medians.values[i % cols] })
        .collect();
    DenseMatrix { rows: sample.rows(), cols, data }
}

/// Row `(t, d)` lands at index `t * cols + d`.
pub fn flatten_dense(m: &DenseMatrix) -> Vec<f64> {
    m.data.clone()
}

/// Flattened row with absent cells kept as `None` for sparsity-aware trees.
pub fn flatten_sparse(sample: &WindowSample) -> Vec<Option<f64>> {
    sample.values.iter().zip(&sample.observed).map(|(&v, &o)| o.then_some(v)).collect()
}

pub fn unflatten(row: &[f64], cols: usize) -> DenseMatrix {
    DenseMatrix { rows: row.len() / cols, cols, data: row.to_vec() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Day;
    use alloc::string::{String, ToString};

    fn sample(cells: &[Option<f64>], cols: usize) -> WindowSample {
        WindowSample {
            network_id: "n".into(),
            port_id: "p".into(),
            present_day: Day(0),
            n_columns: cols,
            values: cells.iter().map(|c| c.unwrap_or(0.0)).collect(),
            observed: cells.iter().map(Option::is_some).collect(),
            label: false,
            future: vec![],
        }
    }

    fn column(bits: &[u8]) -> MaskMatrix {
        MaskMatrix { rows: bits.len(), cols: 1, data: bits.to_vec() }
    }

    #[test]
    fn mask_rows() {
        let m = compute_mask(&sample(&[Some(1.0), Some(2.0), Some(3.0), None, None, None, Some(1.0), None, Some(2.0)], 3));
        assert_eq!(m.data, vec![1, 1, 1, 0, 0, 0, 1, 0, 1]);
    }

    #[test]
    fn gaps_hand_examples() {
        assert_eq!(compute_time_gaps(&column(&[1, 1, 1, 1, 1, 1, 1])).data, vec![0, 1, 1, 1, 1, 1, 1]);
        assert_eq!(compute_time_gaps(&column(&[1, 1, 0, 1, 0, 0, 1])).data, vec![0, 1, 1, 2, 1, 2, 3]);
        assert_eq!(compute_time_gaps(&column(&[0, 0, 0, 0, 0, 0, 0])).data, vec![0, 1, 2, 3, 4, 5, 6]);
    }

    /// Distance to the most recent prior observed row, or to the window
    /// start when there is none.
    fn closed_form(bits: &[u8], t: usize) -> u32 {
        if t == 0 {
            return 0;
        }
        match (0..t).rev().find(|&s| bits[s] == 1) {
            Some(s) => (t - s) as u32,
            None => t as u32,
        }
    }

    #[test]
    fn gaps_exhaustive_over_all_columns() {
        for pattern in 0u32..128 {
            let bits: Vec<u8> = (0..7).map(|t| ((pattern >> t) & 1) as u8).collect();
            let got = compute_time_gaps(&column(&bits));
            for t in 0..7 {
                assert_eq!(got.data[t], closed_form(&bits, t), "pattern {pattern:07b} t {t}");
            }
        }
    }

    #[test]
    fn reversed_mask() {
        let m = column(&[1, 0, 0, 1, 1, 0, 0]);
        assert_eq!(m.reversed().data, vec![0, 0, 1, 1, 0, 0, 1]);
    }

    #[test]
    fn imputation_modes() {
        let s = sample(&[None, Some(3.2)], 2);
        assert_eq!(impute_zero(&s).data, vec![0.0, 3.2]);
        let med = Medians { values: vec![7.5, 9.0], fallback: vec![false, false] };
        assert_eq!(impute_median(&s, &med).data, vec![7.5, 3.2]);
    }

    #[test]
    fn imputing_dense_input_is_identity() {
        let s = sample(&[Some(1.0), Some(-2.0), Some(0.5), Some(4.0)], 2);
        let med = Medians { values: vec![100.0, 100.0], fallback: vec![false, false] };
        assert_eq!(impute_zero(&s).data, s.values);
        assert_eq!(impute_median(&s, &med).data, s.values);
    }

    fn schema2() -> FeatureSchema {
        FeatureSchema::new(vec!["HCCS".to_string(), "UAS".to_string()], Vec::<String>::new(), vec![]).unwrap()
    }

    #[test]
    fn medians_even_count_and_fallback() {
        let a = sample(&[Some(1.0), None, Some(4.0), None], 2);
        let b = sample(&[Some(2.0), None, Some(10.0), None], 2);
        let m = fit_medians([&a, &b], &schema2());
        assert_eq!(m.values[0], 3.0);
        assert_eq!(m.values[1], 0.0);
        assert!(m.fallback[1] && !m.fallback[0]);
    }

    #[test]
    fn medians_depend_on_fitting_split() {
        let train = sample(&[Some(1.0), None, Some(2.0), None], 2);
        let test = sample(&[Some(50.0), None, Some(60.0), None], 2);
        let on_train = fit_medians([&train], &schema2());
        let on_all = fit_medians([&train, &test], &schema2());
        assert_ne!(on_train.values[0], on_all.values[0]);
    }

    #[test]
    fn flatten_layout() {
        let cells: Vec<Option<f64>> = (0..21).map(|i| if i == 5 { None } else { Some(i as f64) }).collect();
        let s = sample(&cells, 3);
        let dense = impute_zero(&s);
        let row = flatten_dense(&dense);
        assert_eq!(row.len(), 21);
        for t in 0..7 {
            for d in 0..3 {
                assert_eq!(row[3 * t + d], dense.get(t, d));
            }
        }
        assert_eq!(unflatten(&row, 3), dense);
        let sparse = flatten_sparse(&s);
        assert_eq!(sparse[5], None);
        assert_eq!(sparse[6], Some(6.0));
    }
}
