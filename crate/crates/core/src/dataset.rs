//! Sliding windows over port series, future-scan labeling, defect filtering,
//! chronological splitting and z-score statistics.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Day, FeatureSchema, PortSeries};
use crate::math;

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("split needs at least 10 samples, got {0}")]
    TooFewSamples(usize),
    #[error("samples span only {0} distinct day(s); a chronological split needs at least 3")]
    DegenerateSplit(usize),
    #[error("window spec must have at least one past and one future day")]
    BadWindowSpec,
    #[error("series column count {found} does not match schema ({expected})")]
    SchemaMismatch { expected: usize, found: usize },
}

/// Window geometry: `past_days` input rows (the last being the present day)
/// followed by `horizon_days` label rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub past_days: usize,
    pub horizon_days: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { past_days: 7, horizon_days: 7 }
    }
}

impl WindowSpec {
    pub fn span(&self) -> usize {
        self.past_days + self.horizon_days
    }
}

/// Label-source readings of one future day, kept for audit only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FutureDay {
    pub uas: Option<f64>,
    pub hccs: Option<f64>,
    /// Whether any numeric PM was reported that day.
    pub any_observed: bool,
}

impl FutureDay {
    pub fn has_los(&self) -> bool {
        self.uas.is_some_and(|v| v > 0.0) || self.hccs.is_some_and(|v| v > 0.0)
    }
}

/// One input window of a port: `rows × n_columns` values with presence flags.
///
/// Absent cells hold `0.0`. One-hot columns are always present. Model input
/// is built from `values`/`observed` only; `future` never reaches a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub network_id: String,
    pub port_id: String,
    pub present_day: Day,
    pub n_columns: usize,
    pub values: Vec<f64>,
    pub observed: Vec<bool>,
    pub label: bool,
    pub future: Vec<FutureDay>,
}

impl WindowSample {
    pub fn rows(&self) -> usize {
        self.values.len() / self.n_columns
    }

    pub fn get(&self, t: usize, d: usize) -> Option<f64> {
        let i = t * self.n_columns + d;
        self.observed[i].then_some(self.values[i])
    }

    pub fn has_column(&self, col: usize) -> bool {
        self.observed[col] && self.values[col] > 0.5
    }
}

/// Emits every full window of the series with stride one day.
///
/// Samples come out unlabeled (`label == false`); see [`label_window`].
pub fn slide_windows(series: &PortSeries, schema: &FeatureSchema, spec: WindowSpec) -> Vec<WindowSample> {
    let span = spec.span();
    if series.len() < span {
        return Vec::new();
    }
    let n_num = schema.n_numeric();
    let n_col = schema.n_columns();
    let (uas, hccs) = (schema.uas_index(), schema.hccs_index());
    let one_hot = series.one_hot();

    (0..=series.len() - span)
        .map(|start| {
            let mut values = Vec::with_capacity(spec.past_days * n_col);
            let mut observed = Vec::with_capacity(spec.past_days * n_col);
            for row in start..start + spec.past_days {
                values.extend_from_slice(series.row_values(row));
                observed.extend_from_slice(series.row_present(row));
                values.extend(one_hot.iter().map(|&on| if on { 1.0 } else { 0.0 }));
                observed.extend(core::iter::repeat_n(true, one_hot.len()));
            }
            let future = (start + spec.past_days..start + span)
                .map(|row| FutureDay {
                    uas: series.get(row, uas),
                    hccs: series.get(row, hccs),
                    any_observed: series.row_present(row)[..n_num].iter().any(|&p| p),
                })
                .collect();
            WindowSample {
                network_id: series.network_id.clone(),
                port_id: series.port_id.clone(),
                present_day: series.day(start + spec.past_days - 1),
                n_columns: n_col,
                values,
                observed,
                label: false,
                future,
            }
        })
        .collect()
}

/// Positive iff any future day reports UAS > 0 or HCCS > 0.
pub fn label_window(mut sample: WindowSample) -> WindowSample {
    sample.label = sample.future.iter().any(FutureDay::has_los);
    sample
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    EmptyPast,
    EmptyFuture,
    LosToday,
    NoTraffic,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::EmptyPast => "empty_past",
            DropReason::EmptyFuture => "empty_future",
            DropReason::LosToday => "los_today",
            DropReason::NoTraffic => "no_traffic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterDecision {
    Keep,
    Drop(DropReason),
}

/// Every defect predicate the sample satisfies, in reporting priority order.
pub fn defect_reasons(sample: &WindowSample, schema: &FeatureSchema) -> Vec<DropReason> {
    let n_num = schema.n_numeric();
    let n_col = sample.n_columns;
    let present_row = sample.rows() - 1;
    let mut reasons = Vec::new();

    let past_empty = (0..sample.rows()).all(|t| !sample.observed[t * n_col..t * n_col + n_num].iter().any(|&p| p));
    if past_empty {
        reasons.push(DropReason::EmptyPast);
    }
    if !sample.future.iter().any(|f| f.any_observed) {
        reasons.push(DropReason::EmptyFuture);
    }
    let positive = |col: usize| sample.get(present_row, col).is_some_and(|v| v > 0.0);
    if positive(schema.uas_index()) || positive(schema.hccs_index()) {
        reasons.push(DropReason::LosToday);
    }
    if !schema.indicator_indices().into_iter().any(positive) {
        reasons.push(DropReason::NoTraffic);
    }
    reasons
}

pub fn filter_defective(sample: &WindowSample, schema: &FeatureSchema) -> FilterDecision {
    match defect_reasons(sample, schema).first() {
        Some(&r) => FilterDecision::Drop(r),
        None => FilterDecision::Keep,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

/// Per-sample split tags plus the day boundaries that induced them.
///
/// A sample is `Train` when `present_day <= train_end`, `Validation` when
/// `present_day <= validation_end`, `Test` otherwise. Merged datasets keep
/// their sources' tags and carry no single pair of boundaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub tags: Vec<Split>,
    pub boundaries: Option<(Day, Day)>,
}

impl SplitAssignment {
    pub fn count(&self, split: Split) -> usize {
        self.tags.iter().filter(|&&t| t == split).count()
    }
}

/// Sorts by present day and places the two boundaries at whole-day edges
/// whose cumulative counts best approximate 70% and 80% of the samples.
pub fn chronological_split(samples: &[WindowSample]) -> Result<SplitAssignment, DatasetError> {
    let n = samples.len();
    if n < 10 {
        return Err(DatasetError::TooFewSamples(n));
    }
    let mut per_day: BTreeMap<Day, usize> = BTreeMap::new();
    for s in samples {
        *per_day.entry(s.present_day).or_default() += 1;
    }
    if per_day.len() < 3 {
        return Err(DatasetError::DegenerateSplit(per_day.len()));
    }
    let days: Vec<Day> = per_day.keys().copied().collect();
    let cumulative: Vec<usize> = per_day
        .values()
        .scan(0usize, |acc, &c| {
            *acc += c;
            Some(*acc)
        })
        .collect();

    let closest = |range: core::ops::Range<usize>, target: f64| {
        range
            .min_by(|&a, &b| {
                let da = (cumulative[a] as f64 - target).abs();
                let db = (cumulative[b] as f64 - target).abs();
                da.partial_cmp(&db).unwrap().then(a.cmp(&b))
            })
            .expect("non-empty range")
    };
    let k = days.len();
    let train_end = closest(0..k - 2, 0.7 * n as f64);
    let val_end = closest(train_end + 1..k - 1, 0.8 * n as f64);
    let (b1, b2) = (days[train_end], days[val_end]);

    let tags = samples
        .iter()
        .map(|s| {
            if s.present_day <= b1 {
                Split::Train
            } else if s.present_day <= b2 {
                Split::Validation
            } else {
                Split::Test
            }
        })
        .collect();
    Ok(SplitAssignment { tags, boundaries: Some((b1, b2)) })
}

/// Streaming mean/variance accumulator (Welford), mergeable across shards.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.count as f64 * other.count as f64) / count as f64;
        Moments { count, mean, m2 }
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            math::sqrt(self.m2 / self.count as f64)
        }
    }
}

/// Per-column z-score parameters fit on observed training entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// `false` for one-hot columns, which pass through unchanged.
    pub scaled: Vec<bool>,
}

impl NormStats {
    pub fn from_moments(moments: &[Moments], schema: &FeatureSchema) -> Self {
        let n_col = schema.n_columns();
        let mut mean = alloc::vec![0.0; n_col];
        let mut std = alloc::vec![0.0; n_col];
        for (d, m) in moments.iter().enumerate().take(schema.n_numeric()) {
            mean[d] = m.mean;
            std[d] = m.std();
        }
        let scaled = (0..n_col).map(|d| !schema.is_one_hot_column(d)).collect();
        Self { mean, std, scaled }
    }

    #[inline]
    pub fn normalize(&self, col: usize, x: f64) -> f64 {
        if !self.scaled[col] {
            x
        } else if self.std[col] > 0.0 {
            (x - self.mean[col]) / self.std[col]
        } else {
            0.0
        }
    }

    #[inline]
    pub fn denormalize(&self, col: usize, z: f64) -> f64 {
        if self.scaled[col] {
            z * self.std[col] + self.mean[col]
        } else {
            z
        }
    }
}

pub fn accumulate_moments<'a>(samples: impl IntoIterator<Item = &'a WindowSample>, n_numeric: usize) -> Vec<Moments> {
    let mut acc = alloc::vec![Moments::default(); n_numeric];
    for s in samples {
        for t in 0..s.rows() {
            for (d, m) in acc.iter_mut().enumerate() {
                if let Some(v) = s.get(t, d) {
                    m.push(v);
                }
            }
        }
    }
    acc
}

pub fn zscore_fit<'a>(train: impl IntoIterator<Item = &'a WindowSample>, schema: &FeatureSchema) -> NormStats {
    NormStats::from_moments(&accumulate_moments(train, schema.n_numeric()), schema)
}

/// Normalized copy of a sample. Absent cells stay absent (and `0.0`).
pub fn zscore_apply(sample: &WindowSample, stats: &NormStats) -> WindowSample {
    let mut out = sample.clone();
    let n_col = sample.n_columns;
    for (i, (v, &obs)) in out.values.iter_mut().zip(&sample.observed).enumerate() {
        if obs {
            *v = stats.normalize(i % n_col, *v);
        }
    }
    out
}

/// Outcome for one emitted window, kept or not.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub network_id: String,
    pub port_id: String,
    pub present_day: Day,
    pub label: bool,
    pub decision: FilterDecision,
}

/// A labeled, filtered, split dataset. Samples are stored unnormalized;
/// `norm` holds the training-split statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub network_ids: Vec<String>,
    pub schema: FeatureSchema,
    pub spec: WindowSpec,
    pub samples: Vec<WindowSample>,
    pub split: SplitAssignment,
    pub norm: NormStats,
}

impl Dataset {
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| self.split.tags[i] == split).collect()
    }

    pub fn split_samples(&self, split: Split) -> impl Iterator<Item = &WindowSample> {
        self.samples.iter().zip(&self.split.tags).filter(move |(_, &t)| t == split).map(|(s, _)| s)
    }

    pub fn labels(&self, idx: &[usize]) -> Vec<bool> {
        idx.iter().map(|&i| self.samples[i].label).collect()
    }

    pub fn positive_rate(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().filter(|s| s.label).count() as f64 / self.samples.len() as f64
    }

    /// Fraction of absent numeric cells over all kept samples' input rows.
    pub fn missing_rate(&self) -> f64 {
        let n_num = self.schema.n_numeric();
        let (mut absent, mut total) = (0usize, 0usize);
        for s in &self.samples {
            for t in 0..s.rows() {
                let row = &s.observed[t * s.n_columns..t * s.n_columns + n_num];
                absent += row.iter().filter(|&&p| !p).count();
                total += n_num;
            }
        }
        if total == 0 {
            0.0
        } else {
            absent as f64 / total as f64
        }
    }
}

/// Windows, labels, filters and splits all series, then fits normalization
/// on the training split.
pub fn build_dataset(
    series: &[PortSeries],
    schema: &FeatureSchema,
    spec: WindowSpec,
) -> Result<(Dataset, Vec<AuditRow>), DatasetError> {
    if spec.past_days == 0 || spec.horizon_days == 0 {
        return Err(DatasetError::BadWindowSpec);
    }
    let mut kept = Vec::new();
    let mut audit = Vec::new();
    let mut networks: Vec<String> = Vec::new();
    for s in series {
        if s.n_numeric() != schema.n_numeric() {
            return Err(DatasetError::SchemaMismatch { expected: schema.n_numeric(), found: s.n_numeric() });
        }
        if !networks.contains(&s.network_id) {
            networks.push(s.network_id.clone());
        }
        for w in slide_windows(s, schema, spec) {
            let w = label_window(w);
            let decision = filter_defective(&w, schema);
            audit.push(AuditRow {
                network_id: w.network_id.clone(),
                port_id: w.port_id.clone(),
                present_day: w.present_day,
                label: w.label,
                decision,
            });
            if decision == FilterDecision::Keep {
                kept.push(w);
            }
        }
    }
    networks.sort();
    let split = chronological_split(&kept)?;
    let norm = zscore_fit(
        kept.iter().zip(&split.tags).filter(|(_, &t)| t == Split::Train).map(|(s, _)| s),
        schema,
    );
    Ok((
        Dataset { network_ids: networks, schema: schema.clone(), spec, samples: kept, split, norm },
        audit,
    ))
}
