//! Precision/recall curves and the recall-truncated area under them.
//!
//! The headline score `D` is the area under the step-wise PR curve from
//! recall 0 to a cap (0.1 by default), so a perfect ranking scores exactly
//! the cap.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::WindowSample;
use crate::ingest::FeatureSchema;

/// Default recall cap for [`pr_auc_truncated`].
pub const RECALL_CAP: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no positive samples: precision/recall undefined")]
    NoPositives,
    #[error("{scores} scores for {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error("nothing to average")]
    Empty,
    #[error("sample size must be positive")]
    ZeroSize,
    #[error("subset filter selected no samples")]
    EmptySubset,
    #[error("unknown facility `{0}`")]
    UnknownFacility(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
}

/// One point per distinct score, swept from the highest score down.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub positives: usize,
    pub total: usize,
}

pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<PrCurve, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFinite(i));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(EvalError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / positives as f64,
            tp,
            fp,
        });
    }
    Ok(PrCurve { points, positives, total: scores.len() })
}

/// Area under the right-continuous step curve up to `recall_cap`.
///
/// Between consecutive achieved recalls the precision is that of the point
/// reaching the higher recall; the segment crossing the cap counts pro rata.
pub fn pr_auc_truncated(curve: &PrCurve, recall_cap: f64) -> f64 {
    let mut area = 0.0;
    let mut prev = 0.0;
    for p in &curve.points {
        if prev >= recall_cap {
            break;
        }
        let hi = p.recall.min(recall_cap);
        if hi > prev {
            area += p.precision * (hi - prev);
            prev = hi;
        }
    }
    area
}

/// `D` at the default recall cap straight from scores.
pub fn truncated_pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    Ok(pr_auc_truncated(&pr_curve(scores, labels)?, RECALL_CAP))
}

/// `Σ n_i D_i / Σ n_i`.
pub fn weighted_average(scores: &[f64], sizes: &[usize]) -> Result<f64, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    if scores.len() != sizes.len() {
        return Err(EvalError::LengthMismatch { scores: scores.len(), labels: sizes.len() });
    }
    if sizes.contains(&0) {
        return Err(EvalError::ZeroSize);
    }
    let total: usize = sizes.iter().sum();
    let num: f64 = scores.iter().zip(sizes).map(|(d, &n)| d * n as f64).sum();
    Ok(num / total as f64)
}

/// Restricts an evaluation to one network and/or one facility type.
/// `exclude_facility` flips the facility test to select its complement.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetFilter {
    #[serde(default)]
    pub network: Option<String>,
    #[serde(default)]
    pub facility: Option<String>,
    #[serde(default)]
    pub exclude_facility: bool,
}

impl SubsetFilter {
    pub fn network(id: &str) -> Self {
        Self { network: Some(id.into()), ..Self::default() }
    }

    pub fn facility(name: &str) -> Self {
        Self { facility: Some(name.into()), ..Self::default() }
    }

    pub fn selects(&self, sample: &WindowSample, schema: &FeatureSchema) -> Result<bool, EvalError> {
        if let Some(net) = &self.network {
            if &sample.network_id != net {
                return Ok(false);
            }
        }
        if let Some(fac) = &self.facility {
            let col = schema.facility_column(fac).ok_or_else(|| EvalError::UnknownFacility(fac.clone()))?;
            return Ok(sample.has_column(col) != self.exclude_facility);
        }
        Ok(true)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub d: f64,
    pub subset: SubsetFilter,
    pub samples: usize,
    pub positives: usize,
}

/// Scores the samples selected by `filter`. `scores[i]` belongs to
/// `samples[i]`.
pub fn evaluate_subset(
    samples: &[&WindowSample],
    scores: &[f64],
    filter: &SubsetFilter,
    schema: &FeatureSchema,
) -> Result<(Score, PrCurve), EvalError> {
    if samples.len() != scores.len() {
        return Err(EvalError::LengthMismatch { scores: scores.len(), labels: samples.len() });
    }
    let mut sub_scores = Vec::new();
    let mut sub_labels = Vec::new();
    for (s, &p) in samples.iter().zip(scores) {
        if filter.selects(s, schema)? {
            sub_scores.push(p);
            sub_labels.push(s.label);
        }
    }
    if sub_scores.is_empty() {
        return Err(EvalError::EmptySubset);
    }
    let curve = pr_curve(&sub_scores, &sub_labels)?;
    let d = pr_auc_truncated(&curve, RECALL_CAP);
    Ok((Score { d, subset: filter.clone(), samples: curve.total, positives: curve.positives }, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn perfect_separation_point() {
        let c = pr_curve(&[0.9, 0.1], &[true, false]).unwrap();
        assert_eq!(c.points[0].precision, 1.0);
        assert_eq!(c.points[0].recall, 1.0);
        assert_eq!(c.points[0].threshold, 0.9);
    }

    #[test]
    fn ties_form_one_point() {
        let c = pr_curve(&[0.9, 0.9], &[true, false]).unwrap();
        assert_eq!(c.points.len(), 1);
        assert_eq!(c.points[0].precision, 0.5);
        assert_eq!(c.points[0].recall, 1.0);
    }

    #[test]
    fn errors() {
        assert_eq!(pr_curve(&[0.1, 0.2], &[false, false]), Err(EvalError::NoPositives));
        assert_eq!(pr_curve(&[0.1], &[true, false]), Err(EvalError::LengthMismatch { scores: 1, labels: 2 }));
        assert_eq!(pr_curve(&[f64::NAN], &[true]), Err(EvalError::NonFinite(0)));
    }

    #[test]
    fn full_score_for_perfect_ranking() {
        let scores: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let labels: Vec<bool> = (0..40).map(|i| i >= 30).collect();
        assert_eq!(truncated_pr_auc(&scores, &labels).unwrap(), 0.1);
    }

    #[test]
    fn half_precision_rectangle() {
        // All tied: one point at precision 0.5, recall 1.
        let labels = [true, false, true, false];
        assert_eq!(truncated_pr_auc(&[0.3; 4], &labels).unwrap(), 0.05);
    }

    #[test]
    fn weighted_average_examples() {
        assert!((weighted_average(&[0.02, 0.04], &[100, 300]).unwrap() - 0.035).abs() < 1e-15);
        assert!((weighted_average(&[0.02, 0.04], &[50, 50]).unwrap() - 0.03).abs() < 1e-15);
        assert_eq!(weighted_average(&[0.07], &[9]).unwrap(), 0.07);
        assert_eq!(weighted_average(&[], &[]), Err(EvalError::Empty));
        assert_eq!(weighted_average(&[0.1], &[0]), Err(EvalError::ZeroSize));
    }

    /// Counts at threshold `tau` by direct recount.
    fn counts_at(scores: &[f64], labels: &[bool], tau: f64) -> (usize, usize) {
        let tp = scores.iter().zip(labels).filter(|(&s, &l)| s >= tau && l).count();
        let fp = scores.iter().zip(labels).filter(|(&s, &l)| s >= tau && !l).count();
        (tp, fp)
    }

    fn arb_case(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        prop::collection::vec((0u32..25, prop::bool::weighted(0.3)), 2..max).prop_filter_map("needs a positive", |v| {
            let scores: Vec<f64> = v.iter().map(|&(s, _)| s as f64 / 24.0).collect();
            let labels: Vec<bool> = v.iter().map(|&(_, l)| l).collect();
            labels.iter().any(|&l| l).then_some((scores, labels))
        })
    }

    proptest! {
        #[test]
        fn curve_matches_threshold_recount((scores, labels) in arb_case(50)) {
            let c = pr_curve(&scores, &labels).unwrap();
            let mut distinct = scores.clone();
            distinct.sort_by(|a, b| b.total_cmp(a));
            distinct.dedup();
            prop_assert_eq!(c.points.len(), distinct.len());
            for (p, &tau) in c.points.iter().zip(&distinct) {
                prop_assert_eq!(p.threshold, tau);
                prop_assert_eq!((p.tp, p.fp), counts_at(&scores, &labels, tau));
            }
            prop_assert!(c.points.windows(2).all(|w| w[0].recall <= w[1].recall));
            prop_assert_eq!(c.points.last().unwrap().recall, 1.0);
        }

        #[test]
        fn truncation_is_monotone_and_bounded((scores, labels) in arb_case(60), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let c = pr_curve(&scores, &labels).unwrap();
            let (dl, dh) = (pr_auc_truncated(&c, lo), pr_auc_truncated(&c, hi));
            prop_assert!(dl <= dh + 1e-15);
            prop_assert!(dl >= 0.0 && dl <= lo + 1e-15);
        }

        #[test]
        fn invariant_under_monotone_transform((scores, labels) in arb_case(60)) {
            let moved: Vec<f64> = scores.iter().map(|s| crate::math::exp(3.0 * s) - 7.0).collect();
            let (c1, c2) = (pr_curve(&scores, &labels).unwrap(), pr_curve(&moved, &labels).unwrap());
            let pr = |c: &PrCurve| c.points.iter().map(|p| (p.precision, p.recall)).collect::<Vec<_>>();
            prop_assert_eq!(pr(&c1), pr(&c2));
            prop_assert_eq!(pr_auc_truncated(&c1, RECALL_CAP), pr_auc_truncated(&c2, RECALL_CAP));
        }

        #[test]
        fn input_order_does_not_matter((scores, labels) in arb_case(40), rot in 0usize..40) {
            let n = scores.len();
            let r = rot % n;
            let s2: Vec<f64> = (0..n).map(|i| scores[(i + r) % n]).collect();
            let l2: Vec<bool> = (0..n).map(|i| labels[(i + r) % n]).collect();
            prop_assert_eq!(truncated_pr_auc(&scores, &labels).unwrap(), truncated_pr_auc(&s2, &l2).unwrap());
        }
    }

    #[test]
    fn facility_filters_partition() {
        use crate::ingest::Day;
        let schema = FeatureSchema::new(
            vec!["HCCS".into(), "UAS".into()],
            vec!["ETH".into(), "OTM".into()],
            vec![],
        )
        .unwrap();
        let mk = |eth: bool, label: bool| WindowSample {
            network_id: "n".into(),
            port_id: "p".into(),
            present_day: Day(0),
            n_columns: 4,
            values: vec![0.0, 0.0, eth as u8 as f64, 1.0],
            observed: vec![true; 4],
            label,
            future: vec![],
        };
        let samples = [mk(true, true), mk(false, true), mk(true, false), mk(false, false), mk(false, true)];
        let refs: Vec<&WindowSample> = samples.iter().collect();
        let scores = [0.9, 0.8, 0.3, 0.2, 0.1];
        let eth = SubsetFilter::facility("ETH");
        let not_eth = SubsetFilter { exclude_facility: true, ..eth.clone() };
        let (a, _) = evaluate_subset(&refs, &scores, &eth, &schema).unwrap();
        let (b, _) = evaluate_subset(&refs, &scores, &not_eth, &schema).unwrap();
        let (all, _) = evaluate_subset(&refs, &scores, &SubsetFilter::default(), &schema).unwrap();
        assert_eq!(a.samples + b.samples, all.samples);
        assert_eq!(a.positives + b.positives, all.positives);
        assert!(matches!(
            evaluate_subset(&refs, &scores, &SubsetFilter::network("zzz"), &schema),
            Err(EvalError::EmptySubset)
        ));
    }
}
