//! Binary classification metrics and the DeLong paired AUC test.
//!
//! Ties are handled with midranks everywhere: a tied positive/negative pair
//! counts one half toward the AUC, and tied scores form a single step on the
//! ROC and precision/recall sweeps.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::ClassificationOutcome;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("labels and scores differ in length ({labels} vs {scores})")]
    LengthMismatch { labels: usize, scores: usize },
    #[error("label must be 0 or 1, got {0}")]
    InvalidLabel(u8),
    #[error("score {0} is not finite")]
    NonFiniteScore(f64),
    #[error("{metric} is undefined: cohort has {positives} positive(s) and {negatives} negative(s)")]
    UndefinedMetric { metric: &'static str, positives: usize, negatives: usize },
    #[error("cohorts are not paired: {detail}")]
    Unpaired { detail: String, patient_ids: Vec<String> },
    #[error("DeLong test needs at least 2 positives and 2 negatives (got {positives} and {negatives})")]
    InsufficientData { positives: usize, negatives: usize },
    #[error("outcome for patient {0:?} carries no ground-truth label")]
    MissingTruth(String),
    #[error("duplicate patient {0:?} in outcomes")]
    DuplicatePatient(String),
}

/// Aligned labels and scores, one entry per patient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredCohort {
    #[serde(default)]
    pub patient_ids: Vec<String>,
    pub labels: Vec<u8>,
    pub scores: Vec<f64>,
}

impl ScoredCohort {
    pub fn new(labels: Vec<u8>, scores: Vec<f64>) -> Result<Self, MetricsError> {
        if labels.len() != scores.len() {
            return Err(MetricsError::LengthMismatch { labels: labels.len(), scores: scores.len() });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
            return Err(MetricsError::InvalidLabel(bad));
        }
        if let Some(&bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(MetricsError::NonFiniteScore(bad));
        }
        Ok(ScoredCohort { patient_ids: Vec::new(), labels, scores })
    }

    pub fn with_ids(ids: Vec<String>, labels: Vec<u8>, scores: Vec<f64>) -> Result<Self, MetricsError> {
        if ids.len() != labels.len() {
            return Err(MetricsError::LengthMismatch { labels: labels.len(), scores: ids.len() });
        }
        Ok(ScoredCohort { patient_ids: ids, ..Self::new(labels, scores)? })
    }

    /// Cohort of classified patients, ordered by patient id so that two
    /// outcome files for the same patients line up.
    pub fn from_outcomes(outcomes: &[ClassificationOutcome]) -> Result<Self, MetricsError> {
        let mut rows: Vec<(&str, u8, f64)> = Vec::with_capacity(outcomes.len());
        for o in outcomes {
            let truth = o.truth.ok_or_else(|| MetricsError::MissingTruth(o.patient_id.clone()))?;
            rows.push((&o.patient_id, truth, o.score));
        }
        rows.sort_by(|a, b| a.0.cmp(b.0));
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(MetricsError::DuplicatePatient(w[0].0.to_string()));
        }
        Self::with_ids(
            rows.iter().map(|r| r.0.to_string()).collect(),
            rows.iter().map(|r| r.1).collect(),
            rows.iter().map(|r| r.2).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    fn require_both_classes(&self, metric: &'static str) -> Result<(usize, usize), MetricsError> {
        let (m, n) = (self.positives(), self.negatives());
        if m == 0 || n == 0 {
            return Err(MetricsError::UndefinedMetric { metric, positives: m, negatives: n });
        }
        Ok((m, n))
    }

    /// Indices sorted by descending score; equal scores keep input order.
    fn descending(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx
    }

    /// Groups of equal score in descending order, as (positives, negatives).
    fn tie_groups(&self) -> Vec<(usize, usize)> {
        let order = self.descending();
        let mut groups: Vec<(usize, usize)> = Vec::new();
        let mut prev: Option<f64> = None;
        for i in order {
            if prev != Some(self.scores[i]) {
                groups.push((0, 0));
                prev = Some(self.scores[i]);
            }
            let g = groups.last_mut().unwrap();
            if self.labels[i] == 1 {
                g.0 += 1;
            } else {
                g.1 += 1;
            }
        }
        groups
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub threshold: f64,
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub patients: usize,
    pub positives: usize,
    pub negatives: usize,
    pub auroc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub pr_auc: f64,
    pub threshold: f64,
    pub confusion: Confusion,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeLongResult {
    pub auc_a: f64,
    pub auc_b: f64,
    pub variance_of_difference: f64,
    pub z_statistic: f64,
    pub p_value: f64,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Area under the ROC curve in Mann-Whitney form, computed from midranks.
pub fn auroc(cohort: &ScoredCohort) -> Result<f64, MetricsError> {
    let (m, n) = cohort.require_both_classes("AUROC")?;
    let ranks = midranks(&cohort.scores);
    let rank_sum: f64 = ranks.iter().zip(&cohort.labels).filter(|(_, &l)| l == 1).map(|(r, _)| r).sum();
    let u = rank_sum - (m * (m + 1)) as f64 / 2.0;
    Ok(u / (m as f64 * n as f64))
}

/// 1-based ranks in ascending score order, ties sharing their mean rank.
pub fn midranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// Precision, recall and F1 predicting positive when `score >= threshold`.
pub fn confusion_metrics(cohort: &ScoredCohort, threshold: f64) -> ConfusionMetrics {
    let mut c = Confusion { tp: 0, fp: 0, tn: 0, fn_: 0 };
    for (&l, &s) in cohort.labels.iter().zip(&cohort.scores) {
        match (s >= threshold, l == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    ConfusionMetrics { threshold, confusion: c, precision, recall, f1: f1_score(precision, recall) }
}

/// Average precision: the mean, over positives, of the precision at the
/// positive's score threshold. Tied scores are cut together, so every
/// positive in a tie group sees the precision of the whole group.
pub fn pr_auc(cohort: &ScoredCohort) -> Result<f64, MetricsError> {
    let (m, _) = cohort.require_both_classes("PR AUC")?;
    let mut seen = 0usize;
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (pos, neg) in cohort.tie_groups() {
        seen += pos + neg;
        tp += pos;
        sum += pos as f64 * (tp as f64 / seen as f64);
    }
    Ok(sum / m as f64)
}

/// ROC staircase from (0, 0) to (1, 1), one point per distinct score.
pub fn roc_points(cohort: &ScoredCohort) -> Result<Vec<(f64, f64)>, MetricsError> {
    let (m, n) = cohort.require_both_classes("ROC curve")?;
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (pos, neg) in cohort.tie_groups() {
        tp += pos;
        fp += neg;
        points.push((fp as f64 / n as f64, tp as f64 / m as f64));
    }
    Ok(points)
}

/// Trapezoidal area under a polyline of (x, y) points.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
}

pub fn evaluate(cohort: &ScoredCohort, threshold: f64) -> Result<MetricBundle, MetricsError> {
    let auc = auroc(cohort)?;
    let ap = pr_auc(cohort)?;
    let cm = confusion_metrics(cohort, threshold);
    Ok(MetricBundle {
        patients: cohort.len(),
        positives: cohort.positives(),
        negatives: cohort.negatives(),
        auroc: auc,
        precision: cm.precision,
        recall: cm.recall,
        f1: cm.f1,
        pr_auc: ap,
        threshold,
        confusion: cm.confusion,
    })
}

/// Standard normal CDF via `erfc`, evaluated on |x| and reflected so that
/// Φ(-x) = 1 - Φ(x) holds by construction.
pub fn normal_cdf(x: f64) -> f64 {
    let tail = 0.5 * libm::erfc(x.abs() / std::f64::consts::SQRT_2);
    if x >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Pair kernel: 1 if the positive outranks the negative, 1/2 on a tie.
/// Compares numerically so that -0.0 and 0.0 tie, as they do in midranks.
fn psi(pos: f64, neg: f64) -> f64 {
    if pos > neg {
        1.0
    } else if pos == neg {
        0.5
    } else {
        0.0
    }
}

/// Checks that two cohorts describe the same patients with the same labels
/// in the same order.
pub fn check_paired(a: &ScoredCohort, b: &ScoredCohort) -> Result<(), MetricsError> {
    if !a.patient_ids.is_empty() && !b.patient_ids.is_empty() && a.patient_ids != b.patient_ids {
        let sa: BTreeSet<&String> = a.patient_ids.iter().collect();
        let sb: BTreeSet<&String> = b.patient_ids.iter().collect();
        let mut ids: Vec<String> = sa.symmetric_difference(&sb).map(|s| s.to_string()).collect();
        if ids.is_empty() {
            ids = a.patient_ids.iter().zip(&b.patient_ids).filter(|(x, y)| x != y).map(|(x, _)| x.clone()).collect();
        }
        return Err(MetricsError::Unpaired {
            detail: format!("patient ids differ: {}", ids.join(", ")),
            patient_ids: ids,
        });
    }
    if a.len() != b.len() {
        return Err(MetricsError::Unpaired {
            detail: format!("cohort sizes differ ({} vs {})", a.len(), b.len()),
            patient_ids: Vec::new(),
        });
    }
    let mismatched: Vec<usize> = (0..a.len()).filter(|&i| a.labels[i] != b.labels[i]).collect();
    if !mismatched.is_empty() {
        let ids: Vec<String> =
            mismatched.iter().map(|&i| a.patient_ids.get(i).cloned().unwrap_or_else(|| format!("#{i}"))).collect();
        return Err(MetricsError::Unpaired {
            detail: format!("labels differ for {}", ids.join(", ")),
            patient_ids: ids,
        });
    }
    Ok(())
}

/// DeLong test for the difference of two correlated AUCs measured on the
/// same patients.
///
/// Placement values are computed directly from all positive/negative pairs:
/// `V10(x_i)` averages ψ over negatives, `V01(y_j)` over positives. Their
/// unbiased 2x2 covariances over positives (`S10`) and negatives (`S01`)
/// give `var = (S10_aa + S10_bb - 2 S10_ab)/m + (S01_aa + S01_bb - 2 S01_ab)/n`.
pub fn delong_test(a: &ScoredCohort, b: &ScoredCohort) -> Result<DeLongResult, MetricsError> {
    check_paired(a, b)?;
    let pos: Vec<usize> = (0..a.len()).filter(|&i| a.labels[i] == 1).collect();
    let neg: Vec<usize> = (0..a.len()).filter(|&i| a.labels[i] == 0).collect();
    let (m, n) = (pos.len(), neg.len());
    if m < 2 || n < 2 {
        return Err(MetricsError::InsufficientData { positives: m, negatives: n });
    }

    let placements = |scores: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut v10 = vec![0.0; m];
        let mut v01 = vec![0.0; n];
        for (i, &pi) in pos.iter().enumerate() {
            for (j, &nj) in neg.iter().enumerate() {
                let s = psi(scores[pi], scores[nj]);
                v10[i] += s;
                v01[j] += s;
            }
        }
        v10.iter_mut().for_each(|v| *v /= n as f64);
        v01.iter_mut().for_each(|v| *v /= m as f64);
        (v10, v01)
    };
    let (a10, a01) = placements(&a.scores);
    let (b10, b01) = placements(&b.scores);
    let auc_a = mean(&a10);
    let auc_b = mean(&b10);

    let var_diff = |x: &[f64], y: &[f64]| cov(x, x) + cov(y, y) - 2.0 * cov(x, y);
    let variance = (var_diff(&a10, &b10) / m as f64 + var_diff(&a01, &b01) / n as f64).max(0.0);
    let diff = auc_a - auc_b;

    let (z, p) = if variance == 0.0 {
        if diff == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(diff), 0.0)
        }
    } else {
        let z = diff / variance.sqrt();
        (z, (2.0 * (1.0 - normal_cdf(z.abs()))).clamp(0.0, 1.0))
    };
    Ok(DeLongResult { auc_a, auc_b, variance_of_difference: variance, z_statistic: z, p_value: p })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample covariance.
fn cov(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (x.len() - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cohort(labels: &[u8], scores: &[f64]) -> ScoredCohort {
        ScoredCohort::new(labels.to_vec(), scores.to_vec()).unwrap()
    }

    fn brute_auc(c: &ScoredCohort) -> f64 {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for i in 0..c.len() {
            for j in 0..c.len() {
                if c.labels[i] == 1 && c.labels[j] == 0 {
                    pairs += 1.0;
                    num += if c.scores[i] > c.scores[j] {
                        1.0
                    } else if c.scores[i] == c.scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / pairs
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&cohort(&[1, 1, 0, 0], &[0.9, 0.8, 0.3, 0.2])).unwrap(), 1.0);
        assert_eq!(auroc(&cohort(&[1, 0], &[0.5, 0.5])).unwrap(), 0.5);
        assert!(matches!(auroc(&cohort(&[1, 1], &[0.1, 0.2])), Err(MetricsError::UndefinedMetric { .. })));
        assert_eq!(auroc(&cohort(&[0, 1, 0, 1], &[0.1, 0.4, 0.5, 0.8])).unwrap(), 0.75);
    }

    #[test]
    fn cohort_validation() {
        assert!(matches!(ScoredCohort::new(vec![1], vec![]), Err(MetricsError::LengthMismatch { .. })));
        assert!(matches!(ScoredCohort::new(vec![2], vec![0.1]), Err(MetricsError::InvalidLabel(2))));
        assert!(matches!(ScoredCohort::new(vec![1], vec![f64::NAN]), Err(MetricsError::NonFiniteScore(_))));
    }

    #[test]
    fn signed_zero_scores_tie() {
        let labels = vec![1, 1, 0, 0, 1, 0];
        let a = cohort(&labels, &[0.0, 1.0, -0.0, -1.0, -0.0, 0.0]);
        let b = cohort(&labels, &[0.5, 1.0, 0.0, -1.0, 0.2, 0.1]);
        let d = delong_test(&a, &b).unwrap();
        assert!((d.auc_a - auroc(&a).unwrap()).abs() < 1e-12);
        assert!((d.auc_a - brute_auc(&a)).abs() < 1e-12);
    }

    #[test]
    fn f1_from_precision_recall() {
        // (precision, recall, harmonic mean computed by hand)
        let rows = [
            (0.53, 0.71, 0.606935),
            (0.46, 0.90, 0.608824),
            (0.51, 0.73, 0.600484),
            (0.48, 0.86, 0.616119),
            (0.44, 0.96, 0.603429),
        ];
        for (p, r, f) in rows {
            assert!((f1_score(p, r) - f).abs() < 1e-6, "{p} {r}");
        }
        assert_eq!(f1_score(0.0, 0.0), 0.0);
        assert_eq!(f1_score(1.0, 1.0), 1.0);
    }

    #[test]
    fn confusion_at_threshold() {
        let c = cohort(&[1, 1, 0, 0, 1], &[0.9, 0.5, 0.5, 0.1, 0.2]);
        let m = confusion_metrics(&c, 0.5);
        assert_eq!(m.confusion, Confusion { tp: 2, fp: 1, tn: 1, fn_: 1 });
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-12);
        let none = confusion_metrics(&cohort(&[1, 0], &[0.1, 0.2]), 0.5);
        assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn pr_auc_examples() {
        assert_eq!(pr_auc(&cohort(&[1, 1, 0, 0], &[0.9, 0.8, 0.3, 0.2])).unwrap(), 1.0);
        // all tied with m = n: one cut at prevalence 1/2
        assert_eq!(pr_auc(&cohort(&[1, 0, 1, 0], &[0.3; 4])).unwrap(), 0.5);
        assert_eq!(pr_auc(&cohort(&[0, 1, 0, 0, 1], &[0.7; 5])).unwrap(), 0.4);
        // ranks: P N P -> (1/1 + 2/3) / 2
        let ap = pr_auc(&cohort(&[1, 0, 1], &[0.9, 0.8, 0.7])).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn roc_point_examples() {
        let perfect = roc_points(&cohort(&[1, 1, 0, 0], &[0.9, 0.8, 0.3, 0.2])).unwrap();
        assert!(perfect.contains(&(0.0, 1.0)));
        assert_eq!(*perfect.last().unwrap(), (1.0, 1.0));
        assert_eq!(roc_points(&cohort(&[1, 0, 0, 1], &[0.5; 4])).unwrap(), [(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.96) - 0.9750021048517795).abs() < 1e-9);
        assert!((normal_cdf(-1.0) - 0.15865525393145707).abs() < 1e-12);
        assert!(normal_cdf(-40.0) >= 0.0 && normal_cdf(40.0) <= 1.0);
    }

    #[test]
    fn delong_self_comparison_is_exactly_one() {
        let c = cohort(&[1, 0, 1, 0, 1, 0], &[0.9, 0.2, 0.4, 0.6, 0.7, 0.1]);
        let r = delong_test(&c, &c).unwrap();
        assert_eq!(r.auc_a, r.auc_b);
        assert_eq!((r.z_statistic, r.p_value), (0.0, 1.0));
    }

    #[test]
    fn delong_pairing_and_size_errors() {
        let a = cohort(&[1, 0, 1, 0], &[0.9, 0.2, 0.4, 0.6]);
        let b = cohort(&[1, 0, 0, 1], &[0.9, 0.2, 0.4, 0.6]);
        assert!(matches!(delong_test(&a, &b), Err(MetricsError::Unpaired { .. })));
        let short = cohort(&[1, 0, 1], &[0.9, 0.2, 0.4]);
        assert!(matches!(delong_test(&a, &short), Err(MetricsError::Unpaired { .. })));
        let tiny = cohort(&[1, 0, 0], &[0.9, 0.2, 0.4]);
        assert!(matches!(
            delong_test(&tiny, &tiny),
            Err(MetricsError::InsufficientData { positives: 1, negatives: 2 })
        ));

        let ids = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let a = ScoredCohort::with_ids(ids(&["p1", "p2"]), vec![1, 0], vec![0.5, 0.2]).unwrap();
        let b = ScoredCohort::with_ids(ids(&["p1", "p3"]), vec![1, 0], vec![0.5, 0.2]).unwrap();
        match delong_test(&a, &b) {
            Err(MetricsError::Unpaired { patient_ids, .. }) => assert_eq!(patient_ids, ["p2", "p3"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn delong_hand_computed_case() {
        // positives x = (0.9, 0.4), negatives y = (0.6, 0.2) for model a;
        // model b is perfect. V10_a = (1, 0.5), V01_a = (0.5, 1); AUC_a = 0.75.
        let a = cohort(&[1, 0, 1, 0], &[0.9, 0.6, 0.4, 0.2]);
        let b = cohort(&[1, 0, 1, 0], &[0.9, 0.3, 0.8, 0.2]);
        let r = delong_test(&a, &b).unwrap();
        assert_eq!((r.auc_a, r.auc_b), (0.75, 1.0));
        // b's placements are constant, so var = var(V10_a)/2 + var(V01_a)/2
        // = 0.125/2 + 0.125/2
        assert!((r.variance_of_difference - 0.125).abs() < 1e-15);
        assert!((r.z_statistic - (-0.25 / 0.125f64.sqrt())).abs() < 1e-12);
    }

    fn arb_cohort() -> impl Strategy<Value = ScoredCohort> {
        (4usize..60)
            .prop_flat_map(|len| {
                (
                    prop::collection::vec(0u8..=1, len),
                    prop::collection::vec(prop_oneof![(0u8..10).prop_map(|k| k as f64 / 10.0), -5.0f64..5.0], len),
                )
            })
            .prop_map(|(mut labels, scores)| {
                labels[0] = 1;
                labels[1] = 0;
                labels[2] = 1;
                labels[3] = 0;
                ScoredCohort::new(labels, scores).unwrap()
            })
    }

    proptest! {
        #[test]
        fn auroc_equals_pair_enumeration(c in arb_cohort()) {
            prop_assert!((auroc(&c).unwrap() - brute_auc(&c)).abs() < 1e-12);
        }

        #[test]
        fn roc_area_equals_auroc(c in arb_cohort()) {
            let pts = roc_points(&c).unwrap();
            prop_assert!((trapezoid_area(&pts) - auroc(&c).unwrap()).abs() < 1e-9);
            prop_assert!(pts.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
        }

        #[test]
        fn metrics_invariant_under_increasing_transform(c in arb_cohort()) {
            let t = ScoredCohort::new(c.labels.clone(), c.scores.iter().map(|s| (s * 3.0).exp() + 1.0).collect()).unwrap();
            prop_assert_eq!(auroc(&c).unwrap(), auroc(&t).unwrap());
            prop_assert_eq!(pr_auc(&c).unwrap(), pr_auc(&t).unwrap());
            prop_assert_eq!(roc_points(&c).unwrap(), roc_points(&t).unwrap());
            let other = ScoredCohort::new(c.labels.clone(), c.scores.iter().rev().cloned().collect()).unwrap();
            let other_t = ScoredCohort::new(t.labels.clone(), t.scores.iter().rev().cloned().collect()).unwrap();
            prop_assert_eq!(delong_test(&c, &other).unwrap(), delong_test(&t, &other_t).unwrap());
        }

        #[test]
        fn complement_law(c in arb_cohort()) {
            let flipped = ScoredCohort::new(c.labels.iter().map(|l| 1 - l).collect(), c.scores.iter().map(|s| -s).collect()).unwrap();
            prop_assert!((auroc(&c).unwrap() - auroc(&flipped).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn delong_is_antisymmetric(c in arb_cohort(), seed in any::<u64>()) {
            let other_scores: Vec<f64> = c.scores.iter().enumerate()
                .map(|(i, s)| s + ((seed.wrapping_mul(i as u64 + 1) % 97) as f64) / 50.0).collect();
            let d = ScoredCohort::new(c.labels.clone(), other_scores).unwrap();
            let ab = delong_test(&c, &d).unwrap();
            let ba = delong_test(&d, &c).unwrap();
            prop_assert_eq!(ab.z_statistic, -ba.z_statistic);
            prop_assert_eq!(ab.p_value, ba.p_value);
            prop_assert!((0.0..=1.0).contains(&ab.p_value));
        }

        #[test]
        fn normal_cdf_symmetry(x in -10.0f64..10.0) {
            prop_assert_eq!(normal_cdf(-x) + normal_cdf(x), 1.0);
        }
    }
}
