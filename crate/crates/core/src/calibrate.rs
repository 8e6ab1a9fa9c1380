//! A-priori forgetting control.
//!
//! Base accuracy under NCD inference only depends on base data: a base-test
//! sample counts as correct iff it is *not* routed to the novel branch and its
//! nearest base prototype has the right label. Everything here therefore takes
//! base samples and the base bank only.
//!
//! As a function of `alpha` that accuracy is a right-continuous step function
//! which can only change at the samples' minimum base distances, so the curve
//! is evaluated exactly at those points.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::prototype::{Metric, PrototypeBank};

/// Per-sample quantities that determine every base-side metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseScore {
    pub min_base_dist: f64,
    pub correct: bool,
}

/// A labeled base sample borrowed from an [`EmbeddingSet`].
#[derive(Debug, Clone, Copy)]
pub struct LabeledFeature<'a> {
    pub class_id: u32,
    pub feature: &'a [f32],
}

/// Base-test view of `set` (split `BaseTest`, file order).
pub fn base_test_samples(set: &EmbeddingSet) -> Vec<LabeledFeature<'_>> {
    set.records_in(crate::embedding::Split::BaseTest)
        .map(|r| LabeledFeature {
            class_id: r.class_id,
            feature: r.feature,
        })
        .collect()
}

/// Nearest-base distance and correctness for every sample, in input order.
pub fn score_base_samples(
    samples: &[LabeledFeature<'_>],
    base_bank: &PrototypeBank,
    metric: Metric,
) -> Result<Vec<BaseScore>> {
    if base_bank.is_empty() {
        return Err(Error::EmptyBanks);
    }
    samples
        .par_iter()
        .map(|s| {
            let (class, d) = base_bank.nearest(s.feature, metric)?.ok_or(Error::EmptyBanks)?;
            Ok(BaseScore {
                min_base_dist: d,
                correct: class == s.class_id,
            })
        })
        .collect()
}

/// Nearest-base-prototype accuracy; the BCR reference.
pub fn nearest_base_accuracy(scores: &[BaseScore]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptySplit("base test"));
    }
    Ok(scores.iter().filter(|s| s.correct).count() as f64 / scores.len() as f64)
}

/// Fraction of samples kept on the base branch at `alpha` and labeled
/// correctly there.
pub fn accuracy_at(scores: &[BaseScore], alpha: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptySplit("base test"));
    }
    let hits = scores
        .iter()
        .filter(|s| s.correct && s.min_base_dist <= alpha)
        .count();
    Ok(hits as f64 / scores.len() as f64)
}

/// `BCR - accuracy_at(alpha)`, computed from counts: the fraction of samples
/// that nearest-base classification gets right but the rule routes away.
pub fn forgetting_at(scores: &[BaseScore], alpha: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptySplit("base test"));
    }
    let lost = scores
        .iter()
        .filter(|s| s.correct && s.min_base_dist > alpha)
        .count();
    Ok(lost as f64 / scores.len() as f64)
}

/// Fraction of samples the rule sends to the novel branch at `alpha`.
pub fn novel_route_rate(scores: &[BaseScore], alpha: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptySplit("samples"));
    }
    let routed = scores.iter().filter(|s| s.min_base_dist > alpha).count();
    Ok(routed as f64 / scores.len() as f64)
}

pub fn base_accuracy_under_ncd(
    base_test: &[LabeledFeature<'_>],
    base_bank: &PrototypeBank,
    alpha: f64,
    metric: Metric,
) -> Result<f64> {
    if base_test.is_empty() {
        return Err(Error::EmptySplit("base test"));
    }
    accuracy_at(&score_base_samples(base_test, base_bank, metric)?, alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForCurve {
    pub thresholds: Vec<f64>,
    pub base_acc_at: Vec<f64>,
    pub for_at: Vec<f64>,
    pub novel_route_rate_at: Vec<f64>,
    pub bcr: f64,
    pub n_samples: usize,
}

impl ForCurve {
    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    /// Index of the last candidate `<= alpha`, i.e. the step the curve is on.
    pub fn step_index(&self, alpha: f64) -> Option<usize> {
        self.thresholds
            .partition_point(|&t| t <= alpha)
            .checked_sub(1)
    }

    /// Forgetting rate at an arbitrary `alpha >= 0`.
    pub fn for_at_alpha(&self, alpha: f64) -> Option<f64> {
        self.step_index(alpha).map(|i| self.for_at[i])
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "alpha,base_acc,for,novel_route_rate")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{}",
                self.thresholds[i], self.base_acc_at[i], self.for_at[i], self.novel_route_rate_at[i]
            )?;
        }
        Ok(())
    }
}

/// Curve from precomputed scores. Candidates are 0, every distinct minimum
/// distance, and the metric's upper bound when it has one.
pub fn for_curve_from_scores(scores: &[BaseScore], metric: Metric) -> Result<ForCurve> {
    if scores.is_empty() {
        return Err(Error::EmptySplit("base test"));
    }
    let n = scores.len();
    let mut sorted: Vec<BaseScore> = scores.to_vec();
    sorted.sort_by(|a, b| a.min_base_dist.total_cmp(&b.min_base_dist));

    let mut thresholds = vec![0.0];
    thresholds.extend(sorted.iter().map(|s| s.min_base_dist));
    if let Some(top) = metric.max_distance() {
        thresholds.push(top);
    }
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let total_correct = sorted.iter().filter(|s| s.correct).count();
    let mut base_acc_at = Vec::with_capacity(thresholds.len());
    let mut for_at = Vec::with_capacity(thresholds.len());
    let mut route_at = Vec::with_capacity(thresholds.len());
    let (mut accepted, mut accepted_correct) = (0usize, 0usize);
    for &t in &thresholds {
        while accepted < n && sorted[accepted].min_base_dist <= t {
            accepted_correct += sorted[accepted].correct as usize;
            accepted += 1;
        }
        base_acc_at.push(accepted_correct as f64 / n as f64);
        for_at.push((total_correct - accepted_correct) as f64 / n as f64);
        route_at.push((n - accepted) as f64 / n as f64);
    }
    Ok(ForCurve {
        thresholds,
        base_acc_at,
        for_at,
        novel_route_rate_at: route_at,
        bcr: total_correct as f64 / n as f64,
        n_samples: n,
    })
}

pub fn build_for_curve(
    base_test: &[LabeledFeature<'_>],
    base_bank: &PrototypeBank,
    metric: Metric,
) -> Result<ForCurve> {
    if base_test.is_empty() {
        return Err(Error::EmptySplit("base test"));
    }
    for_curve_from_scores(&score_base_samples(base_test, base_bank, metric)?, metric)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub alpha_star: f64,
    pub achieved_for: f64,
    pub budget: f64,
    pub n_calibration_samples: usize,
}

/// Smallest candidate threshold whose forgetting rate fits in `budget`.
/// Smaller thresholds route more queries to the novel branch, so this is the
/// most novel-friendly operating point the budget allows.
pub fn calibrate_alpha(curve: &ForCurve, budget: f64) -> Result<CalibrationResult> {
    if !(0.0..=1.0).contains(&budget) {
        return Err(Error::InvalidBudget(budget));
    }
    let i = curve
        .for_at
        .iter()
        .position(|&f| f <= budget)
        .ok_or(Error::InfeasibleBudget(budget))?;
    Ok(CalibrationResult {
        alpha_star: curve.thresholds[i],
        achieved_for: curve.for_at[i],
        budget,
        n_calibration_samples: curve.n_samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OodRates {
    /// Base samples flagged as novel.
    pub fpr: f64,
    /// Novel queries flagged as novel.
    pub tpr: f64,
}

pub fn ood_rates(
    base_test: &[&[f32]],
    novel_queries: &[&[f32]],
    base_bank: &PrototypeBank,
    alpha: f64,
    metric: Metric,
) -> Result<OodRates> {
    if base_test.is_empty() {
        return Err(Error::EmptySplit("base test"));
    }
    if novel_queries.is_empty() {
        return Err(Error::EmptySplit("novel queries"));
    }
    let rate = |xs: &[&[f32]]| -> Result<f64> {
        let routed = xs
            .par_iter()
            .map(|f| {
                let (_, d) = base_bank.nearest(f, metric)?.ok_or(Error::EmptyBanks)?;
                Ok((d > alpha) as usize)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(routed.iter().sum::<usize>() as f64 / xs.len() as f64)
    };
    Ok(OodRates {
        fpr: rate(base_test)?,
        tpr: rate(novel_queries)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(d: f64, correct: bool) -> BaseScore {
        BaseScore {
            min_base_dist: d,
            correct,
        }
    }

    fn four() -> Vec<BaseScore> {
        vec![s(0.1, true), s(0.2, false), s(0.3, true), s(0.4, true)]
    }

    #[test]
    fn accuracy_four_samples() {
        assert_eq!(accuracy_at(&four(), 0.25).unwrap(), 0.25);
        assert_eq!(accuracy_at(&four(), 2.0).unwrap(), 0.75);
        assert_eq!(accuracy_at(&four(), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn single_sample_curve() {
        let curve = for_curve_from_scores(&[s(0.3, true)], Metric::Cosine).unwrap();
        assert_eq!(curve.thresholds, vec![0.0, 0.3, 2.0]);
        assert_eq!(curve.base_acc_at, vec![0.0, 1.0, 1.0]);
        assert_eq!(curve.for_at, vec![1.0, 0.0, 0.0]);
        assert_eq!(curve.novel_route_rate_at, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn all_wrong_curve_is_flat_zero() {
        let curve = for_curve_from_scores(&[s(0.3, false), s(0.6, false)], Metric::Cosine).unwrap();
        assert_eq!(curve.bcr, 0.0);
        assert!(curve.for_at.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn calibrate_four_samples() {
        let curve = for_curve_from_scores(&four(), Metric::Cosine).unwrap();
        assert_eq!(curve.thresholds, vec![0.0, 0.1, 0.2, 0.3, 0.4, 2.0]);
        assert_eq!(curve.bcr, 0.75);
        // Exhaustive: accuracy >= 0.70 first holds once all three correct samples are accepted.
        let r = calibrate_alpha(&curve, 0.05).unwrap();
        assert_eq!(r.alpha_star, 0.4);
        assert_eq!(r.achieved_for, 0.0);
        assert_eq!(calibrate_alpha(&curve, 0.75).unwrap().alpha_star, 0.0);
        assert_eq!(calibrate_alpha(&curve, 0.0).unwrap().alpha_star, 0.4);
        assert_eq!(calibrate_alpha(&curve, 0.25).unwrap().alpha_star, 0.3);
    }

    #[test]
    fn invalid_budget() {
        let curve = for_curve_from_scores(&four(), Metric::Cosine).unwrap();
        assert!(matches!(calibrate_alpha(&curve, -0.1), Err(Error::InvalidBudget(_))));
        assert!(matches!(calibrate_alpha(&curve, 1.5), Err(Error::InvalidBudget(_))));
    }

    #[test]
    fn euclidean_curve_tops_at_largest_distance() {
        let curve = for_curve_from_scores(&[s(1.5, true), s(3.0, true)], Metric::Euclidean).unwrap();
        assert_eq!(curve.thresholds, vec![0.0, 1.5, 3.0]);
        assert_eq!(*curve.for_at.last().unwrap(), 0.0);
    }

    #[test]
    fn step_lookup() {
        let curve = for_curve_from_scores(&four(), Metric::Cosine).unwrap();
        assert_eq!(curve.for_at_alpha(0.15), Some(0.5));
        assert_eq!(curve.for_at_alpha(0.3), Some(0.25));
        assert_eq!(curve.for_at_alpha(5.0), Some(0.0));
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(for_curve_from_scores(&[], Metric::Cosine), Err(Error::EmptySplit(_))));
        assert!(matches!(accuracy_at(&[], 0.1), Err(Error::EmptySplit(_))));
    }

    #[test]
    fn curve_csv() {
        let curve = for_curve_from_scores(&[s(0.3, true)], Metric::Cosine).unwrap();
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "alpha,base_acc,for,novel_route_rate\n0,0,1,1\n0.3,1,0,0\n2,1,0,0\n"
        );
    }
}
