//! Aggregate quality, win/tie/loss analysis, deferral curves, and the
//! paired permutation test.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::cost::{CostError, CostModel};
use crate::deferral::{
    apply_decision, select_deferrals, DeferralBudget, DeferralError, DeferralRule,
};
use crate::record::{Batch, ColumnPair, MissingColumn, ScoreColumn};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot aggregate an empty quality list")]
    EmptySamples,
    #[error("cannot analyze an empty batch")]
    EmptyBatch,
    #[error("cannot search an empty curve")]
    EmptyCurve,
    #[error("paired samples differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("tie threshold must be non-negative, got {threshold}")]
    NegativeThreshold { threshold: f64 },
    #[error("permutation iterations must be at least 1")]
    ZeroIterations,
    #[error("exact enumeration over {n} pairs is not tractable (limit 30); lower max_exact_n")]
    ExactEnumerationTooLarge { n: usize },
    #[error(transparent)]
    MissingColumn(#[from] MissingColumn),
    #[error(transparent)]
    Deferral(#[from] DeferralError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// Arithmetic mean of a realized per-record quality list.
pub fn mean_quality(realized: &[f64]) -> Result<f64, EvalError> {
    if realized.is_empty() {
        return Err(EvalError::EmptySamples);
    }
    Ok(realized.iter().sum::<f64>() / realized.len() as f64)
}

/// Segment-level comparison of two score columns, with differences below
/// `threshold` counted as ties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WinTieLoss {
    pub wins: f64,
    pub ties: f64,
    pub losses: f64,
    pub threshold: f64,
    pub n: usize,
}

/// Per record, `d = a - b` (both higher-is-better): `|d| < threshold` is a
/// tie, `d >= threshold` a win for `a`, `d <= -threshold` a loss.
pub fn win_tie_loss(
    batch: &Batch,
    col_a: ScoreColumn,
    col_b: ScoreColumn,
    threshold: f64,
) -> Result<WinTieLoss, EvalError> {
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(EvalError::NegativeThreshold { threshold });
    }
    if batch.is_empty() {
        return Err(EvalError::EmptyBatch);
    }
    let a = batch.column_values(col_a)?;
    let b = batch.column_values(col_b)?;
    let mut wins = 0usize;
    let mut ties = 0usize;
    let mut losses = 0usize;
    for (&x, &y) in a.iter().zip(&b) {
        let d = x - y;
        if d.abs() < threshold {
            ties += 1;
        } else if d >= threshold {
            wins += 1;
        } else {
            losses += 1;
        }
    }
    let n = batch.len();
    Ok(WinTieLoss {
        wins: wins as f64 / n as f64,
        ties: ties as f64 / n as f64,
        losses: losses as f64 / n as f64,
        threshold,
        n,
    })
}

/// One row of a deferral curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub rule: DeferralRule,
    pub eta: f64,
    pub mean_quality: f64,
    pub flops: f64,
    pub relative_cost_x: f64,
}

/// Sweeps the budget grid: for each `eta`, select deferrals, realize the
/// outcome on `columns`, and average. FLOPs are computed at the effective
/// deferral fraction actually selected (`k / B`).
pub fn deferral_curve(
    batch: &Batch,
    rule: &DeferralRule,
    grid: &[f64],
    cost: &CostModel,
    columns: ColumnPair,
) -> Result<Vec<CurvePoint>, EvalError> {
    if batch.is_empty() {
        return Err(EvalError::EmptyBatch);
    }
    let mut points = Vec::with_capacity(grid.len());
    for &eta in grid {
        let decision = select_deferrals(batch, rule, DeferralBudget::new(eta)?)?;
        let realized = apply_decision(batch, &decision, columns)?;
        let report = cost.cascade_flops(decision.eta_effective, batch.len() as f64)?;
        points.push(CurvePoint {
            rule: rule.clone(),
            eta,
            mean_quality: mean_quality(&realized)?,
            flops: report.flops,
            relative_cost_x: report.relative_cost_x,
        });
    }
    Ok(points)
}

/// Smallest grid budget whose mean quality reaches `target`, or `None`.
pub fn crossover_budget(curve: &[CurvePoint], target: f64) -> Result<Option<f64>, EvalError> {
    if curve.is_empty() {
        return Err(EvalError::EmptyCurve);
    }
    Ok(curve
        .iter()
        .filter(|p| p.mean_quality >= target)
        .map(|p| p.eta)
        .min_by(|a, b| a.partial_cmp(b).expect("grid etas are finite")))
}

/// How the permutation null distribution was built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PermutationMode {
    Exact,
    MonteCarlo { iterations: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PermutationTestResult {
    pub p_value: f64,
    /// `|mean paired difference|`.
    pub observed_stat: f64,
    pub mode: PermutationMode,
    pub n_pairs: usize,
}

/// Cutover and sampling parameters for [`paired_permutation_test`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PermutationConfig {
    /// Enumerate all `2^n` sign assignments when `n` is at most this.
    pub max_exact_n: usize,
    /// Monte Carlo sample count above the exact cutover.
    pub iterations: u64,
    pub seed: u64,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        PermutationConfig { max_exact_n: 20, iterations: 100_000, seed: 0 }
    }
}

/// Two-sided paired permutation test with the sign-flip scheme: the
/// statistic is `|mean(a_i - b_i)|` and the null distribution flips the
/// sign of each paired difference independently.
///
/// Exact mode enumerates all `2^n` assignments and reports
/// `p = #{|stat| >= observed} / 2^n`. Monte Carlo mode draws seeded sign
/// vectors and uses the add-one estimator `p = (1 + c) / (m + 1)`.
pub fn paired_permutation_test(
    a: &[f64],
    b: &[f64],
    config: &PermutationConfig,
) -> Result<PermutationTestResult, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(EvalError::EmptySamples);
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    let n = diffs.len();
    let observed_sum = diffs.iter().sum::<f64>().abs();
    // Tolerance absorbs float reassociation across sign patterns that are
    // algebraically tied with the observed sum.
    let cutoff = observed_sum * (1.0 - 1e-12);

    if n <= config.max_exact_n {
        if n > 30 {
            return Err(EvalError::ExactEnumerationTooLarge { n });
        }
        let total = 1u64 << n;
        let mut count = 0u64;
        for mask in 0..total {
            let mut sum = 0.0;
            for (i, d) in diffs.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    sum -= d;
                } else {
                    sum += d;
                }
            }
            if sum.abs() >= cutoff {
                count += 1;
            }
        }
        Ok(PermutationTestResult {
            p_value: count as f64 / total as f64,
            observed_stat: observed_sum / n as f64,
            mode: PermutationMode::Exact,
            n_pairs: n,
        })
    } else {
        if config.iterations == 0 {
            return Err(EvalError::ZeroIterations);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut count = 0u64;
        for _ in 0..config.iterations {
            let mut bits = rng.next_u64();
            let mut available = 64u32;
            let mut sum = 0.0;
            for d in &diffs {
                if available == 0 {
                    bits = rng.next_u64();
                    available = 64;
                }
                if bits & 1 == 1 {
                    sum -= d;
                } else {
                    sum += d;
                }
                bits >>= 1;
                available -= 1;
            }
            if sum.abs() >= cutoff {
                count += 1;
            }
        }
        Ok(PermutationTestResult {
            p_value: (1 + count) as f64 / (config.iterations + 1) as f64,
            observed_stat: observed_sum / n as f64,
            mode: PermutationMode::MonteCarlo { iterations: config.iterations, seed: config.seed },
            n_pairs: n,
        })
    }
}

/// Per-budget significance against a reference column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandPoint {
    pub eta: f64,
    pub p_value: f64,
    /// True when the realized cascade is statistically indistinguishable
    /// from the reference at level `alpha` (`p >= alpha`).
    pub indistinguishable: bool,
}

/// For each grid budget, runs the paired permutation test between the
/// realized cascade qualities and `reference`, flagging the budgets whose
/// p-value is at least `alpha`. Budgets are tested pointwise; no
/// multiple-comparison adjustment is applied across the grid.
pub fn significance_band(
    batch: &Batch,
    rule: &DeferralRule,
    grid: &[f64],
    columns: ColumnPair,
    reference: ScoreColumn,
    alpha: f64,
    config: &PermutationConfig,
) -> Result<Vec<BandPoint>, EvalError> {
    if batch.is_empty() {
        return Err(EvalError::EmptyBatch);
    }
    let reference_values = batch.column_values(reference)?;
    let mut band = Vec::with_capacity(grid.len());
    for &eta in grid {
        let decision = select_deferrals(batch, rule, DeferralBudget::new(eta)?)?;
        let realized = apply_decision(batch, &decision, columns)?;
        let result = paired_permutation_test(&realized, &reference_values, config)?;
        band.push(BandPoint {
            eta,
            p_value: result.p_value,
            indistinguishable: result.p_value >= alpha,
        });
    }
    Ok(band)
}

/// Renders curve points as CSV with the plotting-interface columns
/// `rule,eta,mean_quality,flops,relative_cost_x`.
pub fn curves_to_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("rule,eta,mean_quality,flops,relative_cost_x\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.rule.label(),
            p.eta,
            p.mean_quality,
            p.flops,
            p.relative_cost_x
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::TranslationRecord;

    fn quality_batch(pairs: &[(f64, f64)]) -> Batch {
        let records = pairs
            .iter()
            .enumerate()
            .map(|(i, &(small, large))| {
                let mut r = TranslationRecord::new(format!("seg-{i}"), "en-de", format!("s{i}"));
                r.quality_small = Some(small);
                r.quality_large = Some(large);
                r
            })
            .collect();
        Batch::new("fixture", records).unwrap()
    }

    fn cost() -> CostModel {
        CostModel::new(7e9, 70e9, 0.5e9, 1.0, 1.0).unwrap()
    }

    #[test]
    fn mean_quality_is_the_arithmetic_mean() {
        assert_eq!(mean_quality(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(mean_quality(&[4.5; 8]).unwrap(), 4.5);
        let interleaved: Vec<f64> =
            (0..10).flat_map(|_| [-3.01, -2.79]).collect();
        assert!((mean_quality(&interleaved).unwrap() - -2.90).abs() < 1e-12);
    }

    #[test]
    fn mean_quality_rejects_empty_input() {
        assert!(matches!(mean_quality(&[]), Err(EvalError::EmptySamples)));
    }

    #[test]
    fn win_tie_loss_matches_hand_computation() {
        // diffs [0.2, -0.05, 0.0, 0.3] at threshold 0.122
        let batch = quality_batch(&[(0.2, 0.0), (-0.05, 0.0), (0.0, 0.0), (0.3, 0.0)]);
        let wtl = win_tie_loss(&batch, ScoreColumn::QualitySmall, ScoreColumn::QualityLarge, 0.122)
            .unwrap();
        assert_eq!(wtl.wins, 0.5);
        assert_eq!(wtl.ties, 0.5);
        assert_eq!(wtl.losses, 0.0);
        assert!((wtl.wins + wtl.ties + wtl.losses - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_threshold_with_no_zero_diffs_has_no_ties() {
        let batch = quality_batch(&[(0.4, 0.1), (-0.2, 0.3)]);
        let wtl =
            win_tie_loss(&batch, ScoreColumn::QualitySmall, ScoreColumn::QualityLarge, 0.0).unwrap();
        assert_eq!(wtl.ties, 0.0);
        assert_eq!(wtl.wins, 0.5);
        assert_eq!(wtl.losses, 0.5);
    }

    #[test]
    fn equal_columns_are_all_ties_at_positive_threshold() {
        let batch = quality_batch(&[(1.5, 1.5), (-2.0, -2.0), (0.0, 0.0)]);
        let wtl =
            win_tie_loss(&batch, ScoreColumn::QualitySmall, ScoreColumn::QualityLarge, 0.122).unwrap();
        assert_eq!(wtl.ties, 1.0);
    }

    #[test]
    fn win_tie_loss_rejects_negative_threshold_and_missing_columns() {
        let batch = quality_batch(&[(1.0, 2.0)]);
        assert!(win_tie_loss(&batch, ScoreColumn::QualitySmall, ScoreColumn::QualityLarge, -0.1)
            .is_err());
        let err =
            win_tie_loss(&batch, ScoreColumn::QeSmall, ScoreColumn::QualityLarge, 0.1).unwrap_err();
        assert!(err.to_string().contains("seg-0"));
    }

    #[test]
    fn curve_endpoints_hit_single_model_means() {
        let batch = quality_batch(&[(1.0, 3.0), (2.0, 2.0), (0.0, 4.0)]);
        let curve =
            deferral_curve(&batch, &DeferralRule::oracle(), &[0.0, 1.0], &cost(), ColumnPair::QUALITY)
                .unwrap();
        assert_eq!(curve[0].mean_quality, 1.0);
        assert_eq!(curve[1].mean_quality, 3.0);
    }

    #[test]
    fn oracle_curve_rises_then_falls_with_mixed_gains() {
        // gains [1, -1]: forced full deferral undoes the early win
        let batch = quality_batch(&[(0.0, 1.0), (0.0, -1.0)]);
        let curve = deferral_curve(
            &batch,
            &DeferralRule::oracle(),
            &[0.0, 0.5, 1.0],
            &cost(),
            ColumnPair::QUALITY,
        )
        .unwrap();
        let means: Vec<f64> = curve.iter().map(|p| p.mean_quality).collect();
        assert_eq!(means, vec![0.0, 0.5, 0.0]);
    }

    #[test]
    fn curve_attaches_flops_at_effective_fraction() {
        let batch = quality_batch(&[(0.0, 1.0), (0.0, -1.0)]);
        let curve =
            deferral_curve(&batch, &DeferralRule::oracle(), &[0.5], &cost(), ColumnPair::QUALITY)
                .unwrap();
        let expected = cost().cascade_flops(0.5, 2.0).unwrap();
        assert_eq!(curve[0].flops, expected.flops);
        assert_eq!(curve[0].relative_cost_x, expected.relative_cost_x);
    }

    #[test]
    fn crossover_finds_smallest_reaching_budget() {
        let batch = quality_batch(&[(1.0, 3.0), (2.0, 2.0), (0.0, 4.0)]);
        let curve = deferral_curve(
            &batch,
            &DeferralRule::oracle(),
            &[0.0, 0.5, 1.0],
            &cost(),
            ColumnPair::QUALITY,
        )
        .unwrap();
        assert_eq!(crossover_budget(&curve, 1.0).unwrap(), Some(0.0));
        assert_eq!(crossover_budget(&curve, 100.0).unwrap(), None);
        assert!(crossover_budget(&[], 0.0).is_err());
    }

    #[test]
    fn identical_samples_give_p_one() {
        let a = [0.3, -0.1, 0.7];
        let result = paired_permutation_test(&a, &a, &PermutationConfig::default()).unwrap();
        assert_eq!(result.p_value, 1.0);
        assert_eq!(result.observed_stat, 0.0);
        assert_eq!(result.mode, PermutationMode::Exact);
    }

    #[test]
    fn three_constant_differences_enumerate_to_a_quarter() {
        let result = paired_permutation_test(
            &[4.0, 5.0, 6.0],
            &[1.0, 2.0, 3.0],
            &PermutationConfig::default(),
        )
        .unwrap();
        assert_eq!(result.p_value, 0.25);
        assert_eq!(result.observed_stat, 3.0);
        assert_eq!(result.n_pairs, 3);
    }

    #[test]
    fn monte_carlo_mode_is_seed_reproducible() {
        let a: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.53).cos()).collect();
        let config = PermutationConfig { max_exact_n: 10, iterations: 2000, seed: 99 };
        let first = paired_permutation_test(&a, &b, &config).unwrap();
        let second = paired_permutation_test(&a, &b, &config).unwrap();
        assert_eq!(first, second);
        assert_eq!(first.mode, PermutationMode::MonteCarlo { iterations: 2000, seed: 99 });
        assert!(first.p_value >= 1.0 / 2001.0);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let err = paired_permutation_test(&[1.0], &[1.0, 2.0], &PermutationConfig::default())
            .unwrap_err();
        assert!(matches!(err, EvalError::LengthMismatch { left: 1, right: 2 }));
    }

    #[test]
    fn band_flags_full_deferral_against_large_reference() {
        let batch = quality_batch(&[(1.0, 3.0), (2.0, 2.5), (0.0, 4.0)]);
        let band = significance_band(
            &batch,
            &DeferralRule::oracle(),
            &[0.0, 1.0],
            ColumnPair::QUALITY,
            ScoreColumn::QualityLarge,
            0.01,
            &PermutationConfig::default(),
        )
        .unwrap();
        let full = &band[1];
        assert_eq!(full.p_value, 1.0);
        assert!(full.indistinguishable);
    }

    #[test]
    fn band_flags_everything_when_small_equals_large() {
        let batch = quality_batch(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]);
        let band = significance_band(
            &batch,
            &DeferralRule::oracle(),
            &[0.0, 0.5, 1.0],
            ColumnPair::QUALITY,
            ScoreColumn::QualityLarge,
            0.01,
            &PermutationConfig::default(),
        )
        .unwrap();
        assert!(band.iter().all(|p| p.indistinguishable));
    }

    #[test]
    fn csv_export_uses_the_plotting_columns() {
        let batch = quality_batch(&[(1.0, 3.0)]);
        let curve =
            deferral_curve(&batch, &DeferralRule::oracle(), &[0.0], &cost(), ColumnPair::QUALITY)
                .unwrap();
        let csv = curves_to_csv(&curve);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "rule,eta,mean_quality,flops,relative_cost_x");
        assert!(lines.next().unwrap().starts_with("oracle,0,1,"));
    }
}
