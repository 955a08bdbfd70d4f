//! Numerical checks of the probabilistic structure of the optimal cost.

mod ergodic;
mod martingale;
mod stats;

pub use ergodic::{
    augmented_kernel_delta, dobrushin_delta, ergodicity_report, kappa_bound, shift_total_variation,
    AugmentedDelta, ErgodicityReport, PeriodDelta, SHIFT_POINTS,
};
pub use martingale::{
    conditional_mean_check, martingale_decompose, max_abs_difference, variance_bookkeeping, ExactSum,
    MartingaleDecomposition, VarianceBookkeeping,
};
pub use stats::{
    clt_test, dkw_band, histogram, hoeffding_check, ks_normal, normal_cdf, normal_quantile, qq_pairs,
    standardize, stochastic_order_compare, variance_growth, CltReport, DominanceReport, HistogramBin,
    HoeffdingTable, TailRow, VarianceFit, VariancePoint, Verdict, EXCESS_KURTOSIS_LIMIT, KS_LIMIT,
    SKEWNESS_LIMIT,
};

use serde::Serialize;

use crate::demand::{DemandModel, SoftUnimodalityReport};
use crate::sim::Trajectory;
use crate::solver::Solution;

/// Summary of the martingale checks over a batch of optimal paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleSummary {
    pub paths: usize,
    pub max_telescoping_residual: f64,
    pub max_form_gap: f64,
    /// Empirical `max |d_i|`.
    pub b_hat: f64,
    pub conditional_mean: Vec<ConditionalMeanProbe>,
    pub conditional_mean_tolerance: f64,
    pub variance: VarianceBookkeeping,
    /// Value lookups below the state grid, over all paths.
    pub clamped: usize,
    pub pass: bool,
}

/// Twenty `(x, i)` pairs: five states spread over the reachable range times
/// four periods spread over the horizon.
pub fn default_probes(sol: &Solution) -> Vec<(f64, usize)> {
    let policy = &sol.policy;
    let n = policy.horizon();
    let (lo, hi) = (policy.state_lo, policy.state_hi);
    let mut periods: Vec<usize> = [1, n / 3, (2 * n) / 3, n].into_iter().map(|i| i.max(1)).collect();
    periods.dedup();
    (1..=5)
        .map(|j| lo + (hi - lo) * j as f64 / 6.0)
        .flat_map(|x| periods.iter().map(move |&i| (x, i)))
        .collect()
}

/// Telescoping, conditional-mean and variance checks over optimal paths.
///
/// Conditional-mean residuals are held to `1e-3 v_n(x0)`.
pub fn martingale_summary(
    sol: &Solution,
    demand: &DemandModel,
    trajectories: &[Trajectory],
    probes: &[(f64, usize)],
) -> MartingaleSummary {
    let decomps: Vec<MartingaleDecomposition> = trajectories
        .iter()
        .map(|t| martingale_decompose(t, &sol.values, &sol.params))
        .collect();
    let costs: Vec<f64> = trajectories.iter().map(Trajectory::total_cost).collect();
    let max_telescoping_residual = decomps
        .iter()
        .map(|d| d.telescoping_residual.abs())
        .fold(0.0, f64::max);
    let max_form_gap = decomps.iter().map(|d| d.form_gap).fold(0.0, f64::max);
    let conditional_mean: Vec<ConditionalMeanProbe> = probes
        .iter()
        .map(|&(x, period)| ConditionalMeanProbe {
            x,
            period,
            residual: conditional_mean_check(x, period, &sol.values, &sol.policy, &sol.params, demand),
        })
        .collect();
    let conditional_mean_tolerance = 1e-3 * sol.expected_cost.abs();
    let variance = variance_bookkeeping(&costs, &decomps);
    let pass = max_telescoping_residual == 0.0
        && conditional_mean
            .iter()
            .all(|p| p.residual <= conditional_mean_tolerance)
        && variance.pass;
    MartingaleSummary {
        paths: trajectories.len(),
        max_telescoping_residual,
        max_form_gap,
        b_hat: max_abs_difference(&decomps),
        conditional_mean,
        conditional_mean_tolerance,
        variance,
        clamped: decomps.iter().map(|d| d.clamped).sum(),
        pass,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionalMeanProbe {
    pub x: f64,
    pub period: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceEntry {
    pub candidate: String,
    pub alternative: String,
    #[serde(flatten)]
    pub report: DominanceReport,
}

/// Everything the `diagnose` run computes; absent sections are `null`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub kappa: f64,
    pub alpha_lower: f64,
    pub delta_by_period: Vec<PeriodDelta>,
    pub augmented: Vec<AugmentedDelta>,
    pub soft_unimodality: SoftUnimodalityReport,
    /// Why the coefficients were not computed, when they were not.
    pub ergodicity_refused: Option<String>,
    pub martingale: Option<MartingaleSummary>,
    pub ks: Option<CltReport>,
    pub variance_fit: Option<VarianceFit>,
    pub hoeffding_table: Option<HoeffdingTable>,
    pub dominance: Vec<DominanceEntry>,
    pub pass: bool,
}
