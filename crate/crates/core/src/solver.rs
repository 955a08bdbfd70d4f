//! Backward induction for the cost-to-go functions and extraction of the
//! order-up-to structure.
//!
//! With `k` periods remaining and state `x`, the recursion minimizes over
//! `y >= x`
//!
//! ```text
//! c (y - x) + q E[L(y - D)] + (1 - q) E[L(x - D)] + E[v_{k-1}(y - D)]
//! ```
//!
//! The state term `(1 - q) E[L(x - D)] - c x` does not depend on `y`, so the
//! search only needs `H(y) = c y + q E[L(y - D)] + E[v_{k-1}(y - D)]`
//! evaluated once per grid abscissa. A suffix minimum over the grid gives the
//! best grid target for every state and golden-section search refines it
//! inside the neighbouring bracket.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::DemandModel;
use crate::error::{Error, Result};
use crate::model::{compute_n0_with, ModelParams, NaturalsConvention};

/// Default state step as a fraction of the demand support bound.
pub const DEFAULT_STEPS_PER_SUPPORT: f64 = 256.0;
const TIE_TOL: f64 = 1e-12;

/// Equally spaced state abscissae `lo + i * step`, `i < len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateGrid {
    pub lo: f64,
    pub step: f64,
    pub len: usize,
}

impl StateGrid {
    /// Grid covering `[-(n0 + 2) J, max(x0, s_cap)]` where `s_cap` is the
    /// newsvendor fractile `Psi^{-1}(c_p / (c_p + c_h))` plus one step.
    pub fn for_model(params: &ModelParams, demand: &DemandModel, step: Option<f64>) -> Result<Self> {
        params.validate()?;
        let step = step.unwrap_or(demand.upper() / DEFAULT_STEPS_PER_SUPPORT);
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::invalid("grid_step", format!("step {step} must be positive")));
        }
        let n0 = compute_n0_with(params, NaturalsConvention::FromZero);
        let lo = -((n0 + 2) as f64) * demand.upper();
        let s_cap = newsvendor_level(params, demand) + step;
        if params.x0 > s_cap {
            return Err(Error::invalid(
                "x0",
                format!(
                    "initial inventory {} exceeds the top stocking bound s_cap = {s_cap}",
                    params.x0
                ),
            ));
        }
        let hi = params.x0.max(s_cap);
        let len = ((hi - lo) / step - 1e-9).ceil() as usize + 1;
        Ok(StateGrid { lo, step, len })
    }

    pub fn abscissa(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.step
    }

    pub fn hi(&self) -> f64 {
        self.abscissa(self.len - 1)
    }

    pub fn abscissae(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|i| self.abscissa(i))
    }

    /// Linear interpolation of `row` at `x`; below the grid the lowest value
    /// is used and the second component is `true`.
    pub fn interpolate(&self, row: &[f64], x: f64) -> (f64, bool) {
        let pos = (x - self.lo) / self.step;
        if pos <= 0.0 {
            return (row[0], pos < -1e-9);
        }
        let last = self.len - 1;
        if pos >= last as f64 {
            return (row[last], false);
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        let (a, b) = (row[i], row[i + 1]);
        (a + frac * (b - a), false)
    }
}

/// `Psi^{-1}(c_p / (c_p + c_h))`, the bound on the limiting stocking level.
pub fn newsvendor_level(params: &ModelParams, demand: &DemandModel) -> f64 {
    demand.quantile_unchecked(params.c_p / (params.c_p + params.c_h))
}

/// Lower bound on the first principal-range level,
/// `Psi^{-1}(((q + n0 + 1) c_p - c) / ((q + n0 + 1)(c_p + c_h)))`.
pub fn principal_level_bound(params: &ModelParams, demand: &DemandModel, n0: usize) -> f64 {
    let r = params.q + n0 as f64 + 1.0;
    let p = (r * params.c_p - params.c) / (r * (params.c_p + params.c_h));
    demand.quantile_unchecked(p.clamp(0.0, 1.0))
}

/// Cost-to-go rows `v_0, ..., v_n` on a shared state grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    pub grid: StateGrid,
    pub rows: Vec<Vec<f64>>,
}

impl ValueGrid {
    pub fn horizon(&self) -> usize {
        self.rows.len() - 1
    }

    /// `v_k(x)` by linear interpolation (clamped below the grid).
    pub fn value(&self, k: usize, x: f64) -> f64 {
        self.grid.interpolate(&self.rows[k], x).0
    }

    pub fn value_checked(&self, k: usize, x: f64) -> (f64, bool) {
        self.grid.interpolate(&self.rows[k], x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PeriodRule {
    /// Order up to `level` when below it.
    Active { level: f64 },
    /// Order nothing.
    Passive,
}

impl PeriodRule {
    pub fn level(&self) -> Option<f64> {
        match *self {
            PeriodRule::Active { level } => Some(level),
            PeriodRule::Passive => None,
        }
    }

    pub fn target(&self, x: f64) -> f64 {
        match *self {
            PeriodRule::Active { level } => x.max(level),
            PeriodRule::Passive => x,
        }
    }
}

/// Bounds on stocking levels used by the structure and ergodicity checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelBounds {
    /// Lower bound on the first principal-range level.
    pub principal_lower: f64,
    /// Upper bound on every level.
    pub limit_upper: f64,
}

/// Per-remaining-period ordering rules; `rules[k - 1]` applies with `k`
/// periods left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub n0: usize,
    pub rules: Vec<PeriodRule>,
    pub bounds: LevelBounds,
    /// Reachable state range; the top is the larger of `x0`, the newsvendor
    /// level and the highest stocking level.
    pub state_lo: f64,
    pub state_hi: f64,
}

impl PolicyTable {
    /// A table with the given rules, listed for `k = 1, 2, ...`.
    pub fn from_rules(
        params: &ModelParams,
        demand: &DemandModel,
        rules: Vec<PeriodRule>,
    ) -> Result<Self> {
        let grid = StateGrid::for_model(params, demand, None)?;
        let n0 = compute_n0_with(params, NaturalsConvention::FromZero);
        Ok(Self::with_levels(params, demand, n0, grid.lo, rules))
    }

    /// The state range tops out at the larger of `x0`, the newsvendor level
    /// and the
    /// highest stocking level: nothing above it is reachable.
    fn with_levels(
        params: &ModelParams,
        demand: &DemandModel,
        n0: usize,
        state_lo: f64,
        rules: Vec<PeriodRule>,
    ) -> Self {
        let upper = newsvendor_level(params, demand);
        let state_hi = rules
            .iter()
            .filter_map(PeriodRule::level)
            .fold(params.x0.max(upper), f64::max);
        PolicyTable {
            n0,
            rules,
            bounds: LevelBounds {
                principal_lower: principal_level_bound(params, demand, n0),
                limit_upper: upper,
            },
            state_lo,
            state_hi,
        }
    }

    pub fn horizon(&self) -> usize {
        self.rules.len()
    }

    /// Rule with `k` periods remaining.
    pub fn rule(&self, k: usize) -> PeriodRule {
        self.rules[k - 1]
    }

    pub fn active_levels(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rules
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.level().map(|s| (i + 1, s)))
    }
}

/// Target inventory in period `i` (1-based) of an `n`-period run from state `x`.
pub fn order_up_to(policy: &PolicyTable, i: usize, x: f64, n: usize) -> Result<f64> {
    if i == 0 || i > n || n > policy.horizon() {
        return Err(Error::Domain(format!(
            "period {i} outside [1, {n}] for a policy of horizon {}",
            policy.horizon()
        )));
    }
    Ok(policy.rule(n - i + 1).target(x))
}

/// Output of one backward step.
#[derive(Debug, Clone, PartialEq)]
pub struct BellmanStep {
    pub values: Vec<f64>,
    /// Constrained minimizer `y*(x)` per abscissa.
    pub minimizers: Vec<f64>,
    /// Abscissae whose optimal target looked up values below the grid.
    pub underflows: usize,
}

struct Objective<'a> {
    params: &'a ModelParams,
    demand: &'a DemandModel,
    grid: &'a StateGrid,
    prev: &'a [f64],
}

impl Objective<'_> {
    /// `c y + q E[L(y - D)] + E[v_prev(y - D)]`
    fn target_part(&self, y: f64) -> f64 {
        let q = self.params.q;
        let expected: f64 = self
            .demand
            .nodes()
            .iter()
            .map(|&(t, w)| {
                let z = y - t;
                w * (q * self.params.carrying(z) + self.grid.interpolate(self.prev, z).0)
            })
            .sum();
        self.params.c * y + expected
    }

    /// `(1 - q) E[L(x - D)] - c x`
    fn state_part(&self, x: f64) -> f64 {
        let delayed = self.demand.expect(|t| self.params.carrying(x - t));
        (1.0 - self.params.q) * delayed - self.params.c * x
    }

    fn underflows_at(&self, y: f64) -> bool {
        let deepest = self.demand.nodes().last().map_or(0.0, |n| n.0);
        y - deepest < self.grid.lo - 1e-9
    }

    /// Golden-section refinement on `[a, b]`, returning the best of the
    /// refined point and both endpoints (smallest `y` on ties).
    fn refine(&self, a: f64, b: f64, fa: f64, fb: f64) -> (f64, f64) {
        let tol = self.grid.step / 16.0;
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (a, b);
        let mut c = hi - inv_phi * (hi - lo);
        let mut d = lo + inv_phi * (hi - lo);
        let mut fc = self.target_part(c);
        let mut fd = self.target_part(d);
        while hi - lo > tol {
            if fc <= fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - inv_phi * (hi - lo);
                fc = self.target_part(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + inv_phi * (hi - lo);
                fd = self.target_part(d);
            }
        }
        let inner = if fc <= fd { (c, fc) } else { (d, fd) };
        let mut best = (a, fa);
        for cand in [inner, (b, fb)] {
            if cand.1 < best.1 - TIE_TOL {
                best = cand;
            }
        }
        best
    }
}

/// One step of the recursion from `v_prev` (k - 1 periods left) to `v_k`.
pub fn bellman_step(
    v_prev: &[f64],
    params: &ModelParams,
    demand: &DemandModel,
    grid: &StateGrid,
) -> BellmanStep {
    assert_eq!(v_prev.len(), grid.len, "value row does not match the grid");
    let obj = Objective {
        params,
        demand,
        grid,
        prev: v_prev,
    };
    let n = grid.len;
    let h: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| obj.target_part(grid.abscissa(j)))
        .collect();

    // Best grid target among y >= x_i, smallest y on ties.
    let mut best_idx = vec![0usize; n];
    let mut run_min = f64::INFINITY;
    let mut best = n - 1;
    for i in (0..n).rev() {
        if h[i] < run_min {
            run_min = h[i];
        }
        if h[i] <= run_min + TIE_TOL {
            best = i;
        }
        best_idx[i] = best;
    }

    let bracket = |i: usize| -> (usize, usize) {
        let j = best_idx[i];
        (j.saturating_sub(1).max(i), (j + 1).min(n - 1))
    };
    let mut keys: Vec<(usize, usize)> = (0..n).map(bracket).collect();
    keys.sort_unstable();
    keys.dedup();
    let refined: BTreeMap<(usize, usize), (f64, f64)> = keys
        .into_par_iter()
        .map(|(a, b)| {
            let r = if a == b {
                (grid.abscissa(a), h[a])
            } else {
                obj.refine(grid.abscissa(a), grid.abscissa(b), h[a], h[b])
            };
            ((a, b), r)
        })
        .collect();

    let (values, minimizers): (Vec<f64>, Vec<f64>) = (0..n)
        .into_par_iter()
        .map(|i| {
            let (y, hy) = refined[&bracket(i)];
            (obj.state_part(grid.abscissa(i)) + hy, y)
        })
        .unzip();
    let underflows = minimizers.iter().filter(|&&y| obj.underflows_at(y)).count();
    BellmanStep {
        values,
        minimizers,
        underflows,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverOptions {
    /// State grid step; defaults to `J / 256`.
    pub step: Option<f64>,
    /// Extra room above the grid ceiling, in units of the step.
    pub headroom: usize,
}

/// Ceiling extensions tried before giving up.
const MAX_EXTENSIONS: usize = 64;

/// Everything produced by backward induction.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub params: ModelParams,
    pub values: ValueGrid,
    pub policy: PolicyTable,
    /// `minimizers[k - 1][i]` is `y*` at abscissa `i` with `k` periods left.
    pub minimizers: Vec<Vec<f64>>,
    /// `v_n(x0)`, the optimal expected total cost.
    pub expected_cost: f64,
    pub warnings: Vec<String>,
}

pub fn solve(params: &ModelParams, demand: &DemandModel) -> Result<Solution> {
    solve_with(params, demand, &SolverOptions::default())
}

pub fn solve_with(params: &ModelParams, demand: &DemandModel, opts: &SolverOptions) -> Result<Solution> {
    let mut grid = StateGrid::for_model(params, demand, opts.step)?;
    grid.len += opts.headroom;
    let per_unit = (demand.upper() / grid.step).ceil() as usize;
    for _ in 0..MAX_EXTENSIONS {
        let sweep = backward_induction(params, demand, &grid);
        // With delays the levels can sit above the newsvendor quantile; a
        // level pinned to the ceiling means the grid was cutting it off.
        let ceiling = grid.hi() - 2.0 * grid.step;
        if sweep.1.iter().all(|r| r.level().is_none_or(|s| s < ceiling)) {
            return Ok(finish(params, demand, grid, sweep));
        }
        grid.len += per_unit;
    }
    Err(Error::Domain(format!(
        "stocking levels kept reaching the grid ceiling ({})",
        grid.hi()
    )))
}

type Sweep = (Vec<Vec<f64>>, Vec<PeriodRule>, Vec<Vec<f64>>, Vec<String>);

fn backward_induction(params: &ModelParams, demand: &DemandModel, grid: &StateGrid) -> Sweep {
    let mut rows = vec![vec![0.0; grid.len]];
    let mut minimizers = Vec::with_capacity(params.n);
    let mut rules = Vec::with_capacity(params.n);
    let mut warnings = Vec::new();
    for k in 1..=params.n {
        let step = bellman_step(&rows[k - 1], params, demand, grid);
        let drift = grid
            .abscissae()
            .zip(&step.minimizers)
            .map(|(x, y)| (y - x).abs())
            .fold(0.0, f64::max);
        rules.push(if drift <= 2.0 * grid.step {
            PeriodRule::Passive
        } else {
            PeriodRule::Active {
                level: step.minimizers[0],
            }
        });
        if step.underflows > 0 {
            warnings.push(format!(
                "k = {k}: {} states read values below the grid (clamped)",
                step.underflows
            ));
        }
        rows.push(step.values);
        minimizers.push(step.minimizers);
    }
    (rows, rules, minimizers, warnings)
}

fn finish(params: &ModelParams, demand: &DemandModel, grid: StateGrid, sweep: Sweep) -> Solution {
    let (rows, rules, minimizers, warnings) = sweep;
    let n0 = compute_n0_with(params, NaturalsConvention::FromZero);
    let values = ValueGrid { grid, rows };
    let expected_cost = values.value(params.n, params.x0);
    let policy = PolicyTable::with_levels(params, demand, n0, grid.lo, rules);
    Solution {
        params: *params,
        values,
        policy,
        minimizers,
        expected_cost,
        warnings,
    }
}

/// A pass/fail entry with the measured quantity and its allowance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub pass: bool,
    pub measured: f64,
    pub tolerance: f64,
}

/// Observed passive periods against the residual range `k <= n0 + 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualComparison {
    pub convention: NaturalsConvention,
    pub n0: usize,
    pub expected_passive: Vec<usize>,
    pub observed_passive: Vec<usize>,
    /// `PASS` or `MISMATCH`; informational only.
    pub verdict: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// Smallest level among active periods with `k >= n0 + 2`.
    pub min_principal_level: Option<f64>,
    pub max_level: Option<f64>,
    /// Principal levels at or above `lower_bound - 2h`, all levels non-negative.
    pub lower_pass: bool,
    /// Every level at or below `upper_bound + 2h`.
    pub upper_pass: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureReport {
    pub n0: usize,
    pub step: f64,
    /// Active levels non-decreasing in `k`, within `2h`.
    pub monotone: Check,
    /// `max |y*(x) - max(x, s_k)|` over active periods and the grid.
    pub base_stock: Check,
    pub residual_range: Vec<ResidualComparison>,
    /// Largest deviation from the slope identity for `x, x' <= 0`.
    pub slope_identity: Check,
    pub slope: f64,
    pub slope_periods: Vec<usize>,
    pub bounds: BoundCheck,
    /// Active periods inside the residual range under the zero-based convention.
    pub active_in_residual_range: Vec<usize>,
    pub pass: bool,
}

/// Compares the solved policy with the base-stock characterization.
pub fn structure_report(sol: &Solution, demand: &DemandModel) -> StructureReport {
    let params = &sol.params;
    let policy = &sol.policy;
    let grid = sol.values.grid;
    let h = grid.step;
    let n = policy.horizon();

    let levels: Vec<(usize, f64)> = policy.active_levels().collect();
    let worst_drop = levels
        .windows(2)
        .map(|w| w[0].1 - w[1].1)
        .fold(0.0, f64::max);
    let monotone = Check {
        pass: worst_drop <= 2.0 * h,
        measured: worst_drop,
        tolerance: 2.0 * h,
    };

    let mut base_dev: f64 = 0.0;
    for &(k, s) in &levels {
        for (x, y) in grid.abscissae().zip(&sol.minimizers[k - 1]) {
            base_dev = base_dev.max((y - x.max(s)).abs());
        }
    }
    let base_stock = Check {
        pass: base_dev <= 2.0 * h,
        measured: base_dev,
        tolerance: 2.0 * h,
    };

    let observed_passive: Vec<usize> = (1..=n)
        .filter(|&k| policy.rule(k) == PeriodRule::Passive)
        .collect();
    let residual_range = [NaturalsConvention::FromZero, NaturalsConvention::FromOne]
        .into_iter()
        .map(|convention| {
            let n0 = compute_n0_with(params, convention);
            let expected_passive: Vec<usize> = (1..=n.min(n0 + 1)).collect();
            let verdict = if expected_passive == observed_passive {
                "PASS"
            } else {
                "MISMATCH"
            };
            ResidualComparison {
                convention,
                n0,
                expected_passive,
                observed_passive: observed_passive.clone(),
                verdict: verdict.to_string(),
            }
        })
        .collect();

    let slope = params.c + params.c_p * (1.0 - params.q);
    let slope_periods: Vec<usize> = levels.iter().filter(|l| l.1 >= 0.0).map(|l| l.0).collect();
    let mut slope_dev: f64 = 0.0;
    for &k in &slope_periods {
        // |v(x) - v(x') - (x' - x) slope| = |r(x) - r(x')| with r = v + slope x.
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (x, v) in grid.abscissae().zip(&sol.values.rows[k]) {
            if x > 1e-12 {
                break;
            }
            let r = v + slope * x;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        if hi >= lo {
            slope_dev = slope_dev.max(hi - lo);
        }
    }
    let slope_tol = 5.0 * h * (params.c + params.c_p);
    let slope_identity = Check {
        pass: slope_dev <= slope_tol,
        measured: slope_dev,
        tolerance: slope_tol,
    };

    let principal: Vec<f64> = levels
        .iter()
        .filter(|l| l.0 >= policy.n0 + 2)
        .map(|l| l.1)
        .collect();
    let min_principal_level = principal.iter().copied().reduce(f64::min);
    let max_level = levels.iter().map(|l| l.1).reduce(f64::max);
    let lower_bound = principal_level_bound(params, demand, policy.n0);
    let upper_bound = newsvendor_level(params, demand);
    let lower_pass = min_principal_level.is_none_or(|s| s >= lower_bound - 2.0 * h)
        && levels.iter().all(|l| l.1 >= 0.0);
    let upper_pass = max_level.is_none_or(|s| s <= upper_bound + 2.0 * h);
    let bounds = BoundCheck {
        lower_bound,
        upper_bound,
        min_principal_level,
        max_level,
        lower_pass,
        upper_pass,
        pass: lower_pass && upper_pass,
    };

    let active_in_residual_range = levels
        .iter()
        .map(|l| l.0)
        .filter(|&k| k <= policy.n0 + 1)
        .collect();
    let pass = monotone.pass && base_stock.pass && slope_identity.pass && bounds.pass;
    StructureReport {
        n0: policy.n0,
        step: h,
        monotone,
        base_stock,
        residual_range,
        slope_identity,
        slope,
        slope_periods,
        bounds,
        active_in_residual_range,
        pass,
    }
}
