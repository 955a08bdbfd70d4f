//! Dobrushin contraction coefficients of the inventory kernels.
//!
//! Under an order-up-to rule the next state is `gamma(x) - D`, so two rows
//! of the kernel differ by a shift `eps` of the demand density and their
//! total-variation distance is `TV(eps) = int max(psi(w) - psi(w + eps), 0) dw`.

use serde::Serialize;

use crate::demand::{check_soft_unimodality, DemandModel};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::solver::PolicyTable;

/// Points in the shift grid used for each period.
pub const SHIFT_POINTS: usize = 32;

/// `max{ c_p / (c_h + c_p), ((q + n0 + 1) c_h + c) / ((q + n0 + 1)(c_h + c_p)) }`
pub fn kappa_bound(params: &ModelParams, n0: usize) -> f64 {
    let r = params.q + n0 as f64 + 1.0;
    let first = params.c_p / (params.c_h + params.c_p);
    let second = (r * params.c_h + params.c) / (r * (params.c_h + params.c_p));
    first.max(second)
}

/// Total variation between the density and its shift by `eps`.
///
/// Integrates the positive part exactly on the merged breakpoints of both
/// piecewise-linear functions.
pub fn shift_total_variation(demand: &DemandModel, eps: f64) -> f64 {
    let eps = eps.abs();
    if eps == 0.0 {
        return 0.0;
    }
    let m = demand.points();
    let h = demand.step();
    let upper = demand.upper();
    let psi = demand.density_values();
    // Linear piece of psi containing `mid`, evaluated at `w`.
    let piece = |mid: f64, w: f64| -> f64 {
        if mid <= 0.0 || mid >= upper {
            return 0.0;
        }
        let j = ((mid / h).floor() as usize).min(m - 1);
        let frac = (w - j as f64 * h) / h;
        psi[j] + frac * (psi[j + 1] - psi[j])
    };
    let mut breaks: Vec<f64> = (0..=m)
        .flat_map(|j| {
            let t = j as f64 * h;
            [t, t - eps]
        })
        .filter(|&t| (0.0..=upper).contains(&t))
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-15);

    let mut total = 0.0;
    for seg in breaks.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        if b - a <= 0.0 {
            continue;
        }
        let mid = 0.5 * (a + b);
        let fa = piece(mid, a) - piece(mid + eps, a + eps);
        let fb = piece(mid, b) - piece(mid + eps, b + eps);
        total += if fa >= 0.0 && fb >= 0.0 {
            0.5 * (fa + fb) * (b - a)
        } else if fa <= 0.0 && fb <= 0.0 {
            0.0
        } else {
            let root = a + fa / (fa - fb) * (b - a);
            if fa > 0.0 {
                0.5 * fa * (root - a)
            } else {
                0.5 * fb * (b - root)
            }
        };
    }
    total
}

fn active_level(policy: &PolicyTable, i: usize) -> Result<f64> {
    let n = policy.horizon();
    if i == 0 || i > n {
        return Err(Error::Domain(format!("period {i} outside [1, {n}]")));
    }
    policy
        .rule(n - i + 1)
        .level()
        .ok_or_else(|| Error::Domain(format!("period {i} is passive")))
}

fn shift_grid(policy: &PolicyTable, level: f64) -> Vec<f64> {
    let eps_max = (policy.state_hi - level).max(0.0);
    (0..SHIFT_POINTS)
        .map(|j| eps_max * j as f64 / (SHIFT_POINTS - 1) as f64)
        .collect()
}

/// Dobrushin coefficient of the period-`i` kernel on the inventory space.
///
/// Refuses densities that are not softly unimodal on the shift grid.
pub fn dobrushin_delta(policy: &PolicyTable, demand: &DemandModel, i: usize) -> Result<f64> {
    let level = active_level(policy, i)?;
    let shifts = shift_grid(policy, level);
    let gate = check_soft_unimodality(demand, &shifts);
    if !gate.pass {
        let bad: Vec<f64> = gate.shifts.iter().filter(|s| !s.pass).map(|s| s.eps).collect();
        return Err(Error::Hypothesis(format!(
            "demand density is not softly unimodal (failing shifts {bad:?})"
        )));
    }
    Ok(shifts
        .iter()
        .map(|&e| shift_total_variation(demand, e))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AugmentedDelta {
    pub period: usize,
    pub delta_x: f64,
    pub delta_z: f64,
    pub pass: bool,
}

/// Dobrushin coefficient of the kernel on inventory x delivery flag.
///
/// The flag of the next period is an independent Bernoulli(q) draw, so the
/// row difference splits into `(1 - q)` and `q` copies of the inventory
/// difference on the two layers; the supremum over sets adds their positive
/// parts.
pub fn augmented_kernel_delta(
    policy: &PolicyTable,
    demand: &DemandModel,
    params: &ModelParams,
    i: usize,
) -> Result<AugmentedDelta> {
    let delta_x = dobrushin_delta(policy, demand, i)?;
    let level = active_level(policy, i)?;
    let q = params.q;
    let delta_z = shift_grid(policy, level)
        .iter()
        .map(|&e| {
            let pos = shift_total_variation(demand, e);
            (1.0 - q) * pos + q * pos
        })
        .fold(0.0, f64::max);
    Ok(AugmentedDelta {
        period: i,
        delta_x,
        delta_z,
        pass: delta_z <= delta_x + 1e-12,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodDelta {
    pub period: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodicityReport {
    pub kappa: f64,
    pub alpha_lower: f64,
    pub delta_by_period: Vec<PeriodDelta>,
    pub augmented: Vec<AugmentedDelta>,
    pub max_delta: f64,
    /// Every delta within `kappa + 1e-6` and every augmented check passes.
    pub pass: bool,
}

/// Coefficients for every active period of `policy`.
pub fn ergodicity_report(
    policy: &PolicyTable,
    demand: &DemandModel,
    params: &ModelParams,
) -> Result<ErgodicityReport> {
    let kappa = kappa_bound(params, policy.n0);
    let n = policy.horizon();
    let mut delta_by_period = Vec::new();
    let mut augmented = Vec::new();
    for i in 1..=n {
        if policy.rule(n - i + 1).level().is_none() {
            continue;
        }
        let aug = augmented_kernel_delta(policy, demand, params, i)?;
        delta_by_period.push(PeriodDelta {
            period: i,
            delta: aug.delta_x,
        });
        augmented.push(aug);
    }
    let max_delta = delta_by_period.iter().map(|d| d.delta).fold(0.0, f64::max);
    let pass = max_delta <= kappa + 1e-6 && augmented.iter().all(|a| a.pass);
    Ok(ErgodicityReport {
        kappa,
        alpha_lower: 1.0 - kappa,
        delta_by_period,
        augmented,
        max_delta,
        pass,
    })
}
