//! The optimality martingale `M_i = C_i + v_{n-i}(X_{i+1})` along simulated
//! paths, its differences, and the Bellman conditional-mean property.

use serde::Serialize;

use crate::demand::DemandModel;
use crate::model::ModelParams;
use crate::sim::{period_cost, Trajectory};
use crate::solver::{PolicyTable, ValueGrid};

/// Error-free sum of two floats: `a + b = s + e` exactly.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// Non-overlapping floating-point expansion holding an exact running sum.
#[derive(Debug, Default, Clone)]
pub struct ExactSum {
    parts: Vec<f64>,
}

impl ExactSum {
    pub fn add(&mut self, x: f64) {
        let mut q = x;
        let mut next = Vec::with_capacity(self.parts.len() + 1);
        for &p in &self.parts {
            let (s, e) = two_sum(q, p);
            if e != 0.0 {
                next.push(e);
            }
            q = s;
        }
        if q != 0.0 {
            next.push(q);
        }
        self.parts = next;
    }

    /// The sum rounded once; exactly zero iff the exact sum is zero.
    pub fn value(&self) -> f64 {
        self.parts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleDecomposition {
    /// `M_0, ..., M_n`.
    pub martingale: Vec<f64>,
    /// `d_i = M_i - M_{i-1}` for `i = 1..=n`.
    pub differences: Vec<f64>,
    /// `sum d_i - (C_n - v_n(x0))` evaluated exactly from the differences.
    pub telescoping_residual: f64,
    /// Largest gap between `M_i - M_{i-1}` and `P_i + v_{n-i}(X_{i+1}) - v_{n-i+1}(X_i)`.
    pub form_gap: f64,
    /// Value lookups that fell below the state grid.
    pub clamped: usize,
}

pub fn martingale_decompose(
    trajectory: &Trajectory,
    values: &ValueGrid,
    _params: &ModelParams,
) -> MartingaleDecomposition {
    let n = trajectory.horizon();
    let states: Vec<f64> = trajectory.states().collect();
    let mut clamped = 0;
    let mut v = |k: usize, x: f64| {
        let (val, under) = values.value_checked(k, x);
        clamped += usize::from(under);
        val
    };
    let start = v(n, states[0]);
    let mut martingale = Vec::with_capacity(n + 1);
    martingale.push(start);
    let mut differences = Vec::with_capacity(n);
    let mut exact = ExactSum::default();
    let mut form_gap: f64 = 0.0;
    for (i, p) in trajectory.periods.iter().enumerate() {
        let next = v(n - i - 1, states[i + 1]);
        let here = v(n - i, states[i]);
        let m = p.cumulative + next;
        let (d, err) = two_sum(m, -martingale[i]);
        exact.add(d);
        exact.add(err);
        form_gap = form_gap.max((d - (p.cost + next - here)).abs());
        differences.push(d);
        martingale.push(m);
    }
    exact.add(-trajectory.total_cost());
    exact.add(start);
    MartingaleDecomposition {
        martingale,
        differences,
        telescoping_residual: exact.value(),
        form_gap,
        clamped,
    }
}

/// `|E[d_i | X_i = x]|` by exact quadrature over the delivery flag and demand.
///
/// Period `i` is 1-based in a run of the policy's horizon.
pub fn conditional_mean_check(
    x: f64,
    i: usize,
    values: &ValueGrid,
    policy: &PolicyTable,
    params: &ModelParams,
    demand: &DemandModel,
) -> f64 {
    let n = policy.horizon();
    let k = n - i + 1;
    let y = policy.rule(k).target(x);
    let branch = |flag: u8| {
        demand.expect(|t| period_cost(params, x, y, flag, t) + values.value(k - 1, y - t))
    };
    let expected = params.q * branch(1) + (1.0 - params.q) * branch(0);
    (expected - values.value(k, x)).abs()
}

/// Sample variance of `C_n` against the summed second moments of the differences.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceBookkeeping {
    pub sample_variance: f64,
    pub sum_mean_square_differences: f64,
    pub combined_std_error: f64,
    pub pass: bool,
}

/// Fails outright with fewer than two paths.
pub fn variance_bookkeeping(costs: &[f64], decomps: &[MartingaleDecomposition]) -> VarianceBookkeeping {
    if costs.len() < 2 {
        return VarianceBookkeeping {
            sample_variance: 0.0,
            sum_mean_square_differences: 0.0,
            combined_std_error: 0.0,
            pass: false,
        };
    }
    let r = costs.len() as f64;
    let mean = costs.iter().sum::<f64>() / r;
    let m2 = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / r;
    let m4 = costs.iter().map(|c| (c - mean).powi(4)).sum::<f64>() / r;
    let sample_variance = m2 * r / (r - 1.0);
    let se_var = ((m4 - m2 * m2).max(0.0) / r).sqrt();

    let squares: Vec<f64> = decomps
        .iter()
        .map(|d| d.differences.iter().map(|x| x * x).sum())
        .collect();
    let sq_mean = squares.iter().sum::<f64>() / r;
    let sq_var = squares.iter().map(|s| (s - sq_mean).powi(2)).sum::<f64>() / (r - 1.0);
    let se_sum = (sq_var / r).sqrt();
    let combined_std_error = (se_var * se_var + se_sum * se_sum).sqrt();
    VarianceBookkeeping {
        sample_variance,
        sum_mean_square_differences: sq_mean,
        combined_std_error,
        pass: (sample_variance - sq_mean).abs() <= 4.0 * combined_std_error,
    }
}

/// Largest `|d_i|` over all decompositions.
pub fn max_abs_difference(decomps: &[MartingaleDecomposition]) -> f64 {
    decomps
        .iter()
        .flat_map(|d| d.differences.iter())
        .fold(0.0, |m, d| m.max(d.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_sum_cancels_catastrophic_terms() {
        let mut s = ExactSum::default();
        for x in [1e16, 1.0, -1e16, 0.1, -0.1, -1.0] {
            s.add(x);
        }
        assert_eq!(s.value(), 0.0);
        let mut s = ExactSum::default();
        for x in [1e16, 1.0, -1e16] {
            s.add(x);
        }
        assert_eq!(s.value(), 1.0);
    }
}
