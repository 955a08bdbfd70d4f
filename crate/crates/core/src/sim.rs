//! Seeded simulation of the inventory chain and its realized costs.
//!
//! Within a period the stream is read in a fixed order: first the demand
//! variate (inverse CDF), then the delivery variate (`Y = 1` iff `u < q`).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::DemandModel;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::rng::{horizon_seed, StreamSpec};
use crate::solver::{solve_with, PeriodRule, PolicyTable, SolverOptions};

/// Ordering rule used to drive a path.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Optimal(PolicyTable),
    FixedBaseStock(f64),
    NeverOrder,
    /// Repeats the one-period optimum every period.
    Myopic(PeriodRule),
}

impl PolicySpec {
    /// Solves the single-period problem and orders up to its minimizer.
    pub fn myopic(params: &ModelParams, demand: &DemandModel, opts: &SolverOptions) -> Result<Self> {
        let one = solve_with(&params.with_horizon(1), demand, opts)?;
        Ok(PolicySpec::Myopic(one.policy.rule(1)))
    }

    /// Target for period `i` (1-based) of an `n`-period run.
    pub fn target(&self, i: usize, n: usize, x: f64) -> f64 {
        match self {
            PolicySpec::Optimal(table) => table.rule(n - i + 1).target(x),
            PolicySpec::FixedBaseStock(s) => x.max(*s),
            PolicySpec::NeverOrder => x,
            PolicySpec::Myopic(rule) => rule.target(x),
        }
    }

    pub fn name(&self) -> String {
        match self {
            PolicySpec::Optimal(_) => "optimal".into(),
            PolicySpec::FixedBaseStock(s) => format!("fixed_base_stock({s})"),
            PolicySpec::NeverOrder => "never_order".into(),
            PolicySpec::Myopic(_) => "myopic".into(),
        }
    }

    fn check_horizon(&self, n: usize) -> Result<()> {
        match self {
            PolicySpec::Optimal(table) if table.horizon() != n => Err(Error::invalid(
                "policy",
                format!("table covers {} periods, run has {n}", table.horizon()),
            )),
            _ => Ok(()),
        }
    }
}

/// Source of the per-period delivery flags and demands.
#[derive(Debug, Clone, PartialEq)]
pub enum Randomness {
    Stream(StreamSpec),
    Injected { delivered: Vec<u8>, demands: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    /// State at the start of the period.
    pub x: f64,
    pub target: f64,
    pub order: f64,
    /// 1 when the order is filled immediately.
    pub delivered: u8,
    pub demand: f64,
    pub cost: f64,
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub periods: Vec<PeriodRecord>,
    /// State after the last period.
    pub terminal: f64,
}

impl Trajectory {
    pub fn total_cost(&self) -> f64 {
        self.periods.last().map_or(0.0, |p| p.cumulative)
    }

    pub fn horizon(&self) -> usize {
        self.periods.len()
    }

    /// States `X_1, ..., X_{n+1}`.
    pub fn states(&self) -> impl Iterator<Item = f64> + '_ {
        self.periods.iter().map(|p| p.x).chain(std::iter::once(self.terminal))
    }

    /// CSV with header `period,X,target,order,Y,D,period_cost,cum_cost`; the
    /// last row carries only the terminal state.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("period,X,target,order,Y,D,period_cost,cum_cost\n");
        for (i, p) in self.periods.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                i + 1,
                p.x,
                p.target,
                p.order,
                p.delivered,
                p.demand,
                p.cost,
                p.cumulative
            ));
        }
        s.push_str(&format!("{},{},,,,,,\n", self.periods.len() + 1, self.terminal));
        s
    }
}

/// `c (y - x) + Y L(y - D) + (1 - Y) L(x - D)`
pub fn period_cost(params: &ModelParams, x: f64, y: f64, delivered: u8, demand: f64) -> f64 {
    let carry = if delivered == 1 {
        params.carrying(y - demand)
    } else {
        params.carrying(x - demand)
    };
    params.c * (y - x) + carry
}

pub fn simulate_path(
    policy: &PolicySpec,
    params: &ModelParams,
    demand: &DemandModel,
    randomness: &Randomness,
) -> Result<Trajectory> {
    let n = params.n;
    policy.check_horizon(n)?;
    match randomness {
        Randomness::Injected { delivered, demands } => {
            if delivered.len() != n || demands.len() != n {
                return Err(Error::invalid(
                    "injected",
                    format!(
                        "expected {n} flags and demands, got {} and {}",
                        delivered.len(),
                        demands.len()
                    ),
                ));
            }
            if let Some(y) = delivered.iter().find(|&&y| y > 1) {
                return Err(Error::invalid("injected", format!("delivery flag {y} not in {{0, 1}}")));
            }
            if let Some(d) = demands
                .iter()
                .find(|&&d| !(0.0..=demand.upper()).contains(&d))
            {
                return Err(Error::invalid(
                    "injected",
                    format!("demand {d} outside [0, {}]", demand.upper()),
                ));
            }
            Ok(run(policy, params, |i| (delivered[i], demands[i])))
        }
        Randomness::Stream(spec) => {
            let mut stream = spec.stream();
            Ok(run(policy, params, |_| {
                let d = demand.sample(stream.next_f64());
                let y = u8::from(stream.next_f64() < params.q);
                (y, d)
            }))
        }
    }
}

fn run(policy: &PolicySpec, params: &ModelParams, mut draw: impl FnMut(usize) -> (u8, f64)) -> Trajectory {
    let n = params.n;
    let mut x = params.x0;
    let mut cumulative = 0.0;
    let mut periods = Vec::with_capacity(n);
    for i in 0..n {
        let (delivered, d) = draw(i);
        let target = policy.target(i + 1, n, x);
        let cost = period_cost(params, x, target, delivered, d);
        cumulative += cost;
        periods.push(PeriodRecord {
            x,
            target,
            order: target - x,
            delivered,
            demand: d,
            cost,
            cumulative,
        });
        x = target - d;
    }
    Trajectory {
        periods,
        terminal: x,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Bessel-corrected; zero for a single observation.
    pub variance: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    /// Sums are accumulated in slice order.
    pub fn of(sample: &[f64]) -> Self {
        let count = sample.len();
        let mean = sample.iter().sum::<f64>() / count as f64;
        let variance = if count > 1 {
            sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64
        } else {
            0.0
        };
        Summary {
            count,
            mean,
            variance,
            min: sample.iter().copied().fold(f64::INFINITY, f64::min),
            max: sample.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn std_error(&self) -> f64 {
        (self.variance / self.count as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub master_seed: u64,
    /// Total cost `C_n` of each replication, in replication order.
    pub costs: Vec<f64>,
    pub summary: Summary,
    /// The first `retain` trajectories.
    pub trajectories: Vec<Trajectory>,
}

/// Runs `f` on the path of every replication `r < replications`; the
/// output is in replication order whatever the worker count.
pub fn simulate_map<T, F>(
    policy: &PolicySpec,
    params: &ModelParams,
    demand: &DemandModel,
    replications: usize,
    master_seed: u64,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, Trajectory) -> T + Sync,
{
    if replications == 0 {
        return Err(Error::invalid("replications", "need at least one replication"));
    }
    policy.check_horizon(params.n)?;
    (0..replications)
        .into_par_iter()
        .map(|r| {
            let spec = StreamSpec::new(master_seed, r as u64);
            simulate_path(policy, params, demand, &Randomness::Stream(spec)).map(|t| f(r, t))
        })
        .collect()
}

pub fn simulate_batch(
    policy: &PolicySpec,
    params: &ModelParams,
    demand: &DemandModel,
    replications: usize,
    master_seed: u64,
    retain: usize,
) -> Result<Batch> {
    let out = simulate_map(policy, params, demand, replications, master_seed, |r, t| {
        let cost = t.total_cost();
        (cost, (r < retain).then_some(t))
    })?;
    let mut costs = Vec::with_capacity(replications);
    let mut trajectories = Vec::new();
    for (cost, t) in out {
        costs.push(cost);
        trajectories.extend(t);
    }
    Ok(Batch {
        master_seed,
        summary: Summary::of(&costs),
        costs,
        trajectories,
    })
}

/// Single-column CSV with header `C_n`.
pub fn costs_to_csv(costs: &[f64]) -> String {
    let mut s = String::from("C_n\n");
    for c in costs {
        s.push_str(&format!("{c}\n"));
    }
    s
}

/// Policy kinds for a sweep; `Optimal` is re-solved at every horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyFamily {
    Optimal,
    FixedBaseStock { level: f64 },
    NeverOrder,
    Myopic,
}

impl PolicyFamily {
    pub fn instantiate(
        &self,
        params: &ModelParams,
        demand: &DemandModel,
        opts: &SolverOptions,
    ) -> Result<PolicySpec> {
        Ok(match *self {
            PolicyFamily::Optimal => PolicySpec::Optimal(solve_with(params, demand, opts)?.policy),
            PolicyFamily::FixedBaseStock { level } => PolicySpec::FixedBaseStock(level),
            PolicyFamily::NeverOrder => PolicySpec::NeverOrder,
            PolicyFamily::Myopic => PolicySpec::myopic(params, demand, opts)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSample {
    pub horizon: usize,
    pub batch: Batch,
}

/// One batch per horizon, each seeded with `mix64(master_seed ^ n)`.
pub fn horizon_sweep(
    family: PolicyFamily,
    params: &ModelParams,
    demand: &DemandModel,
    horizons: &[usize],
    replications: usize,
    master_seed: u64,
    opts: &SolverOptions,
) -> Result<Vec<HorizonSample>> {
    if horizons.is_empty() || horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("horizons", "must be non-empty and strictly increasing"));
    }
    horizons
        .iter()
        .map(|&n| {
            let at = |e: Error| Error::AtHorizon {
                horizon: n,
                source: Box::new(e),
            };
            let p = params.with_horizon(n);
            let policy = family.instantiate(&p, demand, opts).map_err(at)?;
            let batch = simulate_batch(&policy, &p, demand, replications, horizon_seed(master_seed, n), 0)
                .map_err(at)?;
            Ok(HorizonSample { horizon: n, batch })
        })
        .collect()
}
