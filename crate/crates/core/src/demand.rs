//! Bounded-support demand densities discretized on an equally spaced grid.
//!
//! A density is stored as its values at `M + 1` abscissae on `[0, J]` and is
//! read back as the piecewise-linear interpolant of those values, zero off
//! `[0, J]`. Every integral uses the composite trapezoid rule on that grid,
//! so the stored values are normalized to unit trapezoid mass and the CDF is
//! the running trapezoid sum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_POINTS: usize = 64;
pub const DEFAULT_POINTS_PER_UNIT: usize = 512;

/// Tolerance below which a density value counts as vanishing.
pub const DENSITY_TOL: f64 = 1e-12;

/// Family and shape of a demand density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DemandSpec {
    Uniform { a: f64, b: f64 },
    Triangular { a: f64, mode: f64, b: f64 },
    /// Density proportional to `((t - a)(b - t))^power` on `[a, b]`.
    Bump { a: f64, b: f64, power: f64 },
    Mixture { components: Vec<MixtureComponent> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    #[serde(flatten)]
    pub density: DemandSpec,
}

impl DemandSpec {
    pub fn uniform(a: f64, b: f64) -> Self {
        DemandSpec::Uniform { a, b }
    }

    pub fn triangular(a: f64, mode: f64, b: f64) -> Self {
        DemandSpec::Triangular { a, mode, b }
    }

    pub fn bump(a: f64, b: f64, power: f64) -> Self {
        DemandSpec::Bump { a, b, power }
    }

    pub fn mixture(parts: impl IntoIterator<Item = (f64, DemandSpec)>) -> Self {
        DemandSpec::Mixture {
            components: parts
                .into_iter()
                .map(|(weight, density)| MixtureComponent { weight, density })
                .collect(),
        }
    }

    /// Least upper bound of the support.
    pub fn upper(&self) -> f64 {
        match self {
            DemandSpec::Uniform { b, .. }
            | DemandSpec::Triangular { b, .. }
            | DemandSpec::Bump { b, .. } => *b,
            DemandSpec::Mixture { components } => components
                .iter()
                .map(|c| c.density.upper())
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Every problem with the descriptor, with the offending field named.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let support = |a: f64, b: f64, out: &mut Vec<String>| {
            if !(a.is_finite() && b.is_finite()) {
                out.push("support endpoints must be finite".into());
            } else if !(0.0 <= a && a < b) {
                out.push(format!("support [{a}, {b}] must satisfy 0 <= a < b"));
            }
        };
        match self {
            DemandSpec::Uniform { a, b } => support(*a, *b, &mut out),
            DemandSpec::Triangular { a, mode, b } => {
                support(*a, *b, &mut out);
                if !(a <= mode && mode <= b) {
                    out.push(format!("mode {mode} must lie in [{a}, {b}]"));
                }
            }
            DemandSpec::Bump { a, b, power } => {
                support(*a, *b, &mut out);
                if !(power.is_finite() && *power > 0.0) {
                    out.push(format!("power {power} must be positive"));
                }
            }
            DemandSpec::Mixture { components } => {
                if components.is_empty() {
                    out.push("mixture needs at least one component".into());
                }
                for (i, c) in components.iter().enumerate() {
                    if !(c.weight.is_finite() && c.weight > 0.0) {
                        out.push(format!("components[{i}].weight {} must be positive", c.weight));
                    }
                    for v in c.density.violations() {
                        out.push(format!("components[{i}]: {v}"));
                    }
                }
            }
        }
        out
    }

    /// Unnormalized density at `t`.
    fn raw(&self, t: f64) -> f64 {
        match *self {
            DemandSpec::Uniform { a, b } => {
                if (a..=b).contains(&t) {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            DemandSpec::Triangular { a, mode, b } => {
                if !(a..=b).contains(&t) {
                    0.0
                } else if t < mode {
                    2.0 * (t - a) / ((b - a) * (mode - a))
                } else if t > mode {
                    2.0 * (b - t) / ((b - a) * (b - mode))
                } else {
                    2.0 / (b - a)
                }
            }
            DemandSpec::Bump { a, b, power } => {
                if (a..=b).contains(&t) {
                    ((t - a) * (b - t)).powf(power)
                } else {
                    0.0
                }
            }
            DemandSpec::Mixture { ref components } => {
                let total: f64 = components.iter().map(|c| c.weight).sum();
                components
                    .iter()
                    .map(|c| c.weight / total * c.density.raw(t))
                    .sum()
            }
        }
    }
}

/// A discretized demand density with its CDF and quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandModel {
    spec: DemandSpec,
    upper: f64,
    step: f64,
    density: Vec<f64>,
    cdf: Vec<f64>,
    mean: f64,
    /// Abscissa and trapezoid weight `w_j * psi_j` of every node with positive mass.
    nodes: Vec<(f64, f64)>,
}

/// Builds the discretized density for `spec` on `points + 1` abscissae.
pub fn make_demand(spec: &DemandSpec, points: usize) -> Result<DemandModel> {
    DemandModel::new(spec.clone(), points)
}

impl DemandModel {
    pub fn new(spec: DemandSpec, points: usize) -> Result<Self> {
        if points < MIN_POINTS {
            return Err(Error::Demand(format!(
                "grid needs at least {MIN_POINTS} intervals, got {points}"
            )));
        }
        Self::coarse(spec, points)
    }

    /// Like [`DemandModel::new`] but accepts any grid with at least one
    /// interval; for small instances that are checked by enumeration.
    pub fn coarse(spec: DemandSpec, points: usize) -> Result<Self> {
        let problems = spec.violations();
        if !problems.is_empty() {
            return Err(Error::Demand(problems.join("; ")));
        }
        if points == 0 {
            return Err(Error::Demand("grid needs at least one interval".into()));
        }
        let upper = spec.upper();
        let step = upper / points as f64;
        let mut density: Vec<f64> = (0..=points).map(|j| spec.raw(j as f64 * step)).collect();
        if let Some(bad) = density.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Demand(format!("density value {bad} is negative or not finite")));
        }
        let mass = trapezoid(&density, step);
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::Demand(format!("density has trapezoid mass {mass}")));
        }
        for v in &mut density {
            *v /= mass;
        }

        let mut cdf = Vec::with_capacity(density.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in density.windows(2) {
            acc += 0.5 * step * (w[0] + w[1]);
            cdf.push(acc.min(1.0));
        }
        *cdf.last_mut().expect("at least two abscissae") = 1.0;

        let nodes: Vec<(f64, f64)> = density
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(j, v)| {
                let end = j == 0 || j == points;
                let w = if end { 0.5 * step } else { step };
                (j as f64 * step, w * v)
            })
            .collect();
        let mean = nodes.iter().map(|(t, w)| t * w).sum();

        Ok(DemandModel {
            spec,
            upper,
            step,
            density,
            cdf,
            mean,
            nodes,
        })
    }

    pub fn spec(&self) -> &DemandSpec {
        &self.spec
    }

    /// Support bound `J`.
    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of grid intervals `M`.
    pub fn points(&self) -> usize {
        self.density.len() - 1
    }

    pub fn abscissa(&self, j: usize) -> f64 {
        j as f64 * self.step
    }

    pub fn density_values(&self) -> &[f64] {
        &self.density
    }

    pub fn cdf_values(&self) -> &[f64] {
        &self.cdf
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Quadrature nodes `(t_j, weight_j)`; weights sum to one.
    pub fn nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }

    /// Trapezoid expectation of `f(D)`.
    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().map(|&(t, w)| w * f(t)).sum()
    }

    /// Piecewise-linear density at `w`, zero off `[0, J]`.
    pub fn density(&self, w: f64) -> f64 {
        if !(0.0..=self.upper).contains(&w) {
            return 0.0;
        }
        let pos = w / self.step;
        let j = (pos.floor() as usize).min(self.points() - 1);
        let frac = pos - j as f64;
        let (a, b) = (self.density[j], self.density[j + 1]);
        a + frac * (b - a)
    }

    /// Linear interpolation of the CDF grid.
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= self.upper {
            return 1.0;
        }
        let pos = t / self.step;
        let j = (pos.floor() as usize).min(self.points() - 1);
        let frac = pos - j as f64;
        let (a, b) = (self.cdf[j], self.cdf[j + 1]);
        a + frac * (b - a)
    }

    /// Smallest `t` with `cdf(t) >= p`, reading the CDF as piecewise linear.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("quantile level {p} outside [0, 1]")));
        }
        Ok(self.quantile_unchecked(p))
    }

    pub(crate) fn quantile_unchecked(&self, p: f64) -> f64 {
        let j = self.cdf.partition_point(|&c| c < p);
        if j == 0 {
            return 0.0;
        }
        if j > self.points() {
            return self.upper;
        }
        let (lo, hi) = (self.cdf[j - 1], self.cdf[j]);
        let frac = (p - lo) / (hi - lo);
        self.abscissa(j - 1) + frac * self.step
    }

    /// Inverse-CDF draw from a uniform variate in `[0, 1)`.
    pub fn sample(&self, u: f64) -> f64 {
        self.quantile_unchecked(u.clamp(0.0, 1.0))
    }
}

fn trapezoid(values: &[f64], step: f64) -> f64 {
    let n = values.len();
    let inner: f64 = values[1..n - 1].iter().sum();
    step * (inner + 0.5 * (values[0] + values[n - 1]))
}

/// Outcome of the soft-unimodality test for one shift.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftCheck {
    pub eps: f64,
    pub pass: bool,
    /// First abscissa from which `psi(w) - psi(w + eps) >= 0` throughout.
    pub witness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoftUnimodalityReport {
    pub shifts: Vec<ShiftCheck>,
    pub pass: bool,
    pub warnings: Vec<String>,
}

/// Checks that `psi(w) - psi(w + eps)` changes sign at most once, from
/// negative to positive, on `[-J, 2J]`, ignoring abscissae where both
/// densities vanish.
pub fn check_soft_unimodality(demand: &DemandModel, eps_list: &[f64]) -> SoftUnimodalityReport {
    let mut warnings = Vec::new();
    if eps_list.is_empty() {
        warnings.push("no shifts given; soft unimodality holds vacuously".to_string());
    }
    let m = demand.points();
    let shifts: Vec<ShiftCheck> = eps_list
        .iter()
        .map(|&eps| {
            if !(eps >= 0.0 && eps.is_finite()) {
                warnings.push(format!("shift {eps} is not a non-negative number"));
                return ShiftCheck {
                    eps,
                    pass: false,
                    witness: None,
                };
            }
            let mut last_negative: Option<usize> = None;
            let mut seen_positive = false;
            let mut pass = true;
            let mut retained = Vec::new();
            for j in 0..=(3 * m) {
                let w = -demand.upper() + j as f64 * demand.step();
                let (here, shifted) = (demand.density(w), demand.density(w + eps));
                if here < DENSITY_TOL && shifted < DENSITY_TOL {
                    continue;
                }
                let g = here - shifted;
                if g < -DENSITY_TOL {
                    if seen_positive {
                        pass = false;
                    }
                    last_negative = Some(retained.len());
                } else if g > DENSITY_TOL {
                    seen_positive = true;
                }
                retained.push(w);
            }
            let witness = if !pass {
                None
            } else {
                match last_negative {
                    None => retained.first().copied(),
                    Some(i) => retained.get(i + 1).copied(),
                }
            };
            ShiftCheck { eps, pass, witness }
        })
        .collect();
    let pass = shifts.iter().all(|s| s.pass);
    SoftUnimodalityReport {
        shifts,
        pass,
        warnings,
    }
}
