//! Economic parameters, the carrying cost and the residual-range threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cost rates, delivery probability, horizon and starting inventory.
///
/// `c` is the ordering cost per unit, `c_h` the holding cost and `c_p` the
/// backlog penalty per unit and period. An order is filled immediately with
/// probability `q`, otherwise at the start of the next period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub c: f64,
    pub c_h: f64,
    pub c_p: f64,
    pub q: f64,
    pub n: usize,
    pub x0: f64,
    /// Set when `c >= c_p` was admitted for diagnostics-only runs.
    #[serde(default)]
    pub unchecked: bool,
}

impl ModelParams {
    /// Validated constructor. Requires `0 < c < c_p`, `c_h > 0`,
    /// `q` in `[0, 1]`, `n >= 1` and `x0 >= 0`.
    pub fn new(c: f64, c_h: f64, c_p: f64, q: f64, n: usize, x0: f64) -> Result<Self> {
        let p = ModelParams {
            c,
            c_h,
            c_p,
            q,
            n,
            x0,
            unchecked: false,
        };
        p.validate()?;
        Ok(p)
    }

    /// Like [`ModelParams::new`] but admits `c >= c_p`, so that the
    /// threshold and bound formulas can be exercised with `n0 > 0`.
    pub fn new_unchecked(c: f64, c_h: f64, c_p: f64, q: f64, n: usize, x0: f64) -> Result<Self> {
        let p = ModelParams {
            c,
            c_h,
            c_p,
            q,
            n,
            x0,
            unchecked: true,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_horizon(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    /// Returns every violated invariant, not just the first.
    pub fn violations(&self) -> Vec<Error> {
        let mut out = Vec::new();
        let finite = [
            ("c", self.c),
            ("c_h", self.c_h),
            ("c_p", self.c_p),
            ("q", self.q),
            ("x0", self.x0),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                out.push(Error::invalid(name, "must be finite"));
            }
        }
        if !out.is_empty() {
            return out;
        }
        if self.c <= 0.0 {
            out.push(Error::invalid("c", "ordering cost must be positive"));
        }
        if self.c_p <= 0.0 {
            out.push(Error::invalid("c_p", "backlog penalty must be positive"));
        }
        if !self.unchecked && self.c >= self.c_p {
            out.push(Error::invalid(
                "c",
                format!(
                    "ordering cost c = {} must be strictly smaller than the backlog penalty c_p = {}",
                    self.c, self.c_p
                ),
            ));
        }
        if self.c_h <= 0.0 {
            out.push(Error::invalid("c_h", "holding cost must be positive"));
        }
        if !(0.0..=1.0).contains(&self.q) {
            out.push(Error::invalid("q", "delivery probability must lie in [0, 1]"));
        }
        if self.n == 0 {
            out.push(Error::invalid("n", "horizon must be at least one period"));
        }
        if self.x0 < 0.0 {
            out.push(Error::invalid("x0", "initial inventory must be non-negative"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Carrying cost `L(z)` for these rates.
    pub fn carrying(&self, z: f64) -> f64 {
        if z >= 0.0 {
            self.c_h * z
        } else {
            -self.c_p * z
        }
    }
}

/// Holding cost `c_h z` for stock, penalty `-c_p z` for backlog.
pub fn carrying_cost(z: f64, params: &ModelParams) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::Domain(format!("carrying cost of non-finite level {z}")));
    }
    Ok(params.carrying(z))
}

/// Which set of naturals the threshold scan starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NaturalsConvention {
    /// `{0, 1, 2, ...}`
    FromZero,
    /// `{1, 2, 3, ...}`
    FromOne,
}

/// Least `j` with `c < c_p (q + j + 1)`, scanning from zero.
pub fn compute_n0(params: &ModelParams) -> usize {
    compute_n0_with(params, NaturalsConvention::FromZero)
}

pub fn compute_n0_with(params: &ModelParams, convention: NaturalsConvention) -> usize {
    let mut j = match convention {
        NaturalsConvention::FromZero => 0usize,
        NaturalsConvention::FromOne => 1,
    };
    // Terminates because c_p > 0 is validated.
    while params.c >= params.c_p * (params.q + j as f64 + 1.0) {
        j += 1;
    }
    j
}
