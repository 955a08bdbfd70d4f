//! Distributional checks on cost samples: normality, variance growth,
//! martingale concentration and first-order stochastic dominance.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Standard normal CDF, `erfc(-z / sqrt 2) / 2`.
///
/// `libm::erfc` is the piecewise rational approximation from FreeBSD's msun,
/// accurate to about one ulp, so KS statistics are reproducible well below 1e-12.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Centered, Bessel-scaled copy of the sample.
pub fn standardize(sample: &[f64]) -> Result<Vec<f64>> {
    if sample.len() < 2 {
        return Err(Error::invalid("sample", "need at least two observations"));
    }
    let m = mean(sample);
    let var = sample.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (sample.len() - 1) as f64;
    if !(var > 0.0) {
        return Err(Error::invalid("sample", "sample variance is zero"));
    }
    let sd = var.sqrt();
    Ok(sample.iter().map(|v| (v - m) / sd).collect())
}

/// Kolmogorov-Smirnov distance between the empirical CDF and `N(0, 1)`.
pub fn ks_normal(sample: &[f64]) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let r = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let f = normal_cdf(z);
            ((i + 1) as f64 / r - f).max(f - i as f64 / r)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// KS distance of the standardized sample to `N(0, 1)`.
    pub ks: f64,
    /// `ks <= 0.02`, `|skewness| <= 0.1` and `|excess_kurtosis| <= 0.25`.
    pub pass: bool,
}

pub const KS_LIMIT: f64 = 0.02;
pub const SKEWNESS_LIMIT: f64 = 0.1;
pub const EXCESS_KURTOSIS_LIMIT: f64 = 0.25;

pub fn clt_test(sample: &[f64]) -> Result<CltReport> {
    let z = standardize(sample)?;
    let m = mean(sample);
    let r = sample.len() as f64;
    let central = |p: i32| sample.iter().map(|v| (v - m).powi(p)).sum::<f64>() / r;
    let (m2, m3, m4) = (central(2), central(3), central(4));
    let skewness = m3 / m2.powf(1.5);
    let excess_kurtosis = m4 / (m2 * m2) - 3.0;
    let ks = ks_normal(&z);
    Ok(CltReport {
        count: sample.len(),
        mean: m,
        variance: m2 * r / (r - 1.0),
        skewness,
        excess_kurtosis,
        ks,
        pass: ks <= KS_LIMIT
            && skewness.abs() <= SKEWNESS_LIMIT
            && excess_kurtosis.abs() <= EXCESS_KURTOSIS_LIMIT,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariancePoint {
    pub n: usize,
    pub variance: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Smallest `variance / n` over the horizons.
    pub beta_hat: f64,
    pub points: Vec<VariancePoint>,
    /// `slope > 0` and `R^2 >= 0.95`.
    pub pass: bool,
}

/// Least-squares line through (horizon, sample variance).
pub fn variance_growth(samples: &[(usize, &[f64])]) -> Result<VarianceFit> {
    if samples.len() < 3 {
        return Err(Error::invalid(
            "horizons",
            format!("variance fit needs at least 3 horizons, got {}", samples.len()),
        ));
    }
    let points: Vec<VariancePoint> = samples
        .iter()
        .map(|&(n, s)| {
            let m = mean(s);
            let var = s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (s.len().max(2) - 1) as f64;
            VariancePoint {
                n,
                variance: var,
                count: s.len(),
            }
        })
        .collect();
    let k = points.len() as f64;
    let xm = points.iter().map(|p| p.n as f64).sum::<f64>() / k;
    let ym = points.iter().map(|p| p.variance).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.n as f64 - xm).powi(2)).sum();
    let sxy: f64 = points
        .iter()
        .map(|p| (p.n as f64 - xm) * (p.variance - ym))
        .sum();
    let syy: f64 = points.iter().map(|p| (p.variance - ym).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = ym - slope * xm;
    let r_squared = if syy > 0.0 {
        let ss_res: f64 = points
            .iter()
            .map(|p| (p.variance - intercept - slope * p.n as f64).powi(2))
            .sum();
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let beta_hat = points
        .iter()
        .map(|p| p.variance / p.n as f64)
        .fold(f64::INFINITY, f64::min);
    Ok(VarianceFit {
        slope,
        intercept,
        r_squared,
        beta_hat,
        pass: slope > 0.0 && r_squared >= 0.95,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub lambda: f64,
    pub empirical: f64,
    pub bound: f64,
    /// Three binomial standard errors at the bound.
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingTable {
    pub n: usize,
    pub b: f64,
    pub rows: Vec<TailRow>,
    pub pass: bool,
}

/// Empirical `P(|C - mean| >= lambda)` against `2 exp(-lambda^2 / (2 n b^2))`.
pub fn hoeffding_check(costs: &[f64], b: f64, n: usize, lambdas: &[f64]) -> Result<HoeffdingTable> {
    if !(b > 0.0) {
        return Err(Error::invalid("b", "difference bound must be positive"));
    }
    if costs.is_empty() {
        return Err(Error::invalid("sample", "empty cost sample"));
    }
    let m = mean(costs);
    let r = costs.len() as f64;
    let rows: Vec<TailRow> = lambdas
        .iter()
        .map(|&lambda| {
            let hits = costs.iter().filter(|c| (*c - m).abs() >= lambda).count();
            let empirical = hits as f64 / r;
            let bound = 2.0 * (-lambda * lambda / (2.0 * n as f64 * b * b)).exp();
            let p = bound.min(1.0);
            let slack = 3.0 * (p * (1.0 - p) / r).sqrt();
            TailRow {
                lambda,
                empirical,
                bound,
                slack,
                pass: empirical <= bound + slack,
            }
        })
        .collect();
    Ok(HoeffdingTable {
        n,
        b,
        pass: rows.iter().all(|r| r.pass),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Consistent,
    Violated,
    /// The two confidence bands together span the whole unit interval.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    /// `max_t (F_B(t) - F_A(t))`, floored at zero.
    pub violation: f64,
    /// Where the violation is attained, when positive.
    pub location: Option<f64>,
    pub band_a: f64,
    pub band_b: f64,
    pub verdict: Verdict,
}

/// DKW half-width at 95% for a sample of size `r`.
pub fn dkw_band(r: usize) -> f64 {
    ((2.0f64 / 0.05).ln() / (2.0 * r as f64)).sqrt()
}

/// Evidence on whether `A <=_st B`, i.e. `F_A >= F_B` everywhere.
pub fn stochastic_order_compare(a: &[f64], b: &[f64]) -> Result<DominanceReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("sample", "dominance needs two non-empty samples"));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let (ra, rb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut violation = 0.0;
    let mut location = None;
    while i < sa.len() || j < sb.len() {
        let t = match (sa.get(i), sb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < sa.len() && sa[i] <= t {
            i += 1;
        }
        while j < sb.len() && sb[j] <= t {
            j += 1;
        }
        let gap = j as f64 / rb - i as f64 / ra;
        if gap > violation {
            violation = gap;
            location = Some(t);
        }
    }
    let (band_a, band_b) = (dkw_band(sa.len()), dkw_band(sb.len()));
    let verdict = if band_a + band_b >= 1.0 {
        Verdict::Inconclusive
    } else if violation <= band_a + band_b {
        Verdict::Consistent
    } else {
        Verdict::Violated
    };
    Ok(DominanceReport {
        violation,
        location,
        band_a,
        band_b,
        verdict,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

/// Equal-width bins spanning the sample range.
pub fn histogram(sample: &[f64], bins: usize) -> Vec<HistogramBin> {
    if sample.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = sample.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in sample {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            left: lo + i as f64 * width,
            right: lo + (i + 1) as f64 * width,
            count,
        })
        .collect()
}

/// `(Phi^{-1}((i - 1/2) / R), z_(i))` pairs of the sorted sample.
pub fn qq_pairs(standardized: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = standardized.to_vec();
    sorted.sort_by(f64::total_cmp);
    let r = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, z)| (normal_quantile((i as f64 + 0.5) / r), z))
        .collect()
}
