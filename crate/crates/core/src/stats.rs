//! Chi-squared novelty threshold and streaming per-dimension moments.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;
use thiserror::Error;

/// Default lower bound applied to per-dimension standard deviations.
pub const DEFAULT_STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("degrees of freedom must be at least 1")]
    ZeroDegreesOfFreedom,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// CDF of the chi-squared distribution with `dof` degrees of freedom.
pub fn chi2_cdf(dof: u32, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        gamma_lr(0.5 * dof as f64, 0.5 * x)
    }
}

fn chi2_ln_pdf(dof: u32, x: f64) -> f64 {
    let k = 0.5 * dof as f64;
    (k - 1.0) * x.ln() - 0.5 * x - k * std::f64::consts::LN_2 - statrs::function::gamma::ln_gamma(k)
}

/// Quantile of the chi-squared distribution: the `x` with `CDF(x) = p`.
///
/// Inverts the regularized lower incomplete gamma function with Newton steps
/// kept inside a shrinking bisection bracket. `p = 1` maps to `+inf`.
pub fn chi2_quantile(dof: u32, p: f64) -> Result<f64, StatsError> {
    if dof == 0 {
        return Err(StatsError::ZeroDegreesOfFreedom);
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(StatsError::ProbabilityOutOfRange(p));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(f64::INFINITY);
    }

    let mut lo = 0.0;
    let mut hi = (dof as f64).max(1.0);
    while chi2_cdf(dof, hi) < p {
        lo = hi;
        hi *= 2.0;
    }

    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = chi2_cdf(dof, x) - p;
        if f == 0.0 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let step = f / chi2_ln_pdf(dof, x).exp();
        let mut next = x - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.max(f64::MIN_POSITIVE) || hi - lo <= 1e-15 * hi {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Single-pass per-dimension mean and sum of squared deviations (Welford).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningStats {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn from_rows<'a>(dim: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self, StatsError> {
        let mut s = Self::new(dim);
        for r in rows {
            s.push(r)?;
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn m2(&self) -> &[f64] {
        &self.m2
    }

    pub fn push(&mut self, x: &[f64]) -> Result<(), StatsError> {
        if x.len() != self.dim() {
            return Err(StatsError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
        Ok(())
    }

    /// Sample variance (`M2 / (n - 1)`); zero for fewer than two points.
    pub fn sample_variance(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.dim()];
        }
        let denom = (self.count - 1) as f64;
        self.m2.iter().map(|s| s / denom).collect()
    }

    /// Per-dimension sample standard deviation, clamped below at `floor`.
    pub fn std_vector(&self, floor: f64) -> Vec<f64> {
        self.sample_variance()
            .into_iter()
            .map(|v| v.max(0.0).sqrt().max(floor))
            .collect()
    }
}
