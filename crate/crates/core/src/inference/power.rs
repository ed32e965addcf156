use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{block_trace, block_triple_trace, BlockDiagMatrix};
use crate::stats::{normal_cdf, normal_quantile, normal_sf};

/// Per-row traces entering the drift of the statistic under local alternatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProxyTraces {
    /// `n^{-1} tr(P~)`
    pub proxy: f64,
    /// `n^{-1} tr(P~ P^{-1} P~)`
    pub sandwich: f64,
}

impl ProxyTraces {
    pub fn compute(proxy: &BlockDiagMatrix, precision: &BlockDiagMatrix) -> Result<Self> {
        let n = proxy.dim() as f64;
        let cov = precision.inverse()?;
        Ok(Self { proxy: block_trace(proxy) / n, sandwich: block_triple_trace(proxy, &cov, proxy)? / n })
    }

    /// `tr(P~)/n / sqrt(tr(P~ P^-1 P~)/n)`, bounded by `sqrt(tr(P)/n)`.
    pub fn efficiency(&self) -> f64 {
        self.proxy / self.sandwich.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerQuery {
    pub h: f64,
    pub alpha: f64,
    pub sigma_u: f64,
    pub sigma_eps: f64,
    pub traces: ProxyTraces,
}

impl PowerQuery {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        if !(self.traces.proxy > 0.0 && self.traces.sandwich > 0.0) {
            return Err(Error::InvalidInput("traces must be positive".into()));
        }
        if !(self.sigma_u > 0.0 && self.sigma_eps > 0.0) {
            return Err(Error::InvalidInput("scales must be positive".into()));
        }
        Ok(())
    }

    /// Linear coefficient of `D(h) = slope * h`.
    pub fn slope(&self) -> f64 {
        self.sigma_u / self.sigma_eps * self.traces.efficiency()
    }

    pub fn drift(&self) -> f64 {
        self.h * self.slope()
    }
}

/// Two-sided asymptotic power `1 - Phi(z - D) + Phi(-z - D)`, `z = z_{1-alpha/2}`.
pub fn power_curve(query: &PowerQuery) -> Result<f64> {
    query.validate()?;
    Ok(power_from_drift(query.drift(), query.alpha))
}

pub fn power_from_drift(d: f64, alpha: f64) -> f64 {
    let z = normal_quantile(1.0 - alpha / 2.0);
    normal_sf(z - d) + normal_cdf(-z - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HalfWidth {
    pub h_alpha: f64,
    /// `n^{-1/2} |h_alpha|`
    pub half_width: f64,
    /// `2 Phi(z - D(h_alpha)) - (1 - alpha)`
    pub residual: f64,
}

/// Solves `2 Phi(z_{1-alpha/2} - slope * h) = 1 - alpha` for `h > 0` by bisection.
pub fn ci_halfwidth(alpha: f64, slope: f64, n: usize) -> Result<HalfWidth> {
    if !(alpha > 0.0 && alpha < 1.0) || !(slope > 0.0 && slope.is_finite()) {
        return Err(Error::InvalidInput(format!("need alpha in (0,1) and positive slope, got {alpha}, {slope}")));
    }
    let z = normal_quantile(1.0 - alpha / 2.0);
    let f = |h: f64| 2.0 * normal_cdf(z - slope * h) - (1.0 - alpha);
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    // f is decreasing; bisect on the argument until the equation residual is tight
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
    }
    let h_alpha = 0.5 * (lo + hi);
    Ok(HalfWidth { h_alpha, half_width: h_alpha.abs() / (n as f64).sqrt(), residual: f(h_alpha) })
}

pub fn ci_halfwidth_for(query: &PowerQuery, n: usize) -> Result<HalfWidth> {
    query.validate()?;
    ci_halfwidth(query.alpha, query.slope(), n)
}
