use nalgebra::DVector;
use serde::Serialize;

use super::lasso::{default_lambda0, scaled_lasso, ScaledLassoResult};
use crate::error::{Error, Result};
use crate::model::{BlockDiagMatrix, GroupedDataset, ProxySpec};

const MIN_SCALE: f64 = 1e-10;

/// Bounds of the two constraint systems. `eta*` and `mu*` are strictly
/// positive; the correlation floors `etabar*` may be zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TuningParams {
    pub eta_gamma: f64,
    pub etabar_gamma: f64,
    pub mu_gamma: f64,
    pub eta_theta: f64,
    pub eta_theta_prime: f64,
    pub etabar_theta: f64,
    pub mu_theta: f64,
}

/// Multipliers applied on top of the default recipe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TuningScale {
    pub eta: f64,
    pub mu: f64,
    pub etabar: f64,
}

impl Default for TuningScale {
    fn default() -> Self {
        Self { eta: 1.0, mu: 1.0, etabar: 1.0 }
    }
}

impl TuningParams {
    pub fn validate(&self) -> Result<()> {
        let strict = [self.eta_gamma, self.mu_gamma, self.eta_theta, self.eta_theta_prime, self.mu_theta];
        let floors = [self.etabar_gamma, self.etabar_theta];
        if strict.iter().any(|v| !(v.is_finite() && *v > 0.0)) || floors.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput(format!("invalid tuning parameters {self:?}")));
        }
        Ok(())
    }

    pub fn scaled(&self, s: TuningScale) -> Self {
        Self {
            eta_gamma: self.eta_gamma * s.eta,
            etabar_gamma: self.etabar_gamma * s.etabar,
            mu_gamma: self.mu_gamma * s.mu,
            eta_theta: self.eta_theta * s.eta,
            eta_theta_prime: self.eta_theta_prime * s.eta,
            etabar_theta: self.etabar_theta * s.etabar,
            mu_theta: self.mu_theta * s.mu,
        }
    }

    /// One auto-relax round: widen the sup-norm bounds by 1.5, halve the floors.
    pub fn relaxed(&self) -> Self {
        self.scaled(TuningScale { eta: 1.5, mu: 1.5, etabar: 0.5 })
    }
}

/// Bounds for one side (gamma or theta) from a residual scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideRecipe {
    pub eta: f64,
    pub mu: f64,
    pub etabar: f64,
}

/// `eta = sqrt(0.5 log(p) / n) sigma`, `mu = 4 sqrt(log n) sigma`,
/// `etabar = 0.05 * corr` where `corr` is the weighted response energy per row.
pub fn side_recipe(n: usize, p: usize, sigma: f64, corr: f64) -> SideRecipe {
    let (nf, pf) = (n as f64, p.max(2) as f64);
    SideRecipe { eta: (0.5 * pf.ln() / nf).sqrt() * sigma, mu: 4.0 * nf.ln().sqrt() * sigma, etabar: 0.05 * corr }
}

#[derive(Debug, Clone)]
pub struct DefaultTuning {
    pub params: TuningParams,
    pub gamma_lasso: ScaledLassoResult,
    pub theta_lasso: ScaledLassoResult,
    /// Proxy block implied by the initial variance split.
    pub proxy: ProxySpec,
    /// `||V - X gamma_init||^2 / max(1, n - df)`.
    pub sigma_eps_sq_init: f64,
    /// Set when the lasso used at least `n` coefficients.
    pub df_overflow: bool,
}

/// Initial variance split: `sigma^2[-1] = RSS / max(1, n - df)`,
/// `psi = (0.4/q) sigma^2[-1] I`, `sigma^2_init = 0.6 sigma^2[-1]`, so
/// `M = psi / sigma^2_init = 2/(3q) I` whenever `sigma^2[-1] > 0`.
pub fn initial_variance_split(rss: f64, n: usize, df: usize, q: usize) -> (f64, ProxySpec) {
    let denom = n.saturating_sub(df).max(1) as f64;
    let s0 = rss / denom;
    let psi = 0.4 / q as f64 * s0;
    let sigma_init = 0.6 * s0;
    let c = if sigma_init > 0.0 { psi / sigma_init } else { 2.0 / (3.0 * q as f64) };
    (s0, ProxySpec::scaled_identity(c, q))
}

/// Default bounds for a standardised dataset, pseudo-response `V = y - Z beta0`
/// and proxy precision `proxy`.
pub fn default_tuning(dataset: &GroupedDataset, proxy: &BlockDiagMatrix, beta0: f64) -> Result<DefaultTuning> {
    let (n, p) = (dataset.n(), dataset.p());
    if proxy.dim() != n {
        return Err(Error::LayoutMismatch);
    }
    let nf = n as f64;
    let lambda0 = default_lambda0(n, p);
    let x = dataset.x();
    let v = dataset.pseudo_response(beta0);

    let gamma_lasso = scaled_lasso(x, &v, lambda0)?;
    let resid: DVector<f64> = &v - x * &gamma_lasso.gamma_init;
    let sigma = proxy.mul_vec(&resid).norm() / nf.sqrt();
    if !(sigma >= MIN_SCALE) {
        return Err(Error::DegenerateScale(sigma));
    }
    let g = side_recipe(n, p, sigma, proxy.quad_form(&v) / nf);

    let z = dataset.z();
    let theta_lasso = scaled_lasso(x, z, lambda0)?;
    let u: DVector<f64> = z - x * &theta_lasso.gamma_init;
    let sigma_u = u.norm() / nf.sqrt();
    if !(sigma_u >= MIN_SCALE) {
        return Err(Error::DegenerateScale(sigma_u));
    }
    let t = side_recipe(n, p, sigma_u, z.norm_squared() / nf);

    let (s0, proxy_spec) = initial_variance_split(resid.norm_squared(), n, gamma_lasso.df, dataset.q());
    let params = TuningParams {
        eta_gamma: g.eta,
        etabar_gamma: g.etabar,
        mu_gamma: g.mu,
        eta_theta: t.eta,
        eta_theta_prime: t.eta,
        etabar_theta: t.etabar,
        mu_theta: t.mu,
    };
    params.validate()?;
    Ok(DefaultTuning {
        params,
        df_overflow: gamma_lasso.df >= n,
        gamma_lasso,
        theta_lasso,
        proxy: proxy_spec,
        sigma_eps_sq_init: s0,
    })
}
