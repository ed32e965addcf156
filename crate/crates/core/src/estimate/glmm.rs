use nalgebra::DVector;
use serde::Serialize;

use super::dantzig::{
    estimate_theta_weighted, evaluate_families, gamma_families, solve_l1, EstimateResult, ConstraintFamily,
};
use super::tuning::TuningParams;
use crate::error::{Error, Result};
use crate::model::{BlockDiagMatrix, GroupedDataset};

const STEP_TOL: f64 = 1e-6;
const MAX_STEPS: usize = 25;
const DIVERGENCE_FACTOR: f64 = 10.0;

/// Exponential family with canonical link: `b'` is the mean, `b''` the
/// variance function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExponentialFamily {
    Gaussian,
    BernoulliLogit,
    PoissonLog,
}

impl ExponentialFamily {
    pub fn cumulant(&self, eta: f64) -> f64 {
        match self {
            Self::Gaussian => 0.5 * eta * eta,
            Self::BernoulliLogit => eta.max(0.0) + (-eta.abs()).exp().ln_1p(),
            Self::PoissonLog => eta.exp(),
        }
    }

    pub fn mean(&self, eta: f64) -> f64 {
        match self {
            Self::Gaussian => eta,
            Self::BernoulliLogit => {
                if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                }
            }
            Self::PoissonLog => eta.exp(),
        }
    }

    pub fn variance(&self, eta: f64) -> f64 {
        match self {
            Self::Gaussian => 1.0,
            Self::BernoulliLogit => {
                let m = self.mean(eta);
                m * (1.0 - m)
            }
            Self::PoissonLog => eta.exp(),
        }
    }

    pub fn validate_response(&self, y: &DVector<f64>) -> Result<()> {
        let ok = match self {
            Self::Gaussian => y.iter().all(|v| v.is_finite()),
            Self::BernoulliLogit => y.iter().all(|v| *v == 0.0 || *v == 1.0),
            Self::PoissonLog => y.iter().all(|v| *v >= 0.0 && v.fract() == 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("response is not valid for the {self:?} family")))
        }
    }

    pub fn mean_vec(&self, eta: &DVector<f64>) -> DVector<f64> {
        eta.map(|e| self.mean(e))
    }

    pub fn variance_vec(&self, eta: &DVector<f64>) -> DVector<f64> {
        eta.map(|e| self.variance(e))
    }
}

fn linear_predictor(dataset: &GroupedDataset, gamma: &DVector<f64>, beta0: f64) -> DVector<f64> {
    dataset.x() * gamma + dataset.z() * beta0
}

/// Exact (non-linearised) nuisance constraints at `gamma`.
pub fn glmm_gamma_families(
    dataset: &GroupedDataset,
    gamma: &DVector<f64>,
    beta0: f64,
    proxy: &BlockDiagMatrix,
    family: ExponentialFamily,
    tuning: &TuningParams,
) -> Vec<ConstraintFamily> {
    // with a zero design the families are constants: offset = Y - b'(eta)
    let x = dataset.x();
    let eta = linear_predictor(dataset, gamma, beta0);
    let r = dataset.y() - family.mean_vec(&eta);
    let zero = x * 0.0;
    gamma_families(x, &zero, &r, dataset.y(), proxy, tuning.eta_gamma, tuning.etabar_gamma, tuning.mu_gamma)
}

/// Nuisance estimate for a GLMM by successive linearisation of the mean
/// around the current iterate, one L1 linear program per step.
///
/// Stops when the L1 step falls below `1e-6` or after 25 steps (then
/// `converged = false`). A run whose iterates grow beyond 10x the first
/// iterate's L1 norm is abandoned with `NotConverged`. Reported slacks are
/// for the exact constraints at the returned coefficients.
pub fn estimate_gamma_glmm(
    dataset: &GroupedDataset,
    beta0: f64,
    proxy: &BlockDiagMatrix,
    family: ExponentialFamily,
    tuning: &TuningParams,
) -> Result<EstimateResult> {
    family.validate_response(dataset.y())?;
    tuning.validate()?;
    let x = dataset.x();
    let y = dataset.y();
    let d = x.ncols();
    let mut gamma = DVector::zeros(d);
    let mut first_norm = None;
    let mut iterations = 0;
    let mut last: Option<EstimateResult> = None;
    let mut converged = false;
    for step in 1..=MAX_STEPS {
        let eta = linear_predictor(dataset, &gamma, beta0);
        let mu = family.mean_vec(&eta);
        let var = family.variance_vec(&eta);
        let mut design = x.clone();
        for (i, mut row) in design.row_iter_mut().enumerate() {
            row *= var[i];
        }
        let r0 = y - &mu + &design * &gamma;
        let fams = gamma_families(x, &design, &r0, y, proxy, tuning.eta_gamma, tuning.etabar_gamma, tuning.mu_gamma);
        let res = solve_l1(&fams, d)?;
        iterations += res.lp_iterations;
        let delta: f64 = (&res.coef - &gamma).iter().map(|v| v.abs()).sum();
        let base = *first_norm.get_or_insert(res.l1_norm.max(1.0));
        if res.l1_norm > DIVERGENCE_FACTOR * base {
            return Err(Error::NotConverged { iterations: step });
        }
        gamma = res.coef.clone();
        last = Some(res);
        if delta < STEP_TOL {
            converged = true;
            break;
        }
    }
    let mut out = last.expect("at least one linearised step");
    let exact = glmm_gamma_families(dataset, &gamma, beta0, proxy, family, tuning);
    out.constraint_slacks = evaluate_families(&exact, &DVector::zeros(d));
    out.feasible = out.min_slack() >= -1e-8;
    out.lp_iterations = iterations;
    out.converged = converged;
    Ok(out)
}

/// Feature regression for a GLMM with observation weights
/// `b''(X gamma_hat + Z beta0)`, computed once from `gamma_hat`.
pub fn estimate_theta_glmm(
    dataset: &GroupedDataset,
    gamma_hat: &DVector<f64>,
    beta0: f64,
    proxy: &BlockDiagMatrix,
    family: ExponentialFamily,
    tuning: &TuningParams,
) -> Result<EstimateResult> {
    if gamma_hat.len() != dataset.x().ncols() {
        return Err(Error::InvalidInput("gamma_hat has wrong length".into()));
    }
    let w = family.variance_vec(&linear_predictor(dataset, gamma_hat, beta0));
    if matches!(family, ExponentialFamily::Gaussian) {
        return estimate_theta_weighted(dataset, proxy, None, tuning);
    }
    estimate_theta_weighted(dataset, proxy, Some(&w), tuning)
}
