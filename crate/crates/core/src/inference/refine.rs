use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::test::{assemble, statistic_from_estimates, TestResult};
use crate::error::{Error, Result};
use crate::estimate::{default_tuning, estimate_gamma, estimate_theta, with_auto_relax};
use crate::inference::test::{prepare_problem, test_statistic, PipelineConfig};
use crate::model::{group_ranges, true_precision, BlockDiagMatrix, GroupedDataset, RandomEffectSpec};

const LOG_TOL: f64 = 1e-4;
const MAX_EVALS: usize = 200;
const HALF_BRACKET: f64 = 3.0;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Serialize)]
pub struct RefinedProxy {
    #[serde(skip)]
    pub precision: BlockDiagMatrix,
    /// Restricted-likelihood noise variance.
    pub sigma_eps_sq: f64,
    /// Diagonal of the random-effect covariance.
    pub psi: Vec<f64>,
    /// `n sigma_hat^2 / tr(P^)` with `sigma_hat^2 = n^{-1} |P^ (V - X gamma)|^2`.
    pub sigma_eps_hat_sq: f64,
    pub objective_init: f64,
    pub objective: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Negative restricted log-likelihood of `r` under
/// `Sigma = sigma^2 I + W diag(psi) W'`, with the fixed-effect correction
/// `log det(X' Sigma^{-1} X)` over the columns of `x`.
pub fn restricted_objective(
    w: &DMatrix<f64>,
    groups: &[usize],
    x: &DMatrix<f64>,
    r: &DVector<f64>,
    sigma_sq: f64,
    psi: &[f64],
) -> f64 {
    let k = x.ncols();
    let psi_m = DMatrix::from_diagonal(&DVector::from_column_slice(psi));
    let mut quad = 0.0;
    let mut logdet = 0.0;
    let mut info = DMatrix::zeros(k, k);
    for (start, len) in group_ranges(groups) {
        let wi = w.rows(start, len);
        let sigma_i = DMatrix::identity(len, len) * sigma_sq + wi * &psi_m * wi.transpose();
        let Some(chol) = sigma_i.cholesky() else {
            return f64::INFINITY;
        };
        let ri = r.rows(start, len).into_owned();
        quad += ri.dot(&chol.solve(&ri));
        logdet += 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if k > 0 {
            let xi = x.rows(start, len).into_owned();
            info += xi.transpose() * chol.solve(&xi);
        }
    }
    let mut total = 0.5 * quad + 0.5 * logdet;
    if k > 0 {
        match info.cholesky() {
            Some(c) => total += c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
            None => return f64::INFINITY,
        }
    }
    total
}

/// Refines the proxy by restricted maximum likelihood over
/// `P(sigma^2, psi) = (I + sigma^{-2} W diag(psi) W')^{-1}` given a nuisance
/// estimate. Coordinate-wise golden-section search on log parameters,
/// `1e-4` tolerance, at most 200 objective evaluations; on budget exhaustion
/// the best point is returned with `converged = false`.
pub fn refine_proxy(dataset: &GroupedDataset, beta0: f64, gamma_hat: &DVector<f64>) -> Result<RefinedProxy> {
    let n = dataset.n();
    let x = dataset.x();
    if gamma_hat.len() != x.ncols() {
        return Err(Error::InvalidInput("gamma_hat has wrong length".into()));
    }
    let r = dataset.pseudo_response(beta0) - x * gamma_hat;
    let support: Vec<usize> = (0..gamma_hat.len()).filter(|&j| gamma_hat[j] != 0.0).collect();
    let xr = if x.ncols() > n { x.select_columns(support.iter()) } else { x.clone() };
    let s0 = r.norm_squared() / n.saturating_sub(support.len()).max(1) as f64;
    if !(s0 > 0.0) {
        return Err(Error::DegenerateScale(s0));
    }
    let q = dataset.q();
    let floor = (s0 * 1e-10).ln();
    let ceil = (s0 * 1e6).ln();
    let mut params: Vec<f64> = std::iter::once((0.6 * s0).ln()).chain((0..q).map(|_| (0.4 / q as f64 * s0).ln())).collect();
    let evaluations = std::cell::Cell::new(0usize);
    let eval = |p: &[f64]| -> f64 {
        evaluations.set(evaluations.get() + 1);
        let psi: Vec<f64> = p[1..].iter().map(|v| v.exp()).collect();
        restricted_objective(dataset.w(), dataset.groups(), &xr, &r, p[0].exp(), &psi)
    };
    let objective_init = eval(&params);
    let mut best = objective_init;
    let mut converged = false;
    'outer: loop {
        let mut moved = 0.0f64;
        for c in 0..params.len() {
            let centre = params[c];
            let (mut a, mut b) = ((centre - HALF_BRACKET).max(floor), (centre + HALF_BRACKET).min(ceil));
            let mut trial = params.clone();
            let f_at = |v: f64, trial: &mut Vec<f64>| {
                trial[c] = v;
                eval(trial)
            };
            let mut x1 = b - INV_PHI * (b - a);
            let mut x2 = a + INV_PHI * (b - a);
            let mut f1 = f_at(x1, &mut trial);
            let mut f2 = f_at(x2, &mut trial);
            while b - a > LOG_TOL {
                if evaluations.get() >= MAX_EVALS {
                    break 'outer;
                }
                if f1 <= f2 {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - INV_PHI * (b - a);
                    f1 = f_at(x1, &mut trial);
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + INV_PHI * (b - a);
                    f2 = f_at(x2, &mut trial);
                }
            }
            let (xm, fm) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
            if fm < best {
                moved = moved.max((xm - centre).abs());
                params[c] = xm;
                best = fm;
            }
        }
        if moved < LOG_TOL {
            converged = true;
            break;
        }
        if evaluations.get() >= MAX_EVALS {
            break;
        }
    }
    let sigma_eps_sq = params[0].exp();
    let psi: Vec<f64> = params[1..].iter().map(|v| v.exp()).collect();
    let re = RandomEffectSpec::new(DMatrix::from_diagonal(&DVector::from_column_slice(&psi)), sigma_eps_sq)?;
    let precision = true_precision(dataset.w(), dataset.groups(), &re)?;
    let pr = precision.mul_vec(&r);
    let sigma_hat_sq = pr.norm_squared() / n as f64;
    let sigma_eps_hat_sq = n as f64 * sigma_hat_sq / precision.trace();
    Ok(RefinedProxy {
        precision,
        sigma_eps_sq,
        psi,
        sigma_eps_hat_sq,
        objective_init,
        objective: best,
        evaluations: evaluations.get(),
        converged,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinedTestResult {
    /// Always true: the refined test has no established null distribution.
    pub experimental: bool,
    pub initial: TestResult,
    pub refinement: RefinedProxy,
    pub refined: TestResult,
}

/// Test with the default proxy, refine the proxy from its nuisance estimate,
/// then re-estimate and re-test with the refined proxy.
pub fn run_refined_test(dataset: &GroupedDataset, beta0: f64, config: &PipelineConfig) -> Result<RefinedTestResult> {
    let problem = prepare_problem(dataset, beta0, config)?;
    let initial = test_statistic(&problem)?;
    let std = &problem.dataset;
    let refinement = refine_proxy(std, beta0, &initial.gamma_hat)?;
    let proxy = &refinement.precision;
    let tuning = default_tuning(std, proxy, beta0)?.params.scaled(config.scale);
    let (gamma, _, gr) = with_auto_relax(&tuning, config.relax_rounds, |t| estimate_gamma(std, beta0, proxy, t))?;
    let (theta, _, tr) = with_auto_relax(&tuning, config.relax_rounds, |t| estimate_theta(std, proxy, t))?;
    let stat = statistic_from_estimates(std, beta0, proxy, &gamma.coef, &theta.coef)?;
    let refined = assemble(beta0, config.alternative, stat, (&gamma, gr), (&theta, tr));
    Ok(RefinedTestResult { experimental: true, initial, refinement, refined })
}
