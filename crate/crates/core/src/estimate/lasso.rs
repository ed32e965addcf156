use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

const SCALE_RTOL: f64 = 1e-4;
const MAX_SCALE_ITERS: usize = 50;
const CD_TOL: f64 = 1e-9;
const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, Serialize)]
pub struct ScaledLassoResult {
    #[serde(skip)]
    pub gamma_init: DVector<f64>,
    /// `n^{-1/2} ||v - X gamma_init||`; zero only for an exactly fitted response.
    pub sigma_hat: f64,
    pub df: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Universal penalty level `sqrt(2 log(p) / n)`.
pub fn default_lambda0(n: usize, p: usize) -> f64 {
    (2.0 * (p.max(2) as f64).ln() / n as f64).sqrt()
}

/// Jointly estimates lasso coefficients and noise level: alternate the lasso
/// fit at penalty `lambda0 * sigma` with `sigma^2 <- RSS / n`.
///
/// A run that hits the iteration cap still returns its last iterate, with
/// `converged = false`.
pub fn scaled_lasso(x: &DMatrix<f64>, v: &DVector<f64>, lambda0: f64) -> Result<ScaledLassoResult> {
    let (n, p) = x.shape();
    if v.len() != n {
        return Err(Error::InvalidInput(format!("response length {} does not match {n} rows", v.len())));
    }
    if n < 2 {
        return Err(Error::InvalidInput("scaled lasso needs at least two observations".into()));
    }
    if !(lambda0 > 0.0 && lambda0.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda0 must be positive, got {lambda0}")));
    }
    let nf = n as f64;
    let col_sq: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared() / nf).collect();
    let mut beta = DVector::zeros(p);
    let mut resid = v.clone();
    let mut sigma = resid.norm() / nf.sqrt();
    if sigma == 0.0 {
        return Ok(ScaledLassoResult { gamma_init: beta, sigma_hat: 0.0, df: 0, iterations: 0, converged: true });
    }
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_SCALE_ITERS {
        iterations += 1;
        lasso_cd(x, &col_sq, lambda0 * sigma, &mut beta, &mut resid);
        let next = resid.norm() / nf.sqrt();
        let change = (next - sigma).abs() / sigma.max(f64::MIN_POSITIVE);
        sigma = next;
        if change < SCALE_RTOL || sigma == 0.0 {
            converged = true;
            break;
        }
    }
    let df = beta.iter().filter(|b| **b != 0.0).count();
    Ok(ScaledLassoResult { gamma_init: beta, sigma_hat: sigma, df, iterations, converged })
}

/// Cyclic coordinate descent for `(2n)^{-1} ||v - X b||^2 + lambda ||b||_1`,
/// warm-started at `beta`; `resid` is kept equal to `v - X beta`.
fn lasso_cd(x: &DMatrix<f64>, col_sq: &[f64], lambda: f64, beta: &mut DVector<f64>, resid: &mut DVector<f64>) {
    let nf = x.nrows() as f64;
    let p = x.ncols();
    let mut active_only = false;
    for _ in 0..MAX_SWEEPS {
        let mut max_delta = 0.0f64;
        for j in 0..p {
            if col_sq[j] == 0.0 || (active_only && beta[j] == 0.0) {
                continue;
            }
            let col = x.column(j);
            let old = beta[j];
            let rho = col.dot(resid) / nf + col_sq[j] * old;
            let new = soft_threshold(rho, lambda) / col_sq[j];
            if new != old {
                resid.axpy(old - new, &col, 1.0);
                beta[j] = new;
                max_delta = max_delta.max((new - old).abs() * col_sq[j].sqrt());
            }
        }
        if max_delta < CD_TOL {
            if !active_only {
                return;
            }
            // active set converged: confirm with one full sweep
            active_only = false;
        } else {
            active_only = true;
        }
    }
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}
