use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{group_ranges, GroupedDataset, RandomEffectSpec};

/// Covariance model used to shrink the per-group residuals.
#[derive(Debug, Clone)]
pub enum RanefMode {
    /// Proxy block `M`: `E_i = W_i'W_i + M^{-1}`.
    Proxy(DMatrix<f64>),
    /// Known covariance: `E_i = W_i'W_i + sigma^2 psi^{-1}`.
    Oracle(RandomEffectSpec),
}

/// `b_i = E_i^{-1} W_i' (V_i - X_i gamma)` for every group.
pub fn predict_random_effects(
    dataset: &GroupedDataset,
    gamma: &DVector<f64>,
    beta0: f64,
    mode: &RanefMode,
) -> Result<Vec<DVector<f64>>> {
    if gamma.len() != dataset.x().ncols() {
        return Err(Error::InvalidInput("gamma has wrong length".into()));
    }
    let q = dataset.q();
    let penalty = match mode {
        RanefMode::Proxy(m) => {
            if m.shape() != (q, q) {
                return Err(Error::InvalidInput(format!("proxy block must be {q}x{q}")));
            }
            m.clone().try_inverse().filter(|inv| inv.iter().all(|v| v.is_finite())).ok_or(Error::ProxyNotInvertible)?
        }
        RanefMode::Oracle(re) => {
            let inv = re.psi.clone().try_inverse().ok_or_else(|| Error::NotPositiveDefinite("psi".into()))?;
            inv * re.sigma_eps_sq
        }
    };
    let resid = dataset.pseudo_response(beta0) - dataset.x() * gamma;
    let w = dataset.w();
    group_ranges(dataset.groups())
        .into_iter()
        .enumerate()
        .map(|(g, (start, len))| {
            let wi = w.rows(start, len);
            let e = wi.transpose() * wi + &penalty;
            let rhs = wi.transpose() * resid.rows(start, len);
            e.lu().solve(&rhs).filter(|b| b.iter().all(|v| v.is_finite())).ok_or(Error::SingularBlock { group: g })
        })
        .collect()
}
