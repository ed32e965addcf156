use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Covariance family of the design rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Design {
    /// `Sigma_ij = rho^|i-j|`
    Toeplitz(f64),
    /// `Sigma_ij = rho` off the diagonal.
    EquiCorr(f64),
    /// Tridiagonal with off-diagonal `-rho / (1 + rho^2)`.
    BandedSigma(f64),
}

impl Design {
    pub fn label(&self) -> String {
        match self {
            Design::Toeplitz(r) => format!("toeplitz({r})"),
            Design::EquiCorr(r) => format!("equicorr({r})"),
            Design::BandedSigma(r) => format!("banded({r})"),
        }
    }
}

pub fn make_sigma(design: Design, p: usize) -> Result<DMatrix<f64>> {
    let sigma = match design {
        Design::Toeplitz(rho) => DMatrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32)),
        Design::EquiCorr(rho) => DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho }),
        Design::BandedSigma(rho) => {
            let off = -rho / (1.0 + rho * rho);
            DMatrix::from_fn(p, p, |i, j| match i.abs_diff(j) {
                0 => 1.0,
                1 => off,
                _ => 0.0,
            })
        }
    };
    if sigma.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite(design.label()));
    }
    Ok(sigma)
}

/// Symmetric square root of a PSD matrix (negative rounding noise clipped).
pub fn symmetric_sqrt(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(sigma.clone());
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose();
    (&out + out.transpose()) * 0.5
}

/// Population regression of column `j` on the others:
/// `theta = Sigma_{-j,-j}^{-1} Sigma_{-j,j}`, `sigma_u^2 = Sigma_jj - Sigma_{j,-j} theta`.
pub fn oracle_theta(sigma: &DMatrix<f64>, j: usize) -> Result<(DVector<f64>, f64)> {
    let p = sigma.nrows();
    if j >= p || sigma.ncols() != p {
        return Err(Error::InvalidInput(format!("column {j} out of range for {p}x{p} covariance")));
    }
    let rest: Vec<usize> = (0..p).filter(|&k| k != j).collect();
    let s_rr = sigma.select_rows(rest.iter()).select_columns(rest.iter());
    let s_rj = DVector::from_iterator(p - 1, rest.iter().map(|&k| sigma[(k, j)]));
    let chol = s_rr.cholesky().ok_or(Error::SingularSubmatrix)?;
    let theta = chol.solve(&s_rj);
    let sigma_u_sq = sigma[(j, j)] - s_rj.dot(&theta);
    Ok((theta, sigma_u_sq))
}

/// Sparse coefficients of norm `magnitude`: uniform(0,1) entries at the
/// 1-based positions `k <= 3s/2` with `3 ∤ k`, rescaled.
pub fn gen_beta(s: usize, p: usize, magnitude: f64, seed: u64) -> Result<DVector<f64>> {
    gen_beta_with(s, p, magnitude, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn gen_beta_with<R: Rng>(s: usize, p: usize, magnitude: f64, rng: &mut R) -> Result<DVector<f64>> {
    let positions = support_positions(s);
    if positions.last().is_some_and(|&k| k > p) {
        return Err(Error::SparsityOverflow { s, p });
    }
    let mut beta = DVector::zeros(p);
    for &k in &positions {
        // (0,1) open interval: redraw the measure-zero endpoint
        let mut a = 0.0;
        while a == 0.0 {
            a = rng.random::<f64>();
        }
        beta[k - 1] = a;
    }
    let norm = beta.norm();
    if norm > 0.0 {
        beta *= magnitude / norm;
    }
    Ok(beta)
}

/// 1-based positions of the first `s` integers not divisible by three.
pub fn support_positions(s: usize) -> Vec<usize> {
    (1..).filter(|k| k % 3 != 0).take(s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_rule() {
        assert_eq!(support_positions(2), vec![1, 2]);
        assert_eq!(support_positions(5), vec![1, 2, 4, 5, 7]);
        assert!(support_positions(0).is_empty());
        // every position satisfies k <= 3s/2
        for s in 0..30 {
            assert!(support_positions(s).iter().all(|&k| 2 * k <= 3 * s + 1));
        }
    }

    #[test]
    fn beta_norm_and_sparsity() {
        for s in 0..=20 {
            let b = gen_beta(s, 40, 5.0, s as u64).unwrap();
            assert_eq!(b.iter().filter(|v| **v != 0.0).count(), s);
            if s > 0 {
                assert!((b.norm() - 5.0).abs() < 1e-12);
            }
        }
        assert!(matches!(gen_beta(10, 12, 5.0, 0), Err(Error::SparsityOverflow { .. })));
    }

    #[test]
    fn sigma_formulas() {
        let t = make_sigma(Design::Toeplitz(-0.5), 3).unwrap();
        assert_eq!(t, DMatrix::from_row_slice(3, 3, &[1.0, -0.5, 0.25, -0.5, 1.0, -0.5, 0.25, -0.5, 1.0]));
        let e = make_sigma(Design::EquiCorr(0.8), 2).unwrap();
        assert_eq!(e, DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0]));
        let b = make_sigma(Design::BandedSigma(0.4), 4).unwrap();
        assert!((b[(0, 1)] + 0.4 / 1.16).abs() < 1e-15 && b[(0, 2)] == 0.0);
        assert!(make_sigma(Design::EquiCorr(-0.6), 4).is_err());
    }

    #[test]
    fn sqrt_squares_back() {
        let s = make_sigma(Design::Toeplitz(-0.5), 12).unwrap();
        let r = symmetric_sqrt(&s);
        assert!((&r * &r - &s).amax() < 1e-12);
    }

    #[test]
    fn oracle_edge_and_identity() {
        let s = make_sigma(Design::Toeplitz(-0.5), 8).unwrap();
        let (th, su) = oracle_theta(&s, 0).unwrap();
        assert!((th[0] + 0.5).abs() < 1e-12 && th.iter().skip(1).all(|v| v.abs() < 1e-12));
        assert!((su - 0.75).abs() < 1e-12);
        let (th, su) = oracle_theta(&DMatrix::identity(5, 5), 2).unwrap();
        assert!(th.iter().all(|v| *v == 0.0) && su == 1.0);
    }
}
