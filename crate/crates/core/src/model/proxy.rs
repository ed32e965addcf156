use nalgebra::{DMatrix, SymmetricEigen};

use super::blockdiag::BlockDiagMatrix;
use super::dataset::{group_ranges, GroupedDataset};
use crate::error::{Error, Result};

const SYM_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const MAX_CONDITION: f64 = 1e14;

/// Choice of the shared per-group block `M` in `P~ = (I + W M W')^{-1}`.
#[derive(Debug, Clone, PartialEq)]
pub enum ProxySpec {
    /// Explicit symmetric PSD q x q block.
    Matrix(DMatrix<f64>),
    /// `M = log(n) I_q`.
    LogNIdentity,
    /// `M = 0`, i.e. `P~ = I` (linear-model variant).
    ZeroMatrix,
}

impl ProxySpec {
    pub fn scaled_identity(c: f64, q: usize) -> Self {
        ProxySpec::Matrix(DMatrix::identity(q, q) * c)
    }

    /// Materialise `M` for sample size `n` and random-effect dimension `q`.
    pub fn resolve(&self, n: usize, q: usize) -> Result<DMatrix<f64>> {
        let m = match self {
            ProxySpec::Matrix(m) => {
                if m.nrows() != q || m.ncols() != q {
                    return Err(Error::InvalidInput(format!(
                        "proxy block is {}x{}, expected {q}x{q}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                m.clone()
            }
            ProxySpec::LogNIdentity => DMatrix::identity(q, q) * (n as f64).ln(),
            ProxySpec::ZeroMatrix => DMatrix::zeros(q, q),
        };
        let scale = m.amax().max(1.0);
        if (&m - m.transpose()).amax() > SYM_TOL * scale {
            return Err(Error::InvalidInput("proxy block M is not symmetric".into()));
        }
        let sym = (&m + m.transpose()) * 0.5;
        if sym.symmetric_eigenvalues().min() < -PSD_TOL * scale {
            return Err(Error::NotPositiveDefinite("proxy block M is not PSD".into()));
        }
        Ok(sym)
    }

    pub fn label(&self) -> String {
        match self {
            ProxySpec::Matrix(m) => {
                let q = m.nrows();
                let diag: Vec<String> = (0..q).map(|i| format!("{:.6}", m[(i, i)])).collect();
                format!("matrix(diag={})", diag.join(","))
            }
            ProxySpec::LogNIdentity => "logn".to_string(),
            ProxySpec::ZeroMatrix => "zero".to_string(),
        }
    }
}

/// Random-effect covariance `psi` (q x q) and error variance.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomEffectSpec {
    pub psi: DMatrix<f64>,
    pub sigma_eps_sq: f64,
}

impl RandomEffectSpec {
    pub fn new(psi: DMatrix<f64>, sigma_eps_sq: f64) -> Result<Self> {
        if !(sigma_eps_sq > 0.0 && sigma_eps_sq.is_finite()) {
            return Err(Error::InvalidInput("sigma_eps_sq must be positive".into()));
        }
        if !psi.is_square() || (&psi - psi.transpose()).amax() > SYM_TOL * psi.amax().max(1.0) {
            return Err(Error::NotPositiveDefinite("psi must be square and symmetric".into()));
        }
        if psi.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("psi".into()));
        }
        Ok(Self { psi, sigma_eps_sq })
    }
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

fn invert_spd_block(a: DMatrix<f64>, group: usize) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(a);
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    if lo <= 0.0 || hi / lo > MAX_CONDITION {
        return Err(Error::SingularBlock { group });
    }
    let inv = eig.eigenvalues.map(|v| 1.0 / v);
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose();
    Ok((&out + out.transpose()) * 0.5)
}

/// Blocks `(I + W_i M W_i')^{-1}` for a PSD `M` shared by every group.
///
/// Groups with `q < n_i / 2` use the symmetric Woodbury form
/// `I - U (I + U'U)^{-1} U'` with `U = W_i M^{1/2}`; the others invert the
/// `n_i x n_i` matrix directly.
pub fn proxy_from_design(w: &DMatrix<f64>, groups: &[usize], m: &DMatrix<f64>) -> Result<BlockDiagMatrix> {
    let q = w.ncols();
    let root = psd_sqrt(m);
    let mut blocks = Vec::with_capacity(groups.len());
    for (g, (start, len)) in group_ranges(groups).into_iter().enumerate() {
        let wi = w.rows(start, len);
        let block = if 2 * q < len {
            let u = wi * &root;
            let inner = DMatrix::identity(q, q) + u.transpose() * &u;
            let eig = SymmetricEigen::new(inner);
            if eig.eigenvalues.max() > MAX_CONDITION {
                return Err(Error::SingularBlock { group: g });
            }
            let inv_inner = &eig.eigenvectors
                * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v))
                * eig.eigenvectors.transpose();
            let b = DMatrix::identity(len, len) - &u * inv_inner * u.transpose();
            (&b + b.transpose()) * 0.5
        } else {
            let a = DMatrix::identity(len, len) + wi * m * wi.transpose();
            invert_spd_block(a, g)?
        };
        blocks.push(block);
    }
    BlockDiagMatrix::from_blocks(blocks)
}

/// Proxy precision `P~ = (I + W M W')^{-1}`.
pub fn build_proxy(dataset: &GroupedDataset, proxy: &ProxySpec) -> Result<BlockDiagMatrix> {
    if matches!(proxy, ProxySpec::ZeroMatrix) {
        return Ok(BlockDiagMatrix::identity(dataset.groups()));
    }
    let m = proxy.resolve(dataset.n(), dataset.q())?;
    proxy_from_design(dataset.w(), dataset.groups(), &m)
}

/// True precision `P = (I + sigma^{-2} W psi W')^{-1}` (short form).
pub fn true_precision(w: &DMatrix<f64>, groups: &[usize], re: &RandomEffectSpec) -> Result<BlockDiagMatrix> {
    if re.psi.nrows() != w.ncols() {
        return Err(Error::InvalidInput("psi dimension does not match W".into()));
    }
    let m = &re.psi / re.sigma_eps_sq;
    proxy_from_design(w, groups, &m)
}

/// Long form `(I - W E^{-1} W')^2 + sigma^2 W E^{-1} psi^{-1} E^{-1} W'` with
/// `E = W'W + sigma^2 psi^{-1}`, computed per group.
pub fn precision_long_form(w: &DMatrix<f64>, groups: &[usize], re: &RandomEffectSpec) -> Result<BlockDiagMatrix> {
    let psi_inv = re
        .psi
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("psi".into()))?
        .inverse();
    let s2 = re.sigma_eps_sq;
    let mut blocks = Vec::with_capacity(groups.len());
    for (g, (start, len)) in group_ranges(groups).into_iter().enumerate() {
        let wi = w.rows(start, len).into_owned();
        let e = wi.transpose() * &wi + &psi_inv * s2;
        let e_inv = e.try_inverse().ok_or(Error::SingularBlock { group: g })?;
        let a = DMatrix::identity(len, len) - &wi * &e_inv * wi.transpose();
        let b = &a * &a + &wi * &e_inv * &psi_inv * &e_inv * wi.transpose() * s2;
        blocks.push(b);
    }
    BlockDiagMatrix::from_blocks(blocks)
}

/// Short-form precision plus the maximum entrywise gap to the long form.
pub fn true_precision_verified(
    w: &DMatrix<f64>,
    groups: &[usize],
    re: &RandomEffectSpec,
) -> Result<(BlockDiagMatrix, f64)> {
    let short = true_precision(w, groups, re)?;
    let long = precision_long_form(w, groups, re)?;
    let gap = short
        .blocks()
        .iter()
        .zip(long.blocks())
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max);
    if gap > 1e-9 {
        return Err(Error::InvalidInput(format!("precision forms disagree by {gap:e}")));
    }
    Ok((short, gap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(w: DMatrix<f64>, groups: Vec<usize>) -> GroupedDataset {
        let n = w.nrows();
        GroupedDataset::new(DVector::zeros(n), DMatrix::from_element(n, 1, 1.0), DVector::zeros(n), w, groups).unwrap()
    }

    fn random_psd(rng: &mut ChaCha8Rng, q: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(q, q, |_, _| rng.random::<f64>() - 0.5);
        &a * a.transpose() + DMatrix::identity(q, q) * 0.1
    }

    #[test]
    fn zero_proxy_is_exact_identity() {
        let d = dataset(DMatrix::from_element(6, 2, 1.5), vec![2, 4]);
        let p = build_proxy(&d, &ProxySpec::ZeroMatrix).unwrap();
        assert_eq!(p, BlockDiagMatrix::identity(&[2, 4]));
        let p = build_proxy(&d, &ProxySpec::scaled_identity(0.0, 2)).unwrap();
        for b in p.blocks() {
            assert!((b - DMatrix::identity(b.nrows(), b.nrows())).amax() < 1e-15);
        }
    }

    #[test]
    fn random_intercept_matches_sherman_morrison() {
        let m = 0.7;
        let groups = vec![3, 5];
        let d = dataset(DMatrix::from_element(8, 1, 1.0), groups.clone());
        let p = build_proxy(&d, &ProxySpec::scaled_identity(m, 1)).unwrap();
        for (b, &ni) in p.blocks().iter().zip(&groups) {
            let expect = DMatrix::identity(ni, ni)
                - DMatrix::from_element(ni, ni, 1.0) * (m / (1.0 + m * ni as f64));
            assert!((b - expect).amax() < 1e-12);
        }
    }

    #[test]
    fn blocks_match_dense_inverse_both_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for q in 1..=3 {
            // group of 8 exercises Woodbury, group of 2 the direct path
            let groups = vec![8, 2, 5];
            let w = DMatrix::from_fn(15, q, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let m = random_psd(&mut rng, q);
            let d = dataset(w.clone(), groups.clone());
            let p = build_proxy(&d, &ProxySpec::Matrix(m.clone())).unwrap();
            for (i, (s, len)) in group_ranges(&groups).into_iter().enumerate() {
                let wi = w.rows(s, len);
                let dense = (DMatrix::identity(len, len) + wi * &m * wi.transpose()).try_inverse().unwrap();
                assert!((p.block(i) - dense).amax() < 1e-10);
            }
            let lo = p.min_eigenvalue();
            assert!(lo > f64::EPSILON && p.max_eigenvalue() <= 1.0 + 1e-10);
        }
    }

    #[test]
    fn log_n_proxy_resolves() {
        let m = ProxySpec::LogNIdentity.resolve(200, 3).unwrap();
        assert!((m - DMatrix::identity(3, 3) * 200f64.ln()).amax() < 1e-15);
    }

    #[test]
    fn non_psd_proxy_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(ProxySpec::Matrix(m).resolve(10, 2).is_err());
    }

    #[test]
    fn vanishing_random_effects_give_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = DMatrix::from_fn(6, 2, |_, _| rng.random::<f64>());
        let re = RandomEffectSpec::new(DMatrix::identity(2, 2) * 1e-12, 1.0).unwrap();
        let p = true_precision(&w, &[3, 3], &re).unwrap();
        for b in p.blocks() {
            assert!((b - DMatrix::identity(3, 3)).amax() < 1e-8);
        }
    }

    #[test]
    fn unit_precision_equals_identity_proxy() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = DMatrix::from_fn(7, 2, |_, _| rng.random::<f64>());
        let re = RandomEffectSpec::new(DMatrix::identity(2, 2), 1.0).unwrap();
        let p = true_precision(&w, &[4, 3], &re).unwrap();
        let d = dataset(w, vec![4, 3]);
        let pt = build_proxy(&d, &ProxySpec::scaled_identity(1.0, 2)).unwrap();
        for (a, b) in p.blocks().iter().zip(pt.blocks()) {
            assert!((a - b).amax() < 1e-14);
        }
    }

    #[test]
    fn short_and_long_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let w = DMatrix::from_fn(9, 2, |_, _| rng.random::<f64>() - 0.3);
        let re = RandomEffectSpec::new(random_psd(&mut rng, 2), 0.7).unwrap();
        let (_, gap) = true_precision_verified(&w, &[4, 5], &re).unwrap();
        assert!(gap < 1e-9);
    }

    #[test]
    fn non_pd_psi_is_rejected() {
        let psi = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(RandomEffectSpec::new(psi, 1.0), Err(Error::NotPositiveDefinite(_))));
    }
}
