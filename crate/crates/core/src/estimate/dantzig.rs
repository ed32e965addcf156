use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::tuning::TuningParams;
use crate::error::{Error, Result};
use crate::lp::{lp_solve_with, LinearProgram, LpStatus, SolverOptions};
use crate::model::{BlockDiagMatrix, GroupedDataset};

/// Primal tolerance handed to the simplex; keeps re-substituted slacks well
/// inside the `-1e-8` acceptance band.
const LP_TOL: f64 = 1e-11;
const SLACK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConstraintKind {
    /// `|offset - A coef|_inf <= bound`
    SupNorm,
    /// `offset - a'coef >= bound` (single row)
    Floor,
}

/// One family of linear constraints on the residual `offset - coeffs * coef`.
#[derive(Debug, Clone)]
pub struct ConstraintFamily {
    pub name: &'static str,
    pub coeffs: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub bound: f64,
    pub kind: ConstraintKind,
}

impl ConstraintFamily {
    pub fn sup_norm(name: &'static str, coeffs: DMatrix<f64>, offset: DVector<f64>, bound: f64) -> Self {
        Self { name, coeffs, offset, bound, kind: ConstraintKind::SupNorm }
    }

    pub fn floor(name: &'static str, coeffs: DVector<f64>, offset: f64, bound: f64) -> Self {
        let coeffs = DMatrix::from_row_slice(1, coeffs.len(), coeffs.as_slice());
        Self { name, coeffs, offset: DVector::from_element(1, offset), bound, kind: ConstraintKind::Floor }
    }

    /// Slack per row at `coef`; negative entries are violations.
    pub fn slacks(&self, coef: &DVector<f64>) -> Vec<f64> {
        let value = &self.offset - &self.coeffs * coef;
        match self.kind {
            ConstraintKind::SupNorm => value.iter().map(|v| self.bound - v.abs()).collect(),
            ConstraintKind::Floor => vec![value[0] - self.bound],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilySlack {
    pub name: String,
    pub slacks: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateResult {
    #[serde(skip)]
    pub coef: DVector<f64>,
    pub l1_norm: f64,
    pub constraint_slacks: Vec<FamilySlack>,
    pub feasible: bool,
    pub solver_status: LpStatus,
    pub lp_iterations: usize,
    /// False only for an iterated (GLMM) estimate that hit its step cap.
    pub converged: bool,
}

impl EstimateResult {
    pub fn min_slack(&self) -> f64 {
        self.constraint_slacks.iter().flat_map(|f| f.slacks.iter().copied()).fold(f64::INFINITY, f64::min)
    }

    pub fn support_size(&self) -> usize {
        self.coef.iter().filter(|c| **c != 0.0).count()
    }

    pub fn family(&self, name: &str) -> Option<&[f64]> {
        self.constraint_slacks.iter().find(|f| f.name == name).map(|f| f.slacks.as_slice())
    }
}

pub fn evaluate_families(families: &[ConstraintFamily], coef: &DVector<f64>) -> Vec<FamilySlack> {
    families.iter().map(|f| FamilySlack { name: f.name.to_string(), slacks: f.slacks(coef) }).collect()
}

fn build_lp(families: &[ConstraintFamily], dim: usize) -> LinearProgram {
    let rows: usize = families.iter().map(|f| f.coeffs.nrows()).sum();
    let mut lp = LinearProgram::with_capacity(vec![1.0; 2 * dim], rows);
    let mut row = vec![0.0; 2 * dim];
    for f in families {
        assert_eq!(f.coeffs.ncols(), dim, "family {} has wrong width", f.name);
        for r in 0..f.coeffs.nrows() {
            for j in 0..dim {
                let a = f.coeffs[(r, j)];
                row[j] = a;
                row[dim + j] = -a;
            }
            let off = f.offset[r];
            match f.kind {
                ConstraintKind::SupNorm => lp.add_range(&row, off - f.bound, off + f.bound),
                ConstraintKind::Floor => lp.add_le(&row, off - f.bound),
            }
        }
    }
    lp
}

/// `argmin ||coef||_1` subject to every family. Infeasibility is reported with
/// the families whose removal alone restores feasibility (all of them when no
/// single family is to blame).
pub fn solve_l1(families: &[ConstraintFamily], dim: usize) -> Result<EstimateResult> {
    let lp = build_lp(families, dim);
    let opts = SolverOptions { tol: LP_TOL, max_iterations: None };
    let sol = lp_solve_with(&lp, &opts);
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::Infeasible { families: diagnose(families, dim) }),
        LpStatus::IterationLimit => return Err(Error::IterationLimit(sol.iterations)),
        LpStatus::Unbounded => return Err(Error::Unbounded),
    }
    let coef = DVector::from_fn(dim, |j, _| sol.x[j] - sol.x[dim + j]);
    let constraint_slacks = evaluate_families(families, &coef);
    let mut out = EstimateResult {
        l1_norm: coef.iter().map(|c| c.abs()).sum(),
        coef,
        constraint_slacks,
        feasible: true,
        solver_status: sol.status,
        lp_iterations: sol.iterations,
        converged: true,
    };
    out.feasible = out.min_slack() >= -SLACK_TOL;
    Ok(out)
}

fn diagnose(families: &[ConstraintFamily], dim: usize) -> Vec<String> {
    let opts = SolverOptions { tol: LP_TOL, max_iterations: None };
    let mut blamed = Vec::new();
    for skip in 0..families.len() {
        let rest: Vec<ConstraintFamily> =
            families.iter().enumerate().filter(|(k, _)| *k != skip).map(|(_, f)| f.clone()).collect();
        if lp_solve_with(&build_lp(&rest, dim), &opts).status == LpStatus::Optimal {
            blamed.push(families[skip].name.to_string());
        }
    }
    if blamed.is_empty() {
        blamed = families.iter().map(|f| f.name.to_string()).collect();
    }
    blamed
}

/// Constraint names of the nuisance (gamma) problem.
pub const GAMMA_FAMILIES: [&str; 3] = ["score", "correlation", "residual"];
/// Constraint names of the feature-regression (theta) problem.
pub const THETA_FAMILIES: [&str; 4] = ["score", "proxy_score", "correlation", "residual"];

/// Families of the nuisance problem on the residual `r0 - design * gamma`:
/// `|n^-1 left' P (r)|_inf <= eta`, `n^-1 corr' P r >= etabar`, `|P r|_inf <= mu`.
pub fn gamma_families(
    left: &DMatrix<f64>,
    design: &DMatrix<f64>,
    r0: &DVector<f64>,
    corr: &DVector<f64>,
    proxy: &BlockDiagMatrix,
    eta: f64,
    etabar: f64,
    mu: f64,
) -> Vec<ConstraintFamily> {
    let nf = design.nrows() as f64;
    let pd = proxy.mul_mat(design);
    let pr = proxy.mul_vec(r0);
    let pc = proxy.mul_vec(corr);
    vec![
        ConstraintFamily::sup_norm(GAMMA_FAMILIES[0], left.tr_mul(&pd) / nf, left.tr_mul(&pr) / nf, eta),
        ConstraintFamily::floor(GAMMA_FAMILIES[1], pd.tr_mul(&pc) / nf, pc.dot(r0) / nf, etabar),
        ConstraintFamily::sup_norm(GAMMA_FAMILIES[2], pd, pr, mu),
    ]
}

/// Families of the feature regression of `z` on `x`, with optional
/// observation weights `w` inserted after the transposed design:
/// `|n^-1 X'W (z - X theta)|_inf <= eta`, `|n^-1 X'W P (z - X theta)|_inf <= eta'`,
/// `n^-1 z'W (z - X theta) >= etabar`, `|z - X theta|_inf <= mu`.
pub fn theta_families(
    x: &DMatrix<f64>,
    z: &DVector<f64>,
    proxy: &BlockDiagMatrix,
    weights: Option<&DVector<f64>>,
    t: &TuningParams,
) -> Vec<ConstraintFamily> {
    let nf = x.nrows() as f64;
    let (wx, wz) = match weights {
        Some(w) => {
            let mut wx = x.clone();
            for (i, mut row) in wx.row_iter_mut().enumerate() {
                row *= w[i];
            }
            (wx, z.component_mul(w))
        }
        None => (x.clone(), z.clone()),
    };
    let px = proxy.mul_mat(x);
    let pz = proxy.mul_vec(z);
    vec![
        ConstraintFamily::sup_norm(THETA_FAMILIES[0], wx.tr_mul(x) / nf, wx.tr_mul(z) / nf, t.eta_theta),
        ConstraintFamily::sup_norm(THETA_FAMILIES[1], wx.tr_mul(&px) / nf, wx.tr_mul(&pz) / nf, t.eta_theta_prime),
        ConstraintFamily::floor(THETA_FAMILIES[2], x.tr_mul(&wz) / nf, wz.dot(z) / nf, t.etabar_theta),
        ConstraintFamily::sup_norm(THETA_FAMILIES[3], x.clone(), z.clone(), t.mu_theta),
    ]
}

fn check_proxy(dataset: &GroupedDataset, proxy: &BlockDiagMatrix) -> Result<()> {
    if proxy.dim() != dataset.n() || proxy.groups() != dataset.groups() {
        return Err(Error::LayoutMismatch);
    }
    Ok(())
}

/// Nuisance estimate `gamma_hat` for pseudo-response `V = y - Z beta0`.
pub fn estimate_gamma(
    dataset: &GroupedDataset,
    beta0: f64,
    proxy: &BlockDiagMatrix,
    tuning: &TuningParams,
) -> Result<EstimateResult> {
    check_proxy(dataset, proxy)?;
    tuning.validate()?;
    let v = dataset.pseudo_response(beta0);
    let x = dataset.x();
    let fams = gamma_families(x, x, &v, &v, proxy, tuning.eta_gamma, tuning.etabar_gamma, tuning.mu_gamma);
    solve_l1(&fams, x.ncols())
}

/// Feature regression `theta_hat` of the tested column on the nuisance design.
pub fn estimate_theta(dataset: &GroupedDataset, proxy: &BlockDiagMatrix, tuning: &TuningParams) -> Result<EstimateResult> {
    estimate_theta_weighted(dataset, proxy, None, tuning)
}

pub(crate) fn estimate_theta_weighted(
    dataset: &GroupedDataset,
    proxy: &BlockDiagMatrix,
    weights: Option<&DVector<f64>>,
    tuning: &TuningParams,
) -> Result<EstimateResult> {
    check_proxy(dataset, proxy)?;
    tuning.validate()?;
    let (x, z) = (dataset.x(), dataset.z());
    let fams = theta_families(x, z, proxy, weights, tuning);
    let res = solve_l1(&fams, x.ncols())?;
    let resid = z - x * &res.coef;
    if resid.norm() < 1e-8 * z.norm() {
        return Err(Error::CollinearZ);
    }
    Ok(res)
}

/// Retry `solve` with relaxed bounds (x1.5 on eta/mu, x0.5 on etabar) up to
/// `rounds` times while it reports infeasibility. Returns the estimate, the
/// bounds that produced it and the number of relax rounds used.
pub fn with_auto_relax<F>(tuning: &TuningParams, rounds: usize, mut solve: F) -> Result<(EstimateResult, TuningParams, usize)>
where
    F: FnMut(&TuningParams) -> Result<EstimateResult>,
{
    let mut t = *tuning;
    let mut round = 0;
    loop {
        match solve(&t) {
            Ok(r) => return Ok((r, t, round)),
            Err(Error::Infeasible { .. }) if round < rounds => {
                t = t.relaxed();
                round += 1;
            }
            Err(e) => return Err(e),
        }
    }
}
