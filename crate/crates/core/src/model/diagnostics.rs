use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::blockdiag::BlockDiagMatrix;
use crate::rng::substream_rng;

/// Outcome of the P-condition check. `violations` holds global
/// `(row, col, value)` triples that exceed `c * log(n)`.
#[derive(Debug, Clone, Serialize)]
pub struct PConditionReport {
    pub holds: bool,
    pub layout_matches: bool,
    pub min_eigenvalue: f64,
    pub max_abs_entry: f64,
    pub bound: f64,
    pub violations: Vec<(usize, usize, f64)>,
}

/// Block layout equal to `groups`, symmetric PSD (smallest eigenvalue
/// >= -1e-10), and every entry bounded by `c * log(n)`.
pub fn check_p_condition(a: &BlockDiagMatrix, groups: &[usize], c: f64) -> PConditionReport {
    let layout_matches = a.groups() == groups;
    let n = a.dim();
    let bound = c * (n as f64).ln();
    let mut violations = Vec::new();
    let mut start = 0;
    for b in a.blocks() {
        for i in 0..b.nrows() {
            for j in 0..b.ncols() {
                if b[(i, j)].abs() > bound * (1.0 + 1e-12) {
                    violations.push((start + i, start + j, b[(i, j)]));
                }
            }
        }
        start += b.nrows();
    }
    let min_eigenvalue = a.min_eigenvalue();
    let symmetric = a.asymmetry() <= 1e-12;
    PConditionReport {
        holds: layout_matches && symmetric && min_eigenvalue >= -1e-10 && violations.is_empty(),
        layout_matches,
        min_eigenvalue,
        max_abs_entry: a.max_abs(),
        bound,
        violations,
    }
}

/// Sampled restricted-eigenvalue estimate. Always an upper bound on the true
/// constant: diagnostic only, not a certificate.
#[derive(Debug, Clone, Serialize)]
pub struct RestrictedEigenvalueEstimate {
    pub kappa: f64,
    pub draws: usize,
    pub sparsity: usize,
    pub note: &'static str,
}

fn cone_ratio(x: &DMatrix<f64>, delta: &DVector<f64>, support: &[usize]) -> f64 {
    let n = x.nrows() as f64;
    let on: f64 = support.iter().map(|&j| delta[j] * delta[j]).sum::<f64>().sqrt();
    if on == 0.0 {
        return f64::INFINITY;
    }
    (x * delta).norm() / (n.sqrt() * on)
}

/// Minimum of `||X d|| / (sqrt(n) ||d_J||)` over sampled cone directions
/// (`||d_{J^c}||_1 <= ||d_J||_1`, random `J` with `|J| <= s`).
///
/// Besides the random draws, for every column `j` the direction
/// `e_j - sign(c) e_k` towards its most correlated partner `k` is probed with
/// `J = {j}`, so exact collinearity is always found.
pub fn sample_restricted_eigenvalue(x: &DMatrix<f64>, s: usize, draws: usize, seed: u64) -> RestrictedEigenvalueEstimate {
    let p = x.ncols();
    let s = s.clamp(1, p.max(1));
    let mut best = f64::INFINITY;

    if p >= 2 {
        let gram = x.transpose() * x;
        for j in 0..p {
            let mut k_best = usize::MAX;
            let mut c_best = -1.0;
            for k in 0..p {
                if k == j {
                    continue;
                }
                let denom = (gram[(j, j)] * gram[(k, k)]).sqrt();
                if denom == 0.0 {
                    continue;
                }
                let c = gram[(j, k)] / denom;
                if c.abs() > c_best {
                    c_best = c.abs();
                    k_best = k;
                }
            }
            if k_best == usize::MAX {
                continue;
            }
            let mut d = DVector::zeros(p);
            d[j] = 1.0;
            d[k_best] = -gram[(j, k_best)].signum();
            best = best.min(cone_ratio(x, &d, &[j]));
        }
    }

    for t in 0..draws {
        let mut rng = substream_rng(seed, t as u64);
        let size = rng.random_range(1..=s);
        let support: Vec<usize> = sample(&mut rng, p, size).into_vec();
        let mut d = DVector::zeros(p);
        for &j in &support {
            d[j] = rng.sample::<f64, _>(StandardNormal);
        }
        let on_l1: f64 = support.iter().map(|&j| d[j].abs()).sum();
        let off: Vec<usize> = (0..p).filter(|j| !support.contains(j)).collect();
        if !off.is_empty() {
            let raw: Vec<f64> = off.iter().map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let raw_l1: f64 = raw.iter().map(|v| v.abs()).sum();
            let budget = rng.random::<f64>() * on_l1;
            if raw_l1 > 0.0 {
                for (&j, v) in off.iter().zip(raw) {
                    d[j] = v * budget / raw_l1;
                }
            }
        }
        best = best.min(cone_ratio(x, &d, &support));
    }

    RestrictedEigenvalueEstimate {
        kappa: best,
        draws,
        sparsity: s,
        note: "diagnostic only, not a certificate",
    }
}
