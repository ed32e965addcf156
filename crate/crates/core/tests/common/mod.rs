#![allow(dead_code)]

use lmminfer::model::GroupedDataset;
use nalgebra::{DMatrix, DVector};

/// Dense `(I + W M W')^{-1}` assembled block by block.
pub fn dense_proxy(w: &DMatrix<f64>, groups: &[usize], m: &DMatrix<f64>) -> DMatrix<f64> {
    let n: usize = groups.iter().sum();
    let mut out = DMatrix::zeros(n, n);
    let mut start = 0;
    for &g in groups {
        let wi = w.rows(start, g);
        let block = (DMatrix::identity(g, g) + wi * m * wi.transpose()).try_inverse().unwrap();
        out.view_mut((start, start), (g, g)).copy_from(&block);
        start += g;
    }
    out
}

pub fn sup(v: &DVector<f64>) -> f64 {
    v.amax()
}

pub fn l1(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Smallest slack of the nuisance constraints at `gamma` (negative = violated).
pub fn gamma_slack(
    x: &DMatrix<f64>,
    v: &DVector<f64>,
    p: &DMatrix<f64>,
    gamma: &DVector<f64>,
    eta: f64,
    etabar: f64,
    mu: f64,
) -> f64 {
    let n = x.nrows() as f64;
    let pr = p * (v - x * gamma);
    let score = eta - sup(&(x.transpose() * &pr / n));
    let corr = v.dot(&pr) / n - etabar;
    let resid = mu - sup(&pr);
    score.min(corr).min(resid)
}

/// Smallest slack of the feature-regression constraints at `theta`.
pub fn theta_slack(
    x: &DMatrix<f64>,
    z: &DVector<f64>,
    p: &DMatrix<f64>,
    theta: &DVector<f64>,
    eta: f64,
    eta_prime: f64,
    etabar: f64,
    mu: f64,
) -> f64 {
    let n = x.nrows() as f64;
    let u = z - x * theta;
    let score = eta - sup(&(x.transpose() * &u / n));
    let proxy_score = eta_prime - sup(&(x.transpose() * (p * &u) / n));
    let corr = z.dot(&u) / n - etabar;
    let resid = mu - sup(&u);
    score.min(proxy_score).min(corr).min(resid)
}

/// Minimum of `|c|_1` over a square grid `[-r, r]^2` with the given step,
/// restricted to points where `slack(c) >= 0`.
pub fn grid_min(r: f64, step: f64, slack: impl Fn(&DVector<f64>) -> f64) -> Option<f64> {
    let k = (r / step).round() as i64;
    let mut best: Option<f64> = None;
    let mut c = DVector::zeros(2);
    for i in -k..=k {
        c[0] = i as f64 * step;
        for j in -k..=k {
            c[1] = j as f64 * step;
            let norm = c[0].abs() + c[1].abs();
            if best.is_some_and(|b| norm >= b) {
                continue;
            }
            if slack(&c) >= 0.0 {
                best = Some(norm);
            }
        }
    }
    best
}

pub fn random_intercept_dataset(y: DVector<f64>, x: DMatrix<f64>, z: DVector<f64>, groups: Vec<usize>) -> GroupedDataset {
    let n = y.len();
    GroupedDataset::new(y, x, z, DMatrix::from_element(n, 1, 1.0), groups).unwrap()
}
