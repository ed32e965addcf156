use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::test::{p_value, Alternative};
use crate::error::{Error, Result};
use crate::estimate::{default_tuning, estimate_gamma, estimate_theta, with_auto_relax, TuningScale};
use crate::model::{build_proxy, standardize_columns, GroupedDataset, PanelData, ProxySpec};
use crate::rng::substream_rng;

#[derive(Debug, Clone)]
pub struct MultiTestConfig {
    pub alpha: f64,
    /// Bootstrap draws `B`.
    pub reps: usize,
    pub seed: u64,
    pub proxy: ProxySpec,
    pub scale: TuningScale,
    pub relax_rounds: usize,
}

impl MultiTestConfig {
    pub fn new(q: usize, seed: u64) -> Self {
        Self {
            alpha: 0.05,
            reps: 1000,
            seed,
            proxy: ProxySpec::scaled_identity(2.0 / (3.0 * q as f64), q),
            scale: TuningScale::default(),
            relax_rounds: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoordinateResult {
    pub column: usize,
    pub t_stat: f64,
    /// Marginal two-sided p-value.
    pub p_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BootstrapResult {
    pub t_max: f64,
    pub quantile: f64,
    pub alpha: f64,
    pub reject: bool,
    pub per_coordinate: Vec<CoordinateResult>,
    pub reps: usize,
    /// Share of bootstrap maxima strictly above `t_max`.
    pub p_value: f64,
    pub seed: u64,
    /// Sorted bootstrap maxima.
    #[serde(skip)]
    pub draws: Vec<f64>,
}

/// Per-observation contributions `T_ij` (n x d) and the statistics
/// `T_j = n^{-1/2} sum_i T_ij`.
pub fn bootstrap_draw(tij: &DMatrix<f64>, t: &DVector<f64>, xi: &DVector<f64>) -> f64 {
    let n = tij.nrows() as f64;
    let root = n.sqrt();
    (0..tij.ncols())
        .map(|j| {
            let centre = t[j] / root;
            tij.column(j).iter().zip(xi.iter()).map(|(v, x)| x * (v - centre)).sum::<f64>().abs() / root
        })
        .fold(0.0, f64::max)
}

/// Order statistic `ceil((1 - alpha) B)` of sorted draws.
pub fn bootstrap_quantile(sorted: &[f64], alpha: f64) -> f64 {
    let b = sorted.len();
    let k = ((1.0 - alpha) * b as f64).ceil() as usize;
    sorted[k.clamp(1, b) - 1]
}

/// Max-type test of `beta_j = beta0_j` for all `j` in `coords`, calibrated by
/// a Gaussian multiplier bootstrap. All tested columns are removed from the
/// nuisance design; each gets its own feature regression.
pub fn multivariate_test(
    panel: &PanelData,
    beta0: &[f64],
    coords: &[usize],
    config: &MultiTestConfig,
) -> Result<BootstrapResult> {
    let d = coords.len();
    if d == 0 || beta0.len() != d {
        return Err(Error::InvalidInput("need one hypothesised value per tested column".into()));
    }
    if coords.iter().any(|&j| j >= panel.p()) || (1..d).any(|k| coords[..k].contains(&coords[k])) {
        return Err(Error::InvalidInput("tested columns must be distinct and in range".into()));
    }
    if config.reps < 100 {
        return Err(Error::InvalidInput("at least 100 bootstrap draws are required".into()));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::InvalidInput("alpha must lie in (0,1)".into()));
    }
    let n = panel.n();
    let nf = n as f64;
    let x = panel.design_without(coords);
    let mut v = panel.y.clone();
    for (k, &j) in coords.iter().enumerate() {
        v.axpy(-beta0[k], &panel.features.column(j), 1.0);
    }
    let dataset_for = |j: usize| -> Result<GroupedDataset> {
        let ds = GroupedDataset::new(
            v.clone(),
            x.clone(),
            panel.features.column(j).into_owned(),
            panel.w.clone(),
            panel.groups.clone(),
        )?;
        Ok(standardize_columns(&ds)?.dataset)
    };

    let first = dataset_for(coords[0])?;
    let proxy = build_proxy(&first, &config.proxy)?;
    let gamma_tuning = default_tuning(&first, &proxy, 0.0)?.params.scaled(config.scale);
    let (gamma, _, _) =
        with_auto_relax(&gamma_tuning, config.relax_rounds, |t| estimate_gamma(&first, 0.0, &proxy, t))?;
    let pr = proxy.mul_vec(&(first.y() - first.x() * &gamma.coef));
    let sigma = pr.norm() / nf.sqrt();
    if sigma < 1e-10 {
        return Err(Error::DegenerateVariance { sigma, sigma_u: f64::NAN });
    }

    let mut tij = DMatrix::zeros(n, d);
    let mut t = DVector::zeros(d);
    for (k, &j) in coords.iter().enumerate() {
        let ds = dataset_for(j)?;
        let tuning = default_tuning(&ds, &proxy, 0.0)?.params.scaled(config.scale);
        let (theta, _, _) = with_auto_relax(&tuning, config.relax_rounds, |tp| estimate_theta(&ds, &proxy, tp))?;
        let u = ds.z() - ds.x() * &theta.coef;
        let sigma_u = u.norm() / nf.sqrt();
        if sigma_u < 1e-10 {
            return Err(Error::DegenerateVariance { sigma, sigma_u });
        }
        for i in 0..n {
            tij[(i, k)] = u[i] * pr[i] / (sigma_u * sigma);
        }
        t[k] = tij.column(k).sum() / nf.sqrt();
    }

    let mut draws: Vec<f64> = (0..config.reps)
        .map(|b| {
            let mut rng = substream_rng(config.seed, b as u64);
            let xi = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            bootstrap_draw(&tij, &t, &xi)
        })
        .collect();
    draws.sort_by(f64::total_cmp);
    let t_max = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let quantile = bootstrap_quantile(&draws, config.alpha);
    let exceed = draws.iter().filter(|&&b| b > t_max).count();
    Ok(BootstrapResult {
        t_max,
        quantile,
        alpha: config.alpha,
        reject: t_max > quantile,
        per_coordinate: coords
            .iter()
            .enumerate()
            .map(|(k, &j)| CoordinateResult { column: j, t_stat: t[k], p_value: p_value(t[k], Alternative::TwoSided) })
            .collect(),
        reps: config.reps,
        p_value: exceed as f64 / config.reps as f64,
        seed: config.seed,
        draws,
    })
}
