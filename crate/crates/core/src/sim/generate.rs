use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Poisson, StandardNormal, StudentT};
use serde::Serialize;

use super::design::{gen_beta_with, make_sigma, symmetric_sqrt, Design};
use crate::error::{Error, Result};
use crate::estimate::ExponentialFamily;
use crate::model::{GroupedDataset, PanelData};
use crate::rng::substream_rng;

/// Law of the standardised design innovations and of the noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ErrorLaw {
    Gaussian,
    /// Student-t with `df > 2` degrees of freedom, rescaled to unit variance.
    StudentT(f64),
}

impl ErrorLaw {
    fn sampler(&self) -> Result<Sampler> {
        match *self {
            ErrorLaw::Gaussian => Ok(Sampler::Gaussian),
            ErrorLaw::StudentT(df) if df > 2.0 => Ok(Sampler::T(
                StudentT::new(df).map_err(|e| Error::InvalidInput(e.to_string()))?,
                ((df - 2.0) / df).sqrt(),
            )),
            ErrorLaw::StudentT(df) => Err(Error::InvalidInput(format!("t degrees of freedom must exceed 2, got {df}"))),
        }
    }
}

enum Sampler {
    Gaussian,
    T(StudentT<f64>, f64),
}

impl Sampler {
    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Gaussian => StandardNormal.sample(rng),
            Sampler::T(t, scale) => t.sample(rng) * scale,
        }
    }
}

/// Unit-variance draws from `law`, for checking the normalisation.
pub fn sample_error_law<R: Rng>(law: ErrorLaw, count: usize, rng: &mut R) -> Result<Vec<f64>> {
    let s = law.sampler()?;
    Ok((0..count).map(|_| s.draw(rng)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum GroupSizes {
    Uniform(usize),
    Explicit(Vec<usize>),
}

/// Columns carrying the random effects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RandomEffectDesign {
    /// First `q` columns of the full design.
    LeadingColumns,
    /// A single all-ones column.
    Intercept,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelSpec {
    pub name: String,
    pub n: usize,
    pub p: usize,
    pub groups: GroupSizes,
    pub design: Design,
    pub error: ErrorLaw,
    pub q: usize,
    #[serde(skip)]
    pub psi: DMatrix<f64>,
    pub random_effects: RandomEffectDesign,
    pub sigma_eps_sq: f64,
    pub sparsity: usize,
    pub magnitude: f64,
    pub h: f64,
    /// 0-based tested column.
    pub tested: usize,
    pub seed: u64,
}

impl ModelSpec {
    /// Toeplitz(-0.5), n=200, p=500, 50 groups of 4, q=2, psi = 0.56 I, s=5,
    /// tested column 4 (1-based).
    pub fn model1(h: f64) -> Self {
        Self {
            name: "model1".into(),
            n: 200,
            p: 500,
            groups: GroupSizes::Uniform(4),
            design: Design::Toeplitz(-0.5),
            error: ErrorLaw::Gaussian,
            q: 2,
            psi: DMatrix::from_diagonal(&DVector::from_vec(vec![0.56, 0.56])),
            random_effects: RandomEffectDesign::LeadingColumns,
            sigma_eps_sq: 1.0,
            sparsity: 5,
            magnitude: 5.0,
            h,
            tested: 3,
            seed: 0,
        }
    }

    /// Model 1 with q=3 and psi = diag(3, 3, 2).
    pub fn model2(h: f64) -> Self {
        Self {
            name: "model2".into(),
            q: 3,
            psi: DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 3.0, 2.0])),
            ..Self::model1(h)
        }
    }

    /// Model 1 with the tridiagonal covariance.
    pub fn model3(h: f64, rho: f64) -> Self {
        Self { name: "model3".into(), design: Design::BandedSigma(rho), ..Self::model1(h) }
    }

    /// Model 1 with t(10) innovations.
    pub fn model4(h: f64) -> Self {
        Self { name: "model4".into(), error: ErrorLaw::StudentT(10.0), ..Self::model1(h) }
    }

    /// Model 1 with t(3) innovations.
    pub fn model5(h: f64) -> Self {
        Self { name: "model5".into(), error: ErrorLaw::StudentT(3.0), ..Self::model1(h) }
    }

    pub fn by_name(name: &str, h: f64) -> Option<Self> {
        match name {
            "model1" => Some(Self::model1(h)),
            "model2" => Some(Self::model2(h)),
            "model3" => Some(Self::model3(h, 0.3)),
            "model4" => Some(Self::model4(h)),
            "model5" => Some(Self::model5(h)),
            _ => None,
        }
    }

    /// Smaller instance of the same model: n=120, p=150, 30 groups of 4, s=3.
    pub fn reduced(self) -> Self {
        Self {
            name: format!("{}-reduced", self.name),
            n: 120,
            p: 150,
            groups: GroupSizes::Uniform(4),
            sparsity: 3,
            ..self
        }
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn with_sparsity(mut self, s: usize) -> Self {
        self.sparsity = s;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        match &self.groups {
            GroupSizes::Uniform(m) => vec![*m; self.n / m.max(&1)],
            GroupSizes::Explicit(v) => v.clone(),
        }
    }

    pub fn num_groups(&self) -> usize {
        self.group_sizes().len()
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = self.group_sizes();
        if sizes.iter().sum::<usize>() != self.n || sizes.iter().any(|&m| m == 0) {
            return Err(Error::InvalidInput(format!("group sizes do not add up to n = {}", self.n)));
        }
        if self.tested >= self.p {
            return Err(Error::InvalidInput("tested column out of range".into()));
        }
        let q_cols = match self.random_effects {
            RandomEffectDesign::LeadingColumns => self.q,
            RandomEffectDesign::Intercept => 1,
        };
        if self.psi.shape() != (q_cols, q_cols) || self.q != q_cols || self.q > self.p {
            return Err(Error::InvalidInput("psi must be q x q with q matching the random-effect design".into()));
        }
        if !(self.sigma_eps_sq >= 0.0) {
            return Err(Error::InvalidInput("noise variance must be nonnegative".into()));
        }
        if super::design::support_positions(self.sparsity).last().is_some_and(|&k| k > self.p) {
            return Err(Error::SparsityOverflow { s: self.sparsity, p: self.p });
        }
        self.error.sampler().map(|_| ())
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Generating coefficients including the local shift of the tested entry.
    pub beta: DVector<f64>,
    /// Null value: the tested entry before the shift.
    pub beta0: f64,
    pub b: Vec<DVector<f64>>,
    pub sigma: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    pub sigma_eps_sq: f64,
}

#[derive(Debug, Clone)]
pub struct SimDataset {
    pub panel: PanelData,
    pub truth: GroundTruth,
    pub tested: usize,
}

impl SimDataset {
    /// Dataset with the tested column split off as `Z`.
    pub fn grouped(&self) -> Result<GroupedDataset> {
        self.panel.hold_out(self.tested)
    }
}

/// Precomputed covariance and its symmetric root for repeated draws.
#[derive(Debug, Clone)]
pub struct DesignCache {
    pub sigma: DMatrix<f64>,
    pub root: DMatrix<f64>,
}

impl DesignCache {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        let sigma = make_sigma(spec.design, spec.p)?;
        let root = symmetric_sqrt(&sigma);
        Ok(Self { sigma, root })
    }
}

pub fn gen_dataset(spec: &ModelSpec) -> Result<SimDataset> {
    gen_dataset_cached(spec, &DesignCache::new(spec)?)
}

/// Draws one dataset from `spec` using `spec.seed`. Independent substreams
/// feed the coefficients, the design, the random effects and the noise.
pub fn gen_dataset_cached(spec: &ModelSpec, cache: &DesignCache) -> Result<SimDataset> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let law = spec.error.sampler()?;

    let mut rng = substream_rng(spec.seed, 0);
    let mut beta = gen_beta_with(spec.sparsity, p, spec.magnitude, &mut rng)?;
    let beta0 = beta[spec.tested];
    beta[spec.tested] += spec.h / (n as f64).sqrt();

    let mut rng = substream_rng(spec.seed, 1);
    let xi = DMatrix::from_fn(n, p, |_, _| law.draw(&mut rng));
    let x = xi * &cache.root;

    let w = match spec.random_effects {
        RandomEffectDesign::LeadingColumns => x.columns(0, spec.q).into_owned(),
        RandomEffectDesign::Intercept => DMatrix::from_element(n, 1, 1.0),
    };
    let psi_root = symmetric_sqrt(&spec.psi);
    let mut rng = substream_rng(spec.seed, 2);
    let sizes = spec.group_sizes();
    let b: Vec<DVector<f64>> = sizes
        .iter()
        .map(|_| &psi_root * DVector::from_fn(spec.q, |_, _| StandardNormal.sample(&mut rng)))
        .collect();

    let mut rng = substream_rng(spec.seed, 3);
    let noise_sd = spec.sigma_eps_sq.sqrt();
    let mut y = &x * &beta;
    let mut start = 0;
    for (g, &m) in sizes.iter().enumerate() {
        let wb = w.rows(start, m) * &b[g];
        for i in 0..m {
            y[start + i] += wb[i] + noise_sd * law.draw(&mut rng);
        }
        start += m;
    }

    let panel = PanelData::new(y, x, w, sizes, None)?;
    Ok(SimDataset {
        panel,
        truth: GroundTruth {
            beta,
            beta0,
            b,
            sigma: cache.sigma.clone(),
            psi: spec.psi.clone(),
            sigma_eps_sq: spec.sigma_eps_sq,
        },
        tested: spec.tested,
    })
}

/// Draws a GLMM dataset: design, coefficients and random effects as in
/// [`gen_dataset_cached`], responses from `family` at the linear predictor
/// `X beta + W b` (the noise law and variance are unused).
pub fn gen_glmm_dataset(spec: &ModelSpec, family: ExponentialFamily, cache: &DesignCache) -> Result<SimDataset> {
    let base = gen_dataset_cached(&ModelSpec { sigma_eps_sq: 0.0, ..spec.clone() }, cache)?;
    let eta = base.panel.y.clone();
    let mut rng = substream_rng(spec.seed, 4);
    let mut draw_err = None;
    let y = eta.map(|e| {
        let m = family.mean(e);
        match family {
            ExponentialFamily::Gaussian => m + spec.sigma_eps_sq.sqrt() * {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            },
            ExponentialFamily::BernoulliLogit => f64::from(u8::from(Bernoulli::new(m).unwrap().sample(&mut rng))),
            ExponentialFamily::PoissonLog => match Poisson::new(m) {
                Ok(d) => d.sample(&mut rng),
                Err(e) => {
                    draw_err = Some(e.to_string());
                    0.0
                }
            },
        }
    });
    if let Some(e) = draw_err {
        return Err(Error::InvalidInput(format!("Poisson mean out of range: {e}")));
    }
    let panel = PanelData { y, ..base.panel };
    Ok(SimDataset { panel, ..base })
}
