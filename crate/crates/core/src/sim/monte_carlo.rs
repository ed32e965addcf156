use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::generate::{gen_dataset_cached, DesignCache, ModelSpec};
use crate::error::{Error, Result};
use crate::inference::{run_test, PipelineConfig, TestResult};
use crate::model::{GroupedDataset, ProxySpec};
use crate::rng::substream_seed;

#[derive(Debug, Clone)]
pub struct MonteCarloOptions {
    pub pipeline: PipelineConfig,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl MonteCarloOptions {
    /// Default proxy for the spec's random-effect dimension.
    pub fn for_spec(spec: &ModelSpec) -> Self {
        Self { pipeline: PipelineConfig::default_for(spec.q), threads: None }
    }

    pub fn with_proxy(mut self, proxy: ProxySpec) -> Self {
        self.pipeline.proxy = proxy;
        self
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, Serialize)]
pub struct RepOutcome {
    pub rep: usize,
    pub t_stat: Option<f64>,
    pub p_value: Option<f64>,
    pub gamma_nnz: usize,
    pub theta_nnz: usize,
    pub relaxed: bool,
    pub error: Option<&'static str>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RejectionReport {
    pub spec: ModelSpec,
    pub proxy: String,
    pub reps: usize,
    pub alpha: f64,
    pub master_seed: u64,
    /// Replications that produced a statistic.
    pub completed: usize,
    pub rejections: usize,
    /// `rejections / completed`
    pub rejection_rate: f64,
    /// `sqrt(r (1 - r) / completed)`
    pub monte_carlo_se: f64,
    pub failures: usize,
    pub failure_codes: BTreeMap<String, usize>,
    /// Replications that needed auto-relaxed bounds.
    pub relaxed: usize,
    pub mean_gamma_nnz: f64,
    pub mean_theta_nnz: f64,
    #[serde(skip)]
    pub outcomes: Vec<RepOutcome>,
}

impl RejectionReport {
    pub fn t_stats(&self) -> Vec<f64> {
        self.outcomes.iter().filter_map(|o| o.t_stat).collect()
    }

    pub fn p_values(&self) -> Vec<f64> {
        self.outcomes.iter().filter_map(|o| o.p_value).collect()
    }
}

/// Seed of replication `rep` under `master_seed`.
pub fn rep_seed(master_seed: u64, rep: usize) -> u64 {
    substream_seed(master_seed, rep as u64)
}

fn run_rep(spec: &ModelSpec, cache: &DesignCache, rep: usize, master_seed: u64, config: &PipelineConfig) -> Result<TestResult> {
    let spec = spec.clone().with_seed(rep_seed(master_seed, rep));
    let sim = gen_dataset_cached(&spec, cache)?;
    let data = sim.grouped()?;
    run_test(&data, sim.truth.beta0, config)
}

/// Replicates the full test pipeline `reps` times. Each replication draws its
/// data from its own seed, so the counts do not depend on the thread count.
/// Failed replications are counted, not fatal.
pub fn monte_carlo(
    spec: &ModelSpec,
    reps: usize,
    alpha: f64,
    master_seed: u64,
    options: &MonteCarloOptions,
) -> Result<RejectionReport> {
    if reps == 0 {
        return Err(Error::InvalidInput("at least one replication is required".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput("alpha must lie in (0,1)".into()));
    }
    spec.validate()?;
    let cache = DesignCache::new(spec)?;
    let config = &options.pipeline;
    let work = || -> Vec<RepOutcome> {
        (0..reps)
            .into_par_iter()
            .map(|rep| match run_rep(spec, &cache, rep, master_seed, config) {
                Ok(r) => RepOutcome {
                    rep,
                    t_stat: Some(r.t_stat),
                    p_value: Some(r.p_value),
                    gamma_nnz: r.gamma_nnz,
                    theta_nnz: r.theta_nnz,
                    relaxed: r.diagnostics.gamma_relax_rounds + r.diagnostics.theta_relax_rounds > 0,
                    error: None,
                },
                Err(e) => RepOutcome {
                    rep,
                    t_stat: None,
                    p_value: None,
                    gamma_nnz: 0,
                    theta_nnz: 0,
                    relaxed: false,
                    error: Some(e.code()),
                },
            })
            .collect()
    };
    let outcomes = match options.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::InvalidInput(e.to_string()))?
            .install(work),
        None => work(),
    };
    Ok(summarise(spec, config, reps, alpha, master_seed, outcomes))
}

fn summarise(
    spec: &ModelSpec,
    config: &PipelineConfig,
    reps: usize,
    alpha: f64,
    master_seed: u64,
    outcomes: Vec<RepOutcome>,
) -> RejectionReport {
    let done: Vec<&RepOutcome> = outcomes.iter().filter(|o| o.error.is_none()).collect();
    let completed = done.len();
    let rejections = done.iter().filter(|o| o.p_value.unwrap() <= alpha).count();
    let rate = if completed > 0 { rejections as f64 / completed as f64 } else { f64::NAN };
    let mut failure_codes = BTreeMap::new();
    for o in &outcomes {
        if let Some(code) = o.error {
            *failure_codes.entry(code.to_string()).or_insert(0) += 1;
        }
    }
    let mean = |f: &dyn Fn(&RepOutcome) -> usize| {
        if completed == 0 {
            f64::NAN
        } else {
            done.iter().map(|o| f(o) as f64).sum::<f64>() / completed as f64
        }
    };
    RejectionReport {
        spec: spec.clone(),
        proxy: config.proxy.label(),
        reps,
        alpha,
        master_seed,
        completed,
        rejections,
        rejection_rate: rate,
        monte_carlo_se: (rate * (1.0 - rate) / completed.max(1) as f64).sqrt(),
        failures: reps - completed,
        failure_codes,
        relaxed: done.iter().filter(|o| o.relaxed).count(),
        mean_gamma_nnz: mean(&|o| o.gamma_nnz),
        mean_theta_nnz: mean(&|o| o.theta_nnz),
        outcomes,
    }
}

/// The same pipeline with `P~ = I`, i.e. ignoring the grouping.
pub fn lm_baseline(dataset: &GroupedDataset, beta0: f64, config: &PipelineConfig) -> Result<TestResult> {
    let config = PipelineConfig { proxy: ProxySpec::ZeroMatrix, ..config.clone() };
    run_test(dataset, beta0, &config)
}
