//! Generative models for the simulation study, population oracles and the
//! seeded Monte Carlo harness.

mod design;
mod generate;
mod monte_carlo;

pub use design::{gen_beta, gen_beta_with, make_sigma, oracle_theta, support_positions, symmetric_sqrt, Design};
pub use generate::{
    gen_dataset, gen_dataset_cached, gen_glmm_dataset, sample_error_law, DesignCache, ErrorLaw, GroundTruth, GroupSizes, ModelSpec,
    RandomEffectDesign, SimDataset,
};
pub use monte_carlo::{lm_baseline, monte_carlo, rep_seed, MonteCarloOptions, RejectionReport, RepOutcome};
