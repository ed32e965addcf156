//! Test statistics, p-values, confidence intervals and power for a tested
//! fixed effect, plus the multiplier-bootstrap max test, the GLMM variant and
//! restricted-likelihood proxy refinement.

mod bootstrap;
mod ci;
mod glmm;
mod power;
mod ranef;
mod refine;

pub use bootstrap::{
    bootstrap_draw, bootstrap_quantile, multivariate_test, BootstrapResult, CoordinateResult, MultiTestConfig,
};
pub use ci::{confidence_interval, ConfidenceInterval, TuningPolicy};
pub use glmm::{glmm_default_tuning, glmm_test, FeatureScale};
pub use power::{ci_halfwidth, ci_halfwidth_for, power_curve, power_from_drift, HalfWidth, PowerQuery, ProxyTraces};
pub use ranef::{predict_random_effects, RanefMode};
pub use refine::{refine_proxy, restricted_objective, run_refined_test, RefinedProxy, RefinedTestResult};
pub use test::{
    p_value, prepare_problem, run_test, statistic_from_estimates, test_statistic, Alternative, PipelineConfig,
    Statistic, TestDiagnostics, TestProblem, TestResult,
};
