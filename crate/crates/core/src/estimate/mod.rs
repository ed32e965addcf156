//! Initial fits, tuning recipes and the constrained-L1 estimators.

mod dantzig;
mod glmm;
mod lasso;
mod tuning;

pub use dantzig::{
    estimate_gamma, estimate_theta, evaluate_families, gamma_families, solve_l1, theta_families, with_auto_relax,
    ConstraintFamily, ConstraintKind, EstimateResult, FamilySlack, GAMMA_FAMILIES, THETA_FAMILIES,
};
pub use glmm::{estimate_gamma_glmm, estimate_theta_glmm, glmm_gamma_families, ExponentialFamily};
pub use lasso::{default_lambda0, scaled_lasso, ScaledLassoResult};
pub use tuning::{
    default_tuning, initial_variance_split, side_recipe, DefaultTuning, SideRecipe, TuningParams, TuningScale,
};
