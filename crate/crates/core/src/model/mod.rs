//! Grouped data, block-diagonal algebra and precision matrices.

mod blockdiag;
mod dataset;
mod diagnostics;
mod proxy;

pub use blockdiag::{block_trace, block_triple_trace, BlockDiagMatrix};
pub use dataset::{group_ranges, standardize_columns, GroupedDataset, PanelData, Standardized};
pub use diagnostics::{
    check_p_condition, sample_restricted_eigenvalue, PConditionReport, RestrictedEigenvalueEstimate,
};
pub use proxy::{
    build_proxy, precision_long_form, proxy_from_design, true_precision, true_precision_verified,
    ProxySpec, RandomEffectSpec,
};
