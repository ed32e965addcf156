use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("column {0} of the design has (near) zero norm")]
    ZeroColumn(usize),

    #[error("block of group {group} is numerically singular")]
    SingularBlock { group: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("proxy matrix M is not invertible")]
    ProxyNotInvertible,

    #[error("block layouts do not match")]
    LayoutMismatch,

    #[error("singular submatrix in oracle computation")]
    SingularSubmatrix,

    #[error("linear program infeasible (implicated constraint families: {families:?})")]
    Infeasible { families: Vec<String> },

    #[error("linear program unbounded")]
    Unbounded,

    #[error("simplex iteration limit reached after {0} pivots")]
    IterationLimit(usize),

    #[error("tested covariate is explained exactly by the nuisance design")]
    CollinearZ,

    #[error("residual scale is degenerate ({0:e})")]
    DegenerateScale(f64),

    #[error("variance estimate is degenerate (sigma = {sigma:e}, sigma_u = {sigma_u:e})")]
    DegenerateVariance { sigma: f64, sigma_u: f64 },

    #[error("no sign change of the critical curve on the {side} side; one-sided bound {bound}")]
    NoSignChange { side: &'static str, bound: f64 },

    #[error("iteration did not converge after {iterations} steps")]
    NotConverged { iterations: usize },

    #[error("sparsity {s} does not fit into dimension {p}")]
    SparsityOverflow { s: usize, p: usize },
}

impl Error {
    /// Stable machine-readable code used by the command-line front-end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "E_INPUT",
            Error::ZeroColumn(_) => "E_ZERO_COLUMN",
            Error::SingularBlock { .. } => "E_SINGULAR_BLOCK",
            Error::NotPositiveDefinite(_) => "E_NOT_PD",
            Error::ProxyNotInvertible => "E_PROXY_SINGULAR",
            Error::LayoutMismatch => "E_LAYOUT",
            Error::SingularSubmatrix => "E_SINGULAR_SUBMATRIX",
            Error::Infeasible { .. } => "E_INFEASIBLE",
            Error::Unbounded => "E_UNBOUNDED",
            Error::IterationLimit(_) => "E_ITERATION_LIMIT",
            Error::CollinearZ => "E_COLLINEAR_Z",
            Error::DegenerateScale(_) => "E_DEGENERATE_SCALE",
            Error::DegenerateVariance { .. } => "E_DEGENERATE_VARIANCE",
            Error::NoSignChange { .. } => "E_NO_SIGN_CHANGE",
            Error::NotConverged { .. } => "E_NOT_CONVERGED",
            Error::SparsityOverflow { .. } => "E_SPARSITY",
        }
    }
}
