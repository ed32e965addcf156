use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lmminfer::estimate::TuningScale;
use lmminfer::inference::Alternative;
use lmminfer::model::ProxySpec;

use crate::report::Format;

#[derive(Debug, Parser)]
#[command(name = "lmminfer", version, about = "Tests and confidence intervals for fixed effects in high-dimensional linear mixed models")]
pub struct Cli {
    /// Worker threads for simulations and the bootstrap (default: all cores).
    #[arg(long, global = true, env = "LMMINFER_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test H0: beta_j = beta0 for one column.
    Test(TestArgs),
    /// Confidence interval for one coefficient by test inversion.
    Ci(CiArgs),
    /// Monte Carlo rejection rates for built-in scenarios.
    Simulate(SimulateArgs),
    /// Simultaneous test of several coefficients (multiplier bootstrap).
    Mtest(MtestArgs),
    /// Write a simulated dataset as CSV.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProxyChoice {
    /// M = 2/(3q) I.
    Default,
    /// M = log(n) I.
    Logn,
    /// M = I.
    Identity,
    /// M = 0, i.e. no random-effect weighting.
    Zero,
}

impl ProxyChoice {
    pub fn spec(self, q: usize) -> ProxySpec {
        match self {
            ProxyChoice::Default => ProxySpec::scaled_identity(2.0 / (3.0 * q as f64), q),
            ProxyChoice::Logn => ProxySpec::LogNIdentity,
            ProxyChoice::Identity => ProxySpec::scaled_identity(1.0, q),
            ProxyChoice::Zero => ProxySpec::ZeroMatrix,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProxyChoice::Default => "default",
            ProxyChoice::Logn => "logn",
            ProxyChoice::Identity => "identity",
            ProxyChoice::Zero => "zero",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Alt {
    Two,
    Greater,
    Less,
}

impl From<Alt> for Alternative {
    fn from(a: Alt) -> Self {
        match a {
            Alt::Two => Alternative::TwoSided,
            Alt::Greater => Alternative::Greater,
            Alt::Less => Alternative::Less,
        }
    }
}

impl Alt {
    pub fn name(self) -> &'static str {
        match self {
            Alt::Two => "two",
            Alt::Greater => "greater",
            Alt::Less => "less",
        }
    }
}

/// `eta:mu:etabar` multipliers on the default tuning recipe.
pub fn parse_scale(s: &str) -> Result<TuningScale, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [eta, mu, etabar] = parts.as_slice() else {
        return Err(format!("expected eta:mu:etabar, got `{s}`"));
    };
    let num = |t: &str| -> Result<f64, String> {
        t.trim().parse::<f64>().ok().filter(|v| *v > 0.0 && v.is_finite()).ok_or_else(|| format!("invalid multiplier `{t}`"))
    };
    Ok(TuningScale { eta: num(eta)?, mu: num(mu)?, etabar: num(etabar)? })
}

/// `lo:hi` search bracket.
pub fn parse_bracket(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got `{s}`"))?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("invalid bound `{a}`"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("invalid bound `{b}`"))?;
    if !(lo <= hi) {
        return Err(format!("bracket lower bound {lo} exceeds upper bound {hi}"));
    }
    Ok((lo, hi))
}

pub fn parse_alpha(s: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|a| *a > 0.0 && *a < 1.0)
        .ok_or_else(|| format!("alpha must lie in (0,1), got `{s}`"))
}

pub fn scale_label(s: TuningScale) -> String {
    format!("{}:{}:{}", s.eta, s.mu, s.etabar)
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV with a header, a group column, `y` and numeric features.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "group")]
    pub group_col: String,
    /// Feature columns that also carry random slopes (default: random intercept).
    #[arg(long, value_delimiter = ',')]
    pub random_cols: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct MethodArgs {
    #[arg(long, value_enum, default_value_t = ProxyChoice::Default)]
    pub proxy: ProxyChoice,
    /// Multipliers `eta:mu:etabar` on the default tuning.
    #[arg(long, default_value = "1:1:1", value_parser = parse_scale)]
    pub tuning_scale: TuningScale,
    /// Rounds of bound relaxation allowed when a program is infeasible.
    #[arg(long, default_value_t = 0)]
    pub auto_relax: usize,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Report destination (default: standard output).
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub test_col: String,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub beta0: f64,
    #[arg(long, value_enum, default_value_t = Alt::Two)]
    pub alt: Alt,
    #[arg(long, default_value = "0.05", value_parser = parse_alpha)]
    pub alpha: f64,
    #[command(flatten)]
    pub method: MethodArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CiArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub test_col: String,
    #[arg(long, default_value = "0.05", value_parser = parse_alpha)]
    pub alpha: f64,
    /// Search range `lo:hi` for the interval end points.
    #[arg(long, default_value = "-10:10", value_parser = parse_bracket, allow_hyphen_values = true)]
    pub bracket: (f64, f64),
    #[command(flatten)]
    pub method: MethodArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct MtestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated tested columns.
    #[arg(long, value_delimiter = ',', required = true)]
    pub test_cols: Vec<String>,
    /// Null values, one per tested column or a single shared value.
    #[arg(long, value_delimiter = ',', default_value = "0", allow_hyphen_values = true)]
    pub beta0: Vec<f64>,
    #[arg(long, default_value = "0.05", value_parser = parse_alpha)]
    pub alpha: f64,
    /// Bootstrap draws (at least 100).
    #[arg(long, default_value_t = 1000)]
    pub bootstrap_reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub method: MethodArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// model1..model5, table2, table3 (optionally suffixed -model1/-model2) or table4.
    #[arg(long)]
    pub preset: String,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "0.05", value_parser = parse_alpha)]
    pub alpha: f64,
    /// Use n=120, p=150, 30 groups, s=3.
    #[arg(long)]
    pub reduced: bool,
    /// Local alternatives to run (overrides the preset grid).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub h: Vec<f64>,
    /// Sparsity of the coefficient vector (overrides the preset).
    #[arg(long)]
    pub sparsity: Option<usize>,
    /// Proxy for single-model presets.
    #[arg(long, value_enum)]
    pub proxy: Option<ProxyChoice>,
    #[arg(long, default_value = "1:1:1", value_parser = parse_scale)]
    pub tuning_scale: TuningScale,
    #[arg(long, default_value_t = 3)]
    pub auto_relax: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    /// model1..model5.
    #[arg(long, default_value = "model1")]
    pub preset: String,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub h: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub reduced: bool,
    /// Override the sample size.
    #[arg(long)]
    pub n: Option<usize>,
    /// CSV destination (default: standard output, metadata to standard error).
    #[arg(long)]
    pub output: Option<PathBuf>,
}
