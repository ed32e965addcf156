use std::io::Write;

use lmminfer::estimate::{TuningParams, TuningScale};
use lmminfer::inference::{
    confidence_interval, multivariate_test, prepare_problem, test_statistic, MultiTestConfig, PipelineConfig,
    TuningPolicy,
};
use lmminfer::model::PanelData;
use lmminfer::sim::{gen_dataset, monte_carlo, ModelSpec, MonteCarloOptions, RandomEffectDesign, RejectionReport};

use crate::args::{
    scale_label, CiArgs, DataArgs, GenerateArgs, MethodArgs, MtestArgs, OutputArgs, ProxyChoice, SimulateArgs, TestArgs,
};
use crate::data::{feature_index, fmt_f64, read_panel_file, write_panel, LoadedData, RandomEffects};
use crate::error::{CliError, CliResult};
use crate::report::{Format, Report};

pub const H_GRID: [f64; 7] = [-6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0];

fn emit(out: &OutputArgs, text: &str) -> CliResult<()> {
    match &out.output {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::io("<stdout>", e)),
    }
}

fn load(data: &DataArgs) -> CliResult<LoadedData> {
    read_panel_file(&data.input, &data.group_col, &RandomEffects::from_list(&data.random_cols))
}

fn pipeline(method: &MethodArgs, q: usize, alternative: lmminfer::inference::Alternative) -> PipelineConfig {
    PipelineConfig { proxy: method.proxy.spec(q), scale: method.tuning_scale, alternative, relax_rounds: method.auto_relax }
}

fn data_fields(r: &mut Report, args: &DataArgs, panel: &PanelData) {
    r.text("input", args.input.display().to_string())
        .text("group_col", &args.group_col)
        .text("random_effects", RandomEffects::from_list(&args.random_cols).describe())
        .int("n", panel.n())
        .int("features", panel.p())
        .int("q", panel.w.ncols())
        .int("groups", panel.groups.len());
}

fn method_fields(r: &mut Report, m: &MethodArgs) {
    r.text("proxy", m.proxy.name()).text("tuning_scale", scale_label(m.tuning_scale)).int("auto_relax", m.auto_relax);
}

fn relaxed(t: &TuningParams, rounds: usize) -> TuningParams {
    (0..rounds).fold(*t, |t, _| t.relaxed())
}

pub fn cmd_test(args: &TestArgs) -> CliResult<Report> {
    let loaded = load(&args.data)?;
    let panel = &loaded.panel;
    let data = panel.hold_out(feature_index(panel, &args.test_col)?)?;
    let config = pipeline(&args.method, panel.w.ncols(), args.alt.into());
    let problem = prepare_problem(&data, args.beta0, &config)?;
    let res = test_statistic(&problem)?;
    let d = &res.diagnostics;
    let tg = relaxed(&problem.tuning, d.gamma_relax_rounds);
    let tt = relaxed(&problem.tuning, d.theta_relax_rounds);

    let mut r = Report::default();
    r.text("command", "test");
    data_fields(&mut r, &args.data, panel);
    r.text("test_col", &args.test_col)
        .float("beta0", args.beta0)
        .text("alt", args.alt.name())
        .float("alpha", args.alpha);
    method_fields(&mut r, &args.method);
    r.float("t_stat", res.t_stat)
        .float("p_value", res.p_value)
        .flag("reject", res.p_value <= args.alpha)
        .float("sigma_hat", res.sigma_hat)
        .float("sigma_u_hat", res.sigma_u_hat)
        .int("gamma_nnz", res.gamma_nnz)
        .int("theta_nnz", res.theta_nnz)
        .float("eta_gamma", tg.eta_gamma)
        .float("etabar_gamma", tg.etabar_gamma)
        .float("mu_gamma", tg.mu_gamma)
        .float("eta_theta", tt.eta_theta)
        .float("eta_theta_prime", tt.eta_theta_prime)
        .float("etabar_theta", tt.etabar_theta)
        .float("mu_theta", tt.mu_theta)
        .text("gamma_status", format!("{:?}", d.gamma_status))
        .text("theta_status", format!("{:?}", d.theta_status))
        .float("gamma_min_slack", d.gamma_min_slack)
        .float("theta_min_slack", d.theta_min_slack)
        .int("gamma_relax_rounds", d.gamma_relax_rounds)
        .int("theta_relax_rounds", d.theta_relax_rounds)
        .int("lp_iterations", d.lp_iterations);
    Ok(r)
}

pub fn cmd_ci(args: &CiArgs) -> CliResult<Report> {
    let loaded = load(&args.data)?;
    let panel = &loaded.panel;
    let data = panel.hold_out(feature_index(panel, &args.test_col)?)?;
    let config = pipeline(&args.method, panel.w.ncols(), lmminfer::inference::Alternative::TwoSided);
    let (lo, hi) = args.bracket;
    let problem = prepare_problem(&data, 0.5 * (lo + hi), &config)?;
    // the recipe is re-run along the bracket unless the bounds are rescaled
    let (policy, policy_name) = if args.method.tuning_scale == TuningScale::default() {
        (TuningPolicy::Recipe, "recipe")
    } else {
        (TuningPolicy::Fixed(problem.tuning), "fixed")
    };
    let ci = confidence_interval(&problem.dataset, args.alpha, &problem.proxy, policy, args.bracket, args.method.auto_relax)?;

    let mut r = Report::default();
    r.text("command", "ci");
    data_fields(&mut r, &args.data, panel);
    r.text("test_col", &args.test_col).float("alpha", args.alpha).float("bracket_lo", lo).float("bracket_hi", hi);
    method_fields(&mut r, &args.method);
    r.text("tuning_policy", policy_name)
        .float("lower", ci.lower)
        .float("upper", ci.upper)
        .float("center", ci.center)
        .int("evaluations", ci.evaluations);
    Ok(r)
}

pub fn cmd_mtest(args: &MtestArgs) -> CliResult<Report> {
    let loaded = load(&args.data)?;
    let panel = &loaded.panel;
    let coords = args.test_cols.iter().map(|c| feature_index(panel, c)).collect::<CliResult<Vec<_>>>()?;
    let beta0 = match args.beta0.len() {
        1 => vec![args.beta0[0]; coords.len()],
        k if k == coords.len() => args.beta0.clone(),
        k => return Err(CliError::Usage(format!("{k} null values for {} tested columns", coords.len()))),
    };
    let q = panel.w.ncols();
    let config = MultiTestConfig {
        alpha: args.alpha,
        reps: args.bootstrap_reps,
        seed: args.seed,
        proxy: args.method.proxy.spec(q),
        scale: args.method.tuning_scale,
        relax_rounds: args.method.auto_relax,
    };
    let res = multivariate_test(panel, &beta0, &coords, &config)?;

    let mut r = Report::default();
    r.text("command", "mtest");
    data_fields(&mut r, &args.data, panel);
    r.text("test_cols", args.test_cols.join(","))
        .text("beta0", beta0.iter().map(|&b| fmt_f64(b)).collect::<Vec<_>>().join(","))
        .float("alpha", args.alpha)
        .int("bootstrap_reps", res.reps)
        .int("seed", res.seed);
    method_fields(&mut r, &args.method);
    for (name, c) in args.test_cols.iter().zip(&res.per_coordinate) {
        r.float(&format!("t_stat.{name}"), c.t_stat).float(&format!("p_value.{name}"), c.p_value);
    }
    r.float("t_max", res.t_max).float("quantile", res.quantile).float("p_value", res.p_value).flag("reject", res.reject);
    Ok(r)
}

fn model(name: &str, h: f64) -> CliResult<ModelSpec> {
    ModelSpec::by_name(name, h).ok_or_else(|| CliError::Usage(format!("unknown model `{name}` (expected model1..model5)")))
}

/// One line of a simulation table.
#[derive(Debug, Clone)]
pub struct SimRow {
    pub spec: ModelSpec,
    pub proxy: ProxyChoice,
    pub scale: TuningScale,
}

pub fn expand_preset(args: &SimulateArgs) -> CliResult<Vec<SimRow>> {
    let hs: Vec<f64> = if args.h.is_empty() { H_GRID.to_vec() } else { args.h.clone() };
    let shape = |mut spec: ModelSpec, sparsity: Option<usize>| {
        if args.reduced {
            spec = spec.reduced();
        }
        match sparsity.or(args.sparsity) {
            Some(s) => spec.with_sparsity(s),
            None => spec,
        }
    };
    let (table, models): (&str, Vec<&str>) = match args.preset.split_once('-') {
        Some((t, m)) => (t, vec![m]),
        None if args.preset.starts_with("table") => (args.preset.as_str(), vec!["model1", "model2"]),
        None => ("", vec![args.preset.as_str()]),
    };
    let proxies = match table {
        "" => vec![args.proxy.unwrap_or(ProxyChoice::Default)],
        "table2" => vec![ProxyChoice::Zero, ProxyChoice::Default],
        "table3" => vec![ProxyChoice::Default, ProxyChoice::Logn],
        "table4" => {
            if !args.h.is_empty() || args.sparsity.is_some() || args.preset != "table4" {
                return Err(CliError::Usage("table4 fixes model, h and sparsity; drop --h/--sparsity".into()));
            }
            let mut scales = Vec::new();
            for mu in [0.5, 1.0, 2.0] {
                for eta in [0.5, 1.0, 2.0] {
                    scales.push(TuningScale { eta, mu, etabar: 1.0 });
                }
            }
            scales.push(TuningScale { eta: 1.0, mu: 1.0, etabar: 0.5 });
            scales.push(TuningScale { eta: 1.0, mu: 1.0, etabar: 2.0 });
            let mut rows = Vec::new();
            for (h, s) in [(0.0, 40), (4.0, 5)] {
                for &scale in &scales {
                    rows.push(SimRow { spec: shape(model("model1", h)?, Some(s)), proxy: ProxyChoice::Default, scale });
                }
            }
            return Ok(rows);
        }
        other => return Err(CliError::Usage(format!("unknown preset `{other}`"))),
    };
    let mut rows = Vec::new();
    for m in models {
        for &proxy in &proxies {
            for &h in &hs {
                rows.push(SimRow { spec: shape(model(m, h)?, None), proxy, scale: args.tuning_scale });
            }
        }
    }
    Ok(rows)
}

pub struct SimulationTable {
    pub header: Report,
    pub rows: Vec<(SimRow, RejectionReport)>,
}

pub fn cmd_simulate(args: &SimulateArgs, threads: Option<usize>) -> CliResult<SimulationTable> {
    let rows = expand_preset(args)?;
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let mut options = MonteCarloOptions::for_spec(&row.spec).with_proxy(row.proxy.spec(row.spec.q));
        options.pipeline.scale = row.scale;
        options.pipeline.relax_rounds = args.auto_relax;
        options.threads = threads;
        let report = monte_carlo(&row.spec, args.reps, args.alpha, args.seed, &options)?;
        out.push((row, report));
    }
    let mut header = Report::default();
    header
        .text("command", "simulate")
        .text("preset", &args.preset)
        .int("reps", args.reps)
        .int("seed", args.seed)
        .float("alpha", args.alpha)
        .flag("reduced", args.reduced)
        .int("auto_relax", args.auto_relax);
    Ok(SimulationTable { header, rows: out })
}

const SIM_COLUMNS: [&str; 16] = [
    "model", "n", "p", "s", "h", "proxy", "eta_mult", "mu_mult", "etabar_mult", "reps", "completed", "rejections",
    "rejection_rate", "mc_se", "failures", "relaxed",
];

fn sim_row_report(row: &SimRow, rep: &RejectionReport) -> Report {
    let mut r = Report::default();
    r.text("model", &row.spec.name)
        .int("n", row.spec.n)
        .int("p", row.spec.p)
        .int("s", row.spec.sparsity)
        .float("h", row.spec.h)
        .text("proxy", row.proxy.name())
        .float("eta_mult", row.scale.eta)
        .float("mu_mult", row.scale.mu)
        .float("etabar_mult", row.scale.etabar)
        .int("reps", rep.reps)
        .int("completed", rep.completed)
        .int("rejections", rep.rejections)
        .float("rejection_rate", rep.rejection_rate)
        .float("mc_se", rep.monte_carlo_se)
        .int("failures", rep.failures)
        .int("relaxed", rep.relaxed);
    r
}

impl SimulationTable {
    /// Tab-separated table preceded by `# key=value` configuration lines.
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Text => {
                let mut out: String = self.header.to_text().lines().map(|l| format!("# {l}\n")).collect();
                out.push_str(&SIM_COLUMNS.join("\t"));
                out.push('\n');
                for (row, rep) in &self.rows {
                    let text = sim_row_report(row, rep).to_text();
                    let cells: Vec<&str> = text.lines().map(|l| l.split_once('=').map_or("", |(_, v)| v)).collect();
                    out.push_str(&cells.join("\t"));
                    out.push('\n');
                }
                out
            }
            Format::Json => {
                let rows: Vec<_> = self.rows.iter().map(|(row, rep)| sim_row_report(row, rep).to_json()).collect();
                let doc = serde_json::json!({ "config": self.header.to_json(), "rows": rows });
                serde_json::to_string_pretty(&doc).expect("table is valid json") + "\n"
            }
        }
    }
}

pub fn cmd_generate(args: &GenerateArgs) -> CliResult<(Report, PanelData)> {
    let mut spec = model(&args.preset, args.h)?;
    if args.reduced {
        spec = spec.reduced();
    }
    if let Some(n) = args.n {
        spec.n = n;
    }
    let spec = spec.with_seed(args.seed);
    let sim = gen_dataset(&spec)?;
    let panel = sim.panel;
    let random_cols = match spec.random_effects {
        RandomEffectDesign::LeadingColumns => panel.feature_names[..spec.q].join(","),
        RandomEffectDesign::Intercept => String::new(),
    };
    let mut r = Report::default();
    r.text("command", "generate")
        .text("preset", &args.preset)
        .flag("reduced", args.reduced)
        .int("n", spec.n)
        .int("p", spec.p)
        .int("q", spec.q)
        .int("s", spec.sparsity)
        .float("h", spec.h)
        .int("seed", args.seed)
        .text("random_cols", random_cols)
        .text("tested_col", &panel.feature_names[spec.tested])
        .float("beta0", sim.truth.beta0)
        .float("beta_tested", sim.truth.beta[spec.tested]);
    Ok((r, panel))
}

pub fn write_generated(args: &GenerateArgs, report: &Report, panel: &PanelData) -> CliResult<()> {
    match &args.output {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
            write_panel(std::io::BufWriter::new(file), panel)?;
            print!("{}", report.to_text());
        }
        None => {
            write_panel(std::io::stdout().lock(), panel)?;
            eprint!("{}", report.to_text());
        }
    }
    Ok(())
}

pub fn emit_report(out: &OutputArgs, report: &Report) -> CliResult<()> {
    emit(out, &report.render(out.format))
}

pub fn emit_table(out: &OutputArgs, table: &SimulationTable) -> CliResult<()> {
    emit(out, &table.render(out.format))
}
