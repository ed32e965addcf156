use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use lmminfer::sim::{gen_dataset, ModelSpec};
use lmminfer_cli::data::{read_panel, write_panel, RandomEffects};
use tempfile::TempDir;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn lmminfer(args: &[&str]) -> Run {
    lmminfer_env(args, &[])
}

fn lmminfer_env(args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lmminfer"));
    cmd.args(args).env_remove("LMMINFER_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn fields(text: &str) -> HashMap<String, String> {
    text.lines().filter_map(|l| l.split_once('=')).map(|(k, v)| (k.to_owned(), v.to_owned())).collect()
}

fn num(map: &HashMap<String, String>, key: &str) -> f64 {
    map.get(key).unwrap_or_else(|| panic!("missing `{key}`")).parse().unwrap()
}

/// Generates a dataset with the CLI and returns its path and metadata.
fn generate(dir: &Path, name: &str, extra: &[&str]) -> (PathBuf, HashMap<String, String>) {
    let path = dir.join(name);
    let mut args = vec!["generate", "--output", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    let run = lmminfer(&args);
    assert_eq!(run.code, 0, "{}", run.stderr);
    (path, fields(&run.stdout))
}

#[test]
fn null_test_report_is_complete() {
    let dir = TempDir::new().unwrap();
    let (csv, meta) = generate(dir.path(), "null.csv", &["--reduced", "--seed", "5"]);
    let beta0 = meta["beta0"].clone();
    let args = [
        "test", "--input", csv.to_str().unwrap(), "--test-col", "x4", "--random-cols", "x1,x2", "--beta0", &beta0,
    ];
    let run = lmminfer(&args);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let rep = fields(&run.stdout);
    for key in [
        "command", "input", "test_col", "beta0", "alt", "alpha", "proxy", "tuning_scale", "auto_relax", "t_stat",
        "p_value", "sigma_hat", "sigma_u_hat", "gamma_nnz", "theta_nnz", "eta_gamma", "etabar_gamma", "mu_gamma",
        "eta_theta", "eta_theta_prime", "etabar_theta", "mu_theta", "gamma_status", "lp_iterations",
    ] {
        assert!(rep.contains_key(key), "missing {key}");
    }
    let p = num(&rep, "p_value");
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(num(&rep, "beta0"), beta0.parse::<f64>().unwrap());
    assert_eq!(rep["q"], "2");

    let mut json_args = args.to_vec();
    json_args.extend(["--format", "json"]);
    let run = lmminfer(&json_args);
    let doc: serde_json::Value = serde_json::from_str(&run.stdout).unwrap();
    assert_eq!(doc["t_stat"].as_f64().unwrap(), num(&rep, "t_stat"));
}

#[test]
fn injected_signal_is_detected() {
    // seeded Model 1 sample (n=200, p=500) with h=6
    let dir = TempDir::new().unwrap();
    let (csv, meta) = generate(dir.path(), "signal.csv", &["--h", "6", "--seed", "2"]);
    let run = lmminfer(&[
        "test", "--input", csv.to_str().unwrap(), "--test-col", &meta["tested_col"], "--random-cols",
        &meta["random_cols"], "--beta0", &meta["beta0"],
    ]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let rep = fields(&run.stdout);
    assert!(num(&rep, "p_value") < 0.05, "p = {}", rep["p_value"]);
    assert_eq!(rep["n"], "200");
    assert_eq!(rep["features"], "500");
}

#[test]
fn csv_round_trip_is_bit_exact() {
    let sim = gen_dataset(&ModelSpec::model5(1.0).reduced().with_seed(8)).unwrap();
    let mut buf = Vec::new();
    write_panel(&mut buf, &sim.panel).unwrap();
    let re = RandomEffects::Columns(vec!["x1".into(), "x2".into()]);
    let back = read_panel(buf.as_slice(), "group", &re).unwrap();
    assert_eq!(back.panel, sim.panel);
    assert_eq!(back.group_labels.len(), 30);
}

#[test]
fn interleaved_groups_are_gathered() {
    let text = "y,group,a,b\n1,u,0.5,1\n2,v,0.25,2\n3,u,-1,3\n4,w,2,4\n5,v,1e-3,5\n";
    let d = read_panel(text.as_bytes(), "group", &RandomEffects::Intercept).unwrap();
    assert_eq!(d.group_labels, ["u", "v", "w"]);
    assert_eq!(d.panel.groups, [2, 2, 1]);
    assert_eq!(d.panel.y.as_slice(), [1.0, 3.0, 2.0, 5.0, 4.0]);
    assert_eq!(d.panel.features.column(1).as_slice(), [1.0, 3.0, 2.0, 5.0, 4.0]);
    assert_eq!(d.panel.feature_names, ["a", "b"]);
}

#[test]
fn schema_errors_exit_one_without_report() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("noy.csv", "group,a,b\ng,1,2\n", "response column"),
        ("text.csv", "group,y,a,b\ng,1,oops,2\n", "not a finite number"),
        ("blank.csv", "group,y,a,b\n,1,1,2\n", "empty group label"),
    ];
    for (name, body, msg) in cases {
        let path = dir.path().join(name);
        std::fs::write(&path, body).unwrap();
        let run = lmminfer(&["test", "--input", path.to_str().unwrap(), "--test-col", "a"]);
        assert_eq!(run.code, 1, "{name}");
        assert!(run.stdout.is_empty(), "{name}: report emitted");
        assert!(run.stderr.contains("E_SCHEMA") && run.stderr.contains(msg), "{name}: {}", run.stderr);
    }
    let run = lmminfer(&["test", "--input", dir.path().join("missing.csv").to_str().unwrap(), "--test-col", "a"]);
    assert_eq!(run.code, 1);
    assert!(run.stderr.contains("E_IO"));
    let run = lmminfer(&["test", "--bogus"]);
    assert_eq!(run.code, 1);
    assert_eq!(lmminfer(&["--help"]).code, 0);
}

#[test]
fn infeasible_bounds_exit_two() {
    let dir = TempDir::new().unwrap();
    let (csv, _) = generate(dir.path(), "d.csv", &["--reduced", "--seed", "6"]);
    let run = lmminfer(&[
        "test", "--input", csv.to_str().unwrap(), "--test-col", "x4", "--random-cols", "x1,x2", "--tuning-scale",
        "1:1e-6:1",
    ]);
    assert_eq!(run.code, 2, "{}", run.stderr);
    assert!(run.stderr.contains("E_INFEASIBLE"));
    assert!(run.stdout.is_empty());
}

/// Reduced Model 1 data with the tested coefficient moved to `beta`.
fn fixture_with_coefficient(dir: &Path, beta: f64) -> PathBuf {
    let sim = gen_dataset(&ModelSpec::model1(0.0).reduced().with_seed(31)).unwrap();
    let mut panel = sim.panel.clone();
    let z = panel.features.column(sim.tested).into_owned();
    panel.y += z * (beta - sim.truth.beta[sim.tested]);
    let path = dir.join("ci.csv");
    write_panel(std::fs::File::create(&path).unwrap(), &panel).unwrap();
    path
}

#[test]
fn interval_covers_strong_signal_and_nests() {
    let dir = TempDir::new().unwrap();
    let csv = fixture_with_coefficient(dir.path(), 2.0);
    let base = ["ci", "--input", csv.to_str().unwrap(), "--test-col", "x4", "--random-cols", "x1,x2", "--bracket", "-3:7"];
    let run = lmminfer(&base);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let wide = fields(&run.stdout);
    let (lo, hi) = (num(&wide, "lower"), num(&wide, "upper"));
    assert!(lo <= 2.0 && 2.0 <= hi, "[{lo}, {hi}]");
    assert!(num(&wide, "evaluations") > 0.0);

    let mut narrow_args = base.to_vec();
    narrow_args.extend(["--alpha", "0.5"]);
    let narrow = fields(&lmminfer(&narrow_args).stdout);
    let tol = 1e-2;
    assert!(num(&narrow, "lower") >= lo - tol && num(&narrow, "upper") <= hi + tol);
    assert!(num(&narrow, "upper") - num(&narrow, "lower") < hi - lo);
}

#[test]
fn bracket_without_sign_change_exits_three() {
    let dir = TempDir::new().unwrap();
    let csv = fixture_with_coefficient(dir.path(), 2.0);
    let run = lmminfer(&[
        "ci", "--input", csv.to_str().unwrap(), "--test-col", "x4", "--random-cols", "x1,x2", "--bracket", "1.99:2.01",
    ]);
    assert_eq!(run.code, 3, "{}", run.stderr);
    assert!(run.stderr.contains("one-sided bound"), "{}", run.stderr);
}

fn table_rows(text: &str) -> Vec<HashMap<String, String>> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    lines
        .map(|l| header.iter().zip(l.split('\t')).map(|(k, v)| (k.to_string(), v.to_owned())).collect())
        .collect()
}

#[test]
fn single_replication_has_zero_standard_error() {
    let run = lmminfer(&["simulate", "--preset", "model1", "--reduced", "--reps", "1", "--h", "0,6"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stdout.contains("# seed=1"));
    let rows = table_rows(&run.stdout);
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert_eq!(num(&r, "mc_se"), 0.0);
        assert!([0.0, 1.0].contains(&num(&r, "rejection_rate")));
    }
}

#[test]
fn tuning_sensitivity_preset_layout() {
    let run = lmminfer_env(&["simulate", "--preset", "table4", "--reduced", "--reps", "1"], &[("LMMINFER_THREADS", "2")]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let rows = table_rows(&run.stdout);
    assert_eq!(rows.len(), 22);
    let key = |r: &HashMap<String, String>| {
        (num(r, "h"), num(r, "s"), num(r, "eta_mult"), num(r, "mu_mult"), num(r, "etabar_mult"))
    };
    assert_eq!(key(&rows[0]), (0.0, 40.0, 0.5, 0.5, 1.0));
    assert_eq!(key(&rows[4]), (0.0, 40.0, 1.0, 1.0, 1.0));
    assert_eq!(key(&rows[10]), (0.0, 40.0, 1.0, 1.0, 2.0));
    assert_eq!(key(&rows[11]), (4.0, 5.0, 0.5, 0.5, 1.0));
    assert_eq!(lmminfer(&["simulate", "--preset", "table4", "--h", "1", "--reps", "1"]).code, 1);
}

#[test]
fn lm_and_mm_columns_in_comparison_preset() {
    let run = lmminfer(&["simulate", "--preset", "table2-model1", "--reduced", "--reps", "2", "--h", "0", "--format", "json"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let doc: serde_json::Value = serde_json::from_str(&run.stdout).unwrap();
    let proxies: Vec<&str> = doc["rows"].as_array().unwrap().iter().map(|r| r["proxy"].as_str().unwrap()).collect();
    assert_eq!(proxies, ["zero", "default"]);
    assert_eq!(doc["config"]["reps"], 2);
}

#[test]
fn single_coordinate_mtest_matches_test() {
    let dir = TempDir::new().unwrap();
    let (csv, meta) = generate(dir.path(), "m.csv", &["--reduced", "--seed", "9"]);
    let common = ["--input", csv.to_str().unwrap(), "--random-cols", "x1,x2", "--beta0", &meta["beta0"]];
    let mut t_args = vec!["test", "--test-col", "x4"];
    t_args.extend_from_slice(&common);
    let mut m_args = vec!["mtest", "--test-cols", "x4", "--bootstrap-reps", "200"];
    m_args.extend_from_slice(&common);
    let t = fields(&lmminfer(&t_args).stdout);
    let run = lmminfer(&m_args);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let m = fields(&run.stdout);
    assert!((num(&t, "t_stat") - num(&m, "t_stat.x4")).abs() < 1e-10);
    assert_eq!(m["bootstrap_reps"], "200");
}

#[test]
fn one_of_three_signals_rejects_family() {
    let dir = TempDir::new().unwrap();
    let (csv, meta) = generate(dir.path(), "m3.csv", &["--reduced", "--seed", "19", "--h", "8"]);
    // columns x7 and x10 are outside the support, so their null value is 0
    let beta0 = format!("{},0,0", meta["beta0"]);
    let run = lmminfer(&[
        "mtest", "--input", csv.to_str().unwrap(), "--random-cols", "x1,x2", "--test-cols", "x4,x7,x10", "--beta0",
        &beta0, "--seed", "23",
    ]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let m = fields(&run.stdout);
    assert!(num(&m, "p_value") < 0.05, "P_J = {}", m["p_value"]);
    assert_eq!(m["reject"], "true");
}

#[test]
fn too_few_bootstrap_draws_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let (csv, _) = generate(dir.path(), "b.csv", &["--reduced", "--seed", "4"]);
    let run = lmminfer(&[
        "mtest", "--input", csv.to_str().unwrap(), "--random-cols", "x1,x2", "--test-cols", "x4", "--bootstrap-reps", "50",
    ]);
    assert_eq!(run.code, 1, "{}", run.stderr);
    assert!(run.stdout.is_empty());
}

#[test]
fn config_file_fills_unset_flags() {
    let dir = TempDir::new().unwrap();
    let (csv, _) = generate(dir.path(), "c.csv", &["--reduced", "--seed", "12"]);
    let cfg = dir.path().join("run.conf");
    std::fs::write(
        &cfg,
        format!("# replay\ninput = {}\ntest_col = x4\nrandom-cols = x1,x2\nalpha = 0.5\nbeta0 = -0.25\n", csv.display()),
    )
    .unwrap();
    let run = lmminfer(&["test", "--config", cfg.to_str().unwrap(), "--alpha", "0.1"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let rep = fields(&run.stdout);
    assert_eq!(num(&rep, "alpha"), 0.1);
    assert_eq!(num(&rep, "beta0"), -0.25);
    assert_eq!(rep["random_effects"], "x1,x2");

    std::fs::write(&cfg, "alpha 0.5\n").unwrap();
    let run = lmminfer(&["test", "--config", cfg.to_str().unwrap()]);
    assert_eq!(run.code, 1);
    assert!(run.stderr.contains("E_CONFIG"));
}

#[test]
fn report_written_to_file() {
    let dir = TempDir::new().unwrap();
    let (csv, _) = generate(dir.path(), "o.csv", &["--reduced", "--seed", "13"]);
    let out = dir.path().join("report.txt");
    let run = lmminfer(&[
        "test", "--input", csv.to_str().unwrap(), "--test-col", "x4", "--random-cols", "x1,x2", "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stdout.is_empty());
    assert!(fields(&std::fs::read_to_string(out).unwrap()).contains_key("t_stat"));
}
