mod common;

use common::{dense_proxy, gamma_slack, grid_min, l1, random_intercept_dataset, sup, theta_slack};
use lmminfer::estimate::{
    default_lambda0, default_tuning, estimate_gamma, estimate_gamma_glmm, estimate_theta, estimate_theta_glmm,
    scaled_lasso, solve_l1, theta_families, ExponentialFamily, TuningParams, THETA_FAMILIES,
};
use lmminfer::inference::{glmm_default_tuning, prepare_problem, PipelineConfig, TestProblem};
use lmminfer::model::{build_proxy, standardize_columns, BlockDiagMatrix, GroupedDataset, ProxySpec};
use lmminfer::sim::{gen_dataset, make_sigma, oracle_theta, rep_seed, Design, ModelSpec, SimDataset};
use lmminfer::Error;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn tuning(eta: f64, etabar: f64, mu: f64) -> TuningParams {
    TuningParams {
        eta_gamma: eta,
        etabar_gamma: etabar,
        mu_gamma: mu,
        eta_theta: eta,
        eta_theta_prime: eta,
        etabar_theta: etabar,
        mu_theta: mu,
    }
}

fn tiny_fixture() -> (GroupedDataset, DMatrix<f64>) {
    let x = DMatrix::from_row_slice(4, 2, &[1.2, -0.3, 0.4, 1.1, -0.9, 0.5, 0.2, -1.4]);
    let z = DVector::from_vec(vec![0.8, -0.2, 0.5, 0.9]);
    let v = &x * DVector::from_vec(vec![1.0, -0.6]) + DVector::from_vec(vec![0.05, -0.1, 0.08, 0.02]);
    let data = random_intercept_dataset(v, x, z, vec![2, 2]);
    let p = dense_proxy(data.w(), data.groups(), &DMatrix::from_element(1, 1, 2.0 / 3.0));
    (data, p)
}

#[test]
fn nuisance_estimate_matches_grid_oracle() {
    let (data, p) = tiny_fixture();
    let proxy = build_proxy(&data, &ProxySpec::scaled_identity(2.0 / 3.0, 1)).unwrap();
    let v = data.y().clone();
    let etabar = 0.05 * v.dot(&(&p * &v)) / 4.0;
    let t = tuning(0.08, etabar, 1.0);
    let est = estimate_gamma(&data, 0.0, &proxy, &t).unwrap();
    let oracle = grid_min(2.5, 1e-3, |g| gamma_slack(data.x(), &v, &p, g, 0.08, etabar, 1.0)).unwrap();
    assert!(est.l1_norm <= oracle + 1e-9, "lp {} above grid {}", est.l1_norm, oracle);
    assert!(oracle - est.l1_norm <= 2e-3, "lp {} grid {}", est.l1_norm, oracle);
    assert!(est.l1_norm > 0.1, "fixture should have a nonzero optimum");
}

#[test]
fn feature_regression_matches_grid_oracle() {
    let (data, p) = tiny_fixture();
    let proxy = build_proxy(&data, &ProxySpec::scaled_identity(2.0 / 3.0, 1)).unwrap();
    let z = data.z().clone();
    let etabar = 0.05 * z.norm_squared() / 4.0;
    let t = tuning(0.05, etabar, 0.9);
    let est = estimate_theta(&data, &proxy, &t).unwrap();
    let oracle = grid_min(2.5, 1e-3, |c| theta_slack(data.x(), &z, &p, c, 0.05, 0.05, etabar, 0.9)).unwrap();
    assert!(est.l1_norm <= oracle + 1e-9, "lp {} above grid {}", est.l1_norm, oracle);
    assert!(oracle - est.l1_norm <= 2e-3, "lp {} grid {}", est.l1_norm, oracle);
}

#[test]
fn poisson_nuisance_matches_grid_oracle() {
    let x = DMatrix::from_row_slice(6, 2, &[0.5, -0.2, 0.1, 0.7, -0.6, 0.3, 0.9, 0.1, -0.3, -0.8, 0.2, 0.4]);
    let z = DVector::from_vec(vec![0.3, -0.1, 0.2, 0.0, 0.4, -0.3]);
    let y = DVector::from_vec(vec![3.0, 2.0, 0.0, 4.0, 1.0, 2.0]);
    let data = random_intercept_dataset(y.clone(), x.clone(), z, vec![3, 3]);
    let proxy = build_proxy(&data, &ProxySpec::scaled_identity(2.0 / 3.0, 1)).unwrap();
    let p = dense_proxy(data.w(), data.groups(), &DMatrix::from_element(1, 1, 2.0 / 3.0));
    let (eta, etabar, mu) = (0.15, 0.02, 3.0);
    let t = tuning(eta, etabar, mu);
    let fam = ExponentialFamily::PoissonLog;
    let est = estimate_gamma_glmm(&data, 0.0, &proxy, fam, &t).unwrap();
    assert!(est.converged && est.feasible);
    let slack = |g: &DVector<f64>| {
        let r = &y - (&x * g).map(f64::exp);
        let pr = &p * r;
        let score = eta - sup(&(x.transpose() * &pr / 6.0));
        let corr = y.dot(&pr) / 6.0 - etabar;
        score.min(corr).min(mu - sup(&pr))
    };
    assert!(slack(&est.coef) >= -1e-8);
    let oracle = grid_min(2.0, 1e-3, slack).unwrap();
    assert!((est.l1_norm - oracle).abs() <= 2e-3, "glmm {} grid {}", est.l1_norm, oracle);
}

fn reduced_problem(seed: u64) -> (TestProblem, SimDataset) {
    let spec = ModelSpec::model1(0.0).reduced().with_seed(seed);
    let sim = gen_dataset(&spec).unwrap();
    let data = sim.grouped().unwrap();
    let problem = prepare_problem(&data, sim.truth.beta0, &PipelineConfig::default_for(spec.q)).unwrap();
    (problem, sim)
}

#[test]
fn returned_solutions_satisfy_their_constraints() {
    for rep in 0..5 {
        let (pb, _) = reduced_problem(rep_seed(31, rep));
        let p = pb.proxy.to_dense();
        let t = pb.tuning.relaxed().relaxed();
        let v = pb.dataset.pseudo_response(pb.beta0);
        let g = estimate_gamma(&pb.dataset, pb.beta0, &pb.proxy, &t).unwrap();
        let slack = gamma_slack(pb.dataset.x(), &v, &p, &g.coef, t.eta_gamma, t.etabar_gamma, t.mu_gamma);
        assert!(slack >= -1e-8, "gamma slack {slack}");
        assert!((g.min_slack() - slack).abs() < 1e-8);

        let th = estimate_theta(&pb.dataset, &pb.proxy, &t).unwrap();
        let slack = theta_slack(
            pb.dataset.x(),
            pb.dataset.z(),
            &p,
            &th.coef,
            t.eta_theta,
            t.eta_theta_prime,
            t.etabar_theta,
            t.mu_theta,
        );
        assert!(slack >= -1e-8, "theta slack {slack}");
    }
}

/// Bounds at the theoretical rates: `eta = log(n) sqrt(log(p) / n) sigma_hat`
/// and a correlation floor at half the oracle noise energy
/// `n^-1 tr(P~ Cov(Wb + eps))`.
fn theory_tuning(recipe: &TuningParams, data: &GroupedDataset, proxy: &BlockDiagMatrix, sim: &SimDataset) -> TuningParams {
    let n = data.n() as f64;
    // the recipe's eta is sqrt(0.5 log(p) / n) sigma_hat
    let eta = recipe.eta_gamma * n.ln() * 2f64.sqrt();
    let mut start = 0;
    let mut noise = 0.0;
    for b in proxy.blocks() {
        let m = b.nrows();
        let wi = data.w().rows(start, m);
        let cov = DMatrix::identity(m, m) * sim.truth.sigma_eps_sq + wi * &sim.truth.psi * wi.transpose();
        noise += (b * cov).trace();
        start += m;
    }
    TuningParams { eta_gamma: eta, etabar_gamma: 0.5 * noise / n, ..*recipe }
}

fn truth_in_standard_scale(sim: &SimDataset, scales: &[f64]) -> DVector<f64> {
    let truth: Vec<f64> = (0..sim.panel.p()).filter(|&j| j != sim.tested).map(|j| sim.truth.beta[j]).collect();
    DVector::from_iterator(truth.len(), truth.iter().zip(scales).map(|(b, s)| b / s))
}

#[test]
fn estimate_is_no_larger_than_a_feasible_truth() {
    let mut checked = 0;
    for rep in 0..12 {
        let (pb, sim) = reduced_problem(rep_seed(37, rep));
        let scales = standardize_columns(&sim.grouped().unwrap()).unwrap().scales;
        let gamma_star = truth_in_standard_scale(&sim, &scales);
        let p = pb.proxy.to_dense();
        let v = pb.dataset.pseudo_response(pb.beta0);
        let t = theory_tuning(&pb.tuning, &pb.dataset, &pb.proxy, &sim);
        let star_slack = gamma_slack(pb.dataset.x(), &v, &p, &gamma_star, t.eta_gamma, t.etabar_gamma, t.mu_gamma);
        if star_slack < 0.0 {
            continue;
        }
        checked += 1;
        let g = estimate_gamma(&pb.dataset, pb.beta0, &pb.proxy, &t).unwrap();
        assert!(g.l1_norm <= l1(&gamma_star) + 1e-8, "{} > {}", g.l1_norm, l1(&gamma_star));
    }
    assert!(checked >= 10, "truth feasible in only {checked} of 12 reps");
}

/// Full-scale null replications: the true nuisance vector satisfies the
/// constraints at theoretical-rate bounds. Under the practical recipe it
/// does not (its score bound sits below the noise level of the sup-norm);
/// that count is printed for reference.
#[test]
fn truth_is_feasible_at_theoretical_rates() {
    let spec = ModelSpec::model1(0.0);
    let (mut theory, mut recipe) = (0, 0);
    for rep in 0..100 {
        let sim = gen_dataset(&spec.clone().with_seed(rep_seed(41, rep))).unwrap();
        let data = sim.grouped().unwrap();
        let std = standardize_columns(&data).unwrap();
        let proxy = build_proxy(&std.dataset, &ProxySpec::scaled_identity(0.5, 2)).unwrap();
        let t = default_tuning(&std.dataset, &proxy, sim.truth.beta0).unwrap().params;
        let gamma_star = truth_in_standard_scale(&sim, &std.scales);
        let v = std.dataset.pseudo_response(sim.truth.beta0);
        let p = proxy.to_dense();
        let slack = |t: &TuningParams| {
            gamma_slack(std.dataset.x(), &v, &p, &gamma_star, t.eta_gamma, t.etabar_gamma, t.mu_gamma)
        };
        recipe += usize::from(slack(&t) >= 0.0);
        theory += usize::from(slack(&theory_tuning(&t, &std.dataset, &proxy, &sim)) >= 0.0);
    }
    println!("true nuisance vector feasible: theoretical rates {theory}/100, practical recipe {recipe}/100");
    assert!(theory >= 95, "feasible in {theory}/100");
}

#[test]
fn correlation_floor_bounds_the_residual_energy() {
    for rep in 0..5 {
        let (pb, _) = reduced_problem(rep_seed(43, rep));
        let t = pb.tuning;
        let g = estimate_gamma(&pb.dataset, pb.beta0, &pb.proxy, &t).unwrap();
        let n = pb.dataset.n() as f64;
        let v = pb.dataset.pseudo_response(pb.beta0);
        let pr = pb.proxy.mul_vec(&(&v - pb.dataset.x() * &g.coef));
        let floor_value = v.dot(&pr) / n;
        assert!(floor_value >= t.etabar_gamma - 1e-8);
        let energy = pr.norm_squared() / n;
        assert!(energy >= t.etabar_gamma.powi(2) / (v.norm_squared() / n) - 1e-12);
    }
}

#[test]
fn zero_pseudo_response_gives_zero_estimate() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = DMatrix::from_fn(12, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
    let z = DVector::from_fn(12, |_, _| rng.sample::<f64, _>(StandardNormal));
    let data = random_intercept_dataset(DVector::zeros(12), x, z, vec![4, 4, 4]);
    let proxy = build_proxy(&data, &ProxySpec::scaled_identity(2.0 / 3.0, 1)).unwrap();
    let est = estimate_gamma(&data, 0.0, &proxy, &tuning(0.1, 0.0, 1.0)).unwrap();
    assert_eq!(est.l1_norm, 0.0);
    assert!(est.feasible);
    assert!(matches!(default_tuning(&data, &proxy, 0.0), Err(Error::DegenerateScale(_))));
}

#[test]
fn uncorrelated_feature_has_zero_regression() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 16;
    let mut x = DMatrix::from_fn(n, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    // orthogonalise z against X
    let q = x.clone().qr().q();
    z -= &q * (q.transpose() * &z);
    x.column_mut(0).scale_mut(2.0);
    let data = random_intercept_dataset(DVector::zeros(n), x, z.clone(), vec![4; 4]);
    let proxy = BlockDiagMatrix::identity(data.groups());
    let t = tuning(0.05, z.norm_squared() / n as f64, 10.0);
    let est = estimate_theta(&data, &proxy, &t).unwrap();
    assert!(est.l1_norm < 1e-10, "{}", est.l1_norm);
}

#[test]
fn identity_proxy_makes_score_families_coincide() {
    let (pb, _) = reduced_problem(rep_seed(47, 0));
    let identity = BlockDiagMatrix::identity(pb.dataset.groups());
    let (x, z) = (pb.dataset.x(), pb.dataset.z());
    let all = theta_families(x, z, &identity, None, &pb.tuning);
    let without: Vec<_> = all.iter().filter(|f| f.name != THETA_FAMILIES[1]).cloned().collect();
    let a = solve_l1(&all, x.ncols()).unwrap();
    let b = solve_l1(&without, x.ncols()).unwrap();
    assert!((a.l1_norm - b.l1_norm).abs() < 1e-9);
    assert!((&a.coef - &b.coef).amax() < 1e-7);
}

#[test]
fn feature_regression_recovers_toeplitz_oracle() {
    let spec = ModelSpec { n: 2000, p: 20, tested: 10, ..ModelSpec::model1(0.0) }.with_seed(53);
    let sim = gen_dataset(&spec).unwrap();
    let data = sim.grouped().unwrap();
    let scales = standardize_columns(&data).unwrap().scales;
    let pb = prepare_problem(&data, sim.truth.beta0, &PipelineConfig::default_for(spec.q)).unwrap();
    let est = estimate_theta(&pb.dataset, &pb.proxy, &pb.tuning).unwrap();
    let theta = DVector::from_iterator(scales.len(), est.coef.iter().zip(&scales).map(|(c, s)| c * s));
    let (star, _) = oracle_theta(&make_sigma(Design::Toeplitz(-0.5), 20).unwrap(), 10).unwrap();
    let err = l1(&(theta - star));
    assert!(err <= 0.15, "l1 error {err}");
}

#[test]
fn scaled_lasso_finds_the_support() {
    let (n, p) = (100, 200);
    let support = [0usize, 7, 42];
    let mut hits = 0;
    for rep in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + rep);
        let mut x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        for mut col in x.column_iter_mut() {
            let s = (n as f64).sqrt() / col.norm();
            col *= s;
        }
        let mut v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        for &j in &support {
            v += x.column(j) * 1.0;
        }
        let fit = scaled_lasso(&x, &v, default_lambda0(n, p)).unwrap();
        if support.iter().all(|&j| fit.gamma_init[j] != 0.0) {
            hits += 1;
        }
    }
    assert!(hits >= 90, "support recovered in {hits}/100 runs");
}

#[test]
fn gaussian_family_collapses_to_linear_estimators() {
    let (pb, _) = reduced_problem(rep_seed(59, 0));
    let data = pb.dataset.with_y(pb.dataset.pseudo_response(pb.beta0)).unwrap();
    let t = pb.tuning.relaxed();
    let linear = estimate_gamma(&data, 0.0, &pb.proxy, &t).unwrap();
    let glmm = estimate_gamma_glmm(&data, 0.0, &pb.proxy, ExponentialFamily::Gaussian, &t).unwrap();
    assert!((&linear.coef - &glmm.coef).amax() < 1e-8);

    let th_lin = estimate_theta(&data, &pb.proxy, &t).unwrap();
    let th_glmm = estimate_theta_glmm(&data, &glmm.coef, 0.0, &pb.proxy, ExponentialFamily::Gaussian, &t).unwrap();
    assert_eq!(th_lin.coef, th_glmm.coef);
}

/// Balanced binary responses inside every group and a design orthogonal to
/// the centred response: the zero vector satisfies every constraint.
fn logistic_fixture() -> GroupedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let (n, d) = (40, 10);
    let y = DVector::from_fn(n, |i, _| if (i % 4) < 2 { 1.0 } else { 0.0 });
    let centred = y.add_scalar(-0.5);
    let unit = centred.normalize();
    let mut x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    for mut col in x.column_iter_mut() {
        let proj = col.dot(&unit);
        col.axpy(-proj, &unit, 1.0);
        let s = (n as f64).sqrt() / col.norm();
        col *= s;
    }
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    random_intercept_dataset(y, x, z, vec![4; 10])
}

#[test]
fn logistic_zero_effect_fixture() {
    let data = logistic_fixture();
    let fam = ExponentialFamily::BernoulliLogit;
    let proxy = build_proxy(&data, &ProxySpec::scaled_identity(2.0 / 3.0, 1)).unwrap();
    let t = glmm_default_tuning(&data, &proxy, 0.0, fam).unwrap();
    let est = estimate_gamma_glmm(&data, 0.0, &proxy, fam, &t).unwrap();
    assert!(est.feasible && est.converged);
    assert!(est.l1_norm < 1e-10, "{}", est.l1_norm);

    let th = estimate_theta_glmm(&data, &est.coef, 0.0, &proxy, fam, &t).unwrap();
    // weights b''(0) = 1/4 on every row
    let n = data.n() as f64;
    let (x, z) = (data.x(), data.z());
    let u = z - x * &th.coef;
    let p = proxy.to_dense();
    assert!(t.eta_theta - sup(&(x.transpose() * &u * 0.25 / n)) >= -1e-8);
    assert!(t.eta_theta_prime - sup(&(x.transpose() * (&p * &u) * 0.25 / n)) >= -1e-8);
    assert!(z.dot(&u) * 0.25 / n - t.etabar_theta >= -1e-8);
    assert!(t.mu_theta - sup(&u) >= -1e-8);
}

#[test]
fn infeasible_constraints_name_the_culprit() {
    let (data, _) = tiny_fixture();
    let proxy = build_proxy(&data, &ProxySpec::scaled_identity(2.0 / 3.0, 1)).unwrap();
    let v = data.y();
    let t = tuning(0.08, 10.0 * v.norm_squared(), 1.0);
    match estimate_gamma(&data, 0.0, &proxy, &t) {
        Err(Error::Infeasible { families }) => assert_eq!(families, vec!["correlation".to_string()]),
        other => panic!("expected infeasibility, got {other:?}"),
    }
}
