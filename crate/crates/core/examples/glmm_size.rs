//! Rejection rate of the GLMM test on a random-intercept model, under
//! both feature scalings.
//!
//! cargo run --release --example glmm_size -- <logit|poisson|gaussian> <h> <reps> [magnitude]

use lmminfer::estimate::ExponentialFamily;
use lmminfer::inference::{glmm_default_tuning, glmm_test, Alternative, FeatureScale};
use lmminfer::model::{build_proxy, standardize_columns, ProxySpec};
use lmminfer::sim::{gen_glmm_dataset, rep_seed, DesignCache, ModelSpec, RandomEffectDesign};
use lmminfer::stats::{mean, std_dev};
use nalgebra::DMatrix;

fn main() {
    let a: Vec<String> = std::env::args().skip(1).collect();
    let family = match a[0].as_str() {
        "logit" => ExponentialFamily::BernoulliLogit,
        "poisson" => ExponentialFamily::PoissonLog,
        _ => ExponentialFamily::Gaussian,
    };
    let h: f64 = a[1].parse().unwrap();
    let reps: usize = a[2].parse().unwrap();
    let spec = ModelSpec {
        n: 200,
        p: 100,
        q: 1,
        psi: DMatrix::from_element(1, 1, 0.3),
        random_effects: RandomEffectDesign::Intercept,
        magnitude: a.get(3).map(|s| s.parse().unwrap()).unwrap_or(1.0),
        ..ModelSpec::model1(h)
    };
    let cache = DesignCache::new(&spec).unwrap();
    for scale in [FeatureScale::Plain, FeatureScale::VarianceWeighted] {
        let mut ts = vec![];
        let mut rej = 0;
        let mut fails = 0;
        for r in 0..reps {
            let s = spec.clone().with_seed(rep_seed(9, r));
            let sim = gen_glmm_dataset(&s, family, &cache).unwrap();
            let ds = standardize_columns(&sim.grouped().unwrap()).unwrap().dataset;
            let proxy = build_proxy(&ds, &ProxySpec::scaled_identity(2.0 / 3.0, 1)).unwrap();
            let res = glmm_default_tuning(&ds, &proxy, sim.truth.beta0, family)
                .and_then(|t| glmm_test(&ds, sim.truth.beta0, family, &proxy, &t, Alternative::TwoSided, scale, 3));
            match res {
                Ok(t) => {
                    ts.push(t.t_stat);
                    if t.p_value <= 0.05 {
                        rej += 1
                    }
                }
                Err(e) => {
                    fails += 1;
                    if fails < 3 {
                        eprintln!("{e}")
                    }
                }
            }
        }
        println!("{scale:?} rate={:.3} mean={:.3} sd={:.3} fails={fails}", rej as f64 / ts.len() as f64, mean(&ts), std_dev(&ts));
    }
}
