//! Wall time of the tuning recipe and the two estimators on one
//! synthetic random-intercept dataset.
//!
//! cargo run --release --example lp_timing -- <n> <p>

use lmminfer::estimate::{default_tuning, estimate_gamma, estimate_theta};
use lmminfer::model::{build_proxy, standardize_columns, GroupedDataset, ProxySpec};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use std::time::Instant;

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let (n, p) = (args[0], args[1]);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
    let full = DMatrix::from_fn(n, p, |_, _| g());
    let x = full.columns(1, p - 1).into_owned();
    let z = full.column(0).into_owned();
    let mut y = DVector::from_fn(n, |_, _| g());
    for k in 0..5 {
        y += x.column(k * 3 + 1) * 1.5;
    }
    let groups = vec![4; n / 4];
    let w = DMatrix::from_element(n, 1, 1.0);
    let ds = GroupedDataset::new(y, x, z, w, groups).unwrap();
    let std = standardize_columns(&ds).unwrap().dataset;
    let proxy = build_proxy(&std, &ProxySpec::scaled_identity(2.0 / 3.0, 1)).unwrap();
    let t0 = Instant::now();
    let tun = default_tuning(&std, &proxy, 0.0).unwrap();
    println!("tuning {:?} {:?}", t0.elapsed(), tun.params);
    let t0 = Instant::now();
    let gm = estimate_gamma(&std, 0.0, &proxy, &tun.params).unwrap();
    println!("gamma {:?} iters {} support {} l1 {:.4} minslack {:e}", t0.elapsed(), gm.lp_iterations, gm.support_size(), gm.l1_norm, gm.min_slack());
    let t0 = Instant::now();
    let th = estimate_theta(&std, &proxy, &tun.params).unwrap();
    println!("theta {:?} iters {} support {} l1 {:.4} minslack {:e}", t0.elapsed(), th.lp_iterations, th.support_size(), th.l1_norm, th.min_slack());
}
