//! Helpers shared by the integration tests and the acceptance report.
#![allow(dead_code)]

use std::path::PathBuf;

use ndarray::{concatenate, Array2, Axis};
use rand::Rng as _;
use sconf_core::losses::LossKind;
use sconf_core::model::{Architecture, Predictor};
use sconf_core::risk::{evaluate_with_gradient, partial_risks, total_risk, EstimatorKind, RiskSpec};
use sconf_core::rng;

pub fn mnist_dir() -> PathBuf {
    std::env::var_os("SCONF_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn risk_of(p: &Predictor, x: &Array2<f64>, xp: &Array2<f64>, s: &[f64], spec: &RiskSpec) -> f64 {
    let z = p.predict(x.view()).unwrap();
    let zp = p.predict(xp.view()).unwrap();
    let scores: Vec<(f64, f64)> = z.into_iter().zip(zp).collect();
    total_risk(&partial_risks(&scores, s, spec).unwrap(), spec)
}

/// Largest coordinate-wise relative gap (with a 1e-3 scale floor) between
/// the backpropagated gradient of a pairwise risk and central differences,
/// on one random instance of 8 pairs.
pub fn pipeline_gradient_gap(arch: Architecture, kind: EstimatorKind, seed: u64) -> f64 {
    let mut r = rng::seeded(seed, 901);
    let mut p = Predictor::init(arch, seed);
    for v in p.params_mut() {
        *v += r.random_range(-0.3..0.3);
    }
    let n = 8;
    let d = arch.input_dim();
    let x = Array2::from_shape_fn((n, d), |_| r.random_range(-1.5..1.5));
    let xp = Array2::from_shape_fn((n, d), |_| r.random_range(-1.5..1.5));
    let s: Vec<f64> = (0..n).map(|_| r.random_range(0.0..=1.0)).collect();
    let spec = RiskSpec::new(kind, 0.7, LossKind::Logistic).unwrap();

    let both = concatenate(Axis(0), &[x.view(), xp.view()]).unwrap();
    let z = p.forward(both.view()).unwrap();
    let scores: Vec<(f64, f64)> = (0..n).map(|i| (z[i], z[n + i])).collect();
    let ev = evaluate_with_gradient(&scores, &s, &spec).unwrap();
    let upstream: Vec<f64> =
        ev.score_gradients.iter().map(|g| g.0).chain(ev.score_gradients.iter().map(|g| g.1)).collect();
    p.backward(&upstream).unwrap();
    let analytic = p.grads().to_vec();
    assert!((ev.risk - risk_of(&p, &x, &xp, &s, &spec)).abs() < 1e-12);

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (j, &a) in analytic.iter().enumerate() {
        let orig = p.params()[j];
        p.params_mut()[j] = orig + h;
        let fp = risk_of(&p, &x, &xp, &s, &spec);
        p.params_mut()[j] = orig - h;
        let fm = risk_of(&p, &x, &xp, &s, &spec);
        p.params_mut()[j] = orig;
        let fd = (fp - fm) / (2.0 * h);
        worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-3));
    }
    worst
}

/// Same measure for the model alone, with a random upstream gradient.
pub fn model_gradient_gap(arch: Architecture, seed: u64) -> f64 {
    let mut r = rng::seeded(seed, 902);
    let mut p = Predictor::init(arch, seed);
    for v in p.params_mut() {
        *v += r.random_range(-0.2..0.2);
    }
    let x = Array2::from_shape_fn((6, arch.input_dim()), |_| r.random_range(-1.5..1.5));
    let up: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
    let f = |p: &Predictor| -> f64 { p.predict(x.view()).unwrap().iter().zip(&up).map(|(z, u)| z * u).sum() };
    p.forward(x.view()).unwrap();
    p.backward(&up).unwrap();
    let analytic = p.grads().to_vec();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (j, &a) in analytic.iter().enumerate() {
        let orig = p.params()[j];
        p.params_mut()[j] = orig + h;
        let fp = f(&p);
        p.params_mut()[j] = orig - h;
        let fm = f(&p);
        p.params_mut()[j] = orig;
        let fd = (fp - fm) / (2.0 * h);
        worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-3));
    }
    worst
}
