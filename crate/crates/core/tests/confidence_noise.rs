use sconf_core::datagen::{add_confidence_noise, confidence_deviation, make_pairs, sample_mixture, GaussianSetup};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

/// `E|clip(s + e, 0, 1) - s|` for `e ~ N(0, std^2)`, from the truncated
/// normal first moments.
fn clipped_mad(s: f64, std: f64) -> f64 {
    let z = Normal::new(0.0, 1.0).unwrap();
    let (a, b) = (-s / std, (1.0 - s) / std);
    // |e| on the unclipped band (a, b), which straddles zero.
    let inner = std * (2.0 * z.pdf(0.0) - z.pdf(a) - z.pdf(b));
    inner + s * z.cdf(a) + (1.0 - s) * z.sf(b)
}

#[test]
fn upper_clip_example() {
    // 0.95 + 0.2 lands above 1 and is clipped.
    assert_eq!((0.95_f64 + 0.2).clamp(0.0, 1.0), 1.0);
}

#[test]
fn clipped_mad_oracle_is_sane() {
    // Far from the edges the clipped MAD is the half-normal mean.
    let half_normal = 0.01 * (2.0 / std::f64::consts::PI).sqrt();
    assert!((clipped_mad(0.5, 0.01) - half_normal).abs() < 1e-12);
    // At s = 0 with large noise, half the mass is clipped to 0 deviation.
    let m = clipped_mad(0.0, 100.0);
    assert!((m - 0.5).abs() < 0.01, "{m}");
}

#[test]
fn noise_mad_matches_clipped_normal_and_is_reproducible() {
    let setup = GaussianSetup::preset("A").unwrap();
    let pts: Vec<Vec<f64>> = sample_mixture(&setup, 200_000, 5).into_iter().map(|e| e.x).collect();
    let exact = make_pairs(&pts, &setup, 6).unwrap();
    assert_eq!(exact.len(), 100_000);
    let std = 0.3;
    let a = add_confidence_noise(&exact, std, 7).unwrap();
    let b = add_confidence_noise(&exact, std, 7).unwrap();
    let mad_a = confidence_deviation(&exact, &a).unwrap() / exact.len() as f64;
    let mad_b = confidence_deviation(&exact, &b).unwrap() / exact.len() as f64;
    assert_eq!(mad_a.to_bits(), mad_b.to_bits());

    let oracle: f64 = exact.pairs.iter().map(|p| clipped_mad(p.s, std)).sum::<f64>() / exact.len() as f64;
    assert!((mad_a - oracle).abs() <= 0.01, "empirical {mad_a} vs analytic {oracle}");
    assert!(a.pairs.iter().all(|p| (0.0..=1.0).contains(&p.s)));
}
