use sconf_core::datagen::GaussianSetup;
use sconf_core::experiments::unbiasedness_check;

#[test]
fn unbiased_estimator_mean_matches_supervised_risk() {
    let setup = GaussianSetup::preset("A").unwrap();
    let params = [0.3, -0.2, 0.1];
    let c = unbiasedness_check(&setup, &params, 2000, 200, 1_000_000, 42).unwrap();
    assert!(
        c.z_score().abs() <= 3.0,
        "mean {} se {} supervised {} z {}",
        c.mean_estimate,
        c.standard_error,
        c.supervised_risk,
        c.z_score()
    );
}

#[test]
fn fixed_predictor_requires_matching_dimension() {
    let setup = GaussianSetup::preset("A").unwrap();
    assert!(unbiasedness_check(&setup, &[1.0, 2.0], 2, 10, 10, 1).is_err());
}
