//! Pairwise risk estimators over confidence-annotated pairs.
//!
//! For pair `i` with scores `(z_i, z'_i)` and confidence `s_i`, the
//! positive- and negative-label partial risks are
//!
//! ```text
//! R+ = sum_i (s_i - pi_-) (l(z_i,+1) + l(z'_i,+1)) / (2n (pi_+ - pi_-))
//! R- = sum_i (pi_+ - s_i) (l(z_i,-1) + l(z'_i,-1)) / (2n (pi_+ - pi_-))
//! ```
//!
//! Their sum is an unbiased estimate of the classification risk. Either part
//! can be negative on a finite sample; corrected estimators apply
//! `f(x) = x` for `x >= 0` and `k|x|` otherwise to each part.
//!
//! The one-sided estimators (similar-only, dissimilar-only) reuse the same
//! coefficients, rescaled per pair by `pi_S / s_i` or `2 pi_+ pi_- / (1 - s_i)`.

use crate::losses::{loss_derivative, loss_value, Label, LossKind};
use crate::numeric::pairwise_sum;
use crate::{Error, Result};

/// Smallest allowed `|pi_+ - 1/2|` for pairwise estimators.
pub const PRIOR_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorKind {
    Unbiased,
    /// `max(0, R+) + max(0, R-)`.
    NonNegative,
    /// `|R+| + |R-|`, the `k = 1` correction.
    Absolute,
    /// General correction `f(R+) + f(R-)` with slope `k` on negatives.
    Corrected {
        k: f64,
    },
    /// Estimator using only pairs known to be similar.
    SimilarOnly,
    /// Estimator using only pairs known to be dissimilar.
    DissimilarOnly,
    /// Ordinary labeled risk; not a pairwise estimator.
    Supervised,
}

impl EstimatorKind {
    pub fn name(&self) -> String {
        match self {
            EstimatorKind::Unbiased => "unbiased".into(),
            EstimatorKind::NonNegative => "nn".into(),
            EstimatorKind::Absolute => "abs".into(),
            EstimatorKind::Corrected { k } => format!("corrected:{k}"),
            EstimatorKind::SimilarOnly => "similar_only".into(),
            EstimatorKind::DissimilarOnly => "dissimilar_only".into(),
            EstimatorKind::Supervised => "supervised".into(),
        }
    }

    /// Inverse of [`EstimatorKind::name`]; also accepts `corrected(k)`.
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let kind = match t.as_str() {
            "unbiased" => EstimatorKind::Unbiased,
            "nn" | "non_negative" => EstimatorKind::NonNegative,
            "abs" | "absolute" => EstimatorKind::Absolute,
            "similar_only" | "similar" => EstimatorKind::SimilarOnly,
            "dissimilar_only" | "dissimilar" => EstimatorKind::DissimilarOnly,
            "supervised" => EstimatorKind::Supervised,
            other => {
                let k = other
                    .strip_prefix("corrected:")
                    .or_else(|| other.strip_prefix("corrected(").and_then(|r| r.strip_suffix(')')))
                    .and_then(|k| k.parse::<f64>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown estimator {s:?}")))?;
                EstimatorKind::Corrected { k }
            }
        };
        Ok(kind)
    }

    pub fn is_pairwise(&self) -> bool {
        !matches!(self, EstimatorKind::Supervised)
    }

    pub fn is_one_sided(&self) -> bool {
        matches!(self, EstimatorKind::SimilarOnly | EstimatorKind::DissimilarOnly)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskSpec {
    kind: EstimatorKind,
    pi_plus: f64,
    loss: LossKind,
}

impl RiskSpec {
    pub fn new(kind: EstimatorKind, pi_plus: f64, loss: LossKind) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi_plus) {
            return Err(Error::Config(format!("pi_plus must lie in [0, 1], got {pi_plus}")));
        }
        if let EstimatorKind::Corrected { k } = kind {
            if !(k > 0.0) || !k.is_finite() {
                return Err(Error::Config(format!("correction slope k must be positive, got {k}")));
            }
        }
        if kind.is_pairwise() && (pi_plus - 0.5).abs() < PRIOR_MARGIN {
            return Err(Error::PriorTooBalanced { pi_plus, margin: PRIOR_MARGIN });
        }
        Ok(RiskSpec { kind, pi_plus, loss })
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn pi_plus(&self) -> f64 {
        self.pi_plus
    }

    pub fn pi_minus(&self) -> f64 {
        1.0 - self.pi_plus
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    /// `pi_+^2 + pi_-^2`, the expected confidence of a random pair.
    pub fn pi_similar(&self) -> f64 {
        self.pi_plus.powi(2) + self.pi_minus().powi(2)
    }

    /// Per-pair multipliers `(c+, c-)` of the summed positive and negative
    /// losses for a batch of `n` pairs.
    fn coefficients(&self, index: usize, s: f64, n: usize) -> Result<(f64, f64)> {
        let (pp, pm) = (self.pi_plus, self.pi_minus());
        let denom = 2.0 * n as f64 * (pp - pm);
        let scale = match self.kind {
            EstimatorKind::SimilarOnly => {
                if s <= 0.0 {
                    return Err(Error::DivisionGuard { estimator: "similar-only", index, s });
                }
                self.pi_similar() / s
            }
            EstimatorKind::DissimilarOnly => {
                if s >= 1.0 {
                    return Err(Error::DivisionGuard { estimator: "dissimilar-only", index, s });
                }
                2.0 * pp * pm / (1.0 - s)
            }
            _ => 1.0,
        };
        Ok((scale * (s - pm) / denom, scale * (pp - s) / denom))
    }

    fn check_batch(&self, n_scores: usize, confidences: &[f64]) -> Result<()> {
        if !self.kind.is_pairwise() {
            return Err(Error::Contract("supervised spec used with pairwise data".into()));
        }
        if n_scores != confidences.len() {
            return Err(Error::Contract(format!("{} score pairs but {} confidences", n_scores, confidences.len())));
        }
        if confidences.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        Ok(())
    }
}

/// Positive- and negative-label parts of a pairwise risk estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialRisks {
    pub r_plus: f64,
    pub r_minus: f64,
}

/// Per-pair multipliers of `dl(z,+1)/dz`, `dl(z',+1)/dz`, `dl(z,-1)/dz` and
/// `dl(z',-1)/dz` in the gradient of [`total_risk`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairWeights {
    pub pos_x: f64,
    pub pos_x_prime: f64,
    pub neg_x: f64,
    pub neg_x_prime: f64,
}

pub fn partial_risks(scores: &[(f64, f64)], confidences: &[f64], spec: &RiskSpec) -> Result<PartialRisks> {
    spec.check_batch(scores.len(), confidences)?;
    let n = scores.len();
    let mut pos = Vec::with_capacity(n);
    let mut neg = Vec::with_capacity(n);
    for (i, (&(z, zp), &s)) in scores.iter().zip(confidences).enumerate() {
        let (cp, cn) = spec.coefficients(i, s, n)?;
        let l = |z, y| loss_value(spec.loss, z, y);
        pos.push(cp * (l(z, Label::Positive) + l(zp, Label::Positive)));
        neg.push(cn * (l(z, Label::Negative) + l(zp, Label::Negative)));
    }
    Ok(PartialRisks { r_plus: pairwise_sum(&pos), r_minus: pairwise_sum(&neg) })
}

/// Correction `f` with slope `k` on the negative side.
fn correct(x: f64, k: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        k * x.abs()
    }
}

/// Derivative of the correction; 1 at the kink.
fn correct_slope(x: f64, k: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -k
    }
}

fn outer_factors(pr: &PartialRisks, kind: EstimatorKind) -> (f64, f64) {
    match kind {
        EstimatorKind::NonNegative => {
            (if pr.r_plus >= 0.0 { 1.0 } else { 0.0 }, if pr.r_minus >= 0.0 { 1.0 } else { 0.0 })
        }
        EstimatorKind::Absolute => (correct_slope(pr.r_plus, 1.0), correct_slope(pr.r_minus, 1.0)),
        EstimatorKind::Corrected { k } => (correct_slope(pr.r_plus, k), correct_slope(pr.r_minus, k)),
        _ => (1.0, 1.0),
    }
}

pub fn total_risk(pr: &PartialRisks, spec: &RiskSpec) -> f64 {
    let PartialRisks { r_plus, r_minus } = *pr;
    match spec.kind {
        EstimatorKind::NonNegative => r_plus.max(0.0) + r_minus.max(0.0),
        EstimatorKind::Absolute => r_plus.abs() + r_minus.abs(),
        EstimatorKind::Corrected { k } => correct(r_plus, k) + correct(r_minus, k),
        _ => r_plus + r_minus,
    }
}

pub fn risk_gradient_weights(confidences: &[f64], pr: &PartialRisks, spec: &RiskSpec) -> Result<Vec<PairWeights>> {
    spec.check_batch(confidences.len(), confidences)?;
    let n = confidences.len();
    let (fp, fm) = outer_factors(pr, spec.kind);
    confidences
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let (cp, cn) = spec.coefficients(i, s, n)?;
            Ok(PairWeights { pos_x: fp * cp, pos_x_prime: fp * cp, neg_x: fm * cn, neg_x_prime: fm * cn })
        })
        .collect()
}

/// Value of the estimator and its gradient with respect to every score.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskEvaluation {
    pub partial: PartialRisks,
    pub risk: f64,
    /// `(dR/dz_i, dR/dz'_i)` per pair.
    pub score_gradients: Vec<(f64, f64)>,
}

pub fn evaluate_with_gradient(scores: &[(f64, f64)], confidences: &[f64], spec: &RiskSpec) -> Result<RiskEvaluation> {
    let partial = partial_risks(scores, confidences, spec)?;
    let weights = risk_gradient_weights(confidences, &partial, spec)?;
    let d = |z, y| loss_derivative(spec.loss, z, y);
    let score_gradients = scores
        .iter()
        .zip(&weights)
        .map(|(&(z, zp), w)| {
            Ok((
                w.pos_x * d(z, Label::Positive)? + w.neg_x * d(z, Label::Negative)?,
                w.pos_x_prime * d(zp, Label::Positive)? + w.neg_x_prime * d(zp, Label::Negative)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RiskEvaluation { partial, risk: total_risk(&partial, spec), score_gradients })
}

/// Similar-only or dissimilar-only estimate.
pub fn one_sided_risk(scores: &[(f64, f64)], confidences: &[f64], spec: &RiskSpec) -> Result<f64> {
    if !spec.kind.is_one_sided() {
        return Err(Error::Contract(format!(
            "one_sided_risk needs a similar_only or dissimilar_only spec, got {}",
            spec.kind.name()
        )));
    }
    let pr = partial_risks(scores, confidences, spec)?;
    Ok(pr.r_plus + pr.r_minus)
}

/// Mean loss over labeled scores.
pub fn supervised_risk(scores: &[f64], labels: &[Label], loss: LossKind) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    if scores.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let terms: Vec<f64> = scores.iter().zip(labels).map(|(&z, &y)| loss_value(loss, z, y)).collect();
    Ok(pairwise_sum(&terms) / scores.len() as f64)
}

/// Gradient of [`supervised_risk`] with respect to each score.
pub fn supervised_score_gradients(scores: &[f64], labels: &[Label], loss: LossKind) -> Result<Vec<f64>> {
    let n = scores.len() as f64;
    scores.iter().zip(labels).map(|(&z, &y)| Ok(loss_derivative(loss, z, y)? / n)).collect()
}

/// The pairwise estimators are linear in per-point losses, so a set of pairs
/// over shared points can be folded into one positive and one negative
/// weight per point. The folded form gives the same risk (up to summation
/// order) at a cost proportional to the number of distinct points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointWeights {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

/// Folds pairs `(a_i, b_i)` of point indices with confidences `s_i` into
/// per-point weights.
pub fn point_weights(
    members: &[(usize, usize)],
    confidences: &[f64],
    n_points: usize,
    spec: &RiskSpec,
) -> Result<PointWeights> {
    spec.check_batch(members.len(), confidences)?;
    let n = members.len();
    let mut pos_terms: Vec<Vec<f64>> = vec![Vec::new(); n_points];
    let mut neg_terms: Vec<Vec<f64>> = vec![Vec::new(); n_points];
    for (i, (&(a, b), &s)) in members.iter().zip(confidences).enumerate() {
        if a >= n_points || b >= n_points {
            return Err(Error::Contract(format!("pair {i} refers to a point outside 0..{n_points}")));
        }
        let (cp, cn) = spec.coefficients(i, s, n)?;
        for j in [a, b] {
            pos_terms[j].push(cp);
            neg_terms[j].push(cn);
        }
    }
    Ok(PointWeights {
        pos: pos_terms.iter().map(|t| pairwise_sum(t)).collect(),
        neg: neg_terms.iter().map(|t| pairwise_sum(t)).collect(),
    })
}

/// Risk and per-point score gradient from folded weights.
pub fn evaluate_points(scores: &[f64], w: &PointWeights, spec: &RiskSpec) -> Result<(PartialRisks, f64, Vec<f64>)> {
    if scores.len() != w.pos.len() {
        return Err(Error::Contract(format!("{} scores for {} points", scores.len(), w.pos.len())));
    }
    let l = |z, y| loss_value(spec.loss, z, y);
    let pos: Vec<f64> = scores.iter().zip(&w.pos).map(|(&z, &c)| c * l(z, Label::Positive)).collect();
    let neg: Vec<f64> = scores.iter().zip(&w.neg).map(|(&z, &c)| c * l(z, Label::Negative)).collect();
    let partial = PartialRisks { r_plus: pairwise_sum(&pos), r_minus: pairwise_sum(&neg) };
    let (fp, fm) = outer_factors(&partial, spec.kind);
    let d = |z, y| loss_derivative(spec.loss, z, y);
    let grads = scores
        .iter()
        .zip(w.pos.iter().zip(&w.neg))
        .map(|(&z, (&cp, &cn))| Ok(fp * cp * d(z, Label::Positive)? + fm * cn * d(z, Label::Negative)?))
        .collect::<Result<Vec<_>>>()?;
    Ok((partial, total_risk(&partial, spec), grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::softplus;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn spec(kind: EstimatorKind, pi: f64) -> RiskSpec {
        RiskSpec::new(kind, pi, LossKind::Logistic).unwrap()
    }

    fn random_batch(n: usize, seed: u64) -> (Vec<(f64, f64)>, Vec<f64>) {
        let mut r = rng::seeded(seed, 99);
        let scores = (0..n).map(|_| (r.random_range(-3.0..3.0), r.random_range(-3.0..3.0))).collect();
        let conf = (0..n).map(|_| r.random_range(0.01..0.99)).collect();
        (scores, conf)
    }

    #[test]
    fn prior_guard_and_k_validation() {
        let err = RiskSpec::new(EstimatorKind::Unbiased, 0.5005, LossKind::Logistic).unwrap_err();
        assert!(matches!(err, Error::PriorTooBalanced { .. }));
        assert!(err.to_string().contains("0.5005"));
        assert!(RiskSpec::new(EstimatorKind::Supervised, 0.5, LossKind::Logistic).is_ok());
        assert!(RiskSpec::new(EstimatorKind::Corrected { k: 0.0 }, 0.7, LossKind::Logistic).is_err());
        assert!(RiskSpec::new(EstimatorKind::Unbiased, 1.2, LossKind::Logistic).is_err());
    }

    #[test]
    fn estimator_names_round_trip() {
        for k in [
            EstimatorKind::Unbiased,
            EstimatorKind::NonNegative,
            EstimatorKind::Absolute,
            EstimatorKind::Corrected { k: 2.5 },
            EstimatorKind::SimilarOnly,
            EstimatorKind::DissimilarOnly,
            EstimatorKind::Supervised,
        ] {
            assert_eq!(EstimatorKind::parse(&k.name()).unwrap(), k);
        }
        assert_eq!(EstimatorKind::parse("corrected(2)").unwrap(), EstimatorKind::Corrected { k: 2.0 });
        assert!(EstimatorKind::parse("bogus").is_err());
    }

    #[test]
    fn single_pair_at_prior_cancels_negative_part() {
        let sp = spec(EstimatorKind::Unbiased, 0.7);
        let (z, zp) = (0.4, -1.3);
        let pr = partial_risks(&[(z, zp)], &[0.7], &sp).unwrap();
        assert_eq!(pr.r_minus, 0.0);
        let want = 0.5 * (softplus(-z) + softplus(-zp));
        assert!((pr.r_plus - want).abs() < 1e-15);
    }

    #[test]
    fn single_pair_at_pi_minus_cancels_positive_part() {
        let sp = spec(EstimatorKind::Unbiased, 0.7);
        let (z, zp) = (0.4, -1.3);
        let pr = partial_risks(&[(z, zp)], &[sp.pi_minus()], &sp).unwrap();
        assert_eq!(pr.r_plus, 0.0);
        let want = 0.5 * (softplus(z) + softplus(zp));
        assert!((pr.r_minus - want).abs() < 1e-15);
    }

    /// Straight transcription of the partial-risk formulas.
    fn partial_oracle(scores: &[(f64, f64)], s: &[f64], pp: f64) -> (f64, f64) {
        let pm = 1.0 - pp;
        let n = s.len() as f64;
        let mut rp = 0.0;
        let mut rm = 0.0;
        for (i, &(z, zp)) in scores.iter().enumerate() {
            rp += (s[i] - pm) * ((1.0 + (-z).exp()).ln() + (1.0 + (-zp).exp()).ln()) / (2.0 * n * (pp - pm));
            rm += (pp - s[i]) * ((1.0 + z.exp()).ln() + (1.0 + zp.exp()).ln()) / (2.0 * n * (pp - pm));
        }
        (rp, rm)
    }

    #[test]
    fn partial_risks_match_formula_oracle() {
        let (scores, conf) = random_batch(7, 1);
        let pr = partial_risks(&scores, &conf, &spec(EstimatorKind::Unbiased, 0.7)).unwrap();
        let (rp, rm) = partial_oracle(&scores, &conf, 0.7);
        assert!((pr.r_plus - rp).abs() < 1e-12);
        assert!((pr.r_minus - rm).abs() < 1e-12);
    }

    #[test]
    fn partial_risk_errors() {
        let sp = spec(EstimatorKind::Unbiased, 0.7);
        assert!(partial_risks(&[], &[], &sp).is_err());
        assert!(partial_risks(&[(0.0, 0.0)], &[0.5, 0.5], &sp).is_err());
        let sup = RiskSpec::new(EstimatorKind::Supervised, 0.7, LossKind::Logistic).unwrap();
        assert!(partial_risks(&[(0.0, 0.0)], &[0.5], &sup).is_err());
    }

    #[test]
    fn correction_branches() {
        let pr = PartialRisks { r_plus: -0.3, r_minus: 0.5 };
        let close = |a: f64, b: f64| (a - b).abs() < 1e-15;
        assert!(close(total_risk(&pr, &spec(EstimatorKind::Unbiased, 0.7)), 0.2));
        assert!(close(total_risk(&pr, &spec(EstimatorKind::NonNegative, 0.7)), 0.5));
        assert!(close(total_risk(&pr, &spec(EstimatorKind::Absolute, 0.7)), 0.8));
        assert!(close(total_risk(&pr, &spec(EstimatorKind::Corrected { k: 2.0 }, 0.7)), 1.1));
        let pos = PartialRisks { r_plus: 0.4, r_minus: 0.6 };
        for kind in [
            EstimatorKind::Unbiased,
            EstimatorKind::NonNegative,
            EstimatorKind::Absolute,
            EstimatorKind::Corrected { k: 3.0 },
        ] {
            assert!(close(total_risk(&pos, &spec(kind, 0.7)), 1.0));
        }
        let tiny = PartialRisks { r_plus: -1e-9, r_minus: 0.0 };
        assert_eq!(total_risk(&tiny, &spec(EstimatorKind::Absolute, 0.7)), 1e-9);
    }

    #[test]
    fn unbiased_weights_are_raw_coefficients() {
        let (_, conf) = random_batch(5, 2);
        let sp = spec(EstimatorKind::Unbiased, 0.7);
        let pr = PartialRisks { r_plus: -1.0, r_minus: -1.0 };
        let w = risk_gradient_weights(&conf, &pr, &sp).unwrap();
        for (wi, &s) in w.iter().zip(&conf) {
            assert!((wi.pos_x - (s - 0.3) / (2.0 * 5.0 * 0.4)).abs() < 1e-15);
            assert!((wi.neg_x_prime - (0.7 - s) / (2.0 * 5.0 * 0.4)).abs() < 1e-15);
        }
    }

    #[test]
    fn abs_negates_positive_weights_when_r_plus_negative() {
        let (_, conf) = random_batch(5, 3);
        let pr_neg = PartialRisks { r_plus: -0.1, r_minus: 0.2 };
        let pr_pos = PartialRisks { r_plus: 0.1, r_minus: 0.2 };
        let sp = spec(EstimatorKind::Absolute, 0.7);
        let a = risk_gradient_weights(&conf, &pr_neg, &sp).unwrap();
        let b = risk_gradient_weights(&conf, &pr_pos, &sp).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.pos_x, -y.pos_x);
            assert_eq!(x.pos_x_prime, -y.pos_x_prime);
            assert_eq!(x.neg_x, y.neg_x);
        }
        // The kink takes the identity branch.
        let kink = PartialRisks { r_plus: 0.0, r_minus: 0.0 };
        let c = risk_gradient_weights(&conf, &kink, &sp).unwrap();
        assert_eq!(c, b);
    }

    #[test]
    fn one_sided_examples() {
        let (z, zp) = (0.3, 1.1);
        let lp = softplus(-z) + softplus(-zp);
        let ln = softplus(z) + softplus(zp);
        let sim = one_sided_risk(&[(z, zp)], &[0.7], &spec(EstimatorKind::SimilarOnly, 0.7)).unwrap();
        assert!((sim - 0.58 * lp / 1.4).abs() < 1e-14);
        let dis = one_sided_risk(&[(z, zp)], &[0.3], &spec(EstimatorKind::DissimilarOnly, 0.7)).unwrap();
        assert!((dis - 2.0 * 0.7 * 0.3 * ln / (2.0 * 0.7)).abs() < 1e-14);
    }

    #[test]
    fn one_sided_division_guards() {
        let err =
            one_sided_risk(&[(0.0, 0.0), (0.0, 0.0)], &[0.5, 0.0], &spec(EstimatorKind::SimilarOnly, 0.7)).unwrap_err();
        assert!(matches!(err, Error::DivisionGuard { index: 1, .. }), "{err}");
        let err = one_sided_risk(&[(0.0, 0.0)], &[1.0], &spec(EstimatorKind::DissimilarOnly, 0.7)).unwrap_err();
        assert!(matches!(err, Error::DivisionGuard { index: 0, .. }), "{err}");
        assert!(one_sided_risk(&[(0.0, 0.0)], &[0.5], &spec(EstimatorKind::Unbiased, 0.7)).is_err());
    }

    #[test]
    fn one_sided_matches_formula_oracle() {
        let (scores, conf) = random_batch(9, 4);
        let (pp, pm) = (0.7f64, 0.3f64);
        let n = conf.len() as f64;
        let mut sim = 0.0;
        let mut dis = 0.0;
        for (i, &(z, zp)) in scores.iter().enumerate() {
            let lp = (1.0 + (-z).exp()).ln() + (1.0 + (-zp).exp()).ln();
            let ln = (1.0 + z.exp()).ln() + (1.0 + zp.exp()).ln();
            let inner = (conf[i] - pm) * lp + (pp - conf[i]) * ln;
            sim += (pp * pp + pm * pm) * inner / (2.0 * n * (pp - pm) * conf[i]);
            dis += 2.0 * pp * pm * inner / (2.0 * n * (pp - pm) * (1.0 - conf[i]));
        }
        let a = one_sided_risk(&scores, &conf, &spec(EstimatorKind::SimilarOnly, 0.7)).unwrap();
        let b = one_sided_risk(&scores, &conf, &spec(EstimatorKind::DissimilarOnly, 0.7)).unwrap();
        assert!((a - sim).abs() < 1e-12);
        assert!((b - dis).abs() < 1e-12);
    }

    #[test]
    fn supervised_examples() {
        use Label::*;
        let r = supervised_risk(&[1.0, -2.0, 0.0], &[Positive, Negative, Positive], LossKind::ZeroOne).unwrap();
        assert_eq!(r, 0.0);
        let r = supervised_risk(&[0.0; 4], &[Positive, Negative, Positive, Negative], LossKind::Logistic).unwrap();
        assert!((r - 2f64.ln()).abs() < 1e-15);
        let r = supervised_risk(&[1.0, -0.5], &[Negative, Positive], LossKind::Logistic).unwrap();
        let hand = ((1.0 + 1f64.exp()).ln() + (1.0 + 0.5f64.exp()).ln()) / 2.0;
        assert!((r - hand).abs() < 1e-15);
        assert!(supervised_risk(&[], &[], LossKind::Logistic).is_err());
        assert!(supervised_risk(&[0.0], &[], LossKind::Logistic).is_err());
    }

    fn fd_check(kind: EstimatorKind, seed: u64) {
        let sp = spec(kind, 0.7);
        let (scores, conf) = random_batch(11, seed);
        let eval = evaluate_with_gradient(&scores, &conf, &sp).unwrap();
        let h = 1e-6;
        let risk_at = |sc: &[(f64, f64)]| total_risk(&partial_risks(sc, &conf, &sp).unwrap(), &sp);
        for i in 0..scores.len() {
            for side in 0..2 {
                let mut up = scores.clone();
                let mut dn = scores.clone();
                if side == 0 {
                    up[i].0 += h;
                    dn[i].0 -= h;
                } else {
                    up[i].1 += h;
                    dn[i].1 -= h;
                }
                let fd = (risk_at(&up) - risk_at(&dn)) / (2.0 * h);
                let g = if side == 0 { eval.score_gradients[i].0 } else { eval.score_gradients[i].1 };
                assert!((g - fd).abs() <= 1e-6 * g.abs().max(1e-3), "{kind:?} pair {i}: {g} vs {fd}");
            }
        }
    }

    #[test]
    fn score_gradients_match_finite_differences() {
        for seed in 0..5 {
            for kind in [
                EstimatorKind::Unbiased,
                EstimatorKind::NonNegative,
                EstimatorKind::Absolute,
                EstimatorKind::Corrected { k: 0.5 },
                EstimatorKind::SimilarOnly,
                EstimatorKind::DissimilarOnly,
            ] {
                fd_check(kind, seed);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn corrected_dominates_unbiased(rp in -5.0f64..5.0, rm in -5.0f64..5.0, k in 0.01f64..10.0) {
            let pr = PartialRisks { r_plus: rp, r_minus: rm };
            let u = total_risk(&pr, &spec(EstimatorKind::Unbiased, 0.7));
            let c = total_risk(&pr, &spec(EstimatorKind::Corrected { k }, 0.7));
            prop_assert!(c >= u);
            prop_assert_eq!(c == u, rp >= 0.0 && rm >= 0.0);
            prop_assert!(total_risk(&pr, &spec(EstimatorKind::NonNegative, 0.7)) >= 0.0);
            prop_assert!(total_risk(&pr, &spec(EstimatorKind::Absolute, 0.7)) >= 0.0);
        }
    }

    #[test]
    fn folded_weights_match_pairwise_evaluation() {
        let mut r = rng::seeded(41, 1);
        let n_points = 9;
        let z: Vec<f64> = (0..n_points).map(|_| r.random_range(-3.0..3.0)).collect();
        let members: Vec<(usize, usize)> =
            (0..n_points).flat_map(|a| ((a + 1)..n_points).map(move |b| (a, b))).collect();
        let s: Vec<f64> = members.iter().map(|_| r.random_range(0.01..0.99)).collect();
        let scores: Vec<(f64, f64)> = members.iter().map(|&(a, b)| (z[a], z[b])).collect();
        for kind in [
            EstimatorKind::Unbiased,
            EstimatorKind::NonNegative,
            EstimatorKind::Absolute,
            EstimatorKind::Corrected { k: 0.5 },
            EstimatorKind::SimilarOnly,
            EstimatorKind::DissimilarOnly,
        ] {
            let sp = spec(kind, 0.7);
            let direct = evaluate_with_gradient(&scores, &s, &sp).unwrap();
            let w = point_weights(&members, &s, n_points, &sp).unwrap();
            let (pr, risk, g) = evaluate_points(&z, &w, &sp).unwrap();
            assert!((risk - direct.risk).abs() <= 1e-12 * direct.risk.abs().max(1.0), "{kind:?}");
            assert!((pr.r_plus - direct.partial.r_plus).abs() <= 1e-12);
            // Chain the pair gradients back onto points.
            let mut want = vec![0.0; n_points];
            for (&(a, b), &(ga, gb)) in members.iter().zip(&direct.score_gradients) {
                want[a] += ga;
                want[b] += gb;
            }
            for (x, y) in g.iter().zip(&want) {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "{kind:?}: {x} vs {y}");
            }
        }
        assert!(point_weights(&[(0, 9)], &[0.5], 9, &spec(EstimatorKind::Unbiased, 0.7)).is_err());
    }
}
