//! Synthetic Gaussian data, pair construction and similarity confidence.
//!
//! Each class is a multivariate Gaussian; covariances are factored once with
//! a lower-triangular Cholesky decomposition which serves both sampling
//! (`mu + L z`) and exact log densities.

use std::f64::consts::PI;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::keyvalue::KeyValues;
use crate::losses::Label;
use crate::numeric::{pairwise_sum, sigmoid};
use crate::rng::{self, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub x: Vec<f64>,
    pub y: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SconfPair {
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    /// Probability that `x` and `x_prime` share a class.
    pub s: f64,
}

/// Where the confidences of a dataset came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    /// Computed from the true class posteriors.
    Exact,
    /// Exact confidences plus clipped Gaussian noise of this standard deviation.
    Noisy { std: f64 },
    /// Computed from the posteriors of a trained probabilistic classifier.
    Model,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Exact => write!(f, "exact"),
            Provenance::Noisy { std } => write!(f, "noisy({std})"),
            Provenance::Model => write!(f, "model"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SconfDataset {
    pub pairs: Vec<SconfPair>,
    pub provenance: Provenance,
}

impl SconfDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn confidences(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.s).collect()
    }

    pub fn dim(&self) -> Option<usize> {
        self.pairs.first().map(|p| p.x.len())
    }
}

/// A Gaussian with a cached Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
struct Gaussian {
    mean: Vec<f64>,
    /// Lower-triangular factor, row-major d x d.
    chol: Vec<f64>,
    /// -(d/2) ln(2 pi) - (1/2) ln det(Sigma)
    log_norm: f64,
}

/// Lower Cholesky factor of a row-major symmetric matrix, or `None` if the
/// matrix is not symmetric positive-definite.
pub fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    if a.len() != d * d {
        return None;
    }
    for i in 0..d {
        for j in 0..i {
            let (x, y) = (a[i * d + j], a[j * d + i]);
            if (x - y).abs() > 1e-12 * (1.0 + x.abs().max(y.abs())) {
                return None;
            }
        }
    }
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut sum = a[i * d + j];
            for k in 0..j {
                sum -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(sum > 0.0) {
                    return None;
                }
                l[i * d + i] = sum.sqrt();
            } else {
                l[i * d + j] = sum / l[j * d + j];
            }
        }
    }
    Some(l)
}

impl Gaussian {
    fn new(mean: Vec<f64>, cov: &[f64], name: &str) -> Result<Self> {
        let d = mean.len();
        if cov.len() != d * d {
            return Err(Error::Config(format!(
                "{name}: expected {} covariance entries for dimension {d}, got {}",
                d * d,
                cov.len()
            )));
        }
        let chol = cholesky(cov, d)
            .ok_or_else(|| Error::Config(format!("{name} is not symmetric positive-definite: {cov:?}")))?;
        let log_det: f64 = (0..d).map(|i| 2.0 * chol[i * d + i].ln()).sum();
        let log_norm = -0.5 * d as f64 * (2.0 * PI).ln() - 0.5 * log_det;
        Ok(Gaussian { mean, chol, log_norm })
    }

    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        // Forward substitution L u = x - mean; the quadratic form is |u|^2.
        let mut u = vec![0.0; d];
        for i in 0..d {
            let mut v = x[i] - self.mean[i];
            for k in 0..i {
                v -= self.chol[i * d + k] * u[k];
            }
            u[i] = v / self.chol[i * d + i];
        }
        self.log_norm - 0.5 * u.iter().map(|v| v * v).sum::<f64>()
    }

    fn sample(&self, rng: &mut rng::Rng) -> Vec<f64> {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        (0..d).map(|i| self.mean[i] + (0..=i).map(|k| self.chol[i * d + k] * z[k]).sum::<f64>()).collect()
    }
}

/// Two class-conditional Gaussians and the positive class prior.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSetup {
    pub mu_plus: Vec<f64>,
    pub mu_minus: Vec<f64>,
    /// Row-major covariance of the positive class.
    pub sigma_plus: Vec<f64>,
    pub sigma_minus: Vec<f64>,
    pub pi_plus: f64,
    plus: Gaussian,
    minus: Gaussian,
}

impl GaussianSetup {
    pub fn new(
        mu_plus: Vec<f64>,
        mu_minus: Vec<f64>,
        sigma_plus: Vec<f64>,
        sigma_minus: Vec<f64>,
        pi_plus: f64,
    ) -> Result<Self> {
        if mu_plus.is_empty() || mu_plus.len() != mu_minus.len() {
            return Err(Error::Config(format!(
                "mu_plus and mu_minus must have the same non-zero dimension (got {} and {})",
                mu_plus.len(),
                mu_minus.len()
            )));
        }
        if !(pi_plus > 0.0 && pi_plus < 1.0) {
            return Err(Error::Config(format!("pi_plus must lie in (0, 1), got {pi_plus}")));
        }
        let plus = Gaussian::new(mu_plus.clone(), &sigma_plus, "sigma_plus")?;
        let minus = Gaussian::new(mu_minus.clone(), &sigma_minus, "sigma_minus")?;
        Ok(GaussianSetup { mu_plus, mu_minus, sigma_plus, sigma_minus, pi_plus, plus, minus })
    }

    /// Built-in setups: `A`..`D` for the synthetic benchmark and `collapse`
    /// for the one-sided failure demonstration. All use 500 positive and 300
    /// negative training points, hence a prior of 0.625.
    pub fn preset(name: &str) -> Result<Self> {
        let pi = PRESET_N_PLUS as f64 / (PRESET_N_PLUS + PRESET_N_MINUS) as f64;
        let (mp, mm, sp, sm): ([f64; 2], [f64; 2], [f64; 4], [f64; 4]) = match name.to_ascii_uppercase().as_str() {
            "A" => ([0.0, 0.0], [-2.0, 5.0], [7.0, -6.0, -6.0, 7.0], [2.0, 0.0, 0.0, 2.0]),
            "B" => ([0.0, 0.0], [4.0, 0.0], [3.0, 0.0, 0.0, 3.0], [2.0, 0.0, 0.0, 2.0]),
            "C" => ([0.0, 0.0], [3.0, -3.0], [2.0, 0.0, 0.0, 2.0], [4.0, -3.0, -3.0, 4.0]),
            "D" => ([0.0, 0.0], [4.0, 4.0], [2.0, 0.0, 0.0, 2.0], [6.0, -5.0, -5.0, 6.0]),
            "COLLAPSE" => ([-4.0, 0.0], [2.0, 2.0], [2.0, 0.0, 0.0, 2.0], [3.0, 0.0, 0.0, 3.0]),
            _ => return Err(Error::Config(format!("unknown setup preset {name:?} (expected A, B, C, D or collapse)"))),
        };
        GaussianSetup::new(mp.to_vec(), mm.to_vec(), sp.to_vec(), sm.to_vec(), pi)
    }

    pub fn dim(&self) -> usize {
        self.mu_plus.len()
    }

    pub fn pi_minus(&self) -> f64 {
        1.0 - self.pi_plus
    }

    pub fn log_density(&self, x: &[f64], y: Label) -> f64 {
        match y {
            Label::Positive => self.plus.log_density(x),
            Label::Negative => self.minus.log_density(x),
        }
    }

    pub fn sample_class(&self, y: Label, rng: &mut rng::Rng) -> Vec<f64> {
        match y {
            Label::Positive => self.plus.sample(rng),
            Label::Negative => self.minus.sample(rng),
        }
    }

    /// Bayes classifier: positive iff the posterior is at least 1/2.
    pub fn bayes_predict(&self, x: &[f64]) -> Label {
        if posterior_plus(x, self) >= 0.5 {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

pub const PRESET_N_PLUS: usize = 500;
pub const PRESET_N_MINUS: usize = 300;

/// A setup together with the generation counts and seed, as stored in a
/// setup file.
#[derive(Debug, Clone, PartialEq)]
pub struct SetupFile {
    pub setup: GaussianSetup,
    pub n_plus: usize,
    pub n_minus: usize,
    pub seed: u64,
}

impl SetupFile {
    pub const KEYS: &'static [&'static str] =
        &["mu_plus", "mu_minus", "sigma_plus", "sigma_minus", "pi_plus", "n_plus", "n_minus", "seed"];

    /// Parses the `key = value` setup format. `pi_plus` defaults to
    /// `n_plus / (n_plus + n_minus)`.
    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text, Some(Self::KEYS))?;
        let list = |k: &str| -> Result<Vec<f64>> {
            kv.parse_f64_list(k)?.ok_or_else(|| Error::Config(format!("missing required key {k:?}")))
        };
        let n_plus = kv.parse_usize("n_plus")?.unwrap_or(PRESET_N_PLUS);
        let n_minus = kv.parse_usize("n_minus")?.unwrap_or(PRESET_N_MINUS);
        let pi_plus = match kv.parse_f64("pi_plus")? {
            Some(p) => p,
            None if n_plus + n_minus > 0 => n_plus as f64 / (n_plus + n_minus) as f64,
            None => return Err(Error::Config("pi_plus missing and n_plus + n_minus = 0".into())),
        };
        let setup = GaussianSetup::new(
            list("mu_plus")?,
            list("mu_minus")?,
            list("sigma_plus")?,
            list("sigma_minus")?,
            pi_plus,
        )?;
        let seed = kv.parse_u64("seed")?.ok_or_else(|| Error::Config("missing required key \"seed\"".into()))?;
        Ok(SetupFile { setup, n_plus, n_minus, seed })
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        format!(
            "mu_plus = {}\nmu_minus = {}\nsigma_plus = {}\nsigma_minus = {}\npi_plus = {}\nn_plus = {}\nn_minus = {}\nseed = {}\n",
            join(&self.setup.mu_plus),
            join(&self.setup.mu_minus),
            join(&self.setup.sigma_plus),
            join(&self.setup.sigma_minus),
            self.setup.pi_plus,
            self.n_plus,
            self.n_minus,
            self.seed
        )
    }
}

/// `n_plus` positive then `n_minus` negative examples.
pub fn sample_labeled(setup: &GaussianSetup, n_plus: usize, n_minus: usize, seed: u64) -> Vec<LabeledExample> {
    let mut rng = rng::seeded(seed, stream::SAMPLE);
    let mut out = Vec::with_capacity(n_plus + n_minus);
    for _ in 0..n_plus {
        out.push(LabeledExample { x: setup.sample_class(Label::Positive, &mut rng), y: Label::Positive });
    }
    for _ in 0..n_minus {
        out.push(LabeledExample { x: setup.sample_class(Label::Negative, &mut rng), y: Label::Negative });
    }
    out
}

/// `n` i.i.d. draws from the class mixture (labels Bernoulli(pi_plus)).
pub fn sample_mixture(setup: &GaussianSetup, n: usize, seed: u64) -> Vec<LabeledExample> {
    let mut rng = rng::seeded(seed, stream::SAMPLE);
    (0..n)
        .map(|_| {
            let y = if rng.random::<f64>() < setup.pi_plus { Label::Positive } else { Label::Negative };
            LabeledExample { x: setup.sample_class(y, &mut rng), y }
        })
        .collect()
}

/// Posterior from class log densities. Accepts the degenerate priors 0 and 1;
/// when neither class has finite log mass the prior itself is returned.
pub fn class_posterior(log_p_plus: f64, log_p_minus: f64, pi_plus: f64) -> f64 {
    let a = pi_plus.ln() + log_p_plus;
    let b = (1.0 - pi_plus).ln() + log_p_minus;
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY || a.is_nan() || b.is_nan() {
        return pi_plus;
    }
    // a / (a + b) in log space is sigmoid(a - b).
    sigmoid(a - b)
}

/// `p(y = +1 | x)` under the setup.
pub fn posterior_plus(x: &[f64], setup: &GaussianSetup) -> f64 {
    class_posterior(setup.plus.log_density(x), setup.minus.log_density(x), setup.pi_plus)
}

/// Probability that two points share a class given their positive-class
/// posteriors.
pub fn similarity_confidence(r_x: f64, r_xp: f64) -> Result<f64> {
    for r in [r_x, r_xp] {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Contract(format!("posterior must lie in [0, 1], got {r}")));
        }
    }
    Ok((r_x * r_xp + (1.0 - r_x) * (1.0 - r_xp)).clamp(0.0, 1.0))
}

/// Shuffles `points` with a seeded permutation and pairs consecutive points,
/// attaching the confidence computed from `posterior`.
pub fn pair_points<F>(points: &[Vec<f64>], posterior: F, seed: u64, provenance: Provenance) -> Result<SconfDataset>
where
    F: Fn(&[f64]) -> f64,
{
    let post: Vec<f64> = points.iter().map(|x| posterior(x)).collect();
    pair_with_posteriors(points, &post, seed, provenance)
}

/// As [`pair_points`], with `posteriors[i]` the posterior of `points[i]`.
pub fn pair_with_posteriors(
    points: &[Vec<f64>],
    posteriors: &[f64],
    seed: u64,
    provenance: Provenance,
) -> Result<SconfDataset> {
    if !points.len().is_multiple_of(2) {
        return Err(Error::Contract(format!(
            "pairing needs an even number of points, got {}; drop one point first",
            points.len()
        )));
    }
    if posteriors.len() != points.len() {
        return Err(Error::Contract(format!("{} points but {} posteriors", points.len(), posteriors.len())));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(&mut rng::seeded(seed, stream::PAIRING));
    let pairs = order
        .chunks_exact(2)
        .map(|ij| {
            let (i, j) = (ij[0], ij[1]);
            let s = similarity_confidence(posteriors[i], posteriors[j])?;
            Ok(SconfPair { x: points[i].clone(), x_prime: points[j].clone(), s })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SconfDataset { pairs, provenance })
}

/// Pairs i.i.d. points with exact confidences from the setup posteriors.
pub fn make_pairs(points: &[Vec<f64>], setup: &GaussianSetup, seed: u64) -> Result<SconfDataset> {
    pair_points(points, |x| posterior_plus(x, setup), seed, Provenance::Exact)
}

/// Every unordered pair `{i, j}`, `i < j`, of the points with exact
/// confidences. Each pair is marginally a draw from `p(x) p(x')`, so the
/// pairwise estimators stay unbiased; the pairs are not independent.
pub fn make_all_pairs(points: &[Vec<f64>], setup: &GaussianSetup) -> Result<SconfDataset> {
    let post: Vec<f64> = points.iter().map(|x| posterior_plus(x, setup)).collect();
    let n = points.len();
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push(SconfPair {
                x: points[i].clone(),
                x_prime: points[j].clone(),
                s: similarity_confidence(post[i], post[j])?,
            });
        }
    }
    Ok(SconfDataset { pairs, provenance: Provenance::Exact })
}

/// Adds `N(0, std^2)` noise to every confidence and clips to `[0, 1]`.
pub fn add_confidence_noise(ds: &SconfDataset, std: f64, seed: u64) -> Result<SconfDataset> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::Config(format!("noise std must be finite and non-negative, got {std}")));
    }
    let mut rng = rng::seeded(seed, stream::NOISE);
    let pairs = ds
        .pairs
        .iter()
        .map(|p| {
            let eps: f64 = StandardNormal.sample(&mut rng);
            SconfPair { s: (p.s + std * eps).clamp(0.0, 1.0), ..p.clone() }
        })
        .collect();
    Ok(SconfDataset { pairs, provenance: Provenance::Noisy { std } })
}

/// Total absolute deviation between two confidence vectors of equal length.
pub fn confidence_deviation(exact: &SconfDataset, noisy: &SconfDataset) -> Result<f64> {
    if exact.len() != noisy.len() {
        return Err(Error::Contract(format!("datasets differ in size: {} vs {}", exact.len(), noisy.len())));
    }
    let d: Vec<f64> = exact.pairs.iter().zip(&noisy.pairs).map(|(a, b)| (a.s - b.s).abs()).collect();
    Ok(pairwise_sum(&d))
}

/// `n` pairs from the same-class conditional `p(x, x' | y = y')`, with exact
/// confidences.
pub fn sample_similar_pairs(setup: &GaussianSetup, n: usize, seed: u64) -> Result<SconfDataset> {
    let (pp, pm) = (setup.pi_plus, setup.pi_minus());
    let p_pos = pp * pp / (pp * pp + pm * pm);
    let mut rng = rng::seeded(seed, stream::SAMPLE);
    let pairs = (0..n)
        .map(|_| {
            let y = if rng.random::<f64>() < p_pos { Label::Positive } else { Label::Negative };
            let x = setup.sample_class(y, &mut rng);
            let xp = setup.sample_class(y, &mut rng);
            let s = similarity_confidence(posterior_plus(&x, setup), posterior_plus(&xp, setup))?;
            Ok(SconfPair { x, x_prime: xp, s })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SconfDataset { pairs, provenance: Provenance::Exact })
}

/// `n` pairs from the different-class conditional; the positive member is
/// placed first or second with equal probability.
pub fn sample_dissimilar_pairs(setup: &GaussianSetup, n: usize, seed: u64) -> Result<SconfDataset> {
    let mut rng = rng::seeded(seed, stream::SAMPLE);
    let pairs = (0..n)
        .map(|_| {
            let a = setup.sample_class(Label::Positive, &mut rng);
            let b = setup.sample_class(Label::Negative, &mut rng);
            let (x, xp) = if rng.random::<bool>() { (a, b) } else { (b, a) };
            let s = similarity_confidence(posterior_plus(&x, setup), posterior_plus(&xp, setup))?;
            Ok(SconfPair { x, x_prime: xp, s })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SconfDataset { pairs, provenance: Provenance::Exact })
}

/// Every same-class pair (`same = true`) or every cross-class pair of a
/// labeled sample, with exact confidences.
pub fn labeled_pairs(examples: &[LabeledExample], setup: &GaussianSetup, same: bool) -> Result<SconfDataset> {
    let post: Vec<f64> = examples.iter().map(|e| posterior_plus(&e.x, setup)).collect();
    let mut pairs = Vec::new();
    for i in 0..examples.len() {
        for j in (i + 1)..examples.len() {
            if (examples[i].y == examples[j].y) == same {
                pairs.push(SconfPair {
                    x: examples[i].x.clone(),
                    x_prime: examples[j].x.clone(),
                    s: similarity_confidence(post[i], post[j])?,
                });
            }
        }
    }
    Ok(SconfDataset { pairs, provenance: Provenance::Exact })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn points(ex: &[LabeledExample]) -> Vec<Vec<f64>> {
        ex.iter().map(|e| e.x.clone()).collect()
    }

    #[test]
    fn setup_a_counts() {
        let setup = GaussianSetup::preset("A").unwrap();
        let ex = sample_labeled(&setup, 500, 300, 3);
        assert_eq!(ex.len(), 800);
        assert_eq!(ex.iter().filter(|e| e.y == Label::Positive).count(), 500);
        assert!(sample_labeled(&setup, 0, 0, 3).is_empty());
    }

    #[test]
    fn sampling_moments_match_request() {
        let id = vec![1.0, 0.0, 0.0, 1.0];
        let setup = GaussianSetup::new(vec![0.0, 0.0], vec![1.0, 1.0], id.clone(), id, 0.5).unwrap();
        let ex = sample_labeled(&setup, 100_000, 0, 11);
        let n = ex.len() as f64;
        let m: Vec<f64> = (0..2).map(|k| ex.iter().map(|e| e.x[k]).sum::<f64>() / n).collect();
        for k in 0..2 {
            assert!(m[k].abs() < 0.02, "mean {m:?}");
        }
        for (a, b, want) in [(0, 0, 1.0), (0, 1, 0.0), (1, 1, 1.0)] {
            let c = ex.iter().map(|e| (e.x[a] - m[a]) * (e.x[b] - m[b])).sum::<f64>() / (n - 1.0);
            assert!((c - want).abs() < 0.05, "cov[{a},{b}] = {c}");
        }
    }

    #[test]
    fn correlated_covariance_is_reproduced() {
        let setup = GaussianSetup::preset("A").unwrap();
        let ex = sample_labeled(&setup, 200_000, 0, 5);
        let n = ex.len() as f64;
        let c01 = ex.iter().map(|e| e.x[0] * e.x[1]).sum::<f64>() / n;
        assert!((c01 + 6.0).abs() < 0.1, "{c01}");
    }

    #[test]
    fn non_pd_covariance_is_named() {
        let err =
            GaussianSetup::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![1.0, 0.0, 0.0, 1.0], vec![1.0, 2.0, 2.0, 1.0], 0.6)
                .unwrap_err();
        assert!(err.to_string().contains("sigma_minus"), "{err}");
        assert!(GaussianSetup::new(vec![0.0], vec![1.0], vec![1.0], vec![1.0], 1.0).is_err());
    }

    #[test]
    fn degenerate_prior_and_symmetry() {
        assert_eq!(class_posterior(-3.0, -1.0, 1.0), 1.0);
        assert_eq!(class_posterior(-300.0, -1.0, 1.0), 1.0);
        let id = vec![1.0, 0.0, 0.0, 1.0];
        let twin = GaussianSetup::new(vec![1.0, 2.0], vec![1.0, 2.0], id.clone(), id, 0.5).unwrap();
        for x in [[0.0, 0.0], [5.0, -3.0], [1e3, 1e3]] {
            assert!((posterior_plus(&x, &twin) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn far_tail_uses_log_space() {
        let setup = GaussianSetup::preset("B").unwrap();
        // Both densities underflow in linear space here.
        let r = posterior_plus(&[-200.0, 0.0], &setup);
        assert!(r > 0.99, "{r}");
        let r = posterior_plus(&[f64::INFINITY, 0.0], &setup);
        assert!((0.0..=1.0).contains(&r));
        assert_eq!(class_posterior(f64::NEG_INFINITY, f64::NEG_INFINITY, 0.3), 0.3);
    }

    /// Density ratio evaluated with an explicit 2x2 inverse and determinant.
    fn posterior_2x2(x: &[f64], setup: &GaussianSetup) -> f64 {
        let dens = |mu: &[f64], s: &[f64]| {
            let det = s[0] * s[3] - s[1] * s[2];
            let (dx, dy) = (x[0] - mu[0], x[1] - mu[1]);
            let q = (s[3] * dx * dx - (s[1] + s[2]) * dx * dy + s[0] * dy * dy) / det;
            (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
        };
        let a = setup.pi_plus * dens(&setup.mu_plus, &setup.sigma_plus);
        let b = setup.pi_minus() * dens(&setup.mu_minus, &setup.sigma_minus);
        a / (a + b)
    }

    #[test]
    fn posterior_matches_density_ratio_oracle() {
        for name in ["A", "B", "C", "D"] {
            let setup = GaussianSetup::preset(name).unwrap();
            let at_mean = posterior_plus(&setup.mu_plus.clone(), &setup);
            assert!((at_mean - posterior_2x2(&setup.mu_plus, &setup)).abs() < 1e-12);
            for e in sample_labeled(&setup, 50, 50, 9) {
                assert!((posterior_plus(&e.x, &setup) - posterior_2x2(&e.x, &setup)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn product_form_equals_density_form() {
        let setup = GaussianSetup::preset("A").unwrap();
        let ex = sample_mixture(&setup, 1000, 21);
        let dens = |x: &[f64], y| setup.log_density(x, y).exp();
        for w in ex.windows(2) {
            let (x, xp) = (&w[0].x, &w[1].x);
            let (pp, pm) = (setup.pi_plus, setup.pi_minus());
            let px = pp * dens(x, Label::Positive) + pm * dens(x, Label::Negative);
            let pxp = pp * dens(xp, Label::Positive) + pm * dens(xp, Label::Negative);
            let density_form = (pp * pp * dens(x, Label::Positive) * dens(xp, Label::Positive)
                + pm * pm * dens(x, Label::Negative) * dens(xp, Label::Negative))
                / (px * pxp);
            let product = similarity_confidence(posterior_plus(x, &setup), posterior_plus(xp, &setup)).unwrap();
            assert!((density_form - product).abs() < 1e-10);
        }
    }

    #[test]
    fn confidence_examples() {
        assert_eq!(similarity_confidence(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(similarity_confidence(1.0, 0.0).unwrap(), 0.0);
        for r in [0.0, 0.1, 0.77, 1.0] {
            assert_eq!(similarity_confidence(0.5, r).unwrap(), 0.5);
        }
        assert!(similarity_confidence(1.1, 0.5).is_err());
        assert!(similarity_confidence(0.5, -0.1).is_err());
    }

    #[test]
    fn pairing_cardinality_and_errors() {
        let setup = GaussianSetup::preset("A").unwrap();
        let pts = points(&sample_labeled(&setup, 500, 300, 1));
        let ds = make_pairs(&pts, &setup, 2).unwrap();
        assert_eq!(ds.len(), 400);
        assert!(ds.pairs.iter().all(|p| (0.0..=1.0).contains(&p.s)));
        let err = make_pairs(&pts[..799], &setup, 2).unwrap_err();
        assert!(err.to_string().contains("drop one point"));
        assert_eq!(make_all_pairs(&pts[..10], &setup).unwrap().len(), 45);
    }

    #[test]
    fn two_sure_positives_pair_with_confidence_one() {
        let pts = vec![vec![0.0], vec![1.0]];
        let ds = pair_points(&pts, |_| 1.0, 0, Provenance::Exact).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.pairs[0].s, 1.0);
    }

    #[test]
    fn mean_confidence_converges_to_pi_s() {
        let setup = GaussianSetup::preset("A").unwrap();
        let pts = points(&sample_mixture(&setup, 200_000, 4));
        let ds = make_pairs(&pts, &setup, 5).unwrap();
        let mean = ds.confidences().iter().sum::<f64>() / ds.len() as f64;
        let pi_s = 0.625f64.powi(2) + 0.375f64.powi(2);
        assert!((mean - pi_s).abs() <= 0.01, "{mean} vs {pi_s}");
    }

    #[test]
    fn identical_seed_identical_dataset() {
        let setup = GaussianSetup::preset("C").unwrap();
        let a = make_pairs(&points(&sample_labeled(&setup, 50, 30, 8)), &setup, 9).unwrap();
        let b = make_pairs(&points(&sample_labeled(&setup, 50, 30, 8)), &setup, 9).unwrap();
        assert_eq!(a, b);
        let na = add_confidence_noise(&a, 0.2, 1).unwrap();
        let nb = add_confidence_noise(&b, 0.2, 1).unwrap();
        assert_eq!(na, nb);
    }

    #[test]
    fn zero_noise_is_identity_and_input_untouched() {
        let setup = GaussianSetup::preset("B").unwrap();
        let ds = make_pairs(&points(&sample_labeled(&setup, 40, 40, 1)), &setup, 1).unwrap();
        let copy = ds.clone();
        let same = add_confidence_noise(&ds, 0.0, 3).unwrap();
        assert_eq!(same.confidences(), ds.confidences());
        assert_eq!(same.provenance, Provenance::Noisy { std: 0.0 });
        let _ = add_confidence_noise(&ds, 0.3, 3).unwrap();
        assert_eq!(ds, copy);
        assert!(add_confidence_noise(&ds, -0.1, 3).is_err());
    }

    #[test]
    fn noise_clips_to_unit_interval() {
        let ds = SconfDataset {
            pairs: vec![SconfPair { x: vec![0.0], x_prime: vec![0.0], s: 0.95 }; 2000],
            provenance: Provenance::Exact,
        };
        let noisy = add_confidence_noise(&ds, 1.0, 4).unwrap();
        assert!(noisy.pairs.iter().all(|p| (0.0..=1.0).contains(&p.s)));
        assert!(noisy.pairs.iter().any(|p| p.s == 1.0));
        assert!(noisy.pairs.iter().any(|p| p.s == 0.0));
    }

    #[test]
    fn setup_file_round_trip() {
        let f = SetupFile { setup: GaussianSetup::preset("D").unwrap(), n_plus: 500, n_minus: 300, seed: 17 };
        assert_eq!(SetupFile::parse(&f.to_text()).unwrap(), f);
        let err = SetupFile::parse("mu_plus = 0 0\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    proptest! {
        #[test]
        fn confidence_symmetric_and_in_range(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let s = similarity_confidence(a, b).unwrap();
            prop_assert_eq!(s, similarity_confidence(b, a).unwrap());
            prop_assert!((0.0..=1.0).contains(&s));
        }

        #[test]
        fn posterior_in_unit_interval(x in -50.0f64..50.0, y in -50.0f64..50.0) {
            let setup = GaussianSetup::preset("A").unwrap();
            let r = posterior_plus(&[x, y], &setup);
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn labeled_pair_counts() {
        let setup = GaussianSetup::preset("collapse").unwrap();
        let ex = sample_labeled(&setup, 5, 3, 1);
        let sim = labeled_pairs(&ex, &setup, true).unwrap();
        let dis = labeled_pairs(&ex, &setup, false).unwrap();
        assert_eq!(sim.len(), 10 + 3);
        assert_eq!(dis.len(), 15);
        // Well-separated classes: same-class pairs are confident.
        assert!(sim.confidences().iter().filter(|&&s| s > 0.9).count() >= 11);
    }
}
