//! Class-prior estimation from the mean similarity confidence.
//!
//! With `pi_S = pi_+^2 + pi_-^2` and the convention `pi_+ > pi_-`, the prior
//! is recovered as `pi_+ = (sqrt(2 pi_S - 1) + 1) / 2`.

use crate::datagen::SconfDataset;
use crate::numeric::mean;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorEstimate {
    pub pi_s_hat: f64,
    pub pi_plus_hat: f64,
    pub n: usize,
    /// Set when the mean confidence fell below 0.5 and was clamped.
    pub clamped: bool,
}

/// Inverts `pi_S = p^2 + (1-p)^2` on `p >= 0.5`. Values below 0.5 map to 0.5.
pub fn invert_pi_similar(pi_s: f64) -> f64 {
    ((2.0 * pi_s - 1.0).max(0.0).sqrt() + 1.0) / 2.0
}

pub fn estimate_prior_from_confidences(s: &[f64]) -> Result<PriorEstimate> {
    if s.is_empty() {
        return Err(Error::Contract("prior estimation needs at least one pair".into()));
    }
    let pi_s_hat = mean(s);
    Ok(PriorEstimate { pi_s_hat, pi_plus_hat: invert_pi_similar(pi_s_hat), n: s.len(), clamped: pi_s_hat < 0.5 })
}

pub fn estimate_prior(ds: &SconfDataset) -> Result<PriorEstimate> {
    estimate_prior_from_confidences(&ds.confidences())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let e = estimate_prior_from_confidences(&[0.58; 4]).unwrap();
        assert!((e.pi_plus_hat - 0.7).abs() < 1e-12);
        assert!(!e.clamped);
        assert_eq!(estimate_prior_from_confidences(&[1.0; 3]).unwrap().pi_plus_hat, 1.0);
        let half = estimate_prior_from_confidences(&[0.5; 3]).unwrap();
        assert_eq!(half.pi_plus_hat, 0.5);
        assert!(!half.clamped);
    }

    #[test]
    fn clamps_below_half() {
        let e = estimate_prior_from_confidences(&[0.4, 0.45]).unwrap();
        assert!(e.clamped);
        assert_eq!(e.pi_plus_hat, 0.5);
        assert_eq!(e.n, 2);
    }

    #[test]
    fn empty_is_error() {
        assert!(estimate_prior_from_confidences(&[]).is_err());
    }

    /// Dyadic priors make `pi_S` exactly representable, so any error left
    /// comes from the inversion itself. Near 0.5 the inversion amplifies a
    /// rounded input by roughly `1 / (4 (p - 0.5))`.
    #[test]
    fn inversion_is_exact() {
        for i in 0..=2048 {
            let p = 0.5 + 0.5 * i as f64 / 2048.0;
            let pi_s = p * p + (1.0 - p) * (1.0 - p);
            assert!((invert_pi_similar(pi_s) - p).abs() <= 1e-14, "{p}");
        }
    }

    #[test]
    fn inversion_away_from_balance() {
        for i in 0..=1000 {
            let p = 0.55 + 0.45 * i as f64 / 1000.0;
            let pi_s = p * p + (1.0 - p) * (1.0 - p);
            assert!((invert_pi_similar(pi_s) - p).abs() <= 1e-14, "{p}");
        }
    }
}
