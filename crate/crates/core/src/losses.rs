//! Binary margin losses.

use crate::numeric::sigmoid;
use crate::{Error, Result};

/// A binary class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    /// Prediction rule for a score; ties go to the positive class.
    pub fn from_score(z: f64) -> Label {
        if z >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

impl TryFrom<i64> for Label {
    type Error = Error;

    fn try_from(y: i64) -> Result<Label> {
        match y {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(Error::Contract(format!("label must be +1 or -1, got {other}"))),
        }
    }
}

impl TryFrom<f64> for Label {
    type Error = Error;

    fn try_from(y: f64) -> Result<Label> {
        if y == 1.0 {
            Ok(Label::Positive)
        } else if y == -1.0 {
            Ok(Label::Negative)
        } else {
            Err(Error::Contract(format!("label must be +1 or -1, got {y}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Logistic,
    /// Evaluation only; has no derivative.
    ZeroOne,
}

/// `ln(1 + exp(t))` without overflow.
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

pub fn loss_value(kind: LossKind, z: f64, y: Label) -> f64 {
    match kind {
        LossKind::Logistic => softplus(-y.sign() * z),
        LossKind::ZeroOne => {
            if Label::from_score(z) == y {
                0.0
            } else {
                1.0
            }
        }
    }
}

/// d loss / d z.
pub fn loss_derivative(kind: LossKind, z: f64, y: Label) -> Result<f64> {
    match kind {
        LossKind::Logistic => {
            let t = y.sign();
            Ok(-t * sigmoid(-t * z))
        }
        LossKind::ZeroOne => {
            Err(Error::Contract("the zero-one loss has no derivative; use it for evaluation only".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::*;

    #[test]
    fn logistic_values() {
        assert!((loss_value(LossKind::Logistic, 0.0, Positive) - 2f64.ln()).abs() < 1e-15);
        assert!(loss_value(LossKind::Logistic, 50.0, Positive) < 1e-20);
        assert!(loss_value(LossKind::Logistic, -1000.0, Positive).is_finite());
        assert!((loss_value(LossKind::Logistic, -1000.0, Positive) - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn zero_one_values() {
        assert_eq!(loss_value(LossKind::ZeroOne, -0.1, Positive), 1.0);
        assert_eq!(loss_value(LossKind::ZeroOne, 0.0, Positive), 0.0);
        assert_eq!(loss_value(LossKind::ZeroOne, 0.0, Negative), 1.0);
        assert_eq!(loss_value(LossKind::ZeroOne, -2.0, Negative), 0.0);
    }

    #[test]
    fn derivative_at_zero() {
        assert_eq!(loss_derivative(LossKind::Logistic, 0.0, Positive).unwrap(), -0.5);
        assert_eq!(loss_derivative(LossKind::Logistic, 0.0, Negative).unwrap(), 0.5);
        assert!(loss_derivative(LossKind::ZeroOne, 0.0, Positive).is_err());
    }

    #[test]
    fn invalid_labels_rejected() {
        assert!(Label::try_from(0i64).is_err());
        assert!(Label::try_from(0.5f64).is_err());
        assert_eq!(Label::try_from(-1i64).unwrap(), Negative);
    }

    fn label() -> impl Strategy<Value = Label> {
        prop_oneof![Just(Positive), Just(Negative)]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn derivative_matches_central_difference(z in -20.0f64..20.0, y in label()) {
            let h = 1e-6;
            let fd = (loss_value(LossKind::Logistic, z + h, y)
                - loss_value(LossKind::Logistic, z - h, y)) / (2.0 * h);
            let d = loss_derivative(LossKind::Logistic, z, y).unwrap();
            prop_assert!((d - fd).abs() <= 1e-7 * d.abs());
            prop_assert!(d > -1.0 && d < 1.0);
        }

        #[test]
        fn logistic_is_nonnegative_and_convex(a in -30.0f64..30.0, b in -30.0f64..30.0, y in label()) {
            let l = |z| loss_value(LossKind::Logistic, z, y);
            prop_assert!(l(a) >= 0.0);
            prop_assert!(l(0.5 * (a + b)) <= 0.5 * (l(a) + l(b)) + 1e-12);
        }
    }
}
