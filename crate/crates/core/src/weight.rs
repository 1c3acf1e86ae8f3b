//! Carleman weight `phi = exp(lambda psi(t))`, `theta = exp(s phi)`, and the
//! Hoelder exponent of the backward interpolation inequality.

use crate::error::{Error, Result};

/// Largest admissible `s * phi`; beyond it `theta` is refused.
pub const MAX_LOG_THETA: f64 = 700.0;

/// Affine time profile with `|psi'| = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Psi {
    /// `psi(t) = t + offset`
    Increasing { offset: f64 },
    /// `psi(t) = -t + offset`
    Decreasing { offset: f64 },
}

impl Psi {
    pub fn increasing() -> Self {
        Psi::Increasing { offset: 0.0 }
    }

    pub fn decreasing() -> Self {
        Psi::Decreasing { offset: 0.0 }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Psi::Increasing { offset } => t + offset,
            Psi::Decreasing { offset } => -t + offset,
        }
    }

    pub fn derivative(&self) -> f64 {
        match self {
            Psi::Increasing { .. } => 1.0,
            Psi::Decreasing { .. } => -1.0,
        }
    }

    pub fn second_derivative(&self) -> f64 {
        0.0
    }

    pub fn offset(&self) -> f64 {
        match *self {
            Psi::Increasing { offset } | Psi::Decreasing { offset } => offset,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CarlemanWeight {
    pub psi: Psi,
    pub lambda: f64,
    pub s: f64,
}

impl CarlemanWeight {
    pub fn new(psi: Psi, lambda: f64, s: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0 && s.is_finite() && s >= 0.0) {
            return Err(Error::Precondition(format!(
                "weight needs finite lambda >= 0 and s >= 0 (got lambda={lambda}, s={s})"
            )));
        }
        Ok(Self { psi, lambda, s })
    }

    pub fn phi(&self, t: f64) -> f64 {
        (self.lambda * self.psi.value(t)).exp()
    }

    /// `ln theta(t) = s phi(t)`.
    pub fn log_theta(&self, t: f64) -> f64 {
        self.s * self.phi(t)
    }

    /// `s lambda phi psi_t`, the logarithmic time derivative of `theta`.
    pub fn log_theta_rate(&self, t: f64) -> f64 {
        self.s * self.lambda * self.phi(t) * self.psi.derivative()
    }

    /// Fails when `s phi(t)` exceeds [`MAX_LOG_THETA`].
    pub fn checked_log_theta(&self, t: f64) -> Result<f64> {
        let s_phi = self.log_theta(t);
        if !s_phi.is_finite() || s_phi > MAX_LOG_THETA {
            return Err(Error::WeightOverflow {
                s: self.s,
                lambda: self.lambda,
                t,
                s_phi,
            });
        }
        Ok(s_phi)
    }

    /// Largest `s phi` over `[t_from, t_to]`; `phi` is monotone so the
    /// endpoints suffice.
    pub fn max_log_theta(&self, t_from: f64, t_to: f64) -> Result<f64> {
        Ok(self.checked_log_theta(t_from)?.max(self.checked_log_theta(t_to)?))
    }
}

/// Returns `(phi(t), theta(t))`.
pub fn eval_weight(w: &CarlemanWeight, t: f64) -> Result<(f64, f64)> {
    let log_theta = w.checked_log_theta(t)?;
    Ok((w.phi(t), log_theta.exp()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HolderProvenance {
    Fitted,
    Formula {
        lambda3: f64,
        t0: f64,
        t1: f64,
        c_abs: f64,
    },
}

/// Exponent of the interpolation inequality, strictly inside `(0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HolderExponent {
    value: f64,
    pub provenance: HolderProvenance,
}

impl HolderExponent {
    pub fn new(value: f64, provenance: HolderProvenance) -> Result<Self> {
        if !(value > 0.0 && value < 1.0) {
            return Err(Error::Precondition(format!("Hoelder exponent {value} not in (0, 1)")));
        }
        Ok(Self { value, provenance })
    }

    pub fn fitted(value: f64) -> Result<Self> {
        Self::new(value, HolderProvenance::Fitted)
    }

    pub fn value(&self) -> f64 {
        self.value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn weight_examples() {
        let w = CarlemanWeight::new(Psi::increasing(), 0.0, 2.0).unwrap();
        let (phi, theta) = eval_weight(&w, 0.7).unwrap();
        assert_eq!(phi, 1.0);
        assert!((theta - 2f64.exp()).abs() < 1e-12);

        let w = CarlemanWeight::new(Psi::increasing(), 2f64.ln(), 3.0).unwrap();
        let (phi, theta) = eval_weight(&w, 1.0).unwrap();
        assert!((phi - 2.0).abs() < 1e-14);
        assert!((theta - 403.428_793_492_735_1).abs() < 1e-9);

        let w = CarlemanWeight::new(Psi::decreasing(), 2f64.ln(), 1.0).unwrap();
        let (phi, theta) = eval_weight(&w, 1.0).unwrap();
        assert!((phi - 0.5).abs() < 1e-14);
        assert!((theta - 1.648_721_270_700_128).abs() < 1e-12);
    }

    #[test]
    fn overflow_names_parameters() {
        let w = CarlemanWeight::new(Psi::increasing(), 3.0, 50.0).unwrap();
        match eval_weight(&w, 2.0) {
            Err(Error::WeightOverflow { s, t, .. }) => {
                assert_eq!(s, 50.0);
                assert_eq!(t, 2.0);
            }
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn holder_exponent_range() {
        assert!(HolderExponent::fitted(0.0).is_err());
        assert!(HolderExponent::fitted(1.0).is_err());
        assert_eq!(HolderExponent::fitted(0.3).unwrap().value(), 0.3);
    }

    proptest! {
        #[test]
        fn theta_monotone_in_time(s in 0.01f64..5.0, lambda in 0.01f64..3.0,
                                  t1 in 0.0f64..1.0, dt in 0.0f64..1.0) {
            let t2 = t1 + dt;
            let inc = CarlemanWeight::new(Psi::increasing(), lambda, s).unwrap();
            let dec = CarlemanWeight::new(Psi::decreasing(), lambda, s).unwrap();
            prop_assert!(eval_weight(&inc, t1).unwrap().1 <= eval_weight(&inc, t2).unwrap().1);
            prop_assert!(eval_weight(&dec, t1).unwrap().1 >= eval_weight(&dec, t2).unwrap().1);
            prop_assert!(eval_weight(&dec, t2).unwrap().1 >= 1.0);
        }
    }
}
