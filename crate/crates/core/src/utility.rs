//! Power (CRRA) utility with negative exponent, its convex conjugate, and the
//! scalar identities linking primal and dual value functions.
//!
//! ```text
//! U(x) = x^p / p,          p < 0
//! V(y) = y^(-q) / q,       q = p / (1 - p) in (-1, 0)
//! p u = (q v)^(1 - p)
//! ```

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Relative risk aversion parameter of a power investor.
///
/// Only `p` is stored; the conjugate exponent is always derived from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilitySpec {
    p: f64,
}

impl UtilitySpec {
    pub fn new(p: f64) -> Result<Self> {
        if !(p.is_finite() && p < 0.0) {
            return Err(Error::Domain { what: "risk aversion exponent p", value: p });
        }
        Ok(Self { p })
    }

    #[inline]
    pub fn p(&self) -> f64 {
        self.p
    }

    /// Conjugate exponent `q = p / (1 - p)`.
    #[inline]
    pub fn q(&self) -> f64 {
        self.p / (1.0 - self.p)
    }

    /// `1 - p`, the reciprocal of `1 + q`.
    #[inline]
    pub fn one_minus_p(&self) -> f64 {
        1.0 - self.p
    }
}

/// Direction of [`conjugacy_map`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conjugacy {
    PrimalToDual,
    DualToPrimal,
}

pub fn power_utility(x: f64, spec: UtilitySpec) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain { what: "wealth", value: x });
    }
    Ok(x.powf(spec.p) / spec.p)
}

pub fn conjugate_utility(y: f64, spec: UtilitySpec) -> Result<f64> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::Domain { what: "dual variable", value: y });
    }
    let q = spec.q();
    Ok(y.powf(-q) / q)
}

/// Inverse of [`power_utility`]: the sure wealth whose utility is `u_value`.
pub fn certainty_equivalent(u_value: f64, spec: UtilitySpec) -> Result<f64> {
    let pu = spec.p * u_value;
    if !(pu > 0.0) || !pu.is_finite() {
        return Err(Error::Domain { what: "utility value", value: u_value });
    }
    Ok(pu.powf(1.0 / spec.p))
}

/// Maps a primal value `u` to the dual value `v` (or back) through
/// `p u = (q v)^(1 - p)`.
pub fn conjugacy_map(value: f64, spec: UtilitySpec, direction: Conjugacy) -> Result<f64> {
    let (p, q) = (spec.p, spec.q());
    match direction {
        Conjugacy::PrimalToDual => {
            let pu = p * value;
            if !(pu > 0.0) {
                return Err(Error::Domain { what: "primal value", value });
            }
            Ok(pu.powf(1.0 / spec.one_minus_p()) / q)
        }
        Conjugacy::DualToPrimal => {
            let qv = q * value;
            if !(qv > 0.0) {
                return Err(Error::Domain { what: "dual value", value });
            }
            Ok(qv.powf(spec.one_minus_p()) / p)
        }
    }
}

/// Value at initial wealth `x` from the value at unit wealth.
#[inline]
pub fn scale_primal(u_at_one: f64, x: f64, spec: UtilitySpec) -> f64 {
    x.powf(spec.p) * u_at_one
}

/// Value at dual variable `y` from the value at `y = 1`.
#[inline]
pub fn scale_dual(v_at_one: f64, y: f64, spec: UtilitySpec) -> f64 {
    y.powf(-spec.q()) * v_at_one
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(p: f64) -> UtilitySpec {
        UtilitySpec::new(p).unwrap()
    }

    #[test]
    fn rejects_non_negative_p() {
        assert!(UtilitySpec::new(0.0).is_err());
        assert!(UtilitySpec::new(0.5).is_err());
        assert!(UtilitySpec::new(f64::NAN).is_err());
    }

    #[test]
    fn q_identities() {
        for p in [-0.1, -1.0, -2.0, -9.5] {
            let s = spec(p);
            assert!(s.q() > -1.0 && s.q() < 0.0);
            assert_relative_eq!((1.0 - p) * (1.0 + s.q()), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn power_utility_values() {
        assert_eq!(power_utility(1.0, spec(-1.0)).unwrap(), -1.0);
        assert_eq!(power_utility(2.0, spec(-1.0)).unwrap(), -0.5);
        assert_relative_eq!(power_utility(1.048, spec(-1.0)).unwrap(), -0.954_198_473_282_442, epsilon = 1e-12);
        assert!(power_utility(0.0, spec(-1.0)).is_err());
        assert!(power_utility(-1.0, spec(-1.0)).is_err());
    }

    #[test]
    fn conjugate_values() {
        assert_relative_eq!(conjugate_utility(1.0, spec(-1.0)).unwrap(), -2.0);
        assert_relative_eq!(conjugate_utility(1.0, spec(-2.0)).unwrap(), -1.5, epsilon = 1e-15);
        assert!(conjugate_utility(0.0, spec(-1.0)).is_err());
    }

    #[test]
    fn conjugate_matches_golden_section_sup() {
        // sup_x U(x) - x y by golden-section search on log x
        let s = spec(-1.0);
        let y = 1.3;
        let f = |lx: f64| {
            let x = lx.exp();
            x.powf(s.p()) / s.p() - x * y
        };
        let (mut a, mut b) = (-10.0_f64, 10.0_f64);
        let g = (5.0_f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let sup = f(0.5 * (a + b));
        assert!((sup - conjugate_utility(y, s).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn certainty_equivalent_values() {
        let s = spec(-1.0);
        assert_eq!(certainty_equivalent(-1.0, s).unwrap(), 1.0);
        assert!((certainty_equivalent(-0.954198, s).unwrap() - 1.048).abs() < 1e-6);
        assert!(certainty_equivalent(0.5, s).is_err());
        assert!(certainty_equivalent(0.0, s).is_err());
    }

    #[test]
    fn conjugacy_examples() {
        let s = spec(-1.0);
        assert_relative_eq!(conjugacy_map(-1.0, s, Conjugacy::PrimalToDual).unwrap(), -2.0, epsilon = 1e-15);
        assert!(conjugacy_map(1.0, s, Conjugacy::PrimalToDual).is_err());
        assert!(conjugacy_map(1.0, s, Conjugacy::DualToPrimal).is_err());

        // Merton values: p u = exp(q l^2 T / 2), q v = exp(q/(1-p) l^2 T / 2)
        for p in [-0.5, -1.0, -3.0] {
            let s = spec(p);
            let (l, t) = (0.3, 7.0);
            let u = (0.5 * s.q() * l * l * t).exp() / p;
            let v = (0.5 * s.q() / (1.0 - p) * l * l * t).exp() / s.q();
            assert_relative_eq!(conjugacy_map(u, s, Conjugacy::PrimalToDual).unwrap(), v, max_relative = 1e-14);
        }
    }

    #[test]
    fn homogeneity_helpers() {
        let s = spec(-2.0);
        let u1 = power_utility(1.0, s).unwrap();
        assert_relative_eq!(scale_primal(u1, 3.0, s), power_utility(3.0, s).unwrap(), max_relative = 1e-14);
        let v1 = conjugate_utility(1.0, s).unwrap();
        assert_relative_eq!(scale_dual(v1, 0.7, s), conjugate_utility(0.7, s).unwrap(), max_relative = 1e-14);
    }
}
