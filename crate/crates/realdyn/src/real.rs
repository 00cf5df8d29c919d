//! Configurable-precision real scalars.
//!
//! All analyses run at a caller-selected precision. The default is the
//! native binary64 float; deep combinatorics (Fibonacci parameter hunts,
//! long cascades) run at 128 or 256 bits backed by MPFR. Every derived
//! tolerance in the crate is expressed in units of the active precision's
//! roundoff so that algorithms behave the same way at any precision.

use rug::ops::{CompleteRound, Pow};
use rug::Float;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;

/// Working precision in mantissa bits. 53 selects the native `f64` path.
#[derive(Copy, Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Precision(u32);

impl Precision {
    pub const DOUBLE: Precision = Precision(53);
    pub const QUAD: Precision = Precision(128);
    pub const OCT: Precision = Precision(256);

    pub fn bits(n: u32) -> Precision {
        Precision(n.max(24))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn is_native(self) -> bool {
        self.0 <= 53
    }

    /// Unit roundoff 2^(1-bits).
    pub fn eps(self) -> Real {
        Real::exp2(self, 1 - self.0 as i32)
    }
}

impl Default for Precision {
    fn default() -> Self {
        Precision::DOUBLE
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A real scalar at a fixed working precision.
#[derive(Clone)]
pub enum Real {
    F64(f64),
    Mp(Float),
}

use Real::{F64, Mp};

impl Real {
    pub fn with_val(prec: Precision, v: f64) -> Real {
        if prec.is_native() {
            F64(v)
        } else {
            Mp(Float::with_val(prec.get(), v))
        }
    }

    pub fn zero(prec: Precision) -> Real {
        Real::with_val(prec, 0.0)
    }

    pub fn one(prec: Precision) -> Real {
        Real::with_val(prec, 1.0)
    }

    /// 2^k at the given precision (exact).
    pub fn exp2(prec: Precision, k: i32) -> Real {
        if prec.is_native() {
            F64((k as f64).exp2())
        } else {
            Mp(Float::with_val(prec.get(), Float::i_exp(1, k)))
        }
    }

    pub fn pi(prec: Precision) -> Real {
        if prec.is_native() {
            F64(std::f64::consts::PI)
        } else {
            Mp(Float::with_val(prec.get(), rug::float::Constant::Pi))
        }
    }

    /// Parse a decimal literal at the given precision.
    pub fn parse(prec: Precision, s: &str) -> Option<Real> {
        if prec.is_native() {
            s.parse::<f64>().ok().map(F64)
        } else {
            Float::parse(s)
                .ok()
                .map(|p| Mp(p.complete(prec.get())))
        }
    }

    pub fn prec(&self) -> Precision {
        match self {
            F64(_) => Precision::DOUBLE,
            Mp(x) => Precision(x.prec()),
        }
    }

    /// Re-round to a target precision (exact when widening).
    pub fn to_prec(&self, prec: Precision) -> Real {
        match (self, prec.is_native()) {
            (F64(v), true) => F64(*v),
            (F64(v), false) => Mp(Float::with_val(prec.get(), *v)),
            (Mp(x), true) => F64(x.to_f64()),
            (Mp(x), false) => {
                let mut y = x.clone();
                y.set_prec(prec.get());
                Mp(y)
            }
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            F64(v) => *v,
            Mp(x) => x.to_f64(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            F64(v) => v.is_finite(),
            Mp(x) => x.is_finite(),
        }
    }

    pub fn is_sign_negative(&self) -> bool {
        match self {
            F64(v) => v.is_sign_negative(),
            Mp(x) => x.is_sign_negative(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            F64(v) => *v == 0.0,
            Mp(x) => x.is_zero(),
        }
    }

    pub fn abs(&self) -> Real {
        match self {
            F64(v) => F64(v.abs()),
            Mp(x) => Mp(x.clone().abs()),
        }
    }

    pub fn sqrt(&self) -> Real {
        match self {
            F64(v) => F64(v.sqrt()),
            Mp(x) => Mp(x.clone().sqrt()),
        }
    }

    pub fn powi(&self, k: i32) -> Real {
        match self {
            F64(v) => F64(v.powi(k)),
            Mp(x) => Mp(x.pow(k).complete(x.prec())),
        }
    }

    pub fn sin(&self) -> Real {
        match self {
            F64(v) => F64(v.sin()),
            Mp(x) => Mp(x.clone().sin()),
        }
    }

    pub fn cos(&self) -> Real {
        match self {
            F64(v) => F64(v.cos()),
            Mp(x) => Mp(x.clone().cos()),
        }
    }

    pub fn exp(&self) -> Real {
        match self {
            F64(v) => F64(v.exp()),
            Mp(x) => Mp(x.clone().exp()),
        }
    }

    pub fn ln(&self) -> Real {
        match self {
            F64(v) => F64(v.ln()),
            Mp(x) => Mp(x.clone().ln()),
        }
    }

    pub fn log2(&self) -> Real {
        match self {
            F64(v) => F64(v.log2()),
            Mp(x) => Mp(x.clone().log2()),
        }
    }

    pub fn floor(&self) -> Real {
        match self {
            F64(v) => F64(v.floor()),
            Mp(x) => Mp(x.clone().floor()),
        }
    }

    /// -1, 0 or 1.
    pub fn signum_i(&self) -> i32 {
        if self.is_zero() {
            0
        } else if self.is_sign_negative() {
            -1
        } else {
            1
        }
    }

    pub fn min(&self, other: &Real) -> Real {
        if self <= other {
            self.clone()
        } else {
            other.clone()
        }
    }

    pub fn max(&self, other: &Real) -> Real {
        if self >= other {
            self.clone()
        } else {
            other.clone()
        }
    }

    /// Midpoint, safe against overflow at native precision.
    pub fn mid(a: &Real, b: &Real) -> Real {
        (a + b) * 0.5
    }
}

impl fmt::Debug for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            F64(v) => write!(f, "{v:?}"),
            Mp(x) => write!(f, "{x:?}"),
        }
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            F64(v) => write!(f, "{v}"),
            Mp(x) => write!(f, "{x}"),
        }
    }
}

impl From<f64> for Real {
    fn from(v: f64) -> Real {
        F64(v)
    }
}

impl PartialEq for Real {
    fn eq(&self, other: &Real) -> bool {
        self.partial_cmp(other) == Some(Ordering::Equal)
    }
}

impl PartialOrd for Real {
    fn partial_cmp(&self, other: &Real) -> Option<Ordering> {
        match (self, other) {
            (F64(a), F64(b)) => a.partial_cmp(b),
            (Mp(a), Mp(b)) => a.partial_cmp(b),
            (F64(a), Mp(b)) => a.partial_cmp(b),
            (Mp(a), F64(b)) => a.partial_cmp(b),
        }
    }
}

fn promote(v: f64, model: &Float) -> Float {
    Float::with_val(model.prec(), v)
}

macro_rules! arith {
    ($trait:ident, $method:ident, $op:tt) => {
        impl std::ops::$trait<&Real> for &Real {
            type Output = Real;
            fn $method(self, rhs: &Real) -> Real {
                match (self, rhs) {
                    (F64(a), F64(b)) => F64(a $op b),
                    (Mp(a), Mp(b)) => Mp((a.clone()) $op b),
                    (F64(a), Mp(b)) => Mp(promote(*a, b) $op b),
                    (Mp(a), F64(b)) => Mp((a.clone()) $op *b),
                }
            }
        }
        impl std::ops::$trait<Real> for &Real {
            type Output = Real;
            fn $method(self, rhs: Real) -> Real {
                self $op &rhs
            }
        }
        impl std::ops::$trait<&Real> for Real {
            type Output = Real;
            fn $method(self, rhs: &Real) -> Real {
                &self $op rhs
            }
        }
        impl std::ops::$trait<Real> for Real {
            type Output = Real;
            fn $method(self, rhs: Real) -> Real {
                &self $op &rhs
            }
        }
        impl std::ops::$trait<f64> for &Real {
            type Output = Real;
            fn $method(self, rhs: f64) -> Real {
                match self {
                    F64(a) => F64(a $op rhs),
                    Mp(a) => Mp((a.clone()) $op rhs),
                }
            }
        }
        impl std::ops::$trait<f64> for Real {
            type Output = Real;
            fn $method(self, rhs: f64) -> Real {
                &self $op rhs
            }
        }
    };
}

arith!(Add, add, +);
arith!(Sub, sub, -);
arith!(Mul, mul, *);
arith!(Div, div, /);

impl std::ops::Neg for &Real {
    type Output = Real;
    fn neg(self) -> Real {
        match self {
            F64(a) => F64(-a),
            Mp(a) => Mp(-a.clone()),
        }
    }
}

impl std::ops::Neg for Real {
    type Output = Real;
    fn neg(self) -> Real {
        -&self
    }
}

impl std::ops::AddAssign<&Real> for Real {
    fn add_assign(&mut self, rhs: &Real) {
        *self = &*self + rhs;
    }
}

impl std::ops::SubAssign<&Real> for Real {
    fn sub_assign(&mut self, rhs: &Real) {
        *self = &*self - rhs;
    }
}

impl std::ops::MulAssign<&Real> for Real {
    fn mul_assign(&mut self, rhs: &Real) {
        *self = &*self * rhs;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn native_and_mp_agree() {
        let p = Precision::OCT;
        let a = Real::with_val(p, 1.5);
        let b = Real::with_val(p, 2.25);
        let s = &a + &b;
        assert_eq!(s.to_f64(), 3.75);
        assert_eq!((&a * &b).to_f64(), 3.375);
        let c = Real::from(1.5) + Real::from(2.25);
        assert_eq!(c.to_f64(), 3.75);
    }

    #[test]
    fn mixed_variant_promotes() {
        let a = Real::with_val(Precision::QUAD, 0.1);
        let b = Real::from(0.5);
        let s = &a + &b;
        assert_eq!(s.prec(), Precision::QUAD);
        assert!((s.to_f64() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn eps_scales_with_precision() {
        assert!(Precision::DOUBLE.eps().to_f64() > Precision::OCT.eps().to_f64());
        assert_eq!(Precision::DOUBLE.eps().to_f64(), 2.0f64.powi(-52));
    }

    #[test]
    fn parse_deep_literal() {
        let x = Real::parse(Precision::OCT, "-1.87052863216464524887554683127").unwrap();
        assert!((x.to_f64() + 1.8705286321646452).abs() < 1e-15);
    }

    #[test]
    fn ordering_across_variants() {
        let a = Real::with_val(Precision::QUAD, 1.0);
        assert!(a > Real::from(0.5));
        assert!(Real::from(2.0) > a);
        assert_eq!(a, Real::from(1.0));
    }
}
