//! Open real intervals with tolerance-aware set predicates.

use crate::numerics::ident_tol;
use crate::real::{Precision, Real};
use serde::Serialize;

/// An open interval (a, b), a < b.
#[derive(Clone, Debug)]
pub struct RInterval {
    pub a: Real,
    pub b: Real,
}

/// How two intervals sit relative to each other, up to endpoint tolerance.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Lamination {
    Disjoint,
    Nested,
    Crossing,
}

impl RInterval {
    pub fn new(a: Real, b: Real) -> RInterval {
        debug_assert!(a < b, "empty interval");
        RInterval { a, b }
    }

    pub fn from_f64(a: f64, b: f64) -> RInterval {
        RInterval::new(Real::from(a), Real::from(b))
    }

    pub fn hull(points: &[Real]) -> RInterval {
        let mut lo = points[0].clone();
        let mut hi = points[0].clone();
        for p in &points[1..] {
            lo = lo.min(p);
            hi = hi.max(p);
        }
        RInterval::new(lo, hi)
    }

    pub fn len(&self) -> Real {
        &self.b - &self.a
    }

    pub fn mid(&self) -> Real {
        Real::mid(&self.a, &self.b)
    }

    pub fn prec(&self) -> Precision {
        self.a.prec()
    }

    fn tol(&self) -> Real {
        ident_tol(self.prec(), &self.a.abs().max(&self.b.abs()))
    }

    pub fn contains(&self, x: &Real) -> bool {
        *x > self.a && *x < self.b
    }

    /// Strictly inside, more than one identification tolerance from ∂.
    pub fn contains_well(&self, x: &Real) -> bool {
        let t = self.tol();
        x - &self.a > t && &self.b - x > t
    }

    /// Within tolerance of one of the endpoints.
    pub fn on_boundary(&self, x: &Real) -> bool {
        let t = self.tol();
        (x - &self.a).abs() <= t || (x - &self.b).abs() <= t
    }

    pub fn contains_interval(&self, other: &RInterval) -> bool {
        let t = self.tol();
        other.a >= &self.a - &t && other.b <= &self.b + &t
    }

    pub fn strictly_contains_interval(&self, other: &RInterval) -> bool {
        let t = self.tol();
        other.a > &self.a + &t && other.b < &self.b - &t
    }

    pub fn intersects(&self, other: &RInterval) -> bool {
        let t = self.tol();
        other.b > &self.a + &t && other.a < &self.b - &t
    }

    /// Classify the pair as nested, disjoint or genuinely crossing.
    pub fn laminate(&self, other: &RInterval) -> Lamination {
        if !self.intersects(other) {
            Lamination::Disjoint
        } else if self.contains_interval(other) || other.contains_interval(self) {
            Lamination::Nested
        } else {
            Lamination::Crossing
        }
    }

    /// Concentric scaling (1 + 2ρ)·I about the midpoint.
    pub fn scale(&self, factor: f64) -> RInterval {
        let m = self.mid();
        let h = self.len() * (0.5 * factor);
        RInterval::new(&m - &h, m + h)
    }

    /// Distance between the endpoints of self and other (Hausdorff-like).
    pub fn endpoint_gap(&self, other: &RInterval) -> Real {
        (&self.a - &other.a).abs().max(&(&self.b - &other.b).abs())
    }

    pub fn approx_eq(&self, other: &RInterval) -> bool {
        self.endpoint_gap(other) <= self.tol()
    }
}

impl Serialize for RInterval {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("RInterval", 2)?;
        st.serialize_field("a", &self.a.to_f64())?;
        st.serialize_field("b", &self.b.to_f64())?;
        st.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lamination_classification() {
        let i = RInterval::from_f64(0.0, 1.0);
        let nested = RInterval::from_f64(0.2, 0.8);
        let disjoint = RInterval::from_f64(2.0, 3.0);
        let crossing = RInterval::from_f64(0.5, 1.5);
        assert_eq!(i.laminate(&nested), Lamination::Nested);
        assert_eq!(i.laminate(&disjoint), Lamination::Disjoint);
        assert_eq!(i.laminate(&crossing), Lamination::Crossing);
    }

    #[test]
    fn tolerance_identifies_bisection_roots() {
        // Two copies of the same piece computed with roundoff-sized
        // endpoint error must classify as nested, not crossing.
        let e = 4.0 * f64::EPSILON;
        let i = RInterval::from_f64(0.0, 1.0);
        let j = RInterval::from_f64(0.0 - e, 1.0 + e);
        assert_eq!(i.laminate(&j), Lamination::Nested);
        assert!(i.approx_eq(&j));
    }

    #[test]
    fn concentric_scaling() {
        let i = RInterval::from_f64(1.0, 2.0);
        let s = i.scale(3.0); // (1 + 2·1)·I
        assert!((s.a.to_f64() - 0.0).abs() < 1e-15);
        assert!((s.b.to_f64() - 3.0).abs() < 1e-15);
    }
}
