//! Root bracketing and small fitting helpers shared across the crate.

use crate::real::{Precision, Real};

/// Bisect a sign change of `f` on [lo, hi] down to `tol` width.
/// Returns the midpoint of the final bracket, or None when there is no
/// sign change on the bracket.
pub fn bisect<F: Fn(&Real) -> Real>(f: F, lo: &Real, hi: &Real, tol: &Real) -> Option<Real> {
    let mut a = lo.clone();
    let mut b = hi.clone();
    let mut fa = f(&a);
    let fb = f(&b);
    if fa.is_zero() {
        return Some(a);
    }
    if fb.is_zero() {
        return Some(b);
    }
    if fa.signum_i() == fb.signum_i() {
        return None;
    }
    // Enough iterations to shrink any bracket below tol at the working
    // precision; the loop exits early once the bracket is tight.
    let max_iter = 64 + 8 * lo.prec().get().max(hi.prec().get());
    for _ in 0..max_iter {
        if (&b - &a).abs() <= *tol {
            break;
        }
        let m = Real::mid(&a, &b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(&m);
        if fm.is_zero() {
            return Some(m);
        }
        if fm.signum_i() == fa.signum_i() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Some(Real::mid(&a, &b))
}

/// Bracketed root solve with Newton acceleration: the bracket from plain
/// bisection is maintained at every step (a Newton iterate outside the
/// current bracket is discarded for the midpoint), so the bracketing
/// guarantee is identical to bisection while convergence is quadratic.
pub fn newton_bisect<F, D>(f: F, df: D, lo: &Real, hi: &Real, tol: &Real) -> Option<Real>
where
    F: Fn(&Real) -> Real,
    D: Fn(&Real) -> Real,
{
    let mut a = lo.clone();
    let mut b = hi.clone();
    let mut fa = f(&a);
    let fb = f(&b);
    if fa.is_zero() {
        return Some(a);
    }
    if fb.is_zero() {
        return Some(b);
    }
    if fa.signum_i() == fb.signum_i() {
        return None;
    }
    let max_iter = 64 + 8 * lo.prec().get().max(hi.prec().get());
    let mut x = Real::mid(&a, &b);
    for _ in 0..max_iter {
        if (&b - &a).abs() <= *tol {
            break;
        }
        let fx = f(&x);
        if fx.is_zero() {
            return Some(x);
        }
        // Shrink the bracket with the sign of f(x).
        if fx.signum_i() == fa.signum_i() {
            a = x.clone();
            fa = fx.clone();
        } else {
            b = x.clone();
        }
        if (&b - &a).abs() <= *tol {
            break;
        }
        // Newton proposal, midpoint fallback.
        let d = df(&x);
        let mut next = None;
        if !d.is_zero() {
            let cand = &x - fx / d;
            if cand > a && cand < b {
                next = Some(cand);
            }
        }
        x = next.unwrap_or_else(|| Real::mid(&a, &b));
    }
    Some(Real::mid(&a, &b))
}

/// Identification tolerance: 16 units of roundoff at the active precision,
/// scaled to the magnitude of the quantities involved.
pub fn ident_tol(prec: Precision, scale: &Real) -> Real {
    let s = scale.abs().max(&Real::one(prec));
    prec.eps() * 16.0 * s
}

/// Least-squares line fit returning (slope, intercept, r_squared).
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    assert!(xs.len() == ys.len() && xs.len() >= 2);
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let f = |x: &Real| x * x - 2.0;
        let r = bisect(
            f,
            &Real::from(1.0),
            &Real::from(2.0),
            &Real::from(1e-14),
        )
        .unwrap();
        assert!((r.to_f64() - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn bisect_no_sign_change() {
        let f = |x: &Real| x * x + 1.0;
        assert!(bisect(f, &Real::from(-1.0), &Real::from(1.0), &Real::from(1e-12)).is_none());
    }

    #[test]
    fn bisect_deep_precision() {
        let p = Precision::OCT;
        let f = |x: &Real| x * x - 2.0;
        let tol = p.eps() * 4.0;
        let r = bisect(f, &Real::with_val(p, 1.0), &Real::with_val(p, 2.0), &tol).unwrap();
        let err = (&r * &r - 2.0).abs();
        assert!(err < p.eps() * 32.0);
    }

    #[test]
    fn line_fit_exact() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let (m, b, r2) = fit_line(&xs, &ys);
        assert!((m - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}
