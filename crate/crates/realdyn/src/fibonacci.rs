//! Fibonacci combinatorics for the unicritical families x^d + c:
//! closest-return bookkeeping and the combinatorial parameter search.

use crate::map::MapSpec;
use crate::numerics::bisect;
use crate::puzzle::PuzzleError;
use crate::real::{Precision, Real};

/// The closest-return time sequence 1, 2, 3, 5, 8, ...
pub fn fibonacci_times(depth: usize) -> Vec<usize> {
    let mut s = vec![1usize, 2];
    while s.len() < depth {
        let n = s.len();
        s.push(s[n - 1] + s[n - 2]);
    }
    s.truncate(depth.max(1));
    s
}

/// Times t >= 1 at which the critical orbit makes a strictly closest
/// return to the critical point, up to the horizon.
pub fn closest_return_times(map: &MapSpec, c: &Real, horizon: usize) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    let mut best: Option<Real> = None;
    let mut y = c.to_prec(map.prec);
    for t in 1..=horizon {
        y = map.f(&y);
        let d = (&y - c).abs();
        let closer = match &best {
            None => true,
            Some(b) => d < *b,
        };
        if closer {
            out.push((t, d.to_f64()));
            best = Some(d);
        }
        if best.as_ref().map_or(false, |b| b.is_zero()) {
            break;
        }
    }
    out
}

/// Do the closest returns of x^d + c start with the Fibonacci times
/// through the given depth?
pub fn verify_fibonacci_prefix(degree: u32, c: &Real, depth: usize, prec: Precision) -> bool {
    let want = fibonacci_times(depth);
    let horizon = *want.last().unwrap();
    let map = MapSpec::unicritical(degree, c, prec);
    let zero = Real::zero(prec);
    let got = closest_return_times(&map, &zero, horizon);
    got.len() >= want.len() && got.iter().map(|(t, _)| *t).take(want.len()).eq(want)
}

#[derive(Debug, Clone)]
pub struct FibonacciParameter {
    pub degree: u32,
    pub depth: usize,
    pub c: Real,
    /// The superattracting anchors c_k found along the way.
    pub anchors: Vec<Real>,
    /// Closest-return times observed at the returned parameter.
    pub verified_returns: Vec<usize>,
}

/// Find c with Fibonacci closest-return combinatorics through `depth`
/// levels by nested combinatorial bisection: each level pins the
/// superattracting parameter whose critical orbit closes up at the next
/// Fibonacci time while keeping the verified return prefix. The anchors
/// converge geometrically to the Fibonacci parameter.
pub fn fibonacci_parameter_search(
    degree: u32,
    depth: usize,
    prec: Precision,
) -> Result<FibonacciParameter, PuzzleError> {
    assert!(degree >= 2 && degree % 2 == 0, "even degree family");
    let times = fibonacci_times(depth.max(3));
    // Anchor at level 1: c = -1, where the critical orbit has period 2.
    let mut anchors = vec![Real::with_val(prec, -1.0)];
    // Hard floor: the full-family parameter -2^{1/(d-1)}.
    let floor = -Real::exp2(prec, 1).exp_ln_root(degree);
    let mut prev_gap = Real::with_val(prec, 0.75);
    let mut gap_ratio = 0.25f64;

    for (level, target_time) in times.iter().enumerate().skip(2) {
        let c_cur = anchors.last().unwrap().clone();
        // The anchor gaps shrink super-geometrically; seed the scan well
        // below the extrapolated next gap so no root is skipped.
        let seed = &prev_gap * (gap_ratio / 8.0);
        let mut found = None;
        'attempts: for (dir, shrink) in
            [(-1.0, 1.0), (1.0, 1.0), (-1.0, 64.0), (1.0, 64.0), (-1.0, 1024.0)]
        {
            if let Some(root) = scan_for_anchor(
                degree,
                *target_time,
                level + 1,
                &c_cur,
                &(&seed / shrink),
                &prev_gap,
                dir,
                &floor,
                prec,
            ) {
                found = Some(root);
                break 'attempts;
            }
        }
        let root = found.ok_or(PuzzleError::PrecisionExhausted(level))?;
        let gap = (&root - &c_cur).abs();
        if gap < prec.eps() * 16.0 {
            return Err(PuzzleError::PrecisionExhausted(level));
        }
        gap_ratio = (gap.to_f64() / prev_gap.to_f64()).clamp(1e-6, 0.5);
        prev_gap = gap;
        anchors.push(root);
    }

    let c = anchors.last().unwrap().clone();
    let map = MapSpec::unicritical(degree, &c, prec);
    let verified: Vec<usize> =
        closest_return_times(&map, &Real::zero(prec), *times.last().unwrap())
            .iter()
            .map(|(t, _)| *t)
            .collect();
    let want = fibonacci_times(depth);
    if verified.len() < want.len() || verified[..want.len()] != want[..] {
        return Err(PuzzleError::PrecisionExhausted(depth));
    }
    Ok(FibonacciParameter {
        degree,
        depth,
        c,
        anchors,
        verified_returns: verified,
    })
}

/// Scan from `start` in direction `dir` for a sign change of the critical
/// orbit polynomial, bisect it and verify the closest-return prefix.
/// Steps grow slowly and stay below the previous anchor gap so at most one
/// root enters each bracket; a root with wrong combinatorics is stepped
/// past with a finer stride.
#[allow(clippy::too_many_arguments)]
fn scan_for_anchor(
    degree: u32,
    target_time: usize,
    prefix_depth: usize,
    start: &Real,
    seed_step: &Real,
    max_step: &Real,
    dir: f64,
    floor: &Real,
    prec: Precision,
) -> Option<Real> {
    let psi = |c: &Real| critical_orbit_value(degree, c, target_time, prec);
    let mut step = seed_step.clone();
    if step.is_zero() {
        return None;
    }
    let mut lo = start.clone();
    let mut f_lo = psi(&lo);
    let cap = max_step / 4.0;
    for _ in 0..6000 {
        let nxt = &lo + &step * dir;
        if nxt <= *floor || (&nxt - start).abs() > max_step * 4.0 {
            return None;
        }
        let f_nxt = psi(&nxt);
        if f_lo.signum_i() != f_nxt.signum_i() && f_lo.signum_i() != 0 {
            let (bl, bh) = if dir < 0.0 {
                (nxt.clone(), lo.clone())
            } else {
                (lo.clone(), nxt.clone())
            };
            let tol = prec.eps() * 4.0;
            if let Some(root) = bisect(&psi, &bl, &bh, &tol) {
                if verify_fibonacci_prefix(degree, &root, prefix_depth, prec) {
                    return Some(root);
                }
            }
            lo = nxt;
            f_lo = f_nxt;
            step = &step / 4.0;
            continue;
        }
        lo = nxt;
        f_lo = f_nxt;
        step = (&step * 1.3).min(&cap);
    }
    None
}

/// Closest returns of the orbit of the critical point 1 to the critical
/// set {−1, 1} for the symmetric cubic family.
pub fn closest_set_return_times(a: &Real, horizon: usize, prec: Precision) -> Vec<(usize, f64)> {
    let map = crate::map::MapSpec::symmetric_cubic(a, prec);
    let one = Real::one(prec);
    let mut best: Option<Real> = None;
    let mut out = Vec::new();
    let mut y = one.clone();
    for t in 1..=horizon {
        y = map.f(&y);
        let d = (&y - &one).abs().min(&(&y + &one).abs());
        let closer = best.as_ref().map_or(true, |b| d < *b);
        if closer {
            out.push((t, d.to_f64()));
            best = Some(d);
        }
        if best.as_ref().map_or(false, |b| b.is_zero()) {
            break;
        }
    }
    out
}

pub fn verify_cubic_prefix(a: &Real, depth: usize, prec: Precision) -> bool {
    let want = fibonacci_times(depth);
    let got = closest_set_return_times(a, *want.last().unwrap(), prec);
    got.len() >= want.len() && got.iter().map(|(t, _)| *t).take(want.len()).eq(want)
}

/// Tune the symmetric cubic so the critical orbit makes its closest
/// returns to the critical set at the Fibonacci times: both critical
/// points are then recurrent with each other in their limit sets. Anchors
/// are parameters where the orbit of 1 lands exactly on ±1 at the target
/// time.
pub fn cubic_fibonacci_parameter_search(
    depth: usize,
    prec: Precision,
) -> Result<FibonacciParameter, PuzzleError> {
    let times = fibonacci_times(depth.max(3));
    let mut anchors = vec![Real::one(prec)];
    let mut prev_gap = Real::with_val(prec, 0.25);
    let mut gap_ratio = 0.5f64;
    // h(a) = f^{T}(1)^2 - 1: zero exactly when the orbit hits the set.
    let h = |a: &Real, t: usize| -> Real {
        let map = crate::map::MapSpec::symmetric_cubic(a, prec);
        let y = map.iterate(&Real::one(prec), t);
        &y * &y - 1.0
    };
    for (level, target) in times.iter().enumerate().skip(1) {
        let a_cur = anchors.last().unwrap().clone();
        let seed = &prev_gap * (gap_ratio / 8.0);
        let mut found = None;
        'attempts: for (dir, shrink) in
            [(1.0, 1.0), (-1.0, 1.0), (1.0, 64.0), (-1.0, 64.0), (1.0, 1024.0)]
        {
            let mut step = &seed / shrink;
            if step.is_zero() {
                continue;
            }
            let mut lo = a_cur.clone();
            let mut f_lo = h(&lo, *target);
            let cap = &prev_gap / 2.0;
            for _ in 0..6000 {
                let nxt = &lo + &step * dir;
                if nxt <= Real::with_val(prec, 0.9) || nxt >= Real::with_val(prec, 2.0) {
                    break;
                }
                if (&nxt - &a_cur).abs() > &prev_gap * 4.0 {
                    break;
                }
                let f_nxt = h(&nxt, *target);
                if f_lo.signum_i() != f_nxt.signum_i() && f_lo.signum_i() != 0 {
                    let (bl, bh) = if dir < 0.0 {
                        (nxt.clone(), lo.clone())
                    } else {
                        (lo.clone(), nxt.clone())
                    };
                    let tol = prec.eps() * 4.0;
                    let g = |a: &Real| h(a, *target);
                    if let Some(root) = bisect(&g, &bl, &bh, &tol) {
                        if verify_cubic_prefix(&root, level + 1, prec) {
                            found = Some(root);
                            break 'attempts;
                        }
                    }
                    lo = nxt;
                    f_lo = f_nxt;
                    step = &step / 4.0;
                    continue;
                }
                lo = nxt;
                f_lo = f_nxt;
                step = (&step * 1.3).min(&cap);
            }
        }
        let root = found.ok_or(PuzzleError::PrecisionExhausted(level))?;
        let gap = (&root - &a_cur).abs();
        if gap < prec.eps() * 16.0 {
            return Err(PuzzleError::PrecisionExhausted(level));
        }
        gap_ratio = (gap.to_f64() / prev_gap.to_f64()).clamp(1e-6, 0.5);
        prev_gap = gap;
        anchors.push(root);
    }
    let a = anchors.last().unwrap().clone();
    let verified: Vec<usize> = closest_set_return_times(&a, *times.last().unwrap(), prec)
        .iter()
        .map(|(t, _)| *t)
        .collect();
    let want = fibonacci_times(depth);
    if verified.len() < want.len() || verified[..want.len()] != want[..] {
        return Err(PuzzleError::PrecisionExhausted(depth));
    }
    Ok(FibonacciParameter {
        degree: 3,
        depth,
        c: a,
        anchors,
        verified_returns: verified,
    })
}

/// f_c^t(0) for the family x^d + c.
fn critical_orbit_value(degree: u32, c: &Real, t: usize, prec: Precision) -> Real {
    let c = c.to_prec(prec);
    let mut y = Real::zero(prec);
    for _ in 0..t {
        y = y.powi(degree as i32) + &c;
    }
    y
}

trait ExpLnRoot {
    fn exp_ln_root(self, degree: u32) -> Self;
}

impl ExpLnRoot for Real {
    /// self^{1/(degree-1)} for positive self.
    fn exp_ln_root(self, degree: u32) -> Real {
        (self.ln() / (degree as f64 - 1.0)).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fibonacci_sequence() {
        assert_eq!(fibonacci_times(6), vec![1, 2, 3, 5, 8, 13]);
    }

    #[test]
    fn chebyshev_rejected_at_depth_three() {
        assert!(!verify_fibonacci_prefix(
            2,
            &Real::from(-2.0),
            3,
            Precision::DOUBLE
        ));
    }

    #[test]
    fn anchors_march_toward_the_fibonacci_parameter() {
        let found = fibonacci_parameter_search(2, 8, Precision::QUAD).unwrap();
        // Known value for the quadratic family: c ≈ -1.8705.
        assert!(
            (found.c.to_f64() + 1.8705).abs() < 2e-3,
            "c = {}",
            found.c.to_f64()
        );
        assert!(verify_fibonacci_prefix(2, &found.c, 8, Precision::QUAD));
        // Anchor gaps shrink.
        let g1 = (found.anchors[2].clone() - &found.anchors[1]).abs().to_f64();
        let g2 = (found.anchors[5].clone() - &found.anchors[4]).abs().to_f64();
        assert!(g2 < g1 / 4.0);
    }

    #[test]
    fn period_three_anchor_value() {
        // Level-2 anchor: the root of f^3(0) = 0 nearest below -1 is the
        // superattracting period-3 parameter -1.75487766...
        let found = fibonacci_parameter_search(2, 3, Precision::DOUBLE).unwrap();
        assert!((found.anchors[1].to_f64() + 1.7548776662466928).abs() < 1e-12);
    }
}
