//! Periodic orbits, multiplier classification, parabolic multiplicity,
//! escape-rate fits, and the critical-point partial order.

use crate::map::{MapDomain, MapSpec};
use crate::numerics::{bisect, fit_line};
use crate::real::{Precision, Real};
use serde::Serialize;
use std::fmt;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum OrbitError {
    #[error("parabolic multiplicity undetermined: derivatives through order 4 vanish at {0}")]
    MultiplicityUndetermined(f64),
    #[error("backward orbit left the monotone branch at step {0}")]
    BranchEscape(usize),
    #[error("point {0} is not fixed to tolerance under the map")]
    NotFixed(f64),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OrbitClass {
    Attracting,
    Superattracting,
    Parabolic,
    Repelling,
}

impl fmt::Display for OrbitClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OrbitClass::Attracting => "attracting",
            OrbitClass::Superattracting => "superattracting",
            OrbitClass::Parabolic => "parabolic",
            OrbitClass::Repelling => "repelling",
        };
        write!(f, "{s}")
    }
}

#[derive(Clone, Debug)]
pub struct PeriodicOrbit {
    /// Orbit points in dynamical order starting from the smallest.
    pub points: Vec<Real>,
    pub period: usize,
    pub multiplier: Real,
    pub class: OrbitClass,
    /// |multiplier| within 1e-6 of 1: the verdict may flip at higher precision.
    pub borderline: bool,
    pub parabolic_multiplicity: Option<u32>,
    pub parabolic_sign: Option<i32>,
}

impl PeriodicOrbit {
    pub fn is_attracting(&self) -> bool {
        matches!(
            self.class,
            OrbitClass::Attracting | OrbitClass::Superattracting
        )
    }

    pub fn contains_point(&self, x: &Real, tol: &Real) -> bool {
        self.points.iter().any(|p| (p - x).abs() <= *tol)
    }
}

/// Parabolic detection tolerance: 1e-8 at binary64, scaling like the
/// square root of the unit roundoff at higher precision.
pub fn parabolic_tolerance(prec: Precision) -> Real {
    prec.eps().sqrt() * (1e-8 / Precision::DOUBLE.eps().sqrt().to_f64())
}

const BORDERLINE_MARGIN: f64 = 1e-6;

/// Every sign change of f^p(x) − x on the grid is refined by bisection;
/// duplicates across divisors of p are merged. Orbits strictly between
/// grid points can be missed: grid density is the caller's risk.
pub fn find_periodic_orbits(
    map: &MapSpec,
    period_max: usize,
    grid_density: usize,
) -> Vec<PeriodicOrbit> {
    let prec = map.prec;
    let dom = map.interval();
    let scale = dom.a.abs().max(&dom.b.abs()).max(&Real::one(prec));
    let root_tol = prec.eps() * 64.0 * &scale;
    let merge_tol = &root_tol * 64.0;
    let mut orbits: Vec<PeriodicOrbit> = Vec::new();

    for p in 1..=period_max {
        let g = |x: &Real| -> Real {
            match map.domain {
                MapDomain::Interval(_) => map.iterate(x, p) - x,
                // On the circle, f^p(x) = x means the lift moves by an integer.
                MapDomain::Circle { .. } => {
                    let y = map.iterate(x, p) - x;
                    let nearest = (&y + 0.5).floor();
                    y - nearest
                }
            }
        };
        let mut xs = Vec::with_capacity(grid_density + 1);
        let mut gs = Vec::with_capacity(grid_density + 1);
        for i in 0..=grid_density {
            let x = &dom.a + dom.len() * (i as f64 / grid_density as f64);
            gs.push(g(&x));
            xs.push(x);
        }
        for i in 1..=grid_density {
            if gs[i - 1].signum_i() != gs[i].signum_i() {
                if let Some(root) = bisect(&g, &xs[i - 1], &xs[i], &root_tol) {
                    record_orbit(map, root, p, &merge_tol, &mut orbits);
                }
            }
        }
        // Tangency scan: double roots of f^p(x) − x (parabolic orbits with
        // multiplier +1) never change sign. Refine dips of |g| through the
        // sign change of Dg = Df^p − 1.
        let dg = |x: &Real| map.iterate_derivative(x, p) - 1.0;
        let dip_tol = &scale * (4.0 / grid_density as f64).powi(2) * 16.0;
        let accept_tol = parabolic_tolerance(prec) * &scale;
        for i in 0..=grid_density {
            let interior_dip = i > 0
                && i < grid_density
                && gs[i].abs() <= gs[i - 1].abs()
                && gs[i].abs() <= gs[i + 1].abs();
            if !(gs[i].abs() <= dip_tol) {
                continue;
            }
            if interior_dip {
                if let Some(r) = bisect(&dg, &xs[i - 1], &xs[i + 1], &root_tol) {
                    if g(&r).abs() <= accept_tol {
                        record_orbit(map, r, p, &merge_tol, &mut orbits);
                    }
                }
            } else if (i == 0 || i == grid_density) && gs[i].abs() <= &root_tol * 1e3 {
                record_orbit(map, xs[i].clone(), p, &merge_tol, &mut orbits);
            }
        }
    }
    orbits.sort_by(|a, b| {
        (a.period, a.points[0].to_f64())
            .partial_cmp(&(b.period, b.points[0].to_f64()))
            .unwrap()
    });
    orbits
}

fn record_orbit(
    map: &MapSpec,
    root: Real,
    period: usize,
    merge_tol: &Real,
    orbits: &mut Vec<PeriodicOrbit>,
) {
    // Minimal period: discard if fixed by a proper divisor iterate.
    for q in 1..period {
        if period % q == 0 {
            let moved = (map.iterate(&root, q) - &root).abs();
            let moved = match map.domain {
                MapDomain::Interval(_) => moved,
                MapDomain::Circle { .. } => (&moved - (&moved + 0.5).floor()).abs(),
            };
            if moved <= merge_tol * 4.0 {
                return;
            }
        }
    }
    if orbits
        .iter()
        .any(|o| o.period == period && o.contains_point(&root, merge_tol))
    {
        return;
    }
    let mut points = map.orbit(&root, period - 1);
    if let MapDomain::Circle { .. } = map.domain {
        for p in points.iter_mut() {
            *p = map.reduce(p);
        }
    }
    let start = points
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    points.rotate_left(start);
    let orbit = classify_orbit(map, points, period);
    orbits.push(orbit);
}

pub fn classify_orbit(map: &MapSpec, points: Vec<Real>, period: usize) -> PeriodicOrbit {
    let prec = map.prec;
    let multiplier = map.iterate_derivative(&points[0], period);
    let ptol = parabolic_tolerance(prec);
    let super_tol = prec.eps().sqrt();
    let m = multiplier.abs();
    let class = if (&m - 1.0).abs() <= ptol {
        OrbitClass::Parabolic
    } else if m <= super_tol {
        OrbitClass::Superattracting
    } else if m < Real::one(prec) {
        OrbitClass::Attracting
    } else {
        OrbitClass::Repelling
    };
    let borderline = (&m - 1.0).abs().to_f64() < BORDERLINE_MARGIN;
    let mut orbit = PeriodicOrbit {
        points,
        period,
        multiplier,
        class,
        borderline,
        parabolic_multiplicity: None,
        parabolic_sign: None,
    };
    if class == OrbitClass::Parabolic {
        if let Ok((d, s)) = parabolic_multiplicity(map, &orbit) {
            orbit.parabolic_multiplicity = Some(d);
            orbit.parabolic_sign = Some(s);
        }
    }
    orbit
}

/// Smallest d ≥ 1 with D^{d+1} f^n(p) ≠ 0 (tolerance-scaled), and the sign
/// of that derivative. Derivatives come from exact jet composition along
/// the orbit.
pub fn parabolic_multiplicity(
    map: &MapSpec,
    orbit: &PeriodicOrbit,
) -> Result<(u32, i32), OrbitError> {
    let prec = map.prec;
    let p = &orbit.points[0];
    let mut jet = crate::expr::Jet::variable(p, 5, prec);
    for _ in 0..orbit.period {
        jet = map_jet(map, &jet);
    }
    let tol = prec.eps().sqrt();
    for d in 1..=3u32 {
        let deriv = jet.derivative(d as usize + 1);
        if deriv.abs() > tol {
            return Ok((d, deriv.signum_i()));
        }
    }
    Err(OrbitError::MultiplicityUndetermined(p.to_f64()))
}

pub(crate) fn map_jet(map: &MapSpec, jet: &crate::expr::Jet) -> crate::expr::Jet {
    map.jet(&jet.c[0], jet.order()).compose_shifted(jet)
}

#[derive(Debug, Clone, Serialize)]
pub struct EscapeRateFit {
    /// |x_n − p| along the backward orbit.
    pub distances: Vec<f64>,
    pub fitted_exponent: f64,
    pub r_squared: f64,
    /// Exponent fitted to the fundamental-domain lengths |x_n − x_{n+1}|.
    pub domain_exponent: f64,
    pub domain_r_squared: f64,
    /// Whether a power law fits the tail at all (rejects hyperbolic decay).
    pub power_law: bool,
}

/// Pull x0 back along the local inverse branch toward the fixed point p
/// and fit the approach rate. For a parabolic point of multiplicity d the
/// backward-orbit exponent is −1/d and the fundamental-domain exponent is
/// −(d+1)/d; hyperbolic points decay geometrically and are rejected.
pub fn parabolic_escape_rate(
    map: &MapSpec,
    p: &Real,
    x0: &Real,
    n: usize,
) -> Result<EscapeRateFit, OrbitError> {
    let prec = map.prec;
    let fp_err = (map.f(p) - p).abs();
    if fp_err > prec.eps().sqrt() {
        return Err(OrbitError::NotFixed(p.to_f64()));
    }
    let side = (x0 - p).signum_i();
    if side == 0 {
        return Err(OrbitError::BranchEscape(0));
    }
    // The branch between p and x0 must be free of critical points.
    for c in map.critical_locations() {
        if (&c - p).signum_i() == side && (&c - x0).signum_i() == -side {
            return Err(OrbitError::BranchEscape(0));
        }
    }
    let mut ys = Vec::with_capacity(n + 1);
    ys.push(x0.to_prec(prec));
    let tol = prec.eps() * 8.0 * x0.abs().max(&Real::one(prec));
    for k in 0..n {
        let target = ys[k].clone();
        let g = |y: &Real| map.f(y) - &target;
        let (lo, hi) = if side > 0 {
            (p.clone(), target.clone())
        } else {
            (target.clone(), p.clone())
        };
        match bisect(g, &lo, &hi, &tol) {
            Some(y) => ys.push(y),
            None => return Err(OrbitError::BranchEscape(k)),
        }
    }
    let distances: Vec<f64> = ys.iter().map(|y| (y - p).abs().to_f64()).collect();

    // Log-log fit on dyadic sample times spanning the tail; linearly spaced
    // samples would compress everything into one octave of n and hide
    // geometric decay.
    let dyadic: Vec<usize> = (0..)
        .map(|j| 1usize << j)
        .take_while(|&t| t <= n)
        .collect();
    let tail = &dyadic[dyadic.len() / 2..];
    let ts: Vec<f64> = tail.iter().map(|&t| (t as f64).ln()).collect();
    let vs: Vec<f64> = tail.iter().map(|&t| distances[t].ln()).collect();
    let (fitted_exponent, _, r_squared) = fit_line(&ts, &vs);

    let dom_vs: Vec<f64> = tail
        .iter()
        .map(|&t| (distances[t] - distances[(t + 1).min(n)]).abs().max(1e-320).ln())
        .collect();
    let (domain_exponent, _, domain_r_squared) = fit_line(&ts, &dom_vs);

    Ok(EscapeRateFit {
        distances,
        fitted_exponent,
        r_squared,
        domain_exponent,
        domain_r_squared,
        power_law: r_squared >= 0.5,
    })
}

/// Partial sums of Σ |Δ_i|^{d+alpha} over backward fundamental domains;
/// returns (total, tail fraction over the last half).
pub fn escape_sum_tail(distances: &[f64], exponent: f64) -> (f64, f64) {
    let mut terms = Vec::with_capacity(distances.len().saturating_sub(1));
    for w in distances.windows(2) {
        terms.push((w[0] - w[1]).abs().powf(exponent));
    }
    let total: f64 = terms.iter().sum();
    let tail: f64 = terms[terms.len() / 2..].iter().sum();
    (total, if total > 0.0 { tail / total } else { 0.0 })
}

#[derive(Debug, Clone, Serialize)]
pub struct PartialOrderReport {
    /// Edge (i, j): critical point i ≥ critical point j (j accumulated by i).
    pub edges: Vec<(usize, usize)>,
    /// Connected components of the undirected graph, as index sets.
    pub components: Vec<Vec<usize>>,
    /// Minimal orbit distance from each c_i's orbit to each c_j.
    pub min_distances: Vec<Vec<f64>>,
    pub horizon: usize,
    pub neighborhood_k: u32,
    /// Omega-limit membership is semi-decidable; verdicts hold only to the
    /// horizon above.
    pub horizon_limited: bool,
}

/// Sampled partial order on critical points: an edge c1 → c0 when the
/// orbit of c1 enters every tested dyadic neighbourhood of c0 or hits c0.
pub fn partial_order(map: &MapSpec, horizon: usize, neighborhood_k: u32) -> PartialOrderReport {
    let crits = map.critical_locations();
    let b = crits.len();
    let radius = 2f64.powi(-(neighborhood_k as i32));
    let mut min_distances = vec![vec![f64::INFINITY; b]; b];
    for (i, ci) in crits.iter().enumerate() {
        let mut y = ci.clone();
        for _ in 1..=horizon {
            y = map.f(&y);
            let yr = map.reduce(&y);
            for (j, cj) in crits.iter().enumerate() {
                let d = (&yr - cj).abs().to_f64();
                if d < min_distances[i][j] {
                    min_distances[i][j] = d;
                }
            }
        }
    }
    let mut edges = Vec::new();
    for i in 0..b {
        for j in 0..b {
            if min_distances[i][j] < radius {
                edges.push((i, j));
            }
        }
    }
    // Undirected components via union-find.
    let mut parent: Vec<usize> = (0..b).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    for &(i, j) in &edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
        }
    }
    let mut comp_map: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..b {
        let r = find(&mut parent, i);
        comp_map.entry(r).or_default().push(i);
    }
    PartialOrderReport {
        edges,
        components: comp_map.into_values().collect(),
        min_distances,
        horizon,
        neighborhood_k,
        horizon_limited: true,
    }
}

/// Does the forward orbit of x converge to the given attracting orbit
/// within the horizon (entering and staying within tol for a full cycle)?
pub fn converges_to(map: &MapSpec, x: &Real, orbit: &PeriodicOrbit, horizon: usize) -> bool {
    let tol = Real::with_val(map.prec, 1e-6);
    let mut y = x.to_prec(map.prec);
    for _ in 0..horizon {
        y = map.f(&y);
        if orbit.contains_point(&map.reduce(&y), &tol) {
            // Confirm it stays near the orbit for another cycle.
            let mut z = y.clone();
            let mut ok = true;
            for _ in 0..(4 * orbit.period) {
                z = map.f(&z);
                if !orbit.contains_point(&map.reduce(&z), &(&tol * 64.0)) {
                    ok = false;
                    break;
                }
            }
            if ok {
                return true;
            }
        }
    }
    false
}

/// CSV rows: period, point, multiplier, class (one row per orbit point).
pub fn orbits_to_csv(orbits: &[PeriodicOrbit]) -> String {
    let mut out = String::from("period,point,multiplier,class\n");
    for o in orbits {
        for p in &o.points {
            out.push_str(&format!(
                "{},{:.17},{:.17},{}\n",
                o.period,
                p.to_f64(),
                o.multiplier.to_f64(),
                o.class
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::interval::RInterval;
    use crate::map::MapDomain;

    fn basilica() -> MapSpec {
        MapSpec::quadratic(-1.0, Precision::DOUBLE)
    }

    #[test]
    fn fixed_points_of_square() {
        let m = MapSpec::from_expr(
            "x^2",
            MapDomain::Interval(RInterval::from_f64(-1.0, 1.0)),
            Expr::parse("x^2", Precision::DOUBLE).unwrap(),
            vec![crate::map::CriticalPoint {
                location: Real::from(0.0),
                order: 2,
            }],
            Precision::DOUBLE,
        )
        .unwrap();
        let orbits = find_periodic_orbits(&m, 1, 1000);
        assert_eq!(orbits.len(), 2);
        let zero = orbits.iter().find(|o| o.points[0].to_f64().abs() < 1e-9).unwrap();
        assert_eq!(zero.class, OrbitClass::Superattracting);
        assert!(zero.is_attracting());
        let one = orbits
            .iter()
            .find(|o| (o.points[0].to_f64() - 1.0).abs() < 1e-9)
            .unwrap();
        assert_eq!(one.class, OrbitClass::Repelling);
        assert!((one.multiplier.to_f64() - 2.0).abs() < 1e-8);
    }

    #[test]
    fn basilica_period_two() {
        let orbits = find_periodic_orbits(&basilica(), 2, 2000);
        // Fixed points (1±√5)/2 and the superattracting 2-cycle {0, −1}.
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let alpha = (1.0 - 5f64.sqrt()) / 2.0;
        assert!(orbits
            .iter()
            .any(|o| o.period == 1 && (o.points[0].to_f64() - phi).abs() < 1e-9));
        assert!(orbits
            .iter()
            .any(|o| o.period == 1 && (o.points[0].to_f64() - alpha).abs() < 1e-9));
        let two = orbits.iter().find(|o| o.period == 2).unwrap();
        assert_eq!(two.class, OrbitClass::Superattracting);
        assert!(two.points[0].to_f64().abs() < 1e-9 || (two.points[0].to_f64() + 1.0).abs() < 1e-9);
        assert!(two.multiplier.abs().to_f64() < 1e-7);
    }

    #[test]
    fn parabolic_quarter() {
        let m = MapSpec::quadratic(0.25, Precision::DOUBLE);
        let orbits = find_periodic_orbits(&m, 1, 4000);
        let p = orbits
            .iter()
            .find(|o| (o.points[0].to_f64() - 0.5).abs() < 1e-4)
            .expect("parabolic fixed point at 1/2");
        assert_eq!(p.class, OrbitClass::Parabolic);
        assert_eq!(p.parabolic_multiplicity, Some(1));
        assert_eq!(p.parabolic_sign, Some(1));
    }

    #[test]
    fn multiplicity_from_jets() {
        let p = Precision::DOUBLE;
        for (src, want_d, dom) in [
            ("x + x^2", 1u32, RInterval::from_f64(-0.4, 0.4)),
            ("x + x^3", 2u32, RInterval::from_f64(-0.4, 0.4)),
        ] {
            let m = MapSpec::from_expr(
                src,
                MapDomain::Interval(dom),
                Expr::parse(src, p).unwrap(),
                vec![],
                p,
            )
            .unwrap();
            let orbit = classify_orbit(&m, vec![Real::from(0.0)], 1);
            assert_eq!(orbit.class, OrbitClass::Parabolic);
            assert_eq!(orbit.parabolic_multiplicity, Some(want_d), "{src}");
            assert_eq!(orbit.parabolic_sign, Some(1));
        }
    }

    #[test]
    fn escape_rate_parabolic_and_hyperbolic() {
        let p = Precision::DOUBLE;
        let m1 = MapSpec::from_expr(
            "x + x^2",
            MapDomain::Interval(RInterval::from_f64(-0.4, 0.4)),
            Expr::parse("x + x^2", p).unwrap(),
            vec![],
            p,
        )
        .unwrap();
        let fit = parabolic_escape_rate(&m1, &Real::from(0.0), &Real::from(0.3), 10_000).unwrap();
        assert!(
            (fit.fitted_exponent + 1.0).abs() < 0.1,
            "exponent {}",
            fit.fitted_exponent
        );
        assert!((fit.domain_exponent + 2.0).abs() < 0.25, "{}", fit.domain_exponent);
        assert!(fit.power_law);

        let m2 = MapSpec::from_expr(
            "2*x",
            MapDomain::Interval(RInterval::from_f64(-1.0, 1.0)),
            Expr::parse("2*x", p).unwrap(),
            vec![],
            p,
        )
        .unwrap();
        let fit2 = parabolic_escape_rate(&m2, &Real::from(0.0), &Real::from(0.5), 4000).unwrap();
        assert!(!fit2.power_law, "r2 {}", fit2.r_squared);
    }

    #[test]
    fn chebyshev_partial_order() {
        let m = MapSpec::quadratic(-2.0, Precision::DOUBLE);
        let rep = partial_order(&m, 1000, 20);
        assert_eq!(rep.components.len(), 1);
        assert!(rep.edges.is_empty(), "orbit of 0 is eventually fixed at 2");
        assert!(rep.horizon_limited);
    }

    #[test]
    fn basilica_critical_in_basin() {
        let m = basilica();
        let orbits = find_periodic_orbits(&m, 2, 2000);
        let cycle = orbits.iter().find(|o| o.period == 2).unwrap();
        assert!(converges_to(&m, &Real::from(0.1), cycle, 1000));
    }
}
