//! Real-geometry measurements: cross-ratios and their distortion under
//! iterates, Gap/Space/Cen metrics over return structures, almost-parabolic
//! fundamental-domain profiles, length sums along chains, and niceness
//! moduli.

use crate::expr::Jet;
use crate::interval::RInterval;
use crate::map::MapSpec;
use crate::nests::CascadeRecord;
use crate::puzzle::{first_entry, image_interval, Chain, NiceSet};
use crate::real::Real;
use serde::Serialize;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum GeomError {
    #[error("degenerate configuration: a gap component is empty")]
    DegenerateConfiguration,
    #[error("f^{0} is not a diffeomorphism on the interval (critical point at step {1})")]
    NotDiffeomorphic(usize, usize),
    #[error("neighbourhood is not admissible: {0}")]
    NotAdmissible(String),
    #[error("almost-parabolic preconditions fail: {0}")]
    NotComparable(String),
}

/// C(T, J) = |T||J| / (|L||R|) with L, R the components of T \ J.
pub fn cross_ratio(t: &RInterval, j: &RInterval) -> Result<f64, GeomError> {
    let l = &j.a - &t.a;
    let r = &t.b - &j.b;
    if l.signum_i() <= 0 || r.signum_i() <= 0 {
        return Err(GeomError::DegenerateConfiguration);
    }
    let v = t.len() * j.len() / (l * r);
    Ok(v.to_f64())
}

#[derive(Clone, Debug, Serialize)]
pub struct CrossRatioReport {
    /// C(T, J).
    pub base: f64,
    /// C(f^s, T, J) = C(f^s(T), f^s(J)) / C(T, J).
    pub distorted: f64,
    pub intersection_multiplicity: usize,
    pub max_length: f64,
    /// All sampled Schwarzian values along the orbit of T were negative.
    pub schwarzian_certified: bool,
    pub steps: usize,
}

/// Schwarzian derivative of f^n at x from an order-3 jet along the orbit.
pub fn schwarzian_iterate(map: &MapSpec, x: &Real, n: usize) -> Real {
    let mut jet = Jet::variable(x, 3, map.prec);
    for _ in 0..n.max(1) {
        jet = crate::orbit::map_jet(map, &jet);
    }
    let d1 = jet.derivative(1);
    let d2 = jet.derivative(2);
    let d3 = jet.derivative(3);
    let q = &d2 / &d1;
    d3 / d1 - &q * &q * 1.5
}

/// Cross-ratio distortion of the pair J ⊂ T under f^s, with the chain's
/// intersection multiplicity and maximal interval length. The branch must
/// be a diffeomorphism on T.
pub fn cross_ratio_distortion(
    map: &MapSpec,
    t: &RInterval,
    j: &RInterval,
    s: usize,
) -> Result<CrossRatioReport, GeomError> {
    let base = cross_ratio(t, j)?;
    let crits = map.critical_locations();
    // Forward images; any critical point inside an image of T before the
    // last step breaks the diffeomorphism.
    let mut images = Vec::with_capacity(s + 1);
    let mut cur_t = t.clone();
    let mut cur_j = j.clone();
    for i in 0..s {
        if crits.iter().any(|c| cur_t.contains(c)) {
            return Err(GeomError::NotDiffeomorphic(s, i));
        }
        images.push(cur_t.clone());
        cur_t = image_interval(map, &cur_t);
        cur_j = image_interval(map, &cur_j);
    }
    images.push(cur_t.clone());
    let distorted = cross_ratio(&cur_t, &cur_j)? / base;
    // Intersection multiplicity of T, ..., f^{s-1}(T).
    let mut events: Vec<(f64, i32)> = Vec::new();
    for g in &images[..s.max(1)] {
        events.push((g.a.to_f64(), 1));
        events.push((g.b.to_f64(), -1));
    }
    events.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut depth = 0;
    let mut multiplicity = 0usize;
    for (_, d) in events {
        depth += d;
        multiplicity = multiplicity.max(depth.max(0) as usize);
    }
    let max_length = images
        .iter()
        .take(s.max(1))
        .map(|g| g.len().to_f64())
        .fold(0.0, f64::max);
    // Sample the Schwarzian of the full iterate over T.
    let mut certified = s > 0;
    let samples = 40;
    if s > 0 {
        for k in 0..=samples {
            let x = &t.a + t.len() * (k as f64 / samples as f64);
            if schwarzian_iterate(map, &x, s).signum_i() >= 0 {
                certified = false;
                break;
            }
        }
    }
    Ok(CrossRatioReport {
        base,
        distorted: if s == 0 { 1.0 } else { distorted },
        intersection_multiplicity: multiplicity,
        max_length,
        schwarzian_certified: certified,
        steps: s,
    })
}

// ---------------------------------------------------------------------------
// Gap / Space / Cen over an admissible neighbourhood
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct AdmissibleMetrics {
    pub gap: f64,
    pub space: f64,
    pub cen1: f64,
    pub cen2: f64,
    /// Critical points of the block whose orbits never return to I.
    pub c1: Vec<usize>,
    /// Critical points whose whole component is a return domain.
    pub c2: Vec<usize>,
    pub domains: usize,
}

/// Gap, Space and Cen of an admissible neighbourhood of the critical
/// block, measured over the horizon-detected entry domains.
pub fn admissible_metrics(
    map: &MapSpec,
    i_set: &NiceSet,
    omega_r: &[usize],
    horizon: usize,
) -> Result<AdmissibleMetrics, GeomError> {
    let crits = map.critical_locations();
    let block: Vec<Real> = omega_r.iter().map(|&ci| crits[ci].clone()).collect();
    // Admissibility: each component holds exactly one block point.
    for comp in &i_set.components {
        let inside = block.iter().filter(|c| comp.contains(c)).count();
        if inside != 1 {
            return Err(GeomError::NotAdmissible(format!(
                "component ({}, {}) contains {} block points",
                comp.a.to_f64(),
                comp.b.to_f64(),
                inside
            )));
        }
    }
    // Component index per block point.
    let comp_of: Vec<usize> = block
        .iter()
        .map(|c| i_set.component_containing(c).unwrap())
        .collect();
    // Entry domains seen by the block orbits and by a coarse probe grid
    // inside I (finite critical orbits generate no returns on their own).
    let mut seeds: Vec<Real> = block.clone();
    for comp in &i_set.components {
        for k in 1..24 {
            seeds.push(&comp.a + comp.len() * (k as f64 / 24.0 + 1e-4));
        }
    }
    let mut domains: Vec<(RInterval, bool)> = Vec::new(); // (interval, inside I)
    for c in &seeds {
        let mut y = map.reduce(&c.to_prec(map.prec));
        let mut steps = 0usize;
        while steps < horizon {
            match first_entry(map, i_set, &y, horizon - steps, false) {
                Ok(e) => {
                    let known = domains.iter().any(|(d, _)| d.approx_eq(&e.domain));
                    if !known {
                        // Admissibility: a domain is a component of I or
                        // compactly contained in one.
                        let inside = i_set
                            .components
                            .iter()
                            .any(|comp| comp.strictly_contains_interval(&e.domain));
                        let is_component = i_set
                            .components
                            .iter()
                            .any(|comp| comp.approx_eq(&e.domain));
                        if !inside && !is_component {
                            let overlaps = i_set
                                .components
                                .iter()
                                .any(|comp| comp.intersects(&e.domain));
                            if overlaps {
                                return Err(GeomError::NotAdmissible(format!(
                                    "entry domain ({}, {}) is neither a component nor compactly contained",
                                    e.domain.a.to_f64(),
                                    e.domain.b.to_f64()
                                )));
                            }
                        }
                        domains.push((e.domain.clone(), inside || is_component));
                    }
                    steps += e.time.max(1);
                    y = map.reduce(&map.iterate(&y, e.time.max(1)));
                }
                Err(_) => break,
            }
        }
    }
    // Dom' = entry domains together with the components of I.
    let mut dom_prime: Vec<RInterval> = domains.iter().map(|(d, _)| d.clone()).collect();
    for comp in &i_set.components {
        if !dom_prime.iter().any(|d| d.approx_eq(comp)) {
            dom_prime.push(comp.clone());
        }
    }
    dom_prime.sort_by(|a, b| a.a.partial_cmp(&b.a).unwrap());

    // C1: block points with no return domain around them inside I.
    // C2: block points whose whole component is a return domain.
    let mut c1 = Vec::new();
    let mut c2 = Vec::new();
    for (bi, &ci) in omega_r.iter().enumerate() {
        let c = &block[bi];
        let in_domain = domains.iter().any(|(d, _)| d.contains(c));
        if !in_domain {
            c1.push(ci);
            continue;
        }
        let comp = &i_set.components[comp_of[bi]];
        if domains.iter().any(|(d, _)| d.approx_eq(comp)) {
            c2.push(ci);
        }
    }

    // Gap: infimum over disjoint pairs of Dom' intervals.
    let mut gap = f64::INFINITY;
    for a in 0..dom_prime.len() {
        for b in (a + 1)..dom_prime.len() {
            let (d1, d2) = (&dom_prime[a], &dom_prime[b]);
            if d1.intersects(d2) {
                continue;
            }
            let between = &d2.a - &d1.b;
            if between.signum_i() <= 0 {
                continue;
            }
            let hull = &d2.b - &d1.a;
            let v = (&hull * &between) / (d1.len() * d2.len());
            gap = gap.min(v.to_f64());
        }
    }

    // Space: infimum over return domains compactly inside their component,
    // skipping components fully owned by C2 points.
    let mut space = f64::INFINITY;
    for (d, _) in domains.iter().filter(|(_, inside)| *inside) {
        let comp = i_set
            .components
            .iter()
            .find(|comp| comp.contains_interval(d));
        let Some(comp) = comp else { continue };
        if comp.approx_eq(d) {
            continue;
        }
        let l = &d.a - &comp.a;
        let r = &comp.b - &d.b;
        if l.signum_i() <= 0 || r.signum_i() <= 0 {
            continue;
        }
        let v = (l * r) / (comp.len() * d.len());
        space = space.min(v.to_f64());
    }

    // Cen: position of the component of Dom' containing each even critical
    // value relative to the image of its component.
    let mut cen1 = 0f64;
    let mut cen2 = 0f64;
    for (bi, &ci) in omega_r.iter().enumerate() {
        if map.critical_points[ci].order % 2 != 0 {
            continue;
        }
        let c = &block[bi];
        let fc = map.reduce(&map.f(c));
        let j_hat = dom_prime.iter().find(|d| d.contains(&fc));
        let Some(j_hat) = j_hat else { continue };
        let f_comp = image_interval(map, &i_set.components[comp_of[bi]]);
        let ratio = (j_hat.len() / f_comp.len()).to_f64();
        if c2.contains(&ci) {
            cen2 = cen2.max((ratio - 2.0).abs());
        } else {
            cen1 = cen1.max(ratio);
        }
    }

    Ok(AdmissibleMetrics {
        gap,
        space,
        cen1,
        cen2,
        c1,
        c2,
        domains: dom_prime.len(),
    })
}

// ---------------------------------------------------------------------------
// Almost-parabolic profiles
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct YoccozProfile {
    /// Fundamental domain lengths in channel order.
    pub lengths: Vec<f64>,
    /// t_i = |Delta_i| * min(i, a-i)^2 / |I| over the profiled range.
    pub normalized: Vec<f64>,
    /// Minimal two-sided constant: max over the range of max(t, 1/t).
    pub constant: f64,
    /// max_i t_i / min_i t_i over the profiled range.
    pub ratio_spread: f64,
    pub domains: usize,
    /// Sampled Schwarzian stayed negative on the channel.
    pub schwarzian_certified: bool,
}

/// Profile an explicit sequence of adjacent fundamental-domain endpoints:
/// points[0..=a] delimit a domains.
pub fn profile_from_endpoints(points: &[f64], lo_skip: usize) -> Result<YoccozProfile, GeomError> {
    if points.len() < 8 {
        return Err(GeomError::NotComparable("too few fundamental domains".into()));
    }
    let a = points.len() - 1;
    let total = (points[a] - points[0]).abs();
    let lengths: Vec<f64> = points.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let mut normalized = Vec::new();
    let hi_skip = lo_skip;
    for (i, len) in lengths.iter().enumerate() {
        let pos = i.min(a - 1 - i).max(1);
        if i < lo_skip || i + hi_skip >= a {
            continue;
        }
        normalized.push(len * (pos * pos) as f64 / total);
    }
    if normalized.is_empty() {
        return Err(GeomError::NotComparable("profiled range is empty".into()));
    }
    let max_t = normalized.iter().cloned().fold(f64::MIN, f64::max);
    let min_t = normalized.iter().cloned().fold(f64::MAX, f64::min);
    let constant = normalized
        .iter()
        .map(|t| t.max(1.0 / t))
        .fold(1.0, f64::max);
    Ok(YoccozProfile {
        lengths,
        normalized,
        constant,
        ratio_spread: max_t / min_t,
        domains: a,
        schwarzian_certified: true,
    })
}

/// Fundamental-domain profile of a maximal central cascade: the gaps of
/// the cascade pieces on one side of the critical point form the orbit of
/// an almost-parabolic branch of the return map.
pub fn yoccoz_profile(
    map: &MapSpec,
    cascade: &CascadeRecord,
    side: i32,
    sigma: f64,
    skip: usize,
) -> Result<YoccozProfile, GeomError> {
    let pieces = &cascade.pieces;
    if pieces.len() < 8 {
        return Err(GeomError::NotComparable(format!(
            "cascade length {} too short",
            cascade.length
        )));
    }
    let endpoints: Vec<f64> = if side < 0 {
        pieces.iter().map(|p| p.a.to_f64()).collect()
    } else {
        let mut v: Vec<f64> = pieces.iter().map(|p| p.b.to_f64()).collect();
        v.reverse();
        v
    };
    let a = endpoints.len() - 1;
    let total = (endpoints[a] - endpoints[0]).abs();
    let first = (endpoints[1] - endpoints[0]).abs();
    let last = (endpoints[a] - endpoints[a - 1]).abs();
    if first < sigma * total || last < sigma * total {
        return Err(GeomError::NotComparable(format!(
            "boundary fundamental domains too small: {:.3e}, {:.3e} vs sigma {} of {:.3e}",
            first, last, sigma, total
        )));
    }
    // Schwarzian sampling along the channel.
    let mut certified = true;
    for k in 1..a.min(64) {
        let x = Real::with_val(map.prec, (endpoints[k] + endpoints[k + 1]) / 2.0);
        if schwarzian_iterate(map, &x, cascade.return_time).signum_i() >= 0 {
            certified = false;
            break;
        }
    }
    let mut prof = profile_from_endpoints(&endpoints, skip)?;
    prof.schwarzian_certified = certified;
    Ok(prof)
}

// ---------------------------------------------------------------------------
// Length sums
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct LengthSum {
    pub total: f64,
    pub exponent: f64,
    /// Fraction of the sum carried by the last half of the chain.
    pub tail_fraction: f64,
    /// Partial sums look Cauchy: tail under one percent.
    pub cauchy: bool,
    pub order: usize,
}

/// Sum of |G_j|^{1+alpha} along a chain, with a Cauchy tail check.
pub fn length_sum(chain: &Chain, alpha: f64) -> LengthSum {
    length_sum_with_exponent(chain, 1.0 + alpha)
}

/// Sum of |G_j|^e for an arbitrary exponent e (parabolic branches need
/// e = d + alpha).
pub fn length_sum_with_exponent(chain: &Chain, exponent: f64) -> LengthSum {
    let terms: Vec<f64> = chain
        .pieces
        .iter()
        .map(|g| g.len().to_f64().powf(exponent))
        .collect();
    let total: f64 = terms.iter().sum();
    let tail: f64 = terms[terms.len() / 2..].iter().sum();
    let tail_fraction = if total > 0.0 { tail / total } else { 0.0 };
    LengthSum {
        total,
        exponent,
        tail_fraction,
        cauchy: tail_fraction < 0.01,
        order: chain.order,
    }
}

// ---------------------------------------------------------------------------
// Niceness moduli
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct NicenessModulus {
    /// Largest rho with (1 + 2 rho) L_x(I) inside I over the sampled
    /// recurrent points.
    pub rho_nice: f64,
    /// inradius / diameter at the marked point.
    pub bounded_geometry: f64,
    pub sampled_points: usize,
}

/// Measure how nice an interval is: for each sampled recurrent point the
/// return domain must fit concentrically inside I.
pub fn niceness_modulus(
    map: &MapSpec,
    i: &RInterval,
    marked: &Real,
    seeds: &[Real],
    horizon: usize,
) -> NicenessModulus {
    let nice = NiceSet::single(i.clone());
    let mut rho: Option<f64> = None;
    let mut sampled = 0usize;
    for seed in seeds {
        // Walk the seed orbit; measure the return domain around each orbit
        // point that lands in I.
        let mut y = map.reduce(&seed.to_prec(map.prec));
        for _ in 0..horizon {
            if i.contains(&y) {
                if let Ok(e) = first_entry(map, &nice, &y, horizon, false) {
                    let dom = &e.domain;
                    let m = dom.mid();
                    let h = dom.len() * 0.5;
                    let reach = (&m - &i.a).min(&(&i.b - &m));
                    let r = ((reach / &h).to_f64() - 1.0) / 2.0;
                    let r = r.max(0.0);
                    rho = Some(match rho {
                        None => r,
                        Some(cur) => cur.min(r),
                    });
                    sampled += 1;
                }
                break;
            }
            y = map.reduce(&map.f(&y));
        }
    }
    let bg = {
        let len = i.len();
        let reach = (marked - &i.a).min(&(&i.b - marked));
        (reach / len).to_f64().max(0.0)
    };
    NicenessModulus {
        rho_nice: rho.unwrap_or(0.0),
        bounded_geometry: bg,
        sampled_points: sampled,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::Precision;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn cross_ratio_formula() {
        let t = RInterval::from_f64(0.0, 4.0);
        let j = RInterval::from_f64(1.0, 3.0);
        assert_eq!(cross_ratio(&t, &j).unwrap(), 8.0);
        // J centered, |J| -> 0: C -> 0 monotonically.
        let mut prev = f64::INFINITY;
        for w in [1.0, 0.5, 0.25] {
            let j = RInterval::from_f64(2.0 - w / 2.0, 2.0 + w / 2.0);
            let c = cross_ratio(&t, &j).unwrap();
            assert!(c < prev);
            prev = c;
        }
        // Degenerate gap.
        let j_touch = RInterval::from_f64(0.0, 3.0);
        assert!(matches!(
            cross_ratio(&t, &j_touch),
            Err(GeomError::DegenerateConfiguration)
        ));
    }

    #[test]
    fn cross_ratio_moebius_invariance() {
        // g(x) = 1/(x+5) preserves cross ratios of this form.
        let mut rng = StdRng::seed_from_u64(7);
        let g = |x: f64| 1.0 / (x + 5.0);
        for _ in 0..200 {
            let a = rng.random_range(-2.0..2.0);
            let la = rng.random_range(0.01..0.7f64);
            let lj = rng.random_range(0.001..la * 0.8);
            let off = rng.random_range(0.001..(la - lj) * 0.99);
            let t = RInterval::from_f64(a, a + la);
            let j = RInterval::from_f64(a + off, a + off + lj);
            let c0 = cross_ratio(&t, &j).unwrap();
            // g is decreasing: image intervals flip.
            let gt = RInterval::from_f64(g(a + la), g(a));
            let gj = RInterval::from_f64(g(a + off + lj), g(a + off));
            let c1 = cross_ratio(&gt, &gj).unwrap();
            assert!(
                (c0 - c1).abs() <= 1e-12 * c0.max(1.0),
                "moebius invariance: {c0} vs {c1}"
            );
        }
    }

    #[test]
    fn distortion_identity_and_affine() {
        let m = MapSpec::quadratic(-2.0, Precision::DOUBLE);
        let t = RInterval::from_f64(1.0, 1.5);
        let j = RInterval::from_f64(1.1, 1.3);
        let rep = cross_ratio_distortion(&m, &t, &j, 0).unwrap();
        assert_eq!(rep.distorted, 1.0);

        let aff = MapSpec::from_expr(
            "affine",
            crate::map::MapDomain::Interval(RInterval::from_f64(-10.0, 10.0)),
            crate::expr::Expr::parse("0.5*x + 1", Precision::DOUBLE).unwrap(),
            vec![],
            Precision::DOUBLE,
        )
        .unwrap();
        for s in 1..5 {
            let rep = cross_ratio_distortion(&aff, &t, &j, s).unwrap();
            assert!((rep.distorted - 1.0).abs() < 1e-12, "affine maps: exactly 1");
        }
    }

    #[test]
    fn distortion_expands_on_negative_schwarzian_branch() {
        let m = MapSpec::quadratic(-2.0, Precision::DOUBLE);
        let mut rng = StdRng::seed_from_u64(11);
        let mut checked = 0;
        for _ in 0..400 {
            let a = rng.random_range(0.2..1.6);
            let len = rng.random_range(0.01..0.3f64);
            let t = RInterval::from_f64(a, (a + len).min(1.93));
            let lj = t.len().to_f64() * rng.random_range(0.2..0.6);
            let off = rng.random_range(0.05..0.35) * t.len().to_f64();
            let j = RInterval::from_f64(a + off, a + off + lj);
            let s = rng.random_range(1..12);
            match cross_ratio_distortion(&m, &t, &j, s) {
                Ok(rep) => {
                    if rep.schwarzian_certified {
                        assert!(
                            rep.distorted >= 1.0 - 1e-9,
                            "expansion fails: {} at s={s}",
                            rep.distorted
                        );
                        checked += 1;
                    }
                }
                Err(GeomError::NotDiffeomorphic(_, _)) => continue,
                Err(e) => panic!("{e}"),
            }
        }
        assert!(checked > 50, "enough certified samples: {checked}");
    }

    #[test]
    fn schwarzian_sign_examples() {
        let m = MapSpec::quadratic(-2.0, Precision::DOUBLE);
        // One-step Schwarzian of x^2 - 2 away from 0 is negative.
        assert!(schwarzian_iterate(&m, &Real::from(0.7), 1).to_f64() < 0.0);
        let aff = MapSpec::from_expr(
            "affine",
            crate::map::MapDomain::Interval(RInterval::from_f64(-10.0, 10.0)),
            crate::expr::Expr::parse("2*x + 1", Precision::DOUBLE).unwrap(),
            vec![],
            Precision::DOUBLE,
        )
        .unwrap();
        assert!(schwarzian_iterate(&aff, &Real::from(0.3), 3).to_f64().abs() < 1e-12);
    }

    #[test]
    fn admissible_metrics_on_shrinking_pieces() {
        // Misiurewicz map: the critical point never returns (C1 case) and
        // the return domains of a critical puzzle piece are compactly
        // contained; Space grows as the piece shrinks.
        let m = MapSpec::quadratic(-2.0, Precision::DOUBLE);
        let z = crate::puzzle::AdmissibleSet::new(
            &m,
            vec![(Real::from(-1.0), crate::puzzle::PointProvenance::Fixed)],
        )
        .unwrap();
        let mut spaces = Vec::new();
        for depth in [4usize, 8, 12] {
            let p = crate::puzzle::puzzle_piece(&m, &z, depth, &Real::from(0.0), 60).unwrap();
            let met =
                admissible_metrics(&m, &NiceSet::single(p.interval), &[0], 2000).unwrap();
            assert!(met.gap > 0.0 && met.gap.is_finite(), "gap {}", met.gap);
            assert_eq!(met.c1, vec![0], "critical point never returns");
            if met.space.is_finite() {
                spaces.push(met.space);
            }
        }
        assert!(spaces.len() >= 2);
        assert!(
            spaces.windows(2).all(|w| w[1] > w[0]),
            "space grows as I shrinks: {spaces:?}"
        );
    }

    #[test]
    fn parabolic_channel_profile() {
        // g(x) = x + x^2 on (eps, 1): explicit almost-parabolic orbit.
        let eps = 1e-3;
        let mut pts = vec![1.0f64];
        loop {
            let x = *pts.last().unwrap();
            // backward orbit: y with y + y^2 = x
            let y = (-1.0 + (1.0 + 4.0 * x).sqrt()) / 2.0;
            if y < eps {
                break;
            }
            pts.push(y);
        }
        // Channel order: domains indexed from the free end (x = 1) toward
        // the parabolic point, so |Delta_i| ~ |I| / i^2 on 10 <= i <= a/2.
        let prof = profile_from_endpoints(&pts, 10).unwrap();
        let a = prof.domains;
        let vals: Vec<f64> = prof
            .normalized
            .iter()
            .take(a / 2 - 10)
            .cloned()
            .collect();
        let mx = vals.iter().cloned().fold(f64::MIN, f64::max);
        let mn = vals.iter().cloned().fold(f64::MAX, f64::min);
        assert!(mx / mn <= 10.0, "two-sided constant <= 10: {}", mx / mn);
    }

    #[test]
    fn affine_lengths_rejected_as_almost_parabolic() {
        // Geometric fundamental domains: the i^2 normalization diverges.
        let mut pts = vec![0.0f64];
        let mut step = 1.0;
        for _ in 0..40 {
            pts.push(pts.last().unwrap() + step);
            step *= 0.7;
        }
        let prof = profile_from_endpoints(&pts, 3).unwrap();
        assert!(
            prof.ratio_spread > 50.0,
            "geometric channel is not almost-parabolic: spread {}",
            prof.ratio_spread
        );
    }

    #[test]
    fn length_sum_cases() {
        // Geometric chain: closed form.
        let mut pieces = Vec::new();
        let mut len = 1.0f64;
        let mut left = 0.0;
        for _ in 0..30 {
            pieces.push(RInterval::from_f64(left, left + len));
            left += len;
            len *= 0.5;
        }
        let chain = Chain {
            pieces,
            critical_steps: vec![],
            order: 0,
            intersection_multiplicity: 1,
            max_length: 1.0,
        };
        let s = length_sum(&chain, 1.0); // sum of len^2 = sum 4^{-k} -> 4/3
        let closed = (1.0 - 0.25f64.powi(30)) / (1.0 - 0.25);
        assert!((s.total - closed).abs() < 1e-10);
        assert!(s.cauchy);
        // Single piece.
        let single = Chain {
            pieces: vec![RInterval::from_f64(0.0, 0.5)],
            critical_steps: vec![],
            order: 0,
            intersection_multiplicity: 1,
            max_length: 0.5,
        };
        let s1 = length_sum(&single, 0.5);
        assert!((s1.total - 0.5f64.powf(1.5)).abs() < 1e-14);
    }

    #[test]
    fn parabolic_branch_length_sum_converges() {
        // x + x^3 (multiplicity d = 2), exponent d + alpha with alpha = 1.5:
        // the backward fundamental domains of the repelling side.
        let p = Precision::DOUBLE;
        let m = MapSpec::from_expr(
            "x + x^3",
            crate::map::MapDomain::Interval(RInterval::from_f64(-0.6, 0.6)),
            crate::expr::Expr::parse("x + x^3", p).unwrap(),
            vec![],
            p,
        )
        .unwrap();
        let fit = crate::orbit::parabolic_escape_rate(&m, &Real::from(0.0), &Real::from(0.5), 10_000)
            .unwrap();
        let (_total, tail) = crate::orbit::escape_sum_tail(&fit.distances, 2.0 + 1.5);
        assert!(tail < 0.01, "tail {tail}");
    }

    #[test]
    fn rho_nice_arithmetic() {
        // Return domain exactly centered with |L| = |I|/3: rho = 1.
        let m = MapSpec::quadratic(-1.0, Precision::DOUBLE);
        let i = RInterval::from_f64(-1.0, 1.0);
        // Direct arithmetic check of the formula on a synthetic domain.
        let dom = RInterval::from_f64(-1.0 / 3.0, 1.0 / 3.0);
        let mmid = dom.mid();
        let h = dom.len() * 0.5;
        let reach = (&mmid - &i.a).min(&(&i.b - &mmid));
        let rho = ((reach / h).to_f64() - 1.0) / 2.0;
        assert!((rho - 1.0).abs() < 1e-12);
        let _ = m;
    }

    #[test]
    fn metrics_scale_invariance() {
        // Affine rescaling of the map conjugates Gap/Space to identical
        // values: x^2 - 2 vs its conjugate by h(x) = 3x on a matching
        // puzzle piece.
        let m = MapSpec::quadratic(-2.0, Precision::DOUBLE);
        let z = crate::puzzle::AdmissibleSet::new(
            &m,
            vec![(Real::from(-1.0), crate::puzzle::PointProvenance::Fixed)],
        )
        .unwrap();
        let p1 = crate::puzzle::puzzle_piece(&m, &z, 6, &Real::from(0.0), 60).unwrap();
        // Short detection horizon: chaotic orbit divergence would otherwise
        // make the two maps sample slightly different domain families.
        let met1 =
            admissible_metrics(&m, &NiceSet::single(p1.interval.clone()), &[0], 50).unwrap();
        let m2 = MapSpec::from_expr(
            "rescaled",
            crate::map::MapDomain::Interval(RInterval::from_f64(-6.0, 6.0)),
            crate::expr::Expr::parse("x^2/3 - 6", Precision::DOUBLE).unwrap(),
            vec![crate::map::CriticalPoint {
                location: Real::from(0.0),
                order: 2,
            }],
            Precision::DOUBLE,
        )
        .unwrap();
        let z2 = crate::puzzle::AdmissibleSet::new(
            &m2,
            vec![(Real::from(-3.0), crate::puzzle::PointProvenance::Fixed)],
        )
        .unwrap();
        let p2 = crate::puzzle::puzzle_piece(&m2, &z2, 6, &Real::from(0.0), 60).unwrap();
        assert!(
            (p2.interval.len().to_f64() - 3.0 * p1.interval.len().to_f64()).abs() < 1e-9,
            "pieces correspond under the conjugacy"
        );
        let met2 = admissible_metrics(&m2, &NiceSet::single(p2.interval), &[0], 50).unwrap();
        assert!(
            (met1.gap - met2.gap).abs() < 1e-9 * met1.gap.max(1.0),
            "{} vs {}",
            met1.gap,
            met2.gap
        );
        assert!(
            (met1.space - met2.space).abs() < 1e-9 * met1.space.max(1.0),
            "{} vs {}",
            met1.space,
            met2.space
        );
    }
}
