//! Admissible sets, real puzzle pieces, nice intervals, first entry and
//! return structures, chains and itineraries.

use crate::interval::{Lamination, RInterval};
use crate::map::{MapDomain, MapSpec};
use crate::numerics::{bisect, ident_tol, newton_bisect};
use crate::orbit::{find_periodic_orbits, OrbitClass, PeriodicOrbit};
use crate::real::Real;
use serde::Serialize;
use std::cell::RefCell;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum PuzzleError {
    #[error("point {0} lies on the depth-{1} partition boundary")]
    BoundaryPoint(f64, usize),
    #[error("requested depth {0} exceeds the configured cap {1}")]
    DepthOverflow(usize, usize),
    #[error("orbit of {0} does not enter the target within horizon {1}")]
    NoEntryWithinHorizon(f64, usize),
    #[error("pullback chain broken at step {0}")]
    ChainBroken(usize),
    #[error("no periodic orbit found up to the period cap")]
    PartitionUnavailable,
    #[error("precision exhausted at combinatorial depth {0}")]
    PrecisionExhausted(usize),
    #[error("set is not forward invariant: point {0}")]
    NotInvariant(f64),
}

/// Where a starting-partition point came from.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointProvenance {
    Fixed,
    PeriodicSeed,
    BasinBoundary,
    Parabolic,
    RenormalizationBoundary,
    ForwardImage,
}

/// A finite forward-invariant set generating the puzzle partition.
/// Admissibility (disjointness from the post-critical set) is tracked as
/// a measured clearance, not assumed.
#[derive(Clone, Debug)]
pub struct AdmissibleSet {
    /// Sorted, deduplicated points.
    pub points: Vec<Real>,
    /// Forward-invariance witness: image_index[i] is the index that
    /// f(points[i]) lands on.
    pub image_index: Vec<usize>,
    pub provenance: Vec<PointProvenance>,
    /// Smallest sampled distance from the set to the post-critical set.
    pub pc_clearance: f64,
}

impl AdmissibleSet {
    /// Build from raw points: sorts, dedupes, verifies forward invariance
    /// within tolerance and measures post-critical clearance.
    pub fn new(map: &MapSpec, raw: Vec<(Real, PointProvenance)>) -> Result<AdmissibleSet, PuzzleError> {
        let prec = map.prec;
        let mut pts = raw;
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut points: Vec<Real> = Vec::new();
        let mut provenance = Vec::new();
        for (p, tag) in pts {
            let tol = ident_tol(prec, &p);
            if points.last().map_or(true, |q| (&p - q).abs() > tol) {
                points.push(p);
                provenance.push(tag);
            }
        }
        if points.is_empty() {
            return Err(PuzzleError::PartitionUnavailable);
        }
        let mut image_index = Vec::with_capacity(points.len());
        for p in &points {
            let fp = map.reduce(&map.f(p));
            let tol = ident_tol(prec, &fp.abs().max(&Real::one(prec))) * 1e4;
            let hit = points.iter().position(|q| (&fp - q).abs() <= tol);
            match hit {
                Some(j) => image_index.push(j),
                None => return Err(PuzzleError::NotInvariant(p.to_f64())),
            }
        }
        let pc_clearance = pc_clearance(map, &points, 200);
        Ok(AdmissibleSet {
            points,
            image_index,
            provenance,
            pc_clearance,
        })
    }

    /// Restrict to the forward-invariant subset generated by dropping the
    /// given indices (and anything forced out with them).
    pub fn restrict(&self, map: &MapSpec, keep: &[usize]) -> Result<AdmissibleSet, PuzzleError> {
        let mut keep_mask = vec![false; self.points.len()];
        for &i in keep {
            keep_mask[i] = true;
        }
        // A kept point whose image is dropped must be dropped too.
        loop {
            let mut changed = false;
            for i in 0..self.points.len() {
                if keep_mask[i] && !keep_mask[self.image_index[i]] {
                    keep_mask[i] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let raw: Vec<(Real, PointProvenance)> = self
            .points
            .iter()
            .zip(&self.provenance)
            .enumerate()
            .filter(|(i, _)| keep_mask[*i])
            .map(|(_, (p, t))| (p.clone(), *t))
            .collect();
        AdmissibleSet::new(map, raw)
    }

    /// Maximal forward-invariant subset whose points stay at least
    /// `resolution` away from the sampled post-critical set. This is the
    /// subset that actually generates puzzles for maps whose full starting
    /// partition touches PC(f) (finite critical orbits).
    pub fn generating_subset(
        &self,
        map: &MapSpec,
        resolution: f64,
    ) -> Result<AdmissibleSet, PuzzleError> {
        let mut pc: Vec<Real> = Vec::new();
        for c in map.critical_locations() {
            let mut y = map.f(&c);
            for _ in 0..200 {
                pc.push(map.reduce(&y));
                y = map.f(&y);
            }
        }
        let keep: Vec<usize> = self
            .points
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                pc.iter()
                    .all(|q| (q - *p).abs().to_f64() > resolution)
            })
            .map(|(i, _)| i)
            .collect();
        self.restrict(map, &keep)
    }

    /// Components of M ∖ Z, in order.
    pub fn components(&self, map: &MapSpec) -> Vec<RInterval> {
        let dom = map.interval();
        let mut cuts: Vec<Real> = vec![dom.a.clone()];
        for p in &self.points {
            if dom.contains(p) {
                cuts.push(p.clone());
            }
        }
        cuts.push(dom.b.clone());
        let mut out = Vec::new();
        for w in cuts.windows(2) {
            if &w[1] - &w[0] > ident_tol(map.prec, &w[1]) {
                out.push(RInterval::new(w[0].clone(), w[1].clone()));
            }
        }
        out
    }

    /// Index of the partition component containing x, or None when x lies
    /// on the cut set. Components carry the topology relative to M: a
    /// domain endpoint that is not itself a cut point belongs to the
    /// adjacent component.
    pub fn component_of(&self, map: &MapSpec, x: &Real) -> Option<usize> {
        let tol = ident_tol(map.prec, &x.abs().max(&Real::one(map.prec)));
        if self.points.iter().any(|z| (z - x).abs() <= tol) {
            return None;
        }
        let comps = self.components(map);
        let dom = map.interval();
        if (x - &dom.a).abs() <= tol {
            return Some(0);
        }
        if (x - &dom.b).abs() <= tol {
            return Some(comps.len() - 1);
        }
        comps.iter().position(|c| c.contains(x))
    }
}

fn pc_clearance(map: &MapSpec, points: &[Real], horizon: usize) -> f64 {
    let mut clearance = f64::INFINITY;
    for c in map.critical_locations() {
        let mut y = map.f(&c);
        for _ in 0..horizon {
            let yr = map.reduce(&y);
            for p in points {
                clearance = clearance.min((p - &yr).abs().to_f64());
            }
            y = map.f(&y);
        }
    }
    clearance
}

// ---------------------------------------------------------------------------
// Starting partition
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct StartingPartition {
    pub set: AdmissibleSet,
    pub orbits: Vec<PeriodicOrbit>,
}

/// Assemble the starting partition: boundary points of immediate basins,
/// parabolic orbits, boundaries of smallest periodic intervals around
/// finitely-renormalizable critical points (horizon-limited), and the
/// fixed points; then close under forward images.
pub fn build_starting_partition(
    map: &MapSpec,
    period_cap: usize,
    grid: usize,
) -> Result<StartingPartition, PuzzleError> {
    let prec = map.prec;
    let orbits = find_periodic_orbits(map, period_cap, grid);
    if orbits.is_empty() {
        return Err(PuzzleError::PartitionUnavailable);
    }
    let mut raw: Vec<(Real, PointProvenance)> = Vec::new();

    // Fixed points (and the minimal period on the circle).
    let min_period = orbits.iter().map(|o| o.period).min().unwrap();
    let seed_period = match map.domain {
        MapDomain::Interval(_) => 1,
        MapDomain::Circle { .. } => min_period,
    };
    for o in orbits.iter().filter(|o| o.period == seed_period) {
        if o.class == OrbitClass::Repelling {
            for p in &o.points {
                raw.push((p.clone(), PointProvenance::Fixed));
            }
        }
    }

    // Parabolic orbits (borderline-flagged ones included: the map may be
    // only numerically parabolic).
    for o in orbits.iter().filter(|o| o.class == OrbitClass::Parabolic || o.borderline) {
        for p in &o.points {
            raw.push((p.clone(), PointProvenance::Parabolic));
        }
    }

    // Immediate basin boundaries of (super)attracting cycles.
    for o in orbits.iter().filter(|o| o.is_attracting()) {
        for p in &o.points {
            for side in [-1, 1] {
                if let Some(bd) = basin_boundary(map, o, p, side, 400) {
                    raw.push((bd, PointProvenance::BasinBoundary));
                }
            }
        }
    }

    // Periodic-interval boundaries around renormalizable critical points:
    // an orientation-reversing repelling fixed point of f^s next to the
    // critical point together with its mirror bounds the smallest periodic
    // interval detected within the period cap.
    for c in map.critical_locations() {
        if let Some((lo, hi)) = smallest_periodic_interval(map, &c, &orbits) {
            raw.push((lo, PointProvenance::RenormalizationBoundary));
            raw.push((hi, PointProvenance::RenormalizationBoundary));
        }
    }

    // Domain endpoints whose orbits stay on the boundary.
    if let MapDomain::Interval(dom) = &map.domain {
        for e in [&dom.a, &dom.b] {
            let fe = map.f(e);
            let tol = ident_tol(prec, &dom.b.abs().max(&dom.a.abs()));
            if (&fe - &dom.a).abs() <= tol || (&fe - &dom.b).abs() <= tol {
                raw.push((e.clone(), PointProvenance::Fixed));
            }
        }
    }

    if raw.is_empty() {
        // Fall back to any repelling orbit points at all.
        for o in orbits.iter().filter(|o| o.class == OrbitClass::Repelling) {
            for p in &o.points {
                raw.push((p.clone(), PointProvenance::PeriodicSeed));
            }
        }
    }
    if raw.is_empty() {
        return Err(PuzzleError::PartitionUnavailable);
    }

    // Close under forward images: all seeds are periodic or preperiodic,
    // so the closure is finite.
    let mut i = 0;
    while i < raw.len() {
        let fp = map.reduce(&map.f(&raw[i].0));
        let tol = ident_tol(prec, &fp.abs().max(&Real::one(prec))) * 1e4;
        if !raw.iter().any(|(q, _)| (&fp - q).abs() <= tol) {
            raw.push((fp, PointProvenance::ForwardImage));
        }
        i += 1;
        if i > 10_000 {
            return Err(PuzzleError::PrecisionExhausted(i));
        }
    }

    let set = AdmissibleSet::new(map, raw)?;
    Ok(StartingPartition { set, orbits })
}

/// True when the forward images of the whole segment [p, q] contract to
/// the attractor point: this is membership of q in the immediate (possibly
/// one-sided) basin component, not just the basin. Parabolic convergence
/// is polynomial, so a relaxed contraction verdict is accepted as well.
fn segment_attracted(map: &MapSpec, p: &Real, q: &Real, period: usize, horizon: usize) -> bool {
    let mut j = if p < q {
        RInterval::new(p.clone(), q.clone())
    } else if q < p {
        RInterval::new(q.clone(), p.clone())
    } else {
        return true;
    };
    let start = j.len();
    let mut dist = Real::one(map.prec);
    for k in 0..horizon {
        for _ in 0..period {
            j = image_interval(map, &j);
        }
        dist = (&j.a - p).abs().max(&(&j.b - p).abs());
        if dist.to_f64() < 1e-8 {
            return true;
        }
        if k > horizon / 2 && dist > &start * 4.0 {
            return false;
        }
    }
    // Parabolic-side fallback: definite contraction without full collapse.
    dist < start * 0.05 && dist.to_f64() < 0.05
}

/// Boundary of the immediate basin component around an attractor point:
/// outward march plus bisection on segment contraction.
fn basin_boundary(
    map: &MapSpec,
    orbit: &PeriodicOrbit,
    p: &Real,
    side: i32,
    horizon: usize,
) -> Option<Real> {
    let dom = map.interval();
    let limit = if side > 0 { &dom.b } else { &dom.a };
    if (limit - p).abs() < ident_tol(map.prec, limit) {
        return None;
    }
    let period = orbit.period;
    let mut step = (limit - p).abs() * 0.05;
    let mut inside = p.clone();
    loop {
        let probe = &inside + &step * (side as f64);
        let past_end = if side > 0 { probe > *limit } else { probe < *limit };
        if past_end {
            return if segment_attracted(map, p, limit, period, horizon) {
                Some(limit.clone())
            } else {
                bisect_basin(map, p, period, &inside, limit, horizon)
            };
        }
        if segment_attracted(map, p, &probe, period, horizon) {
            inside = probe;
        } else {
            return bisect_basin(map, p, period, &inside, &probe, horizon);
        }
        step = step * 1.5;
    }
}

fn bisect_basin(
    map: &MapSpec,
    p: &Real,
    period: usize,
    inside: &Real,
    outside: &Real,
    horizon: usize,
) -> Option<Real> {
    let mut a = inside.clone();
    let mut b = outside.clone();
    let tol = ident_tol(map.prec, &a.abs().max(&b.abs())) * 16.0;
    for _ in 0..200 {
        if (&b - &a).abs() <= tol {
            break;
        }
        let m = Real::mid(&a, &b);
        if segment_attracted(map, p, &m, period, horizon) {
            a = m;
        } else {
            b = m;
        }
    }
    Some(Real::mid(&a, &b))
}

/// Smallest symmetric periodic interval around an even critical point,
/// found from orientation-reversing repelling fixed points of f^s.
fn smallest_periodic_interval(
    map: &MapSpec,
    c: &Real,
    orbits: &[PeriodicOrbit],
) -> Option<(Real, Real)> {
    let prec = map.prec;
    let mut best: Option<(Real, Real, Real)> = None; // (lo, hi, width)
    for o in orbits {
        if o.class != OrbitClass::Repelling {
            continue;
        }
        for a in &o.points {
            // Candidate boundary point a with Df^s(a) < 0, on either side
            // of the critical point; the interval is (a, a') with
            // f^s(a') = a' mirror or f^s-invariant endpoints.
            let d = map.iterate_derivative(a, o.period);
            if d >= Real::zero(prec) {
                continue;
            }
            // Mirror endpoint: the other preimage of f^s(a) = a across c.
            let side = (a - c).signum_i();
            if side == 0 {
                continue;
            }
            let reach = (a - c).abs();
            let lo_probe = c - &reach * 2.5;
            let hi_probe = c + &reach * 2.5;
            let (lo_br, hi_br) = if side > 0 {
                (lo_probe.clone(), c.clone())
            } else {
                (c.clone(), hi_probe.clone())
            };
            let g = |x: &Real| map.iterate(x, o.period) - a;
            let tol = prec.eps() * 64.0 * a.abs().max(&Real::one(prec));
            let mirror = bisect(g, &lo_br, &hi_br, &tol)?;
            let (lo, hi) = if side > 0 {
                (mirror.clone(), a.clone())
            } else {
                (a.clone(), mirror.clone())
            };
            if !(lo < *c && *c < hi) {
                continue;
            }
            // Verify K = (lo, hi) is periodic: f^s(K) ⊂ K and the interiors
            // of K, ..., f^{s-1}(K) are disjoint.
            if !verify_periodic_interval(map, &RInterval::new(lo.clone(), hi.clone()), o.period) {
                continue;
            }
            let width = &hi - &lo;
            if best.as_ref().map_or(true, |(_, _, w)| width < *w) {
                best = Some((lo, hi, width));
            }
        }
    }
    best.map(|(lo, hi, _)| (lo, hi))
}

/// f^s(K) ⊂ K, f^s(∂K) ⊂ ∂K within tolerance, interiors of the orbit of K
/// pairwise disjoint.
pub fn verify_periodic_interval(map: &MapSpec, k: &RInterval, s: usize) -> bool {
    if s < 2 {
        return false;
    }
    let tol = ident_tol(map.prec, &k.b.abs().max(&k.a.abs())) * 1e4;
    let fa = map.iterate(&k.a, s);
    let fb = map.iterate(&k.b, s);
    let on_bd = |x: &Real| (x - &k.a).abs() <= tol || (x - &k.b).abs() <= tol;
    if !on_bd(&fa) || !on_bd(&fb) {
        return false;
    }
    // Image of K under f^s stays inside (sampled).
    for i in 1..8 {
        let x = &k.a + k.len() * (i as f64 / 8.0);
        let y = map.iterate(&x, s);
        if y < &k.a - &tol || y > &k.b + &tol {
            return false;
        }
    }
    // Disjoint interiors along the cycle.
    let mut images: Vec<RInterval> = vec![k.clone()];
    let mut cur = k.clone();
    for _ in 1..s {
        cur = image_interval(map, &cur);
        images.push(cur.clone());
    }
    for i in 0..images.len() {
        for j in (i + 1)..images.len() {
            if images[i].intersects(&images[j]) {
                return false;
            }
        }
    }
    true
}

/// Image f(I) as an interval: max/min over endpoints and interior
/// critical points. The hull is inflated to a few units of roundoff when
/// the image degenerates (folding of a tiny interval across a critical
/// point), so iterated images never collapse.
pub fn image_interval(map: &MapSpec, i: &RInterval) -> RInterval {
    let mut vals = vec![map.f(&i.a), map.f(&i.b)];
    for c in map.critical_locations() {
        if i.contains(&c) {
            vals.push(map.f(&c));
        }
    }
    let mut lo = vals[0].clone();
    let mut hi = vals[0].clone();
    for v in &vals[1..] {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let floor = map.prec.eps() * 4.0 * lo.abs().max(&Real::one(map.prec));
    if &hi - &lo <= floor {
        return RInterval::new(&lo - &floor, hi + floor);
    }
    RInterval::new(lo, hi)
}

// ---------------------------------------------------------------------------
// Puzzle pieces
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct PuzzlePiece {
    pub interval: RInterval,
    pub depth: usize,
    /// Branch itinerary: partition component index of f^i(x), i < depth.
    pub address: Vec<u16>,
    /// Component of M∖Z the piece eventually maps onto.
    pub target_component: u16,
}

/// Cache of computed pieces; checking the nested-or-disjoint invariant over
/// everything ever computed is the pullback-lamination test.
#[derive(Default)]
pub struct PieceCache {
    pieces: RefCell<Vec<PuzzlePiece>>,
}

impl PieceCache {
    pub fn new() -> PieceCache {
        Default::default()
    }

    pub fn insert(&self, piece: &PuzzlePiece) {
        self.pieces.borrow_mut().push(piece.clone());
    }

    pub fn len(&self) -> usize {
        self.pieces.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Count nested-or-disjoint violations over all cached pieces.
    /// Sort-and-stack sweep; endpoint tolerance aware.
    pub fn lamination_violations(&self) -> usize {
        let pieces = self.pieces.borrow();
        let mut idx: Vec<usize> = (0..pieces.len()).collect();
        idx.sort_by(|&i, &j| {
            let (a, b) = (&pieces[i].interval, &pieces[j].interval);
            a.a.partial_cmp(&b.a)
                .unwrap()
                .then(b.b.partial_cmp(&a.b).unwrap())
        });
        let mut stack: Vec<usize> = Vec::new();
        let mut violations = 0;
        for &i in &idx {
            let cur = &pieces[i].interval;
            while let Some(&top) = stack.last() {
                if pieces[top].interval.intersects(cur) {
                    break;
                }
                stack.pop();
            }
            if let Some(&top) = stack.last() {
                if pieces[top].interval.laminate(cur) == Lamination::Crossing {
                    violations += 1;
                }
            }
            stack.push(i);
        }
        violations
    }
}

/// The depth-n puzzle piece containing x: pull the depth-0 component back
/// along the orbit of x, branch by branch. Endpoints are monotone bisection
/// roots; pieces may span critical points when the pullback is not
/// diffeomorphic.
pub fn puzzle_piece(
    map: &MapSpec,
    z: &AdmissibleSet,
    n: usize,
    x: &Real,
    depth_cap: usize,
) -> Result<PuzzlePiece, PuzzleError> {
    if n > depth_cap {
        return Err(PuzzleError::DepthOverflow(n, depth_cap));
    }
    let comps = z.components(map);
    // Itinerary of x through depth n; cut-set hits are errors.
    let mut address = Vec::with_capacity(n + 1);
    let mut orbit = Vec::with_capacity(n + 1);
    let mut y = x.to_prec(map.prec);
    for step in 0..=n {
        let yr = map.reduce(&y);
        let ci = z
            .component_of(map, &yr)
            .ok_or(PuzzleError::BoundaryPoint(x.to_f64(), step))?;
        address.push(ci as u16);
        orbit.push(yr);
        y = map.f(&y);
    }
    let target_component = *address.last().unwrap();
    // Pull back the final component along the orbit.
    let mut piece = comps[target_component as usize].clone();
    for j in (0..n).rev() {
        piece = pullback_component(map, &piece, &orbit[j])?;
    }
    if n > 0 {
        let dom = map.interval();
        let mut cuts = z.points.clone();
        cuts.push(dom.a);
        cuts.push(dom.b);
        piece = RInterval::new(
            refine_lattice_endpoint(map, &cuts, &piece.a, n),
            refine_lattice_endpoint(map, &cuts, &piece.b, n),
        );
    }
    address.truncate(n);
    Ok(PuzzlePiece {
        interval: piece,
        depth: n,
        address,
        target_component,
    })
}

/// Re-solve f^k(y) = cut directly for an approximate lattice endpoint.
/// Step-by-step pullbacks accumulate roundoff that near-critical branches
/// amplify; this pins endpoints back to identification tolerance.
fn refine_lattice_endpoint(map: &MapSpec, cuts: &[Real], y: &Real, max_k: usize) -> Real {
    let prec = map.prec;
    let scale = y.abs().max(&Real::one(prec));
    let coarse = &scale * 1e-5;
    let mut img = y.clone();
    for k in 0..=max_k {
        if k > 0 {
            img = map.reduce(&map.f(&img));
        }
        let near = cuts.iter().find(|z| (&img - *z).abs() <= coarse);
        if let (Some(z), true) = (near, k > 0) {
            let g = |t: &Real| map.iterate(t, k) - z;
            let dg = |t: &Real| map.iterate_derivative(t, k);
            let tol = prec.eps() * 4.0 * &scale;
            let mut r = &scale * 1e-12;
            for _ in 0..24 {
                let (lo, hi) = (y - &r, y + &r);
                if let Some(root) = newton_bisect(&g, &dg, &lo, &hi, &tol) {
                    return root;
                }
                r = r * 8.0;
                if r > &coarse * 16.0 {
                    break;
                }
            }
            return y.clone();
        }
    }
    y.clone()
}

/// Comp_x f^{-1}(Q): expand from x across monotone branches until f leaves Q.
pub fn pullback_component(
    map: &MapSpec,
    q: &RInterval,
    x: &Real,
) -> Result<RInterval, PuzzleError> {
    pullback_component_impl(map, q, x, false)
}

/// Newton-accelerated variant for deep pullback chains; bracketing is
/// preserved (Newton proposals outside the bracket fall back to midpoints).
pub fn pullback_component_fast(
    map: &MapSpec,
    q: &RInterval,
    x: &Real,
) -> Result<RInterval, PuzzleError> {
    pullback_component_impl(map, q, x, true)
}

fn pullback_component_impl(
    map: &MapSpec,
    q: &RInterval,
    x: &Real,
    use_newton: bool,
) -> Result<RInterval, PuzzleError> {
    let prec = map.prec;
    let fx = map.reduce(&map.f(x));
    if !q.contains(&fx) && !q.on_boundary(&fx) {
        // Long chains drift; a near-miss relative to the target width is
        // a boundary case, not a broken chain.
        let miss = (&fx - &q.a).abs().min(&(&fx - &q.b).abs());
        if miss > q.len() * 1e-7 {
            return Err(PuzzleError::ChainBroken(0));
        }
    }
    let cuts = map.branch_points();
    let tol = prec.eps() * 32.0 * q.b.abs().max(&q.a.abs()).max(&Real::one(prec));

    let solve_side = |dir: i32| -> Real {
        // Walk branches in direction dir from x.
        let mut lo = x.clone();
        loop {
            // Branch endpoint in direction dir.
            let next_cut = if dir > 0 {
                cuts.iter().find(|c| **c > &lo + &tol).cloned()
            } else {
                cuts.iter().rev().find(|c| **c < &lo - &tol).cloned()
            };
            let edge = match next_cut {
                Some(c) => c,
                None => return if dir > 0 { cuts.last().unwrap().clone() } else { cuts[0].clone() },
            };
            let f_edge = map.reduce(&map.f(&edge));
            if q.contains(&f_edge) {
                // The whole branch maps inside; cross into the next branch
                // unless the edge is a domain endpoint.
                let at_domain_end = edge == *cuts.last().unwrap() || edge == cuts[0];
                if at_domain_end {
                    return edge;
                }
                lo = edge;
                continue;
            }
            // f(edge) is outside or on ∂Q: the endpoint is in this branch.
            // f is monotone on [lo, edge]; find the crossing of the
            // appropriate boundary of Q.
            let f_lo = map.reduce(&map.f(&lo));
            let target = if f_edge <= q.a {
                q.a.clone()
            } else {
                q.b.clone()
            };
            let g = |t: &Real| map.reduce(&map.f(t)) - &target;
            let dg = |t: &Real| map.df(t);
            let (bl, bh) = if dir > 0 {
                (lo.clone(), edge.clone())
            } else {
                (edge.clone(), lo.clone())
            };
            let root = if use_newton {
                newton_bisect(g, dg, &bl, &bh, &tol)
            } else {
                bisect(g, &bl, &bh, &tol)
            };
            match root {
                Some(r) => return r,
                None => {
                    // f(lo) may already be within tolerance of the target
                    // (piece endpoint on the partition lattice).
                    if (&f_lo - &target).abs() <= &tol * 1e3 {
                        return lo;
                    }
                    return edge;
                }
            }
        }
    };

    let a = solve_side(-1);
    let b = solve_side(1);
    if b <= a {
        return Err(PuzzleError::ChainBroken(0));
    }
    Ok(RInterval::new(a, b))
}

// ---------------------------------------------------------------------------
// First entry / return / landing
// ---------------------------------------------------------------------------

/// A union of intervals treated as a nice set.
#[derive(Clone, Debug, Serialize)]
pub struct NiceSet {
    pub components: Vec<RInterval>,
}

impl NiceSet {
    pub fn single(i: RInterval) -> NiceSet {
        NiceSet {
            components: vec![i],
        }
    }

    pub fn component_containing(&self, x: &Real) -> Option<usize> {
        self.components.iter().position(|c| c.contains(x))
    }

    pub fn contains(&self, x: &Real) -> bool {
        self.component_containing(x).is_some()
    }

    pub fn total_length(&self) -> Real {
        let mut s = self.components[0].len();
        for c in &self.components[1..] {
            s = s + c.len();
        }
        s
    }
}

/// True when no boundary orbit re-enters the interior within the horizon.
/// Exact when ∂P lies in the preimage lattice of an admissible set, which
/// is the standard construction path. Boundary points are typically
/// preperiodic to repelling orbits, so roundoff drift is killed by
/// re-anchoring orbit points that come back onto the boundary lattice.
pub fn is_nice(map: &MapSpec, p: &NiceSet, horizon: usize) -> bool {
    let prec = map.prec;
    let dom = map.interval();
    let scale = dom.a.abs().max(&dom.b.abs());
    let snap = ident_tol(prec, &scale) * 256.0;
    let mut lattice: Vec<Real> = Vec::with_capacity(2 * p.components.len());
    for c in &p.components {
        lattice.push(c.a.clone());
        lattice.push(c.b.clone());
    }
    for e in &lattice {
        let mut y = e.clone();
        for _ in 0..horizon {
            y = map.reduce(&map.f(&y));
            if let Some(b) = lattice.iter().find(|b| (&y - *b).abs() <= snap) {
                y = b.clone();
                continue;
            }
            let strictly_inside = p
                .components
                .iter()
                .any(|c| y > &c.a + &snap && y < &c.b - &snap);
            if strictly_inside {
                return false;
            }
        }
    }
    true
}

#[derive(Clone, Debug)]
pub struct EntryResult {
    pub time: usize,
    pub domain: RInterval,
    /// Index of the component of P that the orbit enters.
    pub component: usize,
}

/// First entry: smallest k > 0 with f^k(x) ∈ P, together with
/// Comp_x f^{-k}(P). With `landing` set, a point already in P returns
/// (0, its component) instead.
pub fn first_entry(
    map: &MapSpec,
    p: &NiceSet,
    x: &Real,
    horizon: usize,
    landing: bool,
) -> Result<EntryResult, PuzzleError> {
    if landing {
        if let Some(ci) = p.component_containing(x) {
            return Ok(EntryResult {
                time: 0,
                domain: p.components[ci].clone(),
                component: ci,
            });
        }
    }
    let mut orbit = vec![map.reduce(&x.to_prec(map.prec))];
    let mut k = 0;
    let mut entered = None;
    for t in 1..=horizon {
        let y = map.reduce(&map.f(orbit.last().unwrap()));
        if let Some(ci) = p.component_containing(&y) {
            k = t;
            entered = Some(ci);
            orbit.push(y);
            break;
        }
        orbit.push(y);
    }
    let component = entered.ok_or_else(|| PuzzleError::NoEntryWithinHorizon(x.to_f64(), horizon))?;
    let mut dom = p.components[component].clone();
    for j in (0..k).rev() {
        dom = pullback_component(map, &dom, &orbit[j])?;
    }
    // Return semantics: when the starting point sits inside a base
    // component that maps entirely into the target (the pullback then
    // contains it), the return domain is that whole component.
    if let Some(home) = p.component_containing(&orbit[0]) {
        if dom.contains_interval(&p.components[home]) {
            dom = p.components[home].clone();
        }
    }
    Ok(EntryResult {
        time: k,
        domain: dom,
        component,
    })
}

// ---------------------------------------------------------------------------
// Chains
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct Chain {
    /// G_0, ..., G_s with G_s the target.
    pub pieces: Vec<RInterval>,
    /// Indices j < s where G_j contains a critical point.
    pub critical_steps: Vec<usize>,
    /// Number of critical intersections.
    pub order: usize,
    /// Max over points of the number of chain intervals containing it.
    pub intersection_multiplicity: usize,
    pub max_length: f64,
}

/// The chain {G_j} associated to the pullback of `target` along the orbit
/// of J: G_j = Comp_{f^j(J)} f^{-(s-j)}(G_s).
pub fn chain_of(
    map: &MapSpec,
    j0: &RInterval,
    s: usize,
    target: &RInterval,
) -> Result<Chain, PuzzleError> {
    // Orbit of the marked point (the midpoint of J).
    let x = j0.mid();
    let orbit = map.orbit(&x, s);
    let end = map.reduce(&orbit[s]);
    if !target.contains(&end) && !target.on_boundary(&end) {
        return Err(PuzzleError::ChainBroken(s));
    }
    let mut pieces = vec![RInterval::new(Real::zero(map.prec), Real::one(map.prec)); s + 1];
    pieces[s] = target.clone();
    for j in (0..s).rev() {
        pieces[j] = pullback_component(map, &pieces[j + 1], &map.reduce(&orbit[j]))?;
    }
    Ok(finish_chain(map, pieces))
}

pub(crate) fn finish_chain(map: &MapSpec, pieces: Vec<RInterval>) -> Chain {
    let s = pieces.len() - 1;
    let crits = map.critical_locations();
    let mut critical_steps = Vec::new();
    for (j, g) in pieces.iter().enumerate().take(s) {
        if crits.iter().any(|c| g.contains(c)) {
            critical_steps.push(j);
        }
    }
    // Intersection multiplicity by endpoint sweep.
    let mut events: Vec<(f64, i32)> = Vec::new();
    for g in &pieces {
        events.push((g.a.to_f64(), 1));
        events.push((g.b.to_f64(), -1));
    }
    events.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut depth = 0;
    let mut multiplicity = 0;
    for (_, d) in events {
        depth += d;
        multiplicity = multiplicity.max(depth);
    }
    let max_length = pieces
        .iter()
        .map(|g| g.len().to_f64())
        .fold(0.0, f64::max);
    Chain {
        order: critical_steps.len(),
        critical_steps,
        intersection_multiplicity: multiplicity as usize,
        max_length,
        pieces,
    }
}

// ---------------------------------------------------------------------------
// Itineraries
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Itinerary {
    pub symbols: Vec<u16>,
    /// Set when the orbit hit the partition boundary before reaching depth.
    pub truncated: bool,
}

/// Symbol j at step i when f^i(x) lies in partition component j.
pub fn itinerary(map: &MapSpec, z: &AdmissibleSet, x: &Real, n: usize) -> Itinerary {
    let mut symbols = Vec::with_capacity(n);
    let mut y = x.to_prec(map.prec);
    for _ in 0..n {
        let yr = map.reduce(&y);
        match z.component_of(map, &yr) {
            Some(ci) => symbols.push(ci as u16),
            None => {
                return Itinerary {
                    symbols,
                    truncated: true,
                }
            }
        }
        y = map.f(&y);
    }
    Itinerary {
        symbols,
        truncated: false,
    }
}

// ---------------------------------------------------------------------------
// Return structure over a nice set
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct ReturnDomain {
    pub interval: RInterval,
    pub time: usize,
    /// Return domain (inside the base) or landing domain (outside).
    pub inside: bool,
    /// Index of the base component the domain maps onto.
    pub target: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReturnStructure {
    pub base: NiceSet,
    pub domains: Vec<ReturnDomain>,
}

/// Entry domains of the points in `seeds` to the nice set P: the components
/// of Dom(P) met by the seed orbits, deduplicated.
pub fn return_structure(
    map: &MapSpec,
    p: &NiceSet,
    seeds: &[Real],
    horizon: usize,
) -> ReturnStructure {
    let mut domains: Vec<ReturnDomain> = Vec::new();
    for seed in seeds {
        let mut y = map.reduce(&seed.to_prec(map.prec));
        for _ in 0..horizon {
            if let Ok(entry) = first_entry(map, p, &y, horizon, false) {
                let known = domains
                    .iter()
                    .any(|d| d.interval.approx_eq(&entry.domain));
                if !known {
                    domains.push(ReturnDomain {
                        inside: p.contains(&entry.domain.mid()),
                        interval: entry.domain,
                        time: entry.time,
                        target: entry.component,
                    });
                }
            }
            y = map.reduce(&map.f(&y));
        }
    }
    domains.sort_by(|a, b| a.interval.a.partial_cmp(&b.interval.a).unwrap());
    ReturnStructure {
        base: p.clone(),
        domains,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::Precision;

    fn chebyshev() -> MapSpec {
        MapSpec::quadratic(-2.0, Precision::DOUBLE)
    }

    fn cheb_partition(map: &MapSpec) -> AdmissibleSet {
        // Z = {−1}: f(−1) = −1. The full starting partition also contains 2,
        // but 2 lies on the post-critical set; the generating subset is {−1}.
        AdmissibleSet::new(
            map,
            vec![(Real::from(-1.0), PointProvenance::Fixed)],
        )
        .unwrap()
    }

    #[test]
    fn starting_partition_chebyshev() {
        let m = chebyshev();
        let part = build_starting_partition(&m, 4, 2000).unwrap();
        let pts: Vec<f64> = part.set.points.iter().map(|p| p.to_f64()).collect();
        assert!(pts.iter().any(|p| (p + 1.0).abs() < 1e-9), "contains -1: {pts:?}");
        assert!(pts.iter().any(|p| (p - 2.0).abs() < 1e-9), "contains 2: {pts:?}");
    }

    #[test]
    fn starting_partition_basilica_contains_basin_boundary() {
        let m = MapSpec::quadratic(-1.0, Precision::DOUBLE);
        let part = build_starting_partition(&m, 4, 2000).unwrap();
        let alpha = (1.0 - 5f64.sqrt()) / 2.0;
        let pts: Vec<f64> = part.set.points.iter().map(|p| p.to_f64()).collect();
        assert!(
            pts.iter().any(|p| (p - alpha).abs() < 1e-6),
            "basin boundary {alpha} in {pts:?}"
        );
        assert!(
            pts.iter().any(|p| (p + alpha).abs() < 1e-6),
            "mirror of the orientation-reversing fixed point in {pts:?}"
        );
    }

    #[test]
    fn starting_partition_parabolic() {
        let m = MapSpec::quadratic(0.25, Precision::DOUBLE);
        let part = build_starting_partition(&m, 2, 4000).unwrap();
        let pts: Vec<f64> = part.set.points.iter().map(|p| p.to_f64()).collect();
        assert!(pts.iter().any(|p| (p - 0.5).abs() < 1e-4), "{pts:?}");
    }

    #[test]
    fn depth_one_pieces_of_chebyshev() {
        let m = chebyshev();
        let z = cheb_partition(&m);
        let comps = z.components(&m);
        assert_eq!(comps.len(), 2);
        // Y_1(0.5): f^{-1}((-2,-1)) around 0.5 is (0,1).
        let piece = puzzle_piece(&m, &z, 1, &Real::from(0.5), 60).unwrap();
        assert!((piece.interval.a.to_f64() - 0.0).abs() < 1e-9);
        assert!((piece.interval.b.to_f64() - 1.0).abs() < 1e-9);
        // Depth 0 piece is the component itself.
        let p0 = puzzle_piece(&m, &z, 0, &Real::from(0.5), 60).unwrap();
        assert!((p0.interval.a.to_f64() + 1.0).abs() < 1e-12);
        assert!((p0.interval.b.to_f64() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn piece_count_matches_preimage_enumeration() {
        // Oracle: the depth-n cut lattice of the Chebyshev map is
        // ∪_{k≤n} f^{-k}({−1, −2, 2}) ∩ (−2, 2), computed exactly from the
        // closed-form preimages x = ±√(y + 2). Every gap between adjacent
        // cuts must come back as exactly that puzzle piece.
        let m = chebyshev();
        let z = cheb_partition(&m);
        let n = 5;
        let mut cuts: Vec<f64> = vec![-1.0];
        let mut frontier: Vec<f64> = vec![-1.0, -2.0, 2.0];
        for _ in 0..n {
            let mut next = Vec::new();
            for y in frontier {
                let s = (y + 2.0).sqrt();
                next.push(s);
                next.push(-s);
            }
            next.sort_by(|a, b| a.partial_cmp(b).unwrap());
            next.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            for x in &next {
                if x.abs() < 2.0 - 1e-12 {
                    cuts.push(*x);
                }
            }
            frontier = next;
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        let mut walls = vec![-2.0];
        walls.extend(cuts.iter().copied());
        walls.push(2.0);

        let cache = PieceCache::new();
        for w in walls.windows(2) {
            let mid = Real::from((w[0] + w[1]) / 2.0);
            let piece = puzzle_piece(&m, &z, n, &mid, 60).unwrap();
            assert!(
                (piece.interval.a.to_f64() - w[0]).abs() < 1e-8
                    && (piece.interval.b.to_f64() - w[1]).abs() < 1e-8,
                "piece ({}, {}) vs oracle gap ({}, {})",
                piece.interval.a.to_f64(),
                piece.interval.b.to_f64(),
                w[0],
                w[1]
            );
            cache.insert(&piece);
        }
        assert_eq!(cache.len(), walls.len() - 1);
        assert_eq!(cache.lamination_violations(), 0);
    }

    #[test]
    fn boundary_point_rejected() {
        let m = chebyshev();
        let z = cheb_partition(&m);
        // Orbit of 0 hits the boundary lattice: f(0) = −2 is an endpoint...
        // −2 is the domain endpoint, not in Z; but f²(0) = 2 which is an
        // endpoint of the top component. Use the point −1 itself.
        assert!(matches!(
            puzzle_piece(&m, &z, 3, &Real::from(-1.0), 60),
            Err(PuzzleError::BoundaryPoint(_, 0))
        ));
    }

    #[test]
    fn itinerary_examples() {
        let m = chebyshev();
        let z = cheb_partition(&m);
        // A point near the repelling fixed point −1 inside (−2,−1):
        let it = itinerary(&m, &z, &Real::from(-1.2), 4);
        assert!(!it.truncated);
        assert_eq!(it.symbols[0], 0);
        // With Z = {−1, 2} the orbit of 0 hits the cut point 2 at step 2.
        let z2 = AdmissibleSet::new(
            &m,
            vec![
                (Real::from(-1.0), PointProvenance::Fixed),
                (Real::from(2.0), PointProvenance::Fixed),
            ],
        )
        .unwrap();
        let it0 = itinerary(&m, &z2, &Real::from(0.0), 6);
        assert!(it0.truncated);
        assert_eq!(it0.symbols.len(), 2, "hits the boundary at step 2");
        // Itineraries of the two depth-1 subpieces of a component differ
        // at index 1.
        let ia = itinerary(&m, &z, &Real::from(0.5), 2);
        let ib = itinerary(&m, &z, &Real::from(1.5), 2);
        assert_eq!(ia.symbols[0], ib.symbols[0]);
        assert_ne!(ia.symbols[1], ib.symbols[1]);
    }

    #[test]
    fn is_nice_examples() {
        let m = chebyshev();
        let z = cheb_partition(&m);
        for comp in z.components(&m) {
            assert!(is_nice(&m, &NiceSet::single(comp), 500));
        }
        // (−0.9, 0.9): f(±0.9) = −1.19 ∈ interior → not nice.
        assert!(!is_nice(
            &m,
            &NiceSet::single(RInterval::from_f64(-0.9, 0.9)),
            10
        ));
    }

    #[test]
    fn first_entry_hat_variant_and_horizon() {
        let m = chebyshev();
        let z = cheb_partition(&m);
        let comp = z.components(&m)[0].clone(); // (−2, −1)
        let nice = NiceSet::single(comp.clone());
        // Hat variant: x ∈ P returns (0, P).
        let r = first_entry(&m, &nice, &Real::from(-1.5), 100, true).unwrap();
        assert_eq!(r.time, 0);
        assert!(r.domain.approx_eq(&comp));
        // Orbit of 0 is eventually fixed at 2, never enters a small piece
        // around −1 from outside.
        let small = NiceSet::single(RInterval::from_f64(-1.2, -0.8));
        assert!(matches!(
            first_entry(&m, &small, &Real::from(0.0), 200, false),
            Err(PuzzleError::NoEntryWithinHorizon(_, _))
        ));
    }

    #[test]
    fn first_entry_domain_coherence() {
        // Logistic map: all sampled points of the entry domain share the
        // entry time and land inside.
        let m = MapSpec::logistic(4.0, Precision::DOUBLE);
        let part = build_starting_partition(&m, 2, 2000).unwrap();
        // The critical orbit of logistic-4 is finite (0.5 → 1 → 0); the
        // generating subset drops the fixed point 0 which lies on it.
        let z = part.set.generating_subset(&m, 1e-6).unwrap();
        assert!(z.points.iter().all(|p| p.to_f64() > 1e-6));
        let crit = Real::from(0.5);
        let p3 = puzzle_piece(&m, &z, 3, &crit, 60).unwrap();
        let nice = NiceSet::single(p3.interval.clone());
        let x = Real::from(0.3);
        let entry = first_entry(&m, &nice, &x, 10_000, false).unwrap();
        for i in 1..20 {
            let y = &entry.domain.a + entry.domain.len() * (i as f64 / 20.0);
            let img = m.iterate(&y, entry.time);
            assert!(
                p3.interval.contains(&img) || p3.interval.on_boundary(&img),
                "sampled point leaves the target"
            );
        }
        // Interior samples stay out of P before the entry time.
        let mid = entry.domain.mid();
        for t in 1..entry.time {
            assert!(!nice.contains(&m.iterate(&mid, t)));
        }
    }

    #[test]
    fn chain_basics() {
        let m = chebyshev();
        let z = cheb_partition(&m);
        let comp = z.components(&m)[1].clone();
        // s = 0: chain is [J], order 0.
        let ch = chain_of(&m, &comp, 0, &comp).unwrap();
        assert_eq!(ch.pieces.len(), 1);
        assert_eq!(ch.order, 0);
        // Unicritical pullback: depth-1 piece around 0 onto its image.
        let p1 = puzzle_piece(&m, &z, 1, &Real::from(0.5), 60).unwrap();
        // (0,1) maps onto (−2,−1) in one step through no critical point.
        let ch1 = chain_of(&m, &p1.interval, 1, &z.components(&m)[0]).unwrap();
        assert_eq!(ch1.order, 0);
        // Unicritical pullback: for the Chebyshev map the critical value
        // lands on the partition boundary, so use x² − 1, where the piece
        // around the critical point is (α, −α), α the orientation-reversing
        // fixed point, and its image component contains f(0) = −1.
        let mb = MapSpec::quadratic(-1.0, Precision::DOUBLE);
        let part = build_starting_partition(&mb, 2, 2000).unwrap();
        let alpha = part
            .set
            .points
            .iter()
            .find(|p| (p.to_f64() - (1.0 - 5f64.sqrt()) / 2.0).abs() < 1e-6)
            .unwrap()
            .clone();
        let comps = part.set.components(&mb);
        let central = comps
            .iter()
            .find(|c| c.contains(&Real::from(0.0)))
            .unwrap()
            .clone();
        assert!((central.a.to_f64() - alpha.to_f64()).abs() < 1e-6);
        let vc = comps
            .iter()
            .find(|c| c.contains(&Real::from(-1.0)))
            .unwrap()
            .clone();
        let chc = chain_of(&mb, &central, 1, &vc).unwrap();
        assert_eq!(chc.order, 1, "unicritical pullback has order 1");
        assert_eq!(chc.critical_steps, vec![0]);
    }

    #[test]
    fn address_matches_itinerary() {
        let m = chebyshev();
        let z = cheb_partition(&m);
        let x = Real::from(0.37);
        let n = 8;
        let piece = puzzle_piece(&m, &z, n, &x, 60).unwrap();
        let it = itinerary(&m, &z, &x, n);
        assert!(!it.truncated);
        assert_eq!(piece.address, it.symbols);
    }

    #[test]
    fn restrict_drops_dependents() {
        let m = chebyshev();
        let part = build_starting_partition(&m, 2, 2000).unwrap();
        // Keep only −1 (and whatever maps into it: nothing else does).
        let idx: Vec<usize> = part
            .set
            .points
            .iter()
            .enumerate()
            .filter(|(_, p)| (p.to_f64() + 1.0).abs() < 1e-9)
            .map(|(i, _)| i)
            .collect();
        let small = part.set.restrict(&m, &idx).unwrap();
        assert_eq!(small.points.len(), 1);
    }
}
