//! Principal nests, central cascades, renormalization detection, the good
//! nest, and recurrence classification with the Omega decomposition.

use crate::interval::RInterval;
use crate::map::MapSpec;
use crate::numerics::bisect;
use crate::orbit::{converges_to, find_periodic_orbits, partial_order, PeriodicOrbit};
use crate::puzzle::{
    first_entry, image_interval, is_nice, verify_periodic_interval, NiceSet, PuzzleError,
};
use crate::real::Real;
use serde::Serialize;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum NestError {
    #[error("orbit does not return to level {0} within the horizon")]
    NoReturn(usize),
    #[error("nest depth {0} exceeds cap {1}")]
    DepthOverflow(usize, usize),
    #[error("central cascade too short: length {0}")]
    CascadeTooShort(usize),
    #[error("base interval is not nice")]
    NotNice,
    #[error(transparent)]
    Puzzle(#[from] PuzzleError),
}

#[derive(Clone, Debug, Serialize)]
pub struct NestRecord {
    pub level: usize,
    pub piece: RInterval,
    /// Return time of this piece into the previous level (0 at the top).
    pub return_time: usize,
    pub cascade_id: Option<usize>,
    /// The return from this level is central: the next return time repeats.
    pub central: bool,
}

#[derive(Clone, Debug, Serialize)]
pub enum NestTermination {
    /// The orbit stopped returning (non-recurrent or attracted).
    NoReturn { at_level: usize },
    /// Piece widths froze: the nest reached a periodic interval.
    Frozen { at_level: usize },
    /// Requested depth reached.
    Depth,
}

#[derive(Clone, Debug, Serialize)]
pub struct PrincipalNest {
    pub levels: Vec<NestRecord>,
    pub termination: NestTermination,
    #[serde(skip)]
    pub critical_point: Real,
}

/// The principal nest at c starting from a nice interval: each level is
/// the return domain of c to the previous level.
pub fn principal_nest(
    map: &MapSpec,
    i0: &RInterval,
    c: &Real,
    depth: usize,
    horizon: usize,
) -> Result<PrincipalNest, NestError> {
    if !is_nice(map, &NiceSet::single(i0.clone()), 400) {
        return Err(NestError::NotNice);
    }
    if !i0.contains(c) {
        return Err(NestError::NotNice);
    }
    let mut levels = vec![NestRecord {
        level: 0,
        piece: i0.clone(),
        return_time: 0,
        cascade_id: None,
        central: false,
    }];
    let mut termination = NestTermination::Depth;
    for level in 1..=depth {
        let base = NiceSet::single(levels[level - 1].piece.clone());
        match first_entry(map, &base, c, horizon, false) {
            Ok(entry) => {
                let frozen = entry.domain.approx_eq(&levels[level - 1].piece);
                levels.push(NestRecord {
                    level,
                    piece: entry.domain,
                    return_time: entry.time,
                    cascade_id: None,
                    central: false,
                });
                if frozen {
                    termination = NestTermination::Frozen { at_level: level };
                    break;
                }
            }
            Err(PuzzleError::NoEntryWithinHorizon(_, _)) => {
                termination = NestTermination::NoReturn { at_level: level };
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    // Central flags: the return at level i is central exactly when the
    // next return time repeats.
    for i in 1..levels.len().saturating_sub(1) {
        levels[i].central = levels[i + 1].return_time == levels[i].return_time;
    }
    Ok(PrincipalNest {
        levels,
        termination,
        critical_point: c.clone(),
    })
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReturnType {
    High,
    Low,
    Monotone,
}

#[derive(Clone, Debug, Serialize)]
pub struct CascadeRecord {
    /// Nest level of the cascade top Z^0.
    pub start_level: usize,
    /// Length N: pieces Z^0 ⊃ ... ⊃ Z^{N+1} share one return time.
    pub length: usize,
    pub return_time: usize,
    pub pieces: Vec<RInterval>,
    pub return_type: ReturnType,
    /// Orientation-preserving fixed points of the return map inside Z^1.
    pub fixed_points: Vec<f64>,
    /// Deepest cascade piece still containing the critical value of the
    /// return map, per critical point inside Z^1.
    pub escape_levels: Vec<(usize, usize)>,
    /// The return time of Z^0 into its parent is strictly smaller.
    pub maximal: bool,
}

/// Group maximal runs of equal return times into central cascades and
/// classify each one.
pub fn detect_cascades(map: &MapSpec, nest: &PrincipalNest) -> Vec<CascadeRecord> {
    let times: Vec<usize> = nest.levels.iter().map(|l| l.return_time).collect();
    let mut cascades = Vec::new();
    let mut i = 1;
    while i < times.len() {
        let mut j = i;
        while j + 1 < times.len() && times[j + 1] == times[i] {
            j += 1;
        }
        let run = j - i + 1;
        if run >= 2 {
            // Pieces Z^0 .. Z^{N+1} are nest levels (i-1) .. j.
            let pieces: Vec<RInterval> = nest.levels[i - 1..=j]
                .iter()
                .map(|l| l.piece.clone())
                .collect();
            cascades.push(classify_cascade(
                map,
                &nest.critical_point,
                i - 1,
                run - 1,
                times[i],
                pieces,
                times[i - 1] < times[i],
            ));
        }
        i = j + 1;
    }
    cascades
}

fn classify_cascade(
    map: &MapSpec,
    c0: &Real,
    start_level: usize,
    length: usize,
    return_time: usize,
    pieces: Vec<RInterval>,
    maximal: bool,
) -> CascadeRecord {
    let z1 = &pieces[1];
    let crits = map.critical_locations();
    let inside_crits: Vec<(usize, Real)> = crits
        .iter()
        .enumerate()
        .filter(|(_, c)| z1.contains(c))
        .map(|(i, c)| (i, c.clone()))
        .collect();
    // Derivative sign changes of the return map across Z^1 witness even
    // turning points; odd critical points inside leave it monotone.
    let samples = 64;
    let mut even_turning = false;
    let mut last_sign = 0;
    for k in 0..=samples {
        let x = &z1.a + z1.len() * (k as f64 / samples as f64);
        let s = map.iterate_derivative(&x, return_time).signum_i();
        if s != 0 {
            if last_sign != 0 && s != last_sign {
                even_turning = true;
            }
            last_sign = s;
        }
    }
    let return_type = if !even_turning {
        ReturnType::Monotone
    } else {
        let image = iterate_interval(map, z1, return_time);
        if image.contains(c0) || image.on_boundary(c0) {
            ReturnType::High
        } else {
            ReturnType::Low
        }
    };
    // Orientation-preserving fixed points of the return map on Z^1.
    let mut fixed_points = Vec::new();
    let g = |x: &Real| map.iterate(x, return_time) - x;
    let grid = 256;
    let mut prev_x = z1.a.clone();
    let mut prev_g = g(&prev_x);
    for k in 1..=grid {
        let x = &z1.a + z1.len() * (k as f64 / grid as f64);
        let gx = g(&x);
        if prev_g.signum_i() != gx.signum_i() {
            if let Some(root) = bisect(&g, &prev_x, &x, &(map.prec.eps() * 64.0)) {
                if map.iterate_derivative(&root, return_time) > Real::zero(map.prec) {
                    fixed_points.push(root.to_f64());
                }
            }
        }
        prev_x = x;
        prev_g = gx;
    }
    // Escape data: per critical point inside Z^1, the deepest piece that
    // still contains its return-map image.
    let mut escape_levels = Vec::new();
    for (ci, c) in inside_crits {
        let v = map.iterate(&c, return_time);
        let mut k = 0;
        for (l, p) in pieces.iter().enumerate() {
            if p.contains(&v) {
                k = l;
            }
        }
        escape_levels.push((ci, k));
    }
    CascadeRecord {
        start_level,
        length,
        return_time,
        pieces,
        return_type,
        fixed_points,
        escape_levels,
        maximal,
    }
}

/// f^n(I) as an interval.
pub fn iterate_interval(map: &MapSpec, i: &RInterval, n: usize) -> RInterval {
    let mut cur = i.clone();
    for _ in 0..n {
        cur = image_interval(map, &cur);
    }
    cur
}

#[derive(Clone, Debug, Serialize)]
pub struct RenormalizationWitness {
    pub period: usize,
    pub interval: RInterval,
    /// Verified: K, ..., f^{s-1}(K) have disjoint interiors, f^s(K) ⊂ K and
    /// f^s(∂K) ⊂ ∂K within tolerance.
    pub verified: bool,
}

/// Detect a terminating interval: every tested return central, nest pieces
/// freezing onto a candidate periodic interval. The frozen piece is grown
/// to the adjacent interval with f^s-invariant boundary before the
/// periodicity check runs.
pub fn is_terminating(
    map: &MapSpec,
    i0: &RInterval,
    c: &Real,
    horizon: usize,
) -> Result<Option<RenormalizationWitness>, NestError> {
    let depth_cap = if map.prec.get() >= 128 { 200 } else { 60 };
    let nest = principal_nest(map, i0, c, depth_cap, horizon)?;
    if nest.levels.len() < 2 {
        return Ok(None);
    }
    let all_central = nest
        .levels
        .iter()
        .skip(2)
        .all(|l| l.return_time == nest.levels[1].return_time);
    if !all_central || !matches!(nest.termination, NestTermination::Frozen { .. }) {
        return Ok(None);
    }
    let s = nest.levels[1].return_time;
    let last = &nest.levels.last().unwrap().piece;
    if let Some(k) = grow_to_periodic_interval(map, last, c, s) {
        return Ok(Some(RenormalizationWitness {
            period: s,
            verified: verify_periodic_interval(map, &k, s),
            interval: k,
        }));
    }
    Ok(Some(RenormalizationWitness {
        period: s,
        interval: last.clone(),
        verified: verify_periodic_interval(map, last, s),
    }))
}

/// Expand a frozen nest piece to the enclosing periodic interval whose
/// boundary is f^s-invariant: an adjacent fixed point of f^s on one side
/// and its preimage mirror on the other.
fn grow_to_periodic_interval(
    map: &MapSpec,
    frozen: &RInterval,
    c: &Real,
    s: usize,
) -> Option<RInterval> {
    let prec = map.prec;
    let dom = map.interval();
    let g = |x: &Real| map.iterate(x, s) - x;
    let tol = prec.eps() * 64.0;
    for side in [1i32, -1] {
        let edge = if side > 0 { &frozen.b } else { &frozen.a };
        let limit = if side > 0 { &dom.b } else { &dom.a };
        let reach = (limit - edge).abs();
        if reach.to_f64() < 1e-12 {
            continue;
        }
        let steps = 400;
        let mut prev = edge.clone();
        let mut prev_g = g(&prev);
        for k in 1..=steps {
            let x = edge + &reach * (side as f64 * k as f64 / steps as f64);
            let gx = g(&x);
            if prev_g.signum_i() != gx.signum_i() {
                let (lo, hi) = if side > 0 {
                    (prev.clone(), x.clone())
                } else {
                    (x.clone(), prev.clone())
                };
                if let Some(p) = bisect(&g, &lo, &hi, &tol) {
                    // Mirror endpoint: the other f^s-preimage of p across c.
                    let h = |y: &Real| map.iterate(y, s) - &p;
                    let (mlo, mhi) = if side > 0 {
                        (dom.a.clone(), c.clone())
                    } else {
                        (c.clone(), dom.b.clone())
                    };
                    if let Some(m) = bisect(&h, &mlo, &mhi, &tol) {
                        let k_int = if side > 0 {
                            RInterval::new(m, p)
                        } else {
                            RInterval::new(p, m)
                        };
                        if k_int.contains_interval(frozen)
                            && verify_periodic_interval(map, &k_int, s)
                        {
                            return Some(k_int);
                        }
                    }
                }
            }
            prev = x;
            prev_g = gx;
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Good nest
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct GoodNestLevel {
    /// Per critical point: the V piece.
    pub v: Vec<RInterval>,
    /// Per critical point: the W piece (return domain into the V union).
    pub w: Vec<RInterval>,
    /// Per critical point: minimal k with F^k(c) in V \ W.
    pub k: Vec<usize>,
    /// Per critical point: minimal l > k with F^l(c) in W.
    pub l: Vec<usize>,
    /// Which critical point's W component the landing hits.
    pub landing_target: Vec<usize>,
    /// Order of the pullback chain defining the next V piece.
    pub chain_order: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GoodNest {
    pub levels: Vec<GoodNestLevel>,
    pub truncated: bool,
}

/// The good nest V^0 ⊃ W^0 ⊃ V^1 ⊃ ... about all critical points, built
/// from minimal escape and landing times.
pub fn good_nest(
    map: &MapSpec,
    v0: &[RInterval],
    depth: usize,
    horizon: usize,
) -> Result<GoodNest, NestError> {
    let crits = map.critical_locations();
    assert_eq!(v0.len(), crits.len(), "one V component per critical point");
    let mut levels: Vec<GoodNestLevel> = Vec::new();
    let mut v: Vec<RInterval> = v0.to_vec();
    let mut truncated = false;
    'outer: for _level in 0..depth {
        let union = NiceSet {
            components: v.clone(),
        };
        let mut w = Vec::with_capacity(crits.len());
        for c in &crits {
            match first_entry(map, &union, c, horizon, false) {
                Ok(e) => w.push(e.domain),
                Err(_) => {
                    truncated = true;
                    break 'outer;
                }
            }
        }
        let mut k_times = Vec::with_capacity(crits.len());
        let mut l_times = Vec::with_capacity(crits.len());
        let mut targets = Vec::with_capacity(crits.len());
        let mut orders = Vec::with_capacity(crits.len());
        let mut v_next = Vec::with_capacity(crits.len());
        for c in &crits {
            // k_c: minimal k > 0 with F^k(c) in some V_{c'} \ W_{c'},
            // then l_c > k_c: minimal entry into some W_{c''}.
            let mut y = c.clone();
            let mut k_c = None;
            let mut l_c = None;
            let mut target = 0usize;
            for t in 1..=horizon {
                y = map.reduce(&map.f(&y));
                let in_v = v.iter().any(|vv| vv.contains(&y));
                let in_w = w.iter().position(|ww| ww.contains(&y));
                if k_c.is_none() {
                    if in_v && in_w.is_none() {
                        k_c = Some(t);
                    }
                } else if let Some(wi) = in_w {
                    l_c = Some(t);
                    target = wi;
                    break;
                }
            }
            let (Some(kc), Some(lc)) = (k_c, l_c) else {
                truncated = true;
                break 'outer;
            };
            // V^{i+1}_c = Comp_c F^{-l_c}(V_{c''}).
            let orbit = map.orbit(c, lc);
            let mut piece = v[target].clone();
            for j in (0..lc).rev() {
                piece = crate::puzzle::pullback_component(map, &piece, &map.reduce(&orbit[j]))?;
            }
            let chain = crate::puzzle::chain_of(map, &piece, lc, &v[target])?;
            k_times.push(kc);
            l_times.push(lc);
            targets.push(target);
            orders.push(chain.order);
            v_next.push(piece);
        }
        levels.push(GoodNestLevel {
            v: v.clone(),
            w,
            k: k_times,
            l: l_times,
            landing_target: targets,
            chain_order: orders,
        });
        v = v_next;
    }
    Ok(GoodNest { levels, truncated })
}

/// Number of maximal central cascades (runs of equal return times of
/// length >= 2) in the principal nest started at `from`, stopped once the
/// pieces are inside `until`.
pub fn cascades_between(
    map: &MapSpec,
    from: &RInterval,
    until: &RInterval,
    c: &Real,
    horizon: usize,
) -> Result<usize, NestError> {
    let mut times: Vec<usize> = Vec::new();
    let mut cur = from.clone();
    for _ in 0..400 {
        if until.contains_interval(&cur) && !cur.approx_eq(until) {
            break;
        }
        let base = NiceSet::single(cur.clone());
        match first_entry(map, &base, c, horizon, false) {
            Ok(e) => {
                times.push(e.time);
                if e.domain.approx_eq(&cur) {
                    break;
                }
                cur = e.domain;
            }
            Err(_) => break,
        }
    }
    let mut runs = 0;
    let mut i = 0;
    while i < times.len() {
        let mut j = i;
        while j + 1 < times.len() && times[j + 1] == times[i] {
            j += 1;
        }
        if j > i {
            runs += 1;
        }
        i = j + 1;
    }
    Ok(runs)
}

// ---------------------------------------------------------------------------
// Recurrence classification and the Omega decomposition
// ---------------------------------------------------------------------------

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Recurrence {
    InBasin,
    InfinitelyRenormalizable,
    PersistentlyRecurrent,
    ReluctantlyRecurrent,
    NonRecurrent,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalVerdict {
    pub critical_index: usize,
    pub class: Recurrence,
    /// (nest level, children count) for each tested critical piece.
    pub children_counts: Vec<(usize, usize)>,
    pub renormalization_periods: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RecurrenceClass {
    pub verdicts: Vec<CriticalVerdict>,
    pub omega0: Vec<usize>,
    pub omega1: Vec<usize>,
    /// Minimal subset of omega1 with the same union of omega-limit sets.
    pub omega1_min: Vec<usize>,
    pub omega2: Vec<usize>,
    pub components: Vec<Vec<usize>>,
    pub horizon: usize,
    pub children_threshold: usize,
    /// All verdicts are finite-horizon evidence.
    pub horizon_limited: bool,
}

/// Children of a critical puzzle piece P: unicritical pullbacks of P that
/// contain a critical point, counted over landing times up to the horizon.
///
/// A pullback of time e anchored at the critical point c' can only meet a
/// critical point ĉ at chain position j when f^{e-j}(ĉ) lands in P, i.e.
/// when e - j is one of ĉ's own entry times; and the meeting happens
/// exactly when f^j(c') falls inside ĉ's pullback piece for that entry.
/// So one pass over the entry table decides unicriticality with interval
/// membership tests instead of fresh chains.
pub fn count_children(map: &MapSpec, piece: &RInterval, time_horizon: usize, cap: usize) -> usize {
    count_children_with(map, map, piece, time_horizon, cap)
}

/// Children counting with the critical orbits tracked in `orbit_map`'s
/// precision while the interval pullbacks run in `map`'s (typically
/// binary64) precision.
pub fn count_children_with(
    orbit_map: &MapSpec,
    map: &MapSpec,
    piece: &RInterval,
    time_horizon: usize,
    cap: usize,
) -> usize {
    children_pieces(orbit_map, map, piece, time_horizon, cap).len()
}

#[derive(Clone, Debug)]
pub struct ChildPiece {
    pub critical_index: usize,
    pub time: usize,
    pub piece: RInterval,
}

/// Enumerate the children themselves, in time order, capped.
pub fn children_pieces(
    orbit_map: &MapSpec,
    map: &MapSpec,
    piece: &RInterval,
    time_horizon: usize,
    cap: usize,
) -> Vec<ChildPiece> {
    let orbits: Vec<Vec<Real>> = orbit_map
        .critical_locations()
        .iter()
        .map(|c| {
            let mut o = orbit_map.orbit(c, time_horizon);
            for y in o.iter_mut() {
                *y = orbit_map.reduce(y).to_prec(map.prec);
            }
            o
        })
        .collect();
    children_pieces_from_orbits(map, &orbits, piece, time_horizon, cap)
}

/// Children enumeration against precomputed critical orbits (already at
/// the working precision of `map`).
pub fn children_pieces_from_orbits(
    map: &MapSpec,
    orbits: &[Vec<Real>],
    piece: &RInterval,
    time_horizon: usize,
    cap: usize,
) -> Vec<ChildPiece> {
    children_pieces_stopping(map, orbits, piece, time_horizon, cap, None)
}

/// As above, but enumeration ends as soon as a found child no longer
/// contains `stop_anchor`: children shrink with time, so everything deeper
/// is smaller still.
pub fn children_pieces_stopping(
    map: &MapSpec,
    orbits: &[Vec<Real>],
    piece: &RInterval,
    time_horizon: usize,
    cap: usize,
    stop_anchor: Option<&RInterval>,
) -> Vec<ChildPiece> {
    children_pieces_gapped(map, orbits, piece, time_horizon, cap, stop_anchor, None)
}

/// Full enumeration control: `gap_floor` ends the scan once no child has
/// appeared for eight times the last child time (successor times double,
/// so such a gap means the family is exhausted), but never before the
/// floor is reached.
pub fn children_pieces_gapped(
    map: &MapSpec,
    orbits: &[Vec<Real>],
    piece: &RInterval,
    time_horizon: usize,
    cap: usize,
    stop_anchor: Option<&RInterval>,
    gap_floor: Option<usize>,
) -> Vec<ChildPiece> {
    let crits = map.critical_locations();
    let time_horizon = time_horizon.min(orbits.iter().map(|o| o.len() - 1).min().unwrap_or(0));
    // Entry table: (time, critical index), in time order.
    let mut entries: Vec<(usize, usize)> = Vec::new();
    for (ci, orbit) in orbits.iter().enumerate() {
        for (t, y) in orbit.iter().enumerate().take(time_horizon + 1).skip(1) {
            if piece.contains(y) || piece.on_boundary(y) {
                entries.push((t, ci));
            }
        }
    }
    entries.sort_unstable();
    let mut pieces_by_entry: Vec<(usize, usize, RInterval)> = Vec::new();
    let mut children: Vec<ChildPiece> = Vec::new();
    for &(e, ci) in &entries {
        if let Some(floor) = gap_floor {
            let last = children.last().map(|c| c.time).unwrap_or(0);
            if e > floor.max(8 * last) && !children.is_empty() {
                break;
            }
        }
        // Q = Comp_{c'} f^{-e}(P) along the precomputed orbit.
        let mut q = piece.clone();
        let mut ok = true;
        for j in (0..e).rev() {
            match crate::puzzle::pullback_component(map, &q, &orbits[ci][j]) {
                Ok(p) => q = p,
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        // Cross-visit test against all earlier entries.
        let mut unicritical = true;
        for (e2, _c2, q2) in &pieces_by_entry {
            if *e2 >= e {
                break;
            }
            if q2.contains(&orbits[ci][e - e2]) {
                unicritical = false;
                break;
            }
        }
        // The step-zero visit at c' itself is the one allowed; a second
        // critical point inside Q at step zero also breaks unicriticality.
        if unicritical {
            let inside = crits.iter().filter(|c| q.contains(c)).count();
            if inside > 1 {
                unicritical = false;
            }
        }
        pieces_by_entry.push((e, ci, q.clone()));
        if unicritical && q.contains(&crits[ci]) {
            let stop = stop_anchor
                .map(|a| !q.contains_interval(a))
                .unwrap_or(false);
            children.push(ChildPiece {
                critical_index: ci,
                time: e,
                piece: q,
            });
            if children.len() > cap || stop {
                return children;
            }
        }
    }
    children
}

/// Classify every critical point and decompose them into the Omega sets.
pub fn classify_recurrence(
    map: &MapSpec,
    nest_source: &[PrincipalNest],
    horizon: usize,
    children_threshold: usize,
) -> RecurrenceClass {
    let crits = map.critical_locations();
    let orbits = find_periodic_orbits(map, 8, 2000);
    let attractors: Vec<&PeriodicOrbit> = orbits
        .iter()
        .filter(|o| o.is_attracting() || o.class == crate::orbit::OrbitClass::Parabolic)
        .collect();
    let order = partial_order(map, horizon.min(100_000), 20);
    let mut verdicts = Vec::new();
    for (ci, c) in crits.iter().enumerate() {
        if attractors
            .iter()
            .any(|o| converges_to(map, c, o, horizon.min(10_000)))
        {
            verdicts.push(CriticalVerdict {
                critical_index: ci,
                class: Recurrence::InBasin,
                children_counts: Vec::new(),
                renormalization_periods: Vec::new(),
            });
            continue;
        }
        let recurrent = order.min_distances[ci][ci] < 2f64.powi(-20);
        if !recurrent {
            verdicts.push(CriticalVerdict {
                critical_index: ci,
                class: Recurrence::NonRecurrent,
                children_counts: Vec::new(),
                renormalization_periods: Vec::new(),
            });
            continue;
        }
        let mut renorm = Vec::new();
        let nest = nest_source
            .iter()
            .find(|n| (&n.critical_point - c).abs().to_f64() < 1e-15);
        let mut counts = Vec::new();
        if let Some(nest) = nest {
            if matches!(nest.termination, NestTermination::Frozen { .. }) {
                renorm.push(nest.levels.last().unwrap().return_time);
            }
            // Children counts are combinatorial: run them on a binary64
            // twin of the map for speed.
            let twin = map.at_precision(crate::real::Precision::DOUBLE);
            let max_levels = nest.levels.len().min(11);
            for rec in nest.levels.iter().take(max_levels).skip(1) {
                // Scan window scaled to the piece's return time: enough to
                // expose more than `children_threshold` children when the
                // recurrence is reluctant.
                let window = (rec.return_time.max(2) * (children_threshold + 4)).min(horizon);
                let piece64 = RInterval::new(
                    rec.piece.a.to_prec(crate::real::Precision::DOUBLE),
                    rec.piece.b.to_prec(crate::real::Precision::DOUBLE),
                );
                let n =
                    count_children_with(map, &twin, &piece64, window, children_threshold + 1);
                counts.push((rec.level, n));
            }
        }
        let reluctant = counts.iter().any(|(_, n)| *n > children_threshold);
        let class = if reluctant {
            Recurrence::ReluctantlyRecurrent
        } else {
            Recurrence::PersistentlyRecurrent
        };
        verdicts.push(CriticalVerdict {
            critical_index: ci,
            class,
            children_counts: counts,
            renormalization_periods: renorm,
        });
    }
    let mut omega0 = Vec::new();
    let mut omega1 = Vec::new();
    let mut omega2 = Vec::new();
    for v in &verdicts {
        match v.class {
            Recurrence::InBasin | Recurrence::InfinitelyRenormalizable => {
                omega0.push(v.critical_index)
            }
            Recurrence::PersistentlyRecurrent => omega1.push(v.critical_index),
            Recurrence::ReluctantlyRecurrent | Recurrence::NonRecurrent => {
                omega2.push(v.critical_index)
            }
        }
    }
    // Minimal subset of omega1 covering the same omega-limit sets: group
    // critical points that accumulate on each other.
    let mut omega1_min = Vec::new();
    let mut seen = vec![false; crits.len()];
    for &i in &omega1 {
        if seen[i] {
            continue;
        }
        omega1_min.push(i);
        seen[i] = true;
        for &j in &omega1 {
            if !seen[j] && order.edges.contains(&(i, j)) && order.edges.contains(&(j, i)) {
                seen[j] = true;
            }
        }
    }
    RecurrenceClass {
        verdicts,
        omega0,
        omega1,
        omega1_min,
        omega2,
        components: order.components,
        horizon,
        children_threshold,
        horizon_limited: true,
    }
}

/// The long-cascade threshold N0 = max(8, 12 b^2 - 4 b) for b critical
/// points.
pub fn long_cascade_threshold(critical_count: usize) -> usize {
    let b = critical_count as i64;
    (12 * b * b - 4 * b).max(8) as usize
}

/// Nice critical interval (alpha, -alpha) for an even unicritical map,
/// bounded by the orientation-reversing fixed point and its mirror.
pub fn alpha_interval(map: &MapSpec) -> Option<RInterval> {
    let orbits = find_periodic_orbits(map, 1, 2000);
    let c = map.critical_locations().into_iter().next()?;
    let alpha = orbits
        .iter()
        .map(|o| o.points[0].clone())
        .filter(|p| map.df(p) < Real::zero(map.prec))
        .min_by(|a, b| (a - &c).abs().partial_cmp(&(b - &c).abs()).unwrap())?;
    // Mirror across the critical point: f(m) = f(alpha).
    let target = map.f(&alpha);
    let side = (&alpha - &c).signum_i();
    let dom = map.interval();
    let (lo, hi) = if side < 0 {
        (c.clone(), dom.b.clone())
    } else {
        (dom.a.clone(), c.clone())
    };
    let g = |x: &Real| map.f(x) - &target;
    let m = bisect(&g, &lo, &hi, &(map.prec.eps() * 16.0))?;
    let i = if side < 0 {
        RInterval::new(alpha, m)
    } else {
        RInterval::new(m, alpha)
    };
    if i.contains(&c) {
        Some(i)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::puzzle::build_starting_partition;
    use crate::real::Precision;
    use std::sync::OnceLock;

    fn critical_interval(map: &MapSpec) -> RInterval {
        alpha_interval(map).expect("alpha interval")
    }

    /// One deep quadratic Fibonacci parameter shared by the tests here:
    /// anchored well past every nest level they compute.
    fn fib_quad() -> &'static Real {
        static FIB: OnceLock<Real> = OnceLock::new();
        FIB.get_or_init(|| {
            crate::fibonacci::fibonacci_parameter_search(2, 14, Precision::QUAD)
                .unwrap()
                .c
        })
    }

    #[test]
    fn superattracting_nest_terminates() {
        let m = MapSpec::quadratic(-1.0, Precision::DOUBLE);
        let i0 = critical_interval(&m);
        let c = Real::from(0.0);
        let nest = principal_nest(&m, &i0, &c, 30, 10_000).unwrap();
        assert!(nest.levels.iter().skip(1).all(|l| l.return_time == 2));
        assert!(matches!(nest.termination, NestTermination::Frozen { .. }));
        let w = is_terminating(&m, &i0, &c, 10_000).unwrap().unwrap();
        assert_eq!(w.period, 2);
        assert!(w.verified);
        assert!(w.interval.contains(&c));
    }

    #[test]
    fn period_three_superattracting_renormalization() {
        let c3 = -1.7548776662466928;
        let m = MapSpec::quadratic(c3, Precision::DOUBLE);
        let i0 = critical_interval(&m);
        let w = is_terminating(&m, &i0, &Real::from(0.0), 10_000)
            .unwrap()
            .expect("period-3 renormalization detected");
        assert_eq!(w.period, 3);
        assert!(w.verified);
    }

    #[test]
    fn fibonacci_nest_times_and_no_cascades() {
        let m = MapSpec::unicritical(2, fib_quad(), Precision::QUAD);
        let i0 = critical_interval(&m);
        let c = Real::zero(Precision::QUAD);
        let nest = principal_nest(&m, &i0, &c, 9, 200_000).unwrap();
        let times: Vec<usize> = nest.levels.iter().skip(1).map(|l| l.return_time).collect();
        // The first return of the critical point to the alpha-interval is
        // at time 3; from there the return times follow the Fibonacci
        // recursion 3, 5, 8, 13, ... matching the closest-return times.
        let fibs = crate::fibonacci::fibonacci_times(times.len() + 2);
        assert_eq!(times[..], fibs[2..=times.len() + 1], "times {times:?}");
        assert!(is_terminating(&m, &i0, &c, 50_000).unwrap().is_none());
        assert!(detect_cascades(&m, &nest).is_empty(), "no central returns");
    }

    #[test]
    fn saddle_node_window_has_long_low_cascade() {
        // Just above the period-3 saddle-node root c = -7/4 the return map
        // passes through a narrow channel: a long central cascade of low
        // type with no real fixed point.
        let m = MapSpec::quadratic(-1.75 + 1e-7, Precision::DOUBLE);
        let i0 = critical_interval(&m);
        let c = Real::from(0.0);
        let nest = principal_nest(&m, &i0, &c, 3000, 100_000).unwrap();
        let cascades = detect_cascades(&m, &nest);
        assert!(!cascades.is_empty());
        let longest = cascades.iter().max_by_key(|c| c.length).unwrap();
        assert!(longest.length >= 50, "length {}", longest.length);
        assert_eq!(longest.return_type, ReturnType::Low);
        assert!(longest.maximal);
        assert!(
            longest.fixed_points.is_empty(),
            "saddle-node channel has no real fixed point"
        );
        // Cascade length grows as the parameter approaches the root.
        let m2 = MapSpec::quadratic(-1.75 + 1e-5, Precision::DOUBLE);
        let nest2 = principal_nest(&m2, &critical_interval(&m2), &c, 3000, 100_000).unwrap();
        let l2 = detect_cascades(&m2, &nest2)
            .iter()
            .map(|c| c.length)
            .max()
            .unwrap_or(0);
        assert!(l2 < longest.length, "closer parameter gives longer cascade");
    }

    #[test]
    fn chebyshev_recurrence_is_nonrecurrent() {
        let m = MapSpec::quadratic(-2.0, Precision::DOUBLE);
        let rec = classify_recurrence(&m, &[], 100_000, 64);
        assert_eq!(rec.verdicts[0].class, Recurrence::NonRecurrent);
        assert_eq!(rec.omega2, vec![0]);
        assert!(rec.horizon_limited);
    }

    #[test]
    fn basilica_critical_point_in_basin() {
        let m = MapSpec::quadratic(-1.0, Precision::DOUBLE);
        let rec = classify_recurrence(&m, &[], 10_000, 64);
        assert_eq!(rec.verdicts[0].class, Recurrence::InBasin);
        assert_eq!(rec.omega0, vec![0]);
    }

    #[test]
    fn fibonacci_is_persistently_recurrent() {
        let m = MapSpec::unicritical(2, fib_quad(), Precision::QUAD);
        let i0 = critical_interval(&m);
        let c = Real::zero(Precision::QUAD);
        let nest = principal_nest(&m, &i0, &c, 10, 200_000).unwrap();
        let rec = classify_recurrence(&m, &[nest], 100_000, 64);
        assert_eq!(rec.verdicts[0].class, Recurrence::PersistentlyRecurrent);
        assert!(rec.verdicts[0].children_counts.iter().all(|(_, n)| *n <= 3));
        assert_eq!(rec.omega1, vec![0]);
        assert_eq!(rec.omega1_min, vec![0]);
    }

    #[test]
    fn good_nest_unicritical() {
        let m = MapSpec::unicritical(2, fib_quad(), Precision::QUAD);
        let i0 = critical_interval(&m);
        let g = good_nest(&m, &[i0], 4, 200_000).unwrap();
        assert!(!g.truncated);
        assert!(g.levels.len() >= 3);
        for lvl in &g.levels {
            assert_eq!(lvl.landing_target, vec![0]);
            assert!(lvl.chain_order[0] <= 1, "order bounded by #crit = 1");
            assert!(lvl.l[0] > lvl.k[0]);
        }
        for i in 0..g.levels.len() - 1 {
            assert!(g.levels[i].v[0].contains_interval(&g.levels[i].w[0]));
            assert!(g.levels[i].w[0].contains_interval(&g.levels[i + 1].v[0]));
        }
    }

    #[test]
    fn good_nest_superattracting_truncates() {
        let m = MapSpec::quadratic(-1.0, Precision::DOUBLE);
        let i0 = critical_interval(&m);
        let g = good_nest(&m, &[i0], 4, 5_000).unwrap();
        assert!(g.truncated, "orbit never escapes to V \\ W");
    }

    #[test]
    fn at_most_one_cascade_between_good_nest_levels() {
        let m = MapSpec::unicritical(2, fib_quad(), Precision::QUAD);
        let i0 = critical_interval(&m);
        let c = Real::zero(Precision::QUAD);
        let g = good_nest(&m, &[i0], 4, 200_000).unwrap();
        for i in 0..g.levels.len() - 1 {
            let runs =
                cascades_between(&m, &g.levels[i].v[0], &g.levels[i + 1].v[0], &c, 200_000).unwrap();
            assert!(runs <= 1, "level {i}: {runs} cascades");
        }
    }

    #[test]
    fn threshold_formula() {
        assert_eq!(long_cascade_threshold(1), 8);
        assert_eq!(long_cascade_threshold(2), 40);
        assert_eq!(long_cascade_threshold(3), 96);
    }

    #[test]
    fn attracted_logistic_in_basin() {
        let m = MapSpec::logistic(3.5, Precision::DOUBLE);
        let part = build_starting_partition(&m, 8, 4000).unwrap();
        assert!(!part.set.points.is_empty());
        let rec = classify_recurrence(&m, &[], 10_000, 64);
        assert_eq!(rec.verdicts[0].class, Recurrence::InBasin);
    }
}
