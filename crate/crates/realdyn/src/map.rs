//! Interval and circle maps with finitely many integer-order critical
//! points: closed-form or piecewise local forms, certified critical
//! points, exact derivatives, branch structure.

use crate::expr::{Expr, Jet};
use crate::interval::RInterval;
use crate::numerics::{bisect, fit_line, ident_tol};
use crate::real::{Precision, Real};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum MapError {
    #[error("point {0} outside the map domain")]
    DomainError(f64),
    #[error("local form mismatch at critical point {c}: slope estimate {estimate}")]
    FormMismatch { c: f64, estimate: f64 },
    #[error("declared critical point {0} fails Df=0 check (Df={1})")]
    NotCritical(f64, f64),
    #[error("undeclared sign change of Df detected near {0}")]
    UndeclaredCritical(f64),
    #[error("pieces are not C3-compatible at knot {0} (order {1} jump {2})")]
    KnotMismatch(f64, usize, f64),
    #[error("invalid map specification: {0}")]
    BadSpec(String),
    #[error("expression error: {0}")]
    Expr(#[from] crate::expr::ExprError),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Clone, Debug)]
pub struct CriticalPoint {
    pub location: Real,
    pub order: u32,
}

impl CriticalPoint {
    pub fn parity(&self) -> Parity {
        if self.order % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParabolicHint {
    pub point: Real,
    pub period: u32,
    pub multiplicity: u32,
}

#[derive(Clone, Debug)]
pub enum MapDomain {
    Interval(RInterval),
    /// ℝ mod 1, represented by a lift on [0,1] with F(x+1) = F(x) + degree.
    Circle { degree: i32 },
}

#[derive(Clone, Debug)]
struct Branch {
    expr: Expr,
    /// Cached symbolic derivatives, derivs[k] = D^k expr.
    derivs: Vec<Expr>,
    /// Domain of validity (whole domain for a closed form).
    range: RInterval,
}

impl Branch {
    fn new(expr: Expr, range: RInterval, max_order: usize) -> Branch {
        let mut derivs = Vec::with_capacity(max_order + 1);
        derivs.push(expr.clone());
        for k in 0..max_order {
            let next = derivs[k].diff();
            derivs.push(next);
        }
        Branch { expr, derivs, range }
    }
}

const CACHED_DERIVS: usize = 6;

/// Specialized evaluation for the workhorse family x^d + c: the generic
/// expression walker allocates several temporaries per call, which
/// dominates deep pullback chains.
#[derive(Clone, Debug)]
enum FastForm {
    Unicritical { d: i32, c: Real },
}

impl FastForm {
    fn detect(expr: &Expr) -> Option<FastForm> {
        if let Expr::Add(l, r) = expr {
            if let (Expr::Pow(base, d), Expr::Const(c)) = (&**l, &**r) {
                if matches!(**base, Expr::X) && *d >= 2 {
                    return Some(FastForm::Unicritical { d: *d, c: c.clone() });
                }
            }
        }
        None
    }

    fn eval(&self, x: &Real, k: usize, prec: Precision) -> Option<Real> {
        match self {
            FastForm::Unicritical { d, c } => match k {
                0 => Some(x.to_prec(prec).powi(*d) + c.to_prec(prec)),
                1 => Some(x.to_prec(prec).powi(*d - 1) * (*d as f64)),
                _ => None,
            },
        }
    }
}

/// An interval or circle map with declared integer-order critical points.
/// Immutable after construction; all evaluation is pure.
pub struct MapSpec {
    pub name: String,
    pub domain: MapDomain,
    pieces: Vec<Branch>,
    pub critical_points: Vec<CriticalPoint>,
    pub parabolic_hints: Vec<ParabolicHint>,
    pub prec: Precision,
    /// False only for declared non-C3 test maps (e.g. the tent map).
    pub smooth: bool,
    fast: Option<FastForm>,
}

impl MapSpec {
    pub fn from_expr(
        name: &str,
        domain: MapDomain,
        expr: Expr,
        critical_points: Vec<CriticalPoint>,
        prec: Precision,
    ) -> Result<MapSpec, MapError> {
        let range = match &domain {
            MapDomain::Interval(i) => i.clone(),
            MapDomain::Circle { .. } => {
                RInterval::new(Real::with_val(prec, 0.0), Real::with_val(prec, 1.0))
            }
        };
        let fast = FastForm::detect(&expr);
        let spec = MapSpec {
            name: name.to_string(),
            domain,
            pieces: vec![Branch::new(expr, range, CACHED_DERIVS)],
            critical_points,
            parabolic_hints: Vec::new(),
            prec,
            smooth: true,
            fast,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Piecewise local forms. `smooth` must be false for declared
    /// test maps that are not C3 at the knots.
    pub fn from_pieces(
        name: &str,
        domain: MapDomain,
        pieces: Vec<(RInterval, Expr)>,
        critical_points: Vec<CriticalPoint>,
        prec: Precision,
        smooth: bool,
    ) -> Result<MapSpec, MapError> {
        if pieces.is_empty() {
            return Err(MapError::BadSpec("no pieces".into()));
        }
        let pieces: Vec<Branch> = pieces
            .into_iter()
            .map(|(range, expr)| Branch::new(expr, range, CACHED_DERIVS))
            .collect();
        let spec = MapSpec {
            name: name.to_string(),
            domain,
            pieces,
            critical_points,
            parabolic_hints: Vec::new(),
            prec,
            smooth,
            fast: None,
        };
        if smooth {
            spec.check_knots()?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_parabolic_hints(mut self, hints: Vec<ParabolicHint>) -> MapSpec {
        self.parabolic_hints = hints;
        self
    }

    /// C3 compatibility of adjacent pieces at their common knot,
    /// relative tolerance 1e-9, checked once at load.
    fn check_knots(&self) -> Result<(), MapError> {
        for w in self.pieces.windows(2) {
            let knot = &w[0].range.b;
            if (&w[1].range.a - knot).abs() > ident_tol(self.prec, knot) {
                return Err(MapError::BadSpec("pieces do not tile the domain".into()));
            }
            for k in 0..=3 {
                let l = w[0].derivs[k].eval(knot, self.prec).to_f64();
                let r = w[1].derivs[k].eval(knot, self.prec).to_f64();
                let scale = l.abs().max(r.abs()).max(1.0);
                if (l - r).abs() > 1e-9 * scale {
                    return Err(MapError::KnotMismatch(knot.to_f64(), k, (l - r).abs()));
                }
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), MapError> {
        let tol = self.prec.eps().sqrt();
        for c in &self.critical_points {
            if c.order < 2 {
                return Err(MapError::BadSpec(format!(
                    "critical point {} has order {} < 2",
                    c.location.to_f64(),
                    c.order
                )));
            }
            if !self.smooth {
                continue;
            }
            let d1 = self.eval_raw(&c.location, 1);
            if d1.abs() > tol {
                return Err(MapError::NotCritical(c.location.to_f64(), d1.to_f64()));
            }
            if (c.order as usize) <= CACHED_DERIVS {
                // D^k f(c) = 0 for k < d, D^d f(c) != 0.
                for k in 2..c.order as usize {
                    if self.eval_raw(&c.location, k).abs() > &tol * 100.0 {
                        return Err(MapError::FormMismatch {
                            c: c.location.to_f64(),
                            estimate: k as f64,
                        });
                    }
                }
                if self.eval_raw(&c.location, c.order as usize).abs() <= tol {
                    return Err(MapError::FormMismatch {
                        c: c.location.to_f64(),
                        estimate: c.order as f64,
                    });
                }
            } else {
                let report = self.verify_local_form(c)?;
                if (report.order_estimate - c.order as f64).abs() >= 0.05 {
                    return Err(MapError::FormMismatch {
                        c: c.location.to_f64(),
                        estimate: report.order_estimate,
                    });
                }
            }
        }
        Ok(())
    }

    /// A twin of this map at a different working precision. Combinatorial
    /// bookkeeping (children counts, coarse scans) runs much faster on a
    /// binary64 twin.
    pub fn at_precision(&self, prec: Precision) -> MapSpec {
        let pieces = self
            .pieces
            .iter()
            .map(|b| {
                Branch::new(
                    b.expr.to_prec(prec),
                    RInterval::new(b.range.a.to_prec(prec), b.range.b.to_prec(prec)),
                    CACHED_DERIVS,
                )
            })
            .collect();
        let domain = match &self.domain {
            MapDomain::Interval(i) => {
                MapDomain::Interval(RInterval::new(i.a.to_prec(prec), i.b.to_prec(prec)))
            }
            MapDomain::Circle { degree } => MapDomain::Circle { degree: *degree },
        };
        MapSpec {
            name: self.name.clone(),
            domain,
            pieces,
            critical_points: self
                .critical_points
                .iter()
                .map(|c| CriticalPoint {
                    location: c.location.to_prec(prec),
                    order: c.order,
                })
                .collect(),
            parabolic_hints: self.parabolic_hints.clone(),
            prec,
            smooth: self.smooth,
            fast: self.fast.as_ref().map(|f| match f {
                FastForm::Unicritical { d, c } => FastForm::Unicritical {
                    d: *d,
                    c: c.to_prec(prec),
                },
            }),
        }
    }

    pub fn interval(&self) -> RInterval {
        match &self.domain {
            MapDomain::Interval(i) => i.clone(),
            MapDomain::Circle { .. } => {
                RInterval::new(Real::with_val(self.prec, 0.0), Real::with_val(self.prec, 1.0))
            }
        }
    }

    pub fn in_domain(&self, x: &Real) -> bool {
        match &self.domain {
            MapDomain::Interval(i) => {
                let t = ident_tol(self.prec, &i.a.abs().max(&i.b.abs()));
                *x >= &i.a - &t && *x <= &i.b + &t
            }
            MapDomain::Circle { .. } => true,
        }
    }

    fn branch_for(&self, x: &Real) -> &Branch {
        if self.pieces.len() == 1 {
            return &self.pieces[0];
        }
        for p in &self.pieces {
            if *x <= p.range.b {
                return p;
            }
        }
        self.pieces.last().unwrap()
    }

    /// f(x) or D^k f(x) without a domain check.
    fn eval_raw(&self, x: &Real, k: usize) -> Real {
        if let Some(ff) = &self.fast {
            if let Some(v) = ff.eval(x, k, self.prec) {
                return v;
            }
        }
        match &self.domain {
            MapDomain::Interval(_) => {
                let b = self.branch_for(x);
                if k < b.derivs.len() {
                    b.derivs[k].eval(x, self.prec)
                } else {
                    let mut e = b.derivs.last().unwrap().clone();
                    for _ in b.derivs.len()..=k {
                        e = e.diff();
                    }
                    e.eval(x, self.prec)
                }
            }
            MapDomain::Circle { degree } => {
                let n = x.floor();
                let frac = x - &n;
                let b = self.branch_for(&frac);
                if k == 0 {
                    b.derivs[0].eval(&frac, self.prec) + n * (*degree as f64)
                } else if k < b.derivs.len() {
                    b.derivs[k].eval(&frac, self.prec)
                } else {
                    let mut e = b.derivs.last().unwrap().clone();
                    for _ in b.derivs.len()..=k {
                        e = e.diff();
                    }
                    e.eval(&frac, self.prec)
                }
            }
        }
    }

    /// f(x) for derivative_order 0, D^k f(x) for k >= 1.
    /// Orders up to 3 are exact symbolic; higher orders continue the
    /// symbolic differentiation best-effort.
    pub fn eval(&self, x: &Real, derivative_order: usize) -> Result<Real, MapError> {
        if !self.in_domain(x) {
            return Err(MapError::DomainError(x.to_f64()));
        }
        Ok(self.eval_raw(x, derivative_order))
    }

    pub fn f(&self, x: &Real) -> Real {
        self.eval_raw(x, 0)
    }

    pub fn df(&self, x: &Real) -> Real {
        self.eval_raw(x, 1)
    }

    /// Evaluate f(x0 + t) as a truncated Taylor series.
    pub fn jet(&self, x0: &Real, order: usize) -> Jet {
        let b = self.branch_for(x0);
        b.expr.eval_jet(&Jet::variable(x0, order, self.prec))
    }

    pub fn iterate(&self, x: &Real, n: usize) -> Real {
        let mut y = x.to_prec(self.prec);
        for _ in 0..n {
            y = self.f(&y);
        }
        y
    }

    pub fn orbit(&self, x: &Real, n: usize) -> Vec<Real> {
        let mut out = Vec::with_capacity(n + 1);
        let mut y = x.to_prec(self.prec);
        out.push(y.clone());
        for _ in 0..n {
            y = self.f(&y);
            out.push(y.clone());
        }
        out
    }

    /// D(f^n)(x) by the chain rule.
    pub fn iterate_derivative(&self, x: &Real, n: usize) -> Real {
        let mut y = x.to_prec(self.prec);
        let mut d = Real::one(self.prec);
        for _ in 0..n {
            d = d * self.df(&y);
            y = self.f(&y);
        }
        d
    }

    /// Reduce to the fundamental domain for circle maps; identity otherwise.
    pub fn reduce(&self, x: &Real) -> Real {
        match &self.domain {
            MapDomain::Interval(_) => x.clone(),
            MapDomain::Circle { .. } => x - &x.floor(),
        }
    }

    /// Sorted critical locations inside the domain.
    pub fn critical_locations(&self) -> Vec<Real> {
        let mut v: Vec<Real> = self.critical_points.iter().map(|c| c.location.clone()).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    /// Branch partition points: domain endpoints plus critical points.
    pub fn branch_points(&self) -> Vec<Real> {
        let dom = self.interval();
        let mut v = vec![dom.a.clone()];
        for c in self.critical_locations() {
            if dom.contains(&c) {
                v.push(c);
            }
        }
        v.push(dom.b.clone());
        v
    }

    /// Log-log slope of |f(x) - f(c)| over a geometric sample x → c.
    pub fn verify_local_form(&self, c: &CriticalPoint) -> Result<LocalFormReport, MapError> {
        let fc = self.f(&c.location);
        let k_max = (self.prec.get() as i32 - 13).min(120);
        let mut ts = Vec::new();
        let mut vs = Vec::new();
        for k in 10..=k_max {
            for side in [-1.0, 1.0] {
                let x = &c.location + Real::exp2(self.prec, -k) * side;
                if !self.in_domain(&x) {
                    continue;
                }
                let d = (self.f(&x) - &fc).abs();
                if d.is_zero() {
                    continue;
                }
                ts.push(-k as f64);
                vs.push(d.log2().to_f64());
            }
        }
        if ts.len() < 8 {
            return Err(MapError::FormMismatch {
                c: c.location.to_f64(),
                estimate: f64::NAN,
            });
        }
        let (slope, intercept, r2) = fit_line(&ts, &vs);
        if !slope.is_finite() || r2 < 0.99 {
            return Err(MapError::FormMismatch {
                c: c.location.to_f64(),
                estimate: slope,
            });
        }
        let residual = ts
            .iter()
            .zip(&vs)
            .map(|(t, v)| (v - (slope * t + intercept)).abs())
            .fold(0.0, f64::max);
        Ok(LocalFormReport {
            order_estimate: slope,
            residual,
            passes: (slope - c.order as f64).abs() < 0.05,
        })
    }

    /// Certify that the sign of Df is constant on each branch between
    /// consecutive critical points. Samples densely and refines any sign
    /// change; a genuine interior zero means an undeclared critical point.
    pub fn certify_monotone_branches(&self, samples: usize) -> Result<(), MapError> {
        let pts = self.branch_points();
        for w in pts.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let len = b - a;
            if len <= ident_tol(self.prec, b) {
                continue;
            }
            let mut last: Option<(Real, i32)> = None;
            for i in 1..samples {
                let x = a + &len * (i as f64 / samples as f64);
                let d = self.df(&x);
                let s = d.signum_i();
                if s == 0 {
                    continue;
                }
                if let Some((px, ps)) = &last {
                    if *ps != s {
                        // Refine: a zero of Df strictly inside the branch.
                        let root = bisect(
                            |t| self.df(t),
                            px,
                            &x,
                            &ident_tol(self.prec, b),
                        );
                        if let Some(r) = root {
                            let near_declared = self
                                .critical_locations()
                                .iter()
                                .any(|c| (c - &r).abs() < (b - a) * 1e-6);
                            if !near_declared {
                                return Err(MapError::UndeclaredCritical(r.to_f64()));
                            }
                        }
                    }
                }
                last = Some((x, s));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalFormReport {
    pub order_estimate: f64,
    pub residual: f64,
    pub passes: bool,
}

// ---------------------------------------------------------------------------
// Standard families used throughout the crate and its tests.
// ---------------------------------------------------------------------------

impl MapSpec {
    /// x ↦ x² + c on the invariant interval [−β, β], β the positive
    /// fixed point.
    pub fn quadratic(c: f64, prec: Precision) -> MapSpec {
        MapSpec::unicritical(2, &Real::with_val(prec, c), prec)
    }

    pub fn quadratic_r(c: &Real, prec: Precision) -> MapSpec {
        MapSpec::unicritical(2, c, prec)
    }

    /// x ↦ x^d + c (d even) on [−β, β].
    pub fn unicritical(d: u32, c: &Real, prec: Precision) -> MapSpec {
        let c = c.to_prec(prec);
        // β is the largest root of x^d − x + c = 0. The function has its
        // positive minimum at x* = (1/d)^{1/(d-1)}; at the parabolic
        // parameter the root is tangent there and bisection has no sign
        // change to work with.
        let g = |x: &Real| x.powi(d as i32) + &c - x;
        let xstar = Real::with_val(prec, (1.0 / d as f64).powf(1.0 / (d as f64 - 1.0)));
        let gstar = g(&xstar);
        let beta = if gstar.abs() <= prec.eps().sqrt() {
            xstar
        } else {
            let mut hi = Real::with_val(prec, 2.5);
            while g(&hi) < Real::zero(prec) {
                hi = hi * 2.0;
            }
            bisect(g, &xstar, &hi, &(prec.eps() * 4.0))
                .expect("unicritical family: positive fixed point")
        };
        let expr = Expr::Add(
            Box::new(Expr::Pow(Box::new(Expr::X), d as i32)),
            Box::new(Expr::Const(c.clone())),
        );
        let dom = RInterval::new(-&beta, beta);
        MapSpec::from_expr(
            &format!("x^{d}+({})", c.to_f64()),
            MapDomain::Interval(dom),
            expr,
            vec![CriticalPoint {
                location: Real::zero(prec),
                order: d,
            }],
            prec,
        )
        .expect("unicritical family is well-formed")
    }

    /// Logistic a·x·(1−x) on [0,1].
    pub fn logistic(a: f64, prec: Precision) -> MapSpec {
        let expr = Expr::parse(&format!("{a:?}*x*(1 - x)"), prec).unwrap();
        MapSpec::from_expr(
            &format!("logistic({a})"),
            MapDomain::Interval(RInterval::new(
                Real::with_val(prec, 0.0),
                Real::with_val(prec, 1.0),
            )),
            expr,
            vec![CriticalPoint {
                location: Real::with_val(prec, 0.5),
                order: 2,
            }],
            prec,
        )
        .unwrap()
    }

    /// sin(πx) on [0,1].
    pub fn sine(prec: Precision) -> MapSpec {
        let expr = Expr::parse("sin(pi*x)", prec).unwrap();
        MapSpec::from_expr(
            "sin(pi x)",
            MapDomain::Interval(RInterval::new(
                Real::with_val(prec, 0.0),
                Real::with_val(prec, 1.0),
            )),
            expr,
            vec![CriticalPoint {
                location: Real::with_val(prec, 0.5),
                order: 2,
            }],
            prec,
        )
        .unwrap()
    }

    /// Full tent map, slope 2. A test-only map that is not C3.
    pub fn tent(prec: Precision) -> MapSpec {
        let half = RInterval::new(Real::with_val(prec, 0.0), Real::with_val(prec, 0.5));
        let rest = RInterval::new(Real::with_val(prec, 0.5), Real::with_val(prec, 1.0));
        let left = Expr::parse("2*x", prec).unwrap();
        let right = Expr::parse("2 - 2*x", prec).unwrap();
        MapSpec::from_pieces(
            "tent",
            MapDomain::Interval(RInterval::new(
                Real::with_val(prec, 0.0),
                Real::with_val(prec, 1.0),
            )),
            vec![(half, left), (rest, right)],
            vec![CriticalPoint {
                location: Real::with_val(prec, 0.5),
                order: 2,
            }],
            prec,
            false,
        )
        .unwrap()
    }

    /// The symmetric bimodal cubic family f_a(x) = a (x³ − 3x) / 2 on its
    /// invariant interval [−β, β], β = sqrt(3 + 2/a); critical points ±1
    /// with critical values ∓a. At a = 1 the critical points form a
    /// superattracting 2-cycle; at a = 2 the map is the full cubic.
    pub fn symmetric_cubic(a: &Real, prec: Precision) -> MapSpec {
        let a = a.to_prec(prec);
        let beta = (Real::with_val(prec, 3.0) + Real::with_val(prec, 2.0) / &a).sqrt();
        let expr = Expr::Mul(
            Box::new(Expr::Const(&a / 2.0)),
            Box::new(Expr::Sub(
                Box::new(Expr::Pow(Box::new(Expr::X), 3)),
                Box::new(Expr::Mul(
                    Box::new(Expr::constant(3.0)),
                    Box::new(Expr::X),
                )),
            )),
        );
        MapSpec::from_expr(
            &format!("cubic({})", a.to_f64()),
            MapDomain::Interval(RInterval::new(-&beta, beta)),
            expr,
            vec![
                CriticalPoint {
                    location: Real::with_val(prec, -1.0),
                    order: 2,
                },
                CriticalPoint {
                    location: Real::with_val(prec, 1.0),
                    order: 2,
                },
            ],
            prec,
        )
        .expect("symmetric cubic family is well-formed")
    }

    /// A bimodal cubic a·x³ + b·x² + c·x + d from its coefficients;
    /// critical points supplied by the caller.
    pub fn cubic(
        coeffs: [f64; 4],
        domain: RInterval,
        critical_points: Vec<CriticalPoint>,
        prec: Precision,
    ) -> Result<MapSpec, MapError> {
        let [a3, a2, a1, a0] = coeffs;
        let src = format!("{a3:?}*x^3 + {a2:?}*x^2 + {a1:?}*x + {a0:?}");
        let expr = Expr::parse(&src, prec)?;
        MapSpec::from_expr(&src, MapDomain::Interval(domain), expr, critical_points, prec)
    }
}

// ---------------------------------------------------------------------------
// JSON map definition files.
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct MapFile {
    #[serde(default)]
    name: Option<String>,
    domain: DomainFile,
    #[serde(default)]
    expression: Option<String>,
    #[serde(default)]
    pieces: Option<Vec<PieceFile>>,
    #[serde(default)]
    critical_points: Vec<CritFile>,
    #[serde(default)]
    parabolic: Vec<ParaFile>,
    #[serde(default)]
    smooth: Option<bool>,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum DomainFile {
    Interval { a: serde_json::Value, b: serde_json::Value },
    Circle { degree: i32 },
}

#[derive(Deserialize)]
struct PieceFile {
    from: serde_json::Value,
    to: serde_json::Value,
    expr: String,
}

#[derive(Deserialize)]
struct CritFile {
    x: serde_json::Value,
    order: u32,
    #[serde(default)]
    parity: Option<Parity>,
}

#[derive(Deserialize)]
struct ParaFile {
    point: serde_json::Value,
    period: u32,
    multiplicity: u32,
}

fn num(v: &serde_json::Value, prec: Precision) -> Result<Real, MapError> {
    match v {
        serde_json::Value::Number(n) => Ok(Real::with_val(prec, n.as_f64().unwrap())),
        serde_json::Value::String(s) => {
            Real::parse(prec, s).ok_or_else(|| MapError::BadSpec(format!("bad number '{s}'")))
        }
        _ => Err(MapError::BadSpec("expected number or numeric string".into())),
    }
}

impl MapSpec {
    /// Load a map definition from JSON. High-precision literals may be
    /// given as strings; they are parsed at the requested precision.
    pub fn from_json(src: &str, prec: Precision) -> Result<MapSpec, MapError> {
        let file: MapFile =
            serde_json::from_str(src).map_err(|e| MapError::BadSpec(e.to_string()))?;
        let domain = match &file.domain {
            DomainFile::Interval { a, b } => {
                MapDomain::Interval(RInterval::new(num(a, prec)?, num(b, prec)?))
            }
            DomainFile::Circle { degree } => MapDomain::Circle { degree: *degree },
        };
        let mut crits = Vec::new();
        for c in &file.critical_points {
            let cp = CriticalPoint {
                location: num(&c.x, prec)?,
                order: c.order,
            };
            if let Some(par) = c.parity {
                if par != cp.parity() {
                    return Err(MapError::BadSpec(format!(
                        "declared parity of critical point {} does not match order {}",
                        cp.location.to_f64(),
                        cp.order
                    )));
                }
            }
            crits.push(cp);
        }
        let name = file.name.clone().unwrap_or_else(|| "map".into());
        let mut spec = match (&file.expression, &file.pieces) {
            (Some(src), None) => {
                let expr = Expr::parse(src, prec)?;
                MapSpec::from_expr(&name, domain, expr, crits, prec)?
            }
            (None, Some(pieces)) => {
                let mut parsed = Vec::new();
                for p in pieces {
                    parsed.push((
                        RInterval::new(num(&p.from, prec)?, num(&p.to, prec)?),
                        Expr::parse(&p.expr, prec)?,
                    ));
                }
                MapSpec::from_pieces(&name, domain, parsed, crits, prec, file.smooth.unwrap_or(true))?
            }
            _ => {
                return Err(MapError::BadSpec(
                    "exactly one of 'expression' and 'pieces' is required".into(),
                ))
            }
        };
        let mut hints = Vec::new();
        for p in &file.parabolic {
            hints.push(ParabolicHint {
                point: num(&p.point, prec)?,
                period: p.period,
                multiplicity: p.multiplicity,
            });
        }
        spec = spec.with_parabolic_hints(hints);
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_and_derivatives() {
        let m = MapSpec::quadratic(-1.0, Precision::DOUBLE);
        assert_eq!(m.eval(&Real::from(0.0), 0).unwrap().to_f64(), -1.0);
        assert_eq!(m.eval(&Real::from(1.0), 1).unwrap().to_f64(), 2.0);
        let cubicish = MapSpec::from_expr(
            "x+x^3",
            MapDomain::Interval(RInterval::from_f64(-0.5, 0.5)),
            Expr::parse("x + x^3", Precision::DOUBLE).unwrap(),
            vec![],
            Precision::DOUBLE,
        )
        .unwrap();
        assert_eq!(cubicish.eval(&Real::from(0.0), 0).unwrap().to_f64(), 0.0);
    }

    #[test]
    fn domain_violation() {
        let m = MapSpec::quadratic(-1.0, Precision::DOUBLE);
        assert!(matches!(
            m.eval(&Real::from(10.0), 0),
            Err(MapError::DomainError(_))
        ));
    }

    #[test]
    fn local_form_slope() {
        let m = MapSpec::quadratic(0.0, Precision::DOUBLE);
        let rep = m.verify_local_form(&m.critical_points[0]).unwrap();
        assert!((rep.order_estimate - 2.0).abs() < 0.05, "{rep:?}");

        let m3 = MapSpec::from_expr(
            "x^3 family",
            MapDomain::Interval(RInterval::from_f64(-1.5, 1.5)),
            Expr::parse("x^3", Precision::DOUBLE).unwrap(),
            vec![CriticalPoint {
                location: Real::from(0.0),
                order: 3,
            }],
            Precision::DOUBLE,
        )
        .unwrap();
        let rep3 = m3.verify_local_form(&m3.critical_points[0]).unwrap();
        assert!((rep3.order_estimate - 3.0).abs() < 0.05);

        let logi = MapSpec::logistic(4.0, Precision::DOUBLE);
        let repl = logi.verify_local_form(&logi.critical_points[0]).unwrap();
        assert!((repl.order_estimate - 2.0).abs() < 0.05);
        assert!(repl.passes);
    }

    #[test]
    fn undeclared_critical_point_rejected() {
        let r = MapSpec::from_expr(
            "bad",
            MapDomain::Interval(RInterval::from_f64(-2.0, 2.0)),
            Expr::parse("x^2 - 1", Precision::DOUBLE).unwrap(),
            vec![],
            Precision::DOUBLE,
        )
        .unwrap();
        assert!(matches!(
            r.certify_monotone_branches(500),
            Err(MapError::UndeclaredCritical(_))
        ));
    }

    #[test]
    fn monotone_branches_certify() {
        let m = MapSpec::quadratic(-2.0, Precision::DOUBLE);
        m.certify_monotone_branches(500).unwrap();
        let logi = MapSpec::logistic(4.0, Precision::DOUBLE);
        logi.certify_monotone_branches(500).unwrap();
    }

    #[test]
    fn derivative_consistency_order() {
        // |Df(x) − (f(x+h)−f(x−h))/2h| = O(h²): fitted exponent ≥ 1.9.
        let m = MapSpec::sine(Precision::DOUBLE);
        let x = Real::from(0.3);
        let d = m.df(&x);
        let mut hs = Vec::new();
        let mut es = Vec::new();
        for k in 3..12 {
            let h = 2f64.powi(-k);
            let fd = (m.f(&(&x + h)) - m.f(&(&x - h))) / (2.0 * h);
            let err = (fd - &d).abs().to_f64();
            if err > 0.0 {
                hs.push(-(k as f64));
                es.push(err.log2());
            }
        }
        let (slope, _, _) = fit_line(&hs, &es);
        assert!(slope >= 1.9, "central difference order {slope}");
    }

    #[test]
    fn piecewise_knot_check() {
        // Smooth splice: same cubic on both sides passes.
        let p = Precision::DOUBLE;
        let left = (
            RInterval::from_f64(0.0, 0.5),
            Expr::parse("x^3 - x", p).unwrap(),
        );
        let right = (
            RInterval::from_f64(0.5, 1.0),
            Expr::parse("x^3 - x", p).unwrap(),
        );
        assert!(MapSpec::from_pieces(
            "splice",
            MapDomain::Interval(RInterval::from_f64(0.0, 1.0)),
            vec![left, right],
            vec![],
            p,
            true
        )
        .is_ok());
        // Tent map fails C3 unless declared non-smooth.
        let l = (RInterval::from_f64(0.0, 0.5), Expr::parse("2*x", p).unwrap());
        let r = (
            RInterval::from_f64(0.5, 1.0),
            Expr::parse("2 - 2*x", p).unwrap(),
        );
        assert!(matches!(
            MapSpec::from_pieces(
                "tent",
                MapDomain::Interval(RInterval::from_f64(0.0, 1.0)),
                vec![l, r],
                vec![],
                p,
                true
            ),
            Err(MapError::KnotMismatch(_, 1, _))
        ));
        let tent = MapSpec::tent(p);
        assert_eq!(tent.f(&Real::from(0.25)).to_f64(), 0.5);
        assert_eq!(tent.f(&Real::from(0.75)).to_f64(), 0.5);
    }

    #[test]
    fn circle_lift_reduction() {
        let p = Precision::DOUBLE;
        // Doubling map lift: F(x) = 2x.
        let m = MapSpec::from_expr(
            "doubling",
            MapDomain::Circle { degree: 2 },
            Expr::parse("2*x", p).unwrap(),
            vec![],
            p,
        )
        .unwrap();
        let y = m.f(&Real::from(0.75));
        assert_eq!(y.to_f64(), 1.5);
        assert_eq!(m.reduce(&y).to_f64(), 0.5);
    }

    #[test]
    fn json_round_trip() {
        let src = r#"{
            "name": "chebyshev",
            "domain": {"type": "interval", "a": -2, "b": 2},
            "expression": "x^2 - 2",
            "critical_points": [{"x": 0, "order": 2}]
        }"#;
        let m = MapSpec::from_json(src, Precision::DOUBLE).unwrap();
        assert_eq!(m.f(&Real::from(0.0)).to_f64(), -2.0);
        let deep = r#"{
            "domain": {"type": "interval", "a": "-2", "b": "2"},
            "expression": "x^2 - 1.999999999999999999999999999",
            "critical_points": [{"x": 0, "order": 2, "parity": "Even"}]
        }"#;
        let m2 = MapSpec::from_json(deep, Precision::OCT).unwrap();
        assert!(m2.f(&Real::with_val(Precision::OCT, 0.0)).to_f64() < -1.9999999);
    }
}
