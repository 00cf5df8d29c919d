//! Closed-form real expressions: parsing, evaluation, exact symbolic
//! derivatives, complex evaluation for polynomial forms, and truncated
//! Taylor (jet) arithmetic for derivatives of high iterates.

use crate::real::{Precision, Real};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    X,
    Const(Real),
    Pi,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, i32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ExprError {
    #[error("parse error at byte {0}: {1}")]
    Parse(usize, String),
    #[error("expression is not a polynomial")]
    NotPolynomial,
}

use Expr::*;

impl Expr {
    pub fn constant(v: f64) -> Expr {
        Const(Real::from(v))
    }

    pub fn eval(&self, x: &Real, prec: Precision) -> Real {
        match self {
            X => x.to_prec(prec),
            Const(c) => c.to_prec(prec),
            Pi => Real::pi(prec),
            Add(a, b) => a.eval(x, prec) + b.eval(x, prec),
            Sub(a, b) => a.eval(x, prec) - b.eval(x, prec),
            Mul(a, b) => a.eval(x, prec) * b.eval(x, prec),
            Div(a, b) => a.eval(x, prec) / b.eval(x, prec),
            Neg(a) => -a.eval(x, prec),
            Pow(a, k) => a.eval(x, prec).powi(*k),
            Sin(a) => a.eval(x, prec).sin(),
            Cos(a) => a.eval(x, prec).cos(),
            Exp(a) => a.eval(x, prec).exp(),
        }
    }

    /// Exact symbolic derivative, lightly simplified.
    pub fn diff(&self) -> Expr {
        match self {
            X => Const(Real::from(1.0)),
            Const(_) | Pi => Const(Real::from(0.0)),
            Add(a, b) => add(a.diff(), b.diff()),
            Sub(a, b) => sub(a.diff(), b.diff()),
            Mul(a, b) => add(
                mul(a.diff(), (**b).clone()),
                mul((**a).clone(), b.diff()),
            ),
            Div(a, b) => Div(
                Box::new(sub(
                    mul(a.diff(), (**b).clone()),
                    mul((**a).clone(), b.diff()),
                )),
                Box::new(Pow(b.clone(), 2)),
            ),
            Neg(a) => neg(a.diff()),
            Pow(a, k) => mul(
                mul(Const(Real::from(*k as f64)), Pow(a.clone(), k - 1)),
                a.diff(),
            ),
            Sin(a) => mul(Cos(a.clone()), a.diff()),
            Cos(a) => neg(mul(Sin(a.clone()), a.diff())),
            Exp(a) => mul(Exp(a.clone()), a.diff()),
        }
    }

    pub fn is_polynomial(&self) -> bool {
        match self {
            X | Const(_) | Pi => true,
            Add(a, b) | Sub(a, b) | Mul(a, b) => a.is_polynomial() && b.is_polynomial(),
            Neg(a) => a.is_polynomial(),
            Pow(a, k) => *k >= 0 && a.is_polynomial(),
            Div(_, _) | Sin(_) | Cos(_) | Exp(_) => false,
        }
    }

    /// Evaluate at a complex point; valid for any expression but used by the
    /// trace machinery only on polynomial forms where the extension is exact.
    pub fn eval_complex(&self, z: Cx) -> Cx {
        match self {
            X => z,
            Const(c) => Cx::new(c.to_f64(), 0.0),
            Pi => Cx::new(std::f64::consts::PI, 0.0),
            Add(a, b) => a.eval_complex(z) + b.eval_complex(z),
            Sub(a, b) => a.eval_complex(z) - b.eval_complex(z),
            Mul(a, b) => a.eval_complex(z) * b.eval_complex(z),
            Div(a, b) => a.eval_complex(z) / b.eval_complex(z),
            Neg(a) => -a.eval_complex(z),
            Pow(a, k) => a.eval_complex(z).powi(*k),
            Sin(a) => a.eval_complex(z).sin(),
            Cos(a) => a.eval_complex(z).cos(),
            Exp(a) => a.eval_complex(z).exp(),
        }
    }

    /// Evaluate on a truncated Taylor series.
    pub fn eval_jet(&self, x: &Jet) -> Jet {
        match self {
            X => x.clone(),
            Const(c) => Jet::constant(c.to_prec(x.prec), x.order(), x.prec),
            Pi => Jet::constant(Real::pi(x.prec), x.order(), x.prec),
            Add(a, b) => a.eval_jet(x).add(&b.eval_jet(x)),
            Sub(a, b) => a.eval_jet(x).sub(&b.eval_jet(x)),
            Mul(a, b) => a.eval_jet(x).mul(&b.eval_jet(x)),
            Div(a, b) => a.eval_jet(x).div(&b.eval_jet(x)),
            Neg(a) => a.eval_jet(x).neg(),
            Pow(a, k) => a.eval_jet(x).powi(*k),
            Sin(a) => a.eval_jet(x).sin(),
            Cos(a) => a.eval_jet(x).cos(),
            Exp(a) => a.eval_jet(x).exp(),
        }
    }

    /// Clone with constants re-rounded to the target precision.
    pub fn to_prec(&self, prec: Precision) -> Expr {
        match self {
            X => X,
            Pi => Pi,
            Const(c) => Const(c.to_prec(prec)),
            Add(a, b) => Add(Box::new(a.to_prec(prec)), Box::new(b.to_prec(prec))),
            Sub(a, b) => Sub(Box::new(a.to_prec(prec)), Box::new(b.to_prec(prec))),
            Mul(a, b) => Mul(Box::new(a.to_prec(prec)), Box::new(b.to_prec(prec))),
            Div(a, b) => Div(Box::new(a.to_prec(prec)), Box::new(b.to_prec(prec))),
            Neg(a) => Neg(Box::new(a.to_prec(prec))),
            Pow(a, k) => Pow(Box::new(a.to_prec(prec)), *k),
            Sin(a) => Sin(Box::new(a.to_prec(prec))),
            Cos(a) => Cos(Box::new(a.to_prec(prec))),
            Exp(a) => Exp(Box::new(a.to_prec(prec))),
        }
    }

    pub fn parse(src: &str, prec: Precision) -> Result<Expr, ExprError> {
        Parser {
            src: src.as_bytes(),
            pos: 0,
            prec,
        }
        .parse_all()
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Const(x), _) if x.is_zero() => b,
        (_, Const(y)) if y.is_zero() => a,
        (Const(x), Const(y)) => Const(x + y),
        _ => Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (_, Const(y)) if y.is_zero() => a,
        (Const(x), Const(y)) => Const(x - y),
        _ => Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Const(x), _) if x.is_zero() => Expr::constant(0.0),
        (_, Const(y)) if y.is_zero() => Expr::constant(0.0),
        (Const(x), _) if *x == Real::from(1.0) => b,
        (_, Const(y)) if *y == Real::from(1.0) => a,
        (Const(x), Const(y)) => Const(x * y),
        _ => Mul(Box::new(a), Box::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match &a {
        Const(x) => Const(-x),
        _ => Neg(Box::new(a)),
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    prec: Precision,
}

impl<'a> Parser<'a> {
    fn parse_all(&mut self) -> Result<Expr, ExprError> {
        let e = self.expr()?;
        self.skip_ws();
        if self.pos != self.src.len() {
            return Err(ExprError::Parse(self.pos, "trailing input".into()));
        }
        Ok(e)
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    acc = Add(Box::new(acc), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    acc = Sub(Box::new(acc), Box::new(self.term()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    acc = Mul(Box::new(acc), Box::new(self.factor()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    acc = Div(Box::new(acc), Box::new(self.factor()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Neg(Box::new(self.factor()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let neg_exp = self.peek() == Some(b'-');
            if neg_exp {
                self.pos += 1;
            }
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(ExprError::Parse(self.pos, "integer exponent expected".into()));
            }
            let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            let mut k: i32 = digits
                .parse()
                .map_err(|_| ExprError::Parse(start, "exponent out of range".into()))?;
            if neg_exp {
                k = -k;
            }
            return Ok(Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(ExprError::Parse(self.pos, "expected ')'".into()));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                match name {
                    "x" => Ok(X),
                    "pi" => Ok(Pi),
                    "sin" | "cos" | "exp" => {
                        if self.peek() != Some(b'(') {
                            return Err(ExprError::Parse(self.pos, "expected '('".into()));
                        }
                        self.pos += 1;
                        let arg = self.expr()?;
                        if self.peek() != Some(b')') {
                            return Err(ExprError::Parse(self.pos, "expected ')'".into()));
                        }
                        self.pos += 1;
                        Ok(match name {
                            "sin" => Sin(Box::new(arg)),
                            "cos" => Cos(Box::new(arg)),
                            _ => Exp(Box::new(arg)),
                        })
                    }
                    _ => Err(ExprError::Parse(start, format!("unknown symbol '{name}'"))),
                }
            }
            _ => Err(ExprError::Parse(self.pos, "unexpected end of input".into())),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            if c.is_ascii_digit() || c == b'.' {
                self.pos += 1;
            } else if (c == b'e' || c == b'E')
                && self.pos + 1 < self.src.len()
                && (self.src[self.pos + 1].is_ascii_digit()
                    || self.src[self.pos + 1] == b'-'
                    || self.src[self.pos + 1] == b'+')
            {
                self.pos += 2;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        Real::parse(self.prec, text)
            .map(Const)
            .ok_or_else(|| ExprError::Parse(start, format!("bad number '{text}'")))
    }
}

/// Plain complex double, enough for boundary tracing.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Cx {
    pub re: f64,
    pub im: f64,
}

impl Cx {
    pub fn new(re: f64, im: f64) -> Cx {
        Cx { re, im }
    }

    pub fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn arg(self) -> f64 {
        self.im.atan2(self.re)
    }

    pub fn conj(self) -> Cx {
        Cx::new(self.re, -self.im)
    }

    pub fn powi(self, k: i32) -> Cx {
        let mut acc = Cx::new(1.0, 0.0);
        let mut base = if k < 0 { Cx::new(1.0, 0.0) / self } else { self };
        let mut n = k.unsigned_abs();
        while n > 0 {
            if n & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            n >>= 1;
        }
        acc
    }

    pub fn sin(self) -> Cx {
        Cx::new(
            self.re.sin() * self.im.cosh(),
            self.re.cos() * self.im.sinh(),
        )
    }

    pub fn cos(self) -> Cx {
        Cx::new(
            self.re.cos() * self.im.cosh(),
            -self.re.sin() * self.im.sinh(),
        )
    }

    pub fn exp(self) -> Cx {
        let r = self.re.exp();
        Cx::new(r * self.im.cos(), r * self.im.sin())
    }
}

impl std::ops::Add for Cx {
    type Output = Cx;
    fn add(self, o: Cx) -> Cx {
        Cx::new(self.re + o.re, self.im + o.im)
    }
}

impl std::ops::Sub for Cx {
    type Output = Cx;
    fn sub(self, o: Cx) -> Cx {
        Cx::new(self.re - o.re, self.im - o.im)
    }
}

impl std::ops::Mul for Cx {
    type Output = Cx;
    fn mul(self, o: Cx) -> Cx {
        Cx::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
}

impl std::ops::Div for Cx {
    type Output = Cx;
    fn div(self, o: Cx) -> Cx {
        let d = o.re * o.re + o.im * o.im;
        Cx::new(
            (self.re * o.re + self.im * o.im) / d,
            (self.im * o.re - self.re * o.im) / d,
        )
    }
}

impl std::ops::Neg for Cx {
    type Output = Cx;
    fn neg(self) -> Cx {
        Cx::new(-self.re, -self.im)
    }
}

impl std::ops::Mul<f64> for Cx {
    type Output = Cx;
    fn mul(self, s: f64) -> Cx {
        Cx::new(self.re * s, self.im * s)
    }
}

/// Truncated Taylor series sum c[k] t^k, coefficients at a fixed precision.
#[derive(Clone, Debug)]
pub struct Jet {
    pub c: Vec<Real>,
    pub prec: Precision,
}

impl Jet {
    /// The jet of x0 + t.
    pub fn variable(x0: &Real, order: usize, prec: Precision) -> Jet {
        let mut c = vec![Real::zero(prec); order + 1];
        c[0] = x0.to_prec(prec);
        if order >= 1 {
            c[1] = Real::one(prec);
        }
        Jet { c, prec }
    }

    pub fn constant(v: Real, order: usize, prec: Precision) -> Jet {
        let mut c = vec![Real::zero(prec); order + 1];
        c[0] = v.to_prec(prec);
        Jet { c, prec }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    /// k! * c[k], the k-th derivative.
    pub fn derivative(&self, k: usize) -> Real {
        let mut fact = Real::one(self.prec);
        for i in 2..=k {
            fact = fact * (i as f64);
        }
        &self.c[k] * fact
    }

    fn add(&self, o: &Jet) -> Jet {
        let c = self
            .c
            .iter()
            .zip(&o.c)
            .map(|(a, b)| a + b)
            .collect();
        Jet { c, prec: self.prec }
    }

    fn sub(&self, o: &Jet) -> Jet {
        let c = self
            .c
            .iter()
            .zip(&o.c)
            .map(|(a, b)| a - b)
            .collect();
        Jet { c, prec: self.prec }
    }

    fn neg(&self) -> Jet {
        Jet {
            c: self.c.iter().map(|a| -a).collect(),
            prec: self.prec,
        }
    }

    fn mul(&self, o: &Jet) -> Jet {
        let m = self.order();
        let mut c = vec![Real::zero(self.prec); m + 1];
        for i in 0..=m {
            if self.c[i].is_zero() {
                continue;
            }
            for j in 0..=(m - i) {
                c[i + j] = &c[i + j] + &self.c[i] * &o.c[j];
            }
        }
        Jet { c, prec: self.prec }
    }

    fn div(&self, o: &Jet) -> Jet {
        // Series division: q = self / o, term by term.
        let m = self.order();
        let mut q = vec![Real::zero(self.prec); m + 1];
        for k in 0..=m {
            let mut s = self.c[k].clone();
            for j in 0..k {
                s = s - &q[j] * &o.c[k - j];
            }
            q[k] = s / &o.c[0];
        }
        Jet { c: q, prec: self.prec }
    }

    fn powi(&self, k: i32) -> Jet {
        if k < 0 {
            let one = Jet::constant(Real::one(self.prec), self.order(), self.prec);
            return one.div(&self.powi(-k));
        }
        let mut acc = Jet::constant(Real::one(self.prec), self.order(), self.prec);
        let mut base = self.clone();
        let mut n = k as u32;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            n >>= 1;
        }
        acc
    }

    /// Treat `self` as the Taylor expansion of g at inner.c[0] and return
    /// the truncated series of g ∘ inner.
    pub fn compose_shifted(&self, inner: &Jet) -> Jet {
        inner.compose_scalar(&self.c)
    }

    /// Apply an analytic scalar function given the derivative cycle at c[0].
    /// `derivs[k]` is g^{(k)}(c[0]) / k!.
    fn compose_scalar(&self, taylor: &[Real]) -> Jet {
        let m = self.order();
        // u = self - c[0] is nilpotent; Horner on the polynomial with
        // coefficients `taylor` evaluated at u.
        let mut u = self.clone();
        u.c[0] = Real::zero(self.prec);
        let mut acc = Jet::constant(taylor[m].clone(), m, self.prec);
        for k in (0..m).rev() {
            acc = acc.mul(&u);
            acc.c[0] = &acc.c[0] + &taylor[k];
        }
        acc
    }

    fn sin(&self) -> Jet {
        let m = self.order();
        let (s, c) = (self.c[0].sin(), self.c[0].cos());
        let mut taylor = Vec::with_capacity(m + 1);
        let mut fact = Real::one(self.prec);
        for k in 0..=m {
            if k > 0 {
                fact = fact * (k as f64);
            }
            let d = match k % 4 {
                0 => s.clone(),
                1 => c.clone(),
                2 => -&s,
                _ => -&c,
            };
            taylor.push(d / &fact);
        }
        self.compose_scalar(&taylor)
    }

    fn cos(&self) -> Jet {
        let m = self.order();
        let (s, c) = (self.c[0].sin(), self.c[0].cos());
        let mut taylor = Vec::with_capacity(m + 1);
        let mut fact = Real::one(self.prec);
        for k in 0..=m {
            if k > 0 {
                fact = fact * (k as f64);
            }
            let d = match k % 4 {
                0 => c.clone(),
                1 => -&s,
                2 => -&c,
                _ => s.clone(),
            };
            taylor.push(d / &fact);
        }
        self.compose_scalar(&taylor)
    }

    fn exp(&self) -> Jet {
        let m = self.order();
        let e = self.c[0].exp();
        let mut taylor = Vec::with_capacity(m + 1);
        let mut fact = Real::one(self.prec);
        for k in 0..=m {
            if k > 0 {
                fact = fact * (k as f64);
            }
            taylor.push(&e / &fact);
        }
        self.compose_scalar(&taylor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(src: &str) -> Expr {
        Expr::parse(src, Precision::DOUBLE).unwrap()
    }

    #[test]
    fn parse_and_eval() {
        let e = p("x^2 - 1");
        assert_eq!(e.eval(&Real::from(0.0), Precision::DOUBLE).to_f64(), -1.0);
        assert_eq!(e.eval(&Real::from(3.0), Precision::DOUBLE).to_f64(), 8.0);
        let l = p("4*x*(1 - x)");
        assert_eq!(l.eval(&Real::from(0.5), Precision::DOUBLE).to_f64(), 1.0);
        let s = p("sin(pi*x)");
        assert!((s.eval(&Real::from(0.5), Precision::DOUBLE).to_f64() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn symbolic_derivatives() {
        let e = p("x^2 - 1");
        let d = e.diff();
        assert_eq!(d.eval(&Real::from(1.0), Precision::DOUBLE).to_f64(), 2.0);
        let d2 = d.diff();
        assert_eq!(d2.eval(&Real::from(7.0), Precision::DOUBLE).to_f64(), 2.0);
        let t = p("sin(pi*x)").diff();
        // derivative at 0 is pi
        assert!((t.eval(&Real::from(0.0), Precision::DOUBLE).to_f64() - std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn jets_match_symbolic() {
        let e = p("x + x^3");
        let jet = e.eval_jet(&Jet::variable(&Real::from(0.5), 4, Precision::DOUBLE));
        // f(0.5) = 0.625, f' = 1 + 3x^2 = 1.75, f'' = 6x = 3, f''' = 6
        assert!((jet.derivative(0).to_f64() - 0.625).abs() < 1e-15);
        assert!((jet.derivative(1).to_f64() - 1.75).abs() < 1e-15);
        assert!((jet.derivative(2).to_f64() - 3.0).abs() < 1e-14);
        assert!((jet.derivative(3).to_f64() - 6.0).abs() < 1e-14);
        assert!(jet.derivative(4).to_f64().abs() < 1e-14);
    }

    #[test]
    fn jet_trig_and_division() {
        let e = p("sin(x) / (1 + x^2)");
        let x0 = Real::from(0.3);
        let jet = e.eval_jet(&Jet::variable(&x0, 3, Precision::DOUBLE));
        let h = 1e-5;
        let f = |x: f64| x.sin() / (1.0 + x * x);
        let fd1 = (f(0.3 + h) - f(0.3 - h)) / (2.0 * h);
        assert!((jet.derivative(1).to_f64() - fd1).abs() < 1e-9);
        let fd2 = (f(0.3 + h) - 2.0 * f(0.3) + f(0.3 - h)) / (h * h);
        assert!((jet.derivative(2).to_f64() - fd2).abs() < 1e-5);
    }

    #[test]
    fn complex_polynomial_eval() {
        let e = p("x^2 - 2");
        let z = Cx::new(0.0, 1.0);
        let w = e.eval_complex(z);
        assert!((w.re + 3.0).abs() < 1e-15 && w.im.abs() < 1e-15);
        assert!(e.is_polynomial());
        assert!(!p("sin(x)").is_polynomial());
    }
}
