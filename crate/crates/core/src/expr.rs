//! Expression trees over `z1..zk` and `zeta`.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | '+' unary | power
//! power  := atom ('^' ['-'] integer)?
//! atom   := number | 'i' | 'pi' | var | func '(' expr ')' | '(' expr ')'
//! var    := 'z' | 'z1' .. 'zk' | 'zeta'
//! func   := 'exp' | 'log' | 'atan' | 'sqrt'
//! ```
//!
//! A number immediately followed by `i` (`2i`, `0.5i`) is an imaginary literal.
//! Functions use principal branches; evaluation on a cut is an error.

use crate::ddouble::{Dd, DdComplex};
use crate::error::{At, Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Var {
    /// `z_{i+1}`, zero based.
    Z(usize),
    Zeta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Func {
    Exp,
    Log,
    Atan,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Atan => "atan",
            Func::Sqrt => "sqrt",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Const(Complex64),
    Pi,
    Var(Var),
    Neg(Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, i32),
    Call(Func, Expr),
}

/// Immutable, cheaply clonable expression.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr(Arc<Node>);

/// Number types the evaluator can run in.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_c64(c: Complex64) -> Self;
    fn to_c64(self) -> Complex64;
    fn pi() -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn atan(self) -> Self;
    fn powi(self, n: i32) -> Self;
}

impl Scalar for Complex64 {
    fn from_c64(c: Complex64) -> Self {
        c
    }
    fn to_c64(self) -> Complex64 {
        self
    }
    fn pi() -> Self {
        Complex64::new(std::f64::consts::PI, 0.0)
    }
    fn exp(self) -> Self {
        Complex64::exp(self)
    }
    fn ln(self) -> Self {
        Complex64::ln(self)
    }
    fn sqrt(self) -> Self {
        Complex64::sqrt(self)
    }
    fn atan(self) -> Self {
        Complex64::atan(self)
    }
    fn powi(self, n: i32) -> Self {
        Complex64::powi(&self, n)
    }
}

impl Scalar for DdComplex {
    fn from_c64(c: Complex64) -> Self {
        DdComplex::from(c)
    }
    fn to_c64(self) -> Complex64 {
        Complex64::from(self)
    }
    fn pi() -> Self {
        DdComplex::new(Dd::pi(), Dd::ZERO)
    }
    fn exp(self) -> Self {
        DdComplex::exp(self)
    }
    fn ln(self) -> Self {
        DdComplex::ln(self)
    }
    fn sqrt(self) -> Self {
        DdComplex::sqrt(self)
    }
    fn atan(self) -> Self {
        DdComplex::atan(self)
    }
    fn powi(self, n: i32) -> Self {
        DdComplex::powi(self, n)
    }
}

fn at<S: Scalar>(z: &[S], zeta: S) -> At {
    At { z: z.iter().map(|v| v.to_c64()).collect(), zeta: zeta.to_c64() }
}

/// Relative distance under which a point counts as lying on a branch cut.
const CUT_EPS: f64 = 1e-15;

impl Expr {
    fn new(node: Node) -> Self {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(c: impl Into<Complex64>) -> Self {
        Expr::new(Node::Const(c.into()))
    }

    pub fn real(x: f64) -> Self {
        Expr::constant(Complex64::new(x, 0.0))
    }

    pub fn zero() -> Self {
        Expr::real(0.0)
    }

    pub fn one() -> Self {
        Expr::real(1.0)
    }

    pub fn pi() -> Self {
        Expr::new(Node::Pi)
    }

    pub fn z(i: usize) -> Self {
        Expr::new(Node::Var(Var::Z(i)))
    }

    pub fn zeta() -> Self {
        Expr::new(Node::Var(Var::Zeta))
    }

    pub fn as_const(&self) -> Option<Complex64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    fn is_const(&self, v: f64) -> bool {
        self.as_const() == Some(Complex64::new(v, 0.0))
    }

    pub fn call(f: Func, arg: Expr) -> Self {
        Expr::new(Node::Call(f, arg))
    }

    pub fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Expr::one();
        }
        if n == 1 {
            return self;
        }
        if let Some(c) = self.as_const() {
            if c != Complex64::new(0.0, 0.0) || n > 0 {
                return Expr::constant(c.powi(n));
            }
        }
        if let Node::Pow(base, m) = self.node() {
            if let Some(k) = m.checked_mul(n) {
                return base.clone().powi(k);
            }
        }
        Expr::new(Node::Pow(self, n))
    }

    /// Largest variable index used, plus one (0 if no `z` variable appears).
    pub fn z_arity(&self) -> usize {
        match self.node() {
            Node::Const(_) | Node::Pi => 0,
            Node::Var(Var::Z(i)) => i + 1,
            Node::Var(Var::Zeta) => 0,
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.z_arity(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.z_arity().max(b.z_arity())
            }
        }
    }

    pub fn uses_zeta(&self) -> bool {
        match self.node() {
            Node::Const(_) | Node::Pi | Node::Var(Var::Z(_)) => false,
            Node::Var(Var::Zeta) => true,
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.uses_zeta(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.uses_zeta() || b.uses_zeta()
            }
        }
    }

    pub fn eval(&self, z: &[Complex64], zeta: Complex64) -> Result<Complex64> {
        self.eval_in(z, zeta)
    }

    pub fn eval_extended(&self, z: &[Complex64], zeta: Complex64) -> Result<Complex64> {
        let zd: Vec<DdComplex> = z.iter().map(|&v| DdComplex::from(v)).collect();
        self.eval_in(&zd, DdComplex::from(zeta)).map(Complex64::from)
    }

    /// Evaluate in any [`Scalar`] type, reporting poles, cuts and overflow.
    pub fn eval_in<S: Scalar>(&self, z: &[S], zeta: S) -> Result<S> {
        let v = match self.node() {
            Node::Const(c) => S::from_c64(*c),
            Node::Pi => S::pi(),
            Node::Var(Var::Zeta) => zeta,
            Node::Var(Var::Z(i)) => *z.get(*i).ok_or_else(|| Error::Domain(format!(
                "expression uses z{} but the point has dimension {}",
                i + 1,
                z.len()
            )))?,
            Node::Neg(a) => -a.eval_in(z, zeta)?,
            Node::Add(a, b) => a.eval_in(z, zeta)? + b.eval_in(z, zeta)?,
            Node::Sub(a, b) => a.eval_in(z, zeta)? - b.eval_in(z, zeta)?,
            Node::Mul(a, b) => a.eval_in(z, zeta)? * b.eval_in(z, zeta)?,
            Node::Div(a, b) => {
                let den = b.eval_in(z, zeta)?;
                if den.to_c64() == Complex64::new(0.0, 0.0) {
                    return Err(Error::Pole { what: format!("division by zero in {b}"), at: at(z, zeta) });
                }
                a.eval_in(z, zeta)? / den
            }
            Node::Pow(a, n) => {
                let base = a.eval_in(z, zeta)?;
                if *n < 0 && base.to_c64() == Complex64::new(0.0, 0.0) {
                    return Err(Error::Pole { what: format!("zero base in ({a})^{n}"), at: at(z, zeta) });
                }
                base.powi(*n)
            }
            Node::Call(f, a) => {
                let u = a.eval_in(z, zeta)?;
                let c = u.to_c64();
                match f {
                    Func::Exp => u.exp(),
                    Func::Log | Func::Sqrt => {
                        if c.re < 0.0 && c.im.abs() <= CUT_EPS * c.re.abs() {
                            return Err(Error::BranchCut { func: f.name(), at: at(z, zeta) });
                        }
                        if *f == Func::Log {
                            if c == Complex64::new(0.0, 0.0) {
                                return Err(Error::Pole { what: "log(0)".into(), at: at(z, zeta) });
                            }
                            u.ln()
                        } else {
                            u.sqrt()
                        }
                    }
                    Func::Atan => {
                        if c.re.abs() <= CUT_EPS * c.im.abs() && c.im.abs() >= 1.0 {
                            if (c.im.abs() - 1.0).abs() <= CUT_EPS {
                                return Err(Error::Pole { what: "atan(+-i)".into(), at: at(z, zeta) });
                            }
                            return Err(Error::BranchCut { func: f.name(), at: at(z, zeta) });
                        }
                        u.atan()
                    }
                }
            }
        };
        let c = v.to_c64();
        if !(c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::NonFinite { what: format!("{self}"), at: at(z, zeta) });
        }
        Ok(v)
    }

    /// Symbolic partial derivative with respect to `var`.
    pub fn derivative(&self, var: Var) -> Expr {
        match self.node() {
            Node::Const(_) | Node::Pi => Expr::zero(),
            Node::Var(v) => {
                if *v == var {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Neg(a) => -a.derivative(var),
            Node::Add(a, b) => a.derivative(var) + b.derivative(var),
            Node::Sub(a, b) => a.derivative(var) - b.derivative(var),
            Node::Mul(a, b) => a.derivative(var) * b.clone() + a.clone() * b.derivative(var),
            Node::Div(a, b) => {
                (a.derivative(var) * b.clone() - a.clone() * b.derivative(var)) / b.clone().powi(2)
            }
            Node::Pow(a, n) => Expr::real(*n as f64) * a.clone().powi(n - 1) * a.derivative(var),
            Node::Call(f, a) => {
                let da = a.derivative(var);
                let outer = match f {
                    Func::Exp => self.clone(),
                    Func::Log => Expr::one() / a.clone(),
                    Func::Atan => Expr::one() / (Expr::one() + a.clone().powi(2)),
                    Func::Sqrt => Expr::real(0.5) / self.clone(),
                };
                outer * da
            }
        }
    }

    /// Replace `z_i` by `z_i - shift` (translation of the argument).
    pub fn translate(&self, axis: usize, shift: f64) -> Expr {
        match self.node() {
            Node::Var(Var::Z(i)) if *i == axis => self.clone() - Expr::real(shift),
            Node::Const(_) | Node::Pi | Node::Var(_) => self.clone(),
            Node::Neg(a) => -a.translate(axis, shift),
            Node::Add(a, b) => a.translate(axis, shift) + b.translate(axis, shift),
            Node::Sub(a, b) => a.translate(axis, shift) - b.translate(axis, shift),
            Node::Mul(a, b) => a.translate(axis, shift) * b.translate(axis, shift),
            Node::Div(a, b) => a.translate(axis, shift) / b.translate(axis, shift),
            Node::Pow(a, n) => a.translate(axis, shift).powi(*n),
            Node::Call(f, a) => Expr::call(*f, a.translate(axis, shift)),
        }
    }

    pub fn parse(src: &str) -> Result<Expr> {
        Parser::new(src).parse()
    }

    fn precedence(&self) -> u8 {
        match self.node() {
            Node::Add(..) | Node::Sub(..) => 1,
            Node::Mul(..) | Node::Div(..) => 2,
            Node::Neg(_) => 3,
            Node::Pow(..) => 4,
            Node::Const(c) if c.re != 0.0 && c.im != 0.0 => 1,
            Node::Const(c) if c.re < 0.0 || c.im < 0.0 => 3,
            _ => 5,
        }
    }
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, o: Expr) -> Expr {
        if self.is_const(0.0) {
            return o;
        }
        if o.is_const(0.0) {
            return self;
        }
        if let (Some(a), Some(b)) = (self.as_const(), o.as_const()) {
            return Expr::constant(a + b);
        }
        Expr::new(Node::Add(self, o))
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, o: Expr) -> Expr {
        if o.is_const(0.0) {
            return self;
        }
        if self.is_const(0.0) {
            return -o;
        }
        if let (Some(a), Some(b)) = (self.as_const(), o.as_const()) {
            return Expr::constant(a - b);
        }
        Expr::new(Node::Sub(self, o))
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, o: Expr) -> Expr {
        if self.is_const(0.0) || o.is_const(0.0) {
            return Expr::zero();
        }
        if self.is_const(1.0) {
            return o;
        }
        if o.is_const(1.0) {
            return self;
        }
        if let (Some(a), Some(b)) = (self.as_const(), o.as_const()) {
            return Expr::constant(a * b);
        }
        Expr::new(Node::Mul(self, o))
    }
}

impl Div for Expr {
    type Output = Expr;
    fn div(self, o: Expr) -> Expr {
        if o.is_const(1.0) {
            return self;
        }
        if self.is_const(0.0) && !o.is_const(0.0) {
            return Expr::zero();
        }
        Expr::new(Node::Div(self, o))
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        if let Some(c) = self.as_const() {
            return Expr::constant(-c);
        }
        if let Node::Neg(a) = self.node() {
            return a.clone();
        }
        Expr::new(Node::Neg(self))
    }
}

fn fmt_const(c: Complex64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match (c.re != 0.0, c.im != 0.0) {
        (_, false) => write!(f, "{}", c.re),
        (false, true) => {
            if c.im == 1.0 {
                write!(f, "i")
            } else if c.im == -1.0 {
                write!(f, "-i")
            } else {
                write!(f, "{}i", c.im)
            }
        }
        (true, true) => write!(f, "{}{:+}i", c.re, c.im),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |e: &Expr, min: u8, f: &mut fmt::Formatter<'_>| -> fmt::Result {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self.node() {
            Node::Const(c) => fmt_const(*c, f),
            Node::Pi => write!(f, "pi"),
            Node::Var(Var::Zeta) => write!(f, "zeta"),
            Node::Var(Var::Z(i)) => write!(f, "z{}", i + 1),
            Node::Neg(a) => {
                write!(f, "-")?;
                wrap(a, 3, f)
            }
            Node::Add(a, b) => {
                wrap(a, 1, f)?;
                write!(f, " + ")?;
                wrap(b, 2, f)
            }
            Node::Sub(a, b) => {
                wrap(a, 1, f)?;
                write!(f, " - ")?;
                wrap(b, 2, f)
            }
            Node::Mul(a, b) => {
                wrap(a, 2, f)?;
                write!(f, "*")?;
                wrap(b, 3, f)
            }
            Node::Div(a, b) => {
                wrap(a, 2, f)?;
                write!(f, "/")?;
                wrap(b, 3, f)
            }
            Node::Pow(a, n) => {
                wrap(a, 5, f)?;
                if *n < 0 {
                    write!(f, "^({n})")
                } else {
                    write!(f, "^{n}")
                }
            }
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Expr::parse(&s).map_err(serde::de::Error::custom)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser { src: src.as_bytes(), pos: 0 }
    }

    fn err<T>(&self, pos: usize, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse { column: pos + 1, message: message.into() })
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

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn parse(mut self) -> Result<Expr> {
        if self.peek().is_none() {
            return self.err(self.pos, "empty expression");
        }
        let e = self.expr()?;
        if let Some(c) = self.peek() {
            return self.err(self.pos, format!("unexpected '{}'", c as char));
        }
        Ok(e)
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::new(Node::Add(lhs, self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::new(Node::Sub(lhs, self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::new(Node::Mul(lhs, self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::new(Node::Div(lhs, self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(Expr::new(Node::Neg(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if !self.eat(b'^') {
            return Ok(base);
        }
        let paren = self.eat(b'(');
        let neg = self.eat(b'-');
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err(start, "exponent must be an integer");
        }
        let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
        let n: i32 = match digits.parse() {
            Ok(n) => n,
            Err(_) => return self.err(start, "exponent out of range"),
        };
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'.' | b'e' | b'E') {
            return self.err(self.pos, "exponent must be an integer");
        }
        if paren && !self.eat(b')') {
            return self.err(self.pos, "expected ')' after exponent");
        }
        Ok(Expr::new(Node::Pow(base, if neg { -n } else { n })))
    }

    fn atom(&mut self) -> Result<Expr> {
        let start = match self.peek() {
            Some(_) => self.pos,
            None => return self.err(self.pos, "unexpected end of expression"),
        };
        let c = self.src[start];
        if c == b'(' {
            self.pos += 1;
            let e = self.expr()?;
            if !self.eat(b')') {
                return self.err(self.pos, "expected ')'");
            }
            return Ok(e);
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c.is_ascii_alphabetic() {
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                self.pos += 1;
            }
            let ident = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
            let func = match ident {
                "exp" => Some(Func::Exp),
                "log" => Some(Func::Log),
                "atan" => Some(Func::Atan),
                "sqrt" => Some(Func::Sqrt),
                _ => None,
            };
            if let Some(func) = func {
                if !self.eat(b'(') {
                    return self.err(self.pos, format!("expected '(' after {ident}"));
                }
                let arg = self.expr()?;
                if !self.eat(b')') {
                    return self.err(self.pos, "expected ')'");
                }
                return Ok(Expr::call(func, arg));
            }
            return match ident {
                "i" => Ok(Expr::constant(Complex64::new(0.0, 1.0))),
                "pi" => Ok(Expr::pi()),
                "zeta" => Ok(Expr::zeta()),
                "z" => Ok(Expr::z(0)),
                _ => {
                    if let Some(idx) = ident.strip_prefix('z').and_then(|d| d.parse::<usize>().ok()) {
                        if idx >= 1 {
                            return Ok(Expr::z(idx - 1));
                        }
                    }
                    self.err(start, format!("unknown identifier '{ident}'"))
                }
            };
        }
        self.err(start, format!("unexpected '{}'", c as char))
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let n = self.src.len();
        while self.pos < n && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < n && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < n && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < n && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if digits == self.pos {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
        let value: f64 = match text.parse() {
            Ok(v) => v,
            Err(_) => return self.err(start, format!("malformed number '{text}'")),
        };
        // imaginary literal such as 2i
        if self.pos < n
            && self.src[self.pos] == b'i'
            && !self.src.get(self.pos + 1).is_some_and(|c| c.is_ascii_alphanumeric())
        {
            self.pos += 1;
            return Ok(Expr::constant(Complex64::new(0.0, value)));
        }
        Ok(Expr::real(value))
    }
}
