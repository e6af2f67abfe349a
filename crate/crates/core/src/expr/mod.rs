//! Hash-consed symbolic expression DAG.
//!
//! Expressions are immutable and globally interned: structurally equal
//! subtrees always share one node, so [`Expr`] handles compare by identity.
//! Construction goes through simplifying smart constructors (constant
//! folding, flattening, like-term collection), which keeps the determinant
//! chains of [`crate::detkit`] compact without ever expanding polynomials.

mod eval;
mod field;
mod interner;
mod parse;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};

use num::bigint::BigInt;
use num::rational::BigRational;
use num::traits::{One, Signed, ToPrimitive, Zero};

pub use eval::{eval_many, eval_many_scalar};
pub use field::{FieldError, VectorField};
pub use interner::{Expr, Func};
pub use parse::{parse_expr, ParseError, ParseErrorKind, SymbolTable};

/// An exact rational or a binary float constant.
///
/// Rationals stay exact through arithmetic; any operation mixing in a float
/// promotes to float. This is what lets determinant fixtures with rational
/// coordinates be checked exactly while day-to-day numerics run in f64.
#[derive(Clone, Debug)]
pub enum Scalar {
    Rational(BigRational),
    Float(f64),
}

impl Scalar {
    pub fn zero() -> Self {
        Scalar::Rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Scalar::Rational(BigRational::one())
    }

    pub fn from_int(v: i64) -> Self {
        Scalar::Rational(BigRational::from_integer(BigInt::from(v)))
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Scalar::Rational(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn from_f64(v: f64) -> Self {
        Scalar::Float(v)
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Scalar::Rational(r) => r.is_zero(),
            Scalar::Float(f) => *f == 0.0,
        }
    }

    pub fn is_one(&self) -> bool {
        match self {
            Scalar::Rational(r) => r.is_one(),
            Scalar::Float(f) => *f == 1.0,
        }
    }

    pub fn is_rational(&self) -> bool {
        matches!(self, Scalar::Rational(_))
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match self {
            Scalar::Rational(r) => Some(r),
            Scalar::Float(_) => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Rational(r) => r.to_f64().unwrap_or(f64::NAN),
            Scalar::Float(f) => *f,
        }
    }

    /// Exact integer value, if this is a rational with denominator one
    /// (or a float with an exact integral value) fitting in i64.
    pub fn to_integer(&self) -> Option<i64> {
        match self {
            Scalar::Rational(r) if r.is_integer() => r.numer().to_i64(),
            Scalar::Float(f) if f.fract() == 0.0 && f.abs() < 2e18 => Some(*f as i64),
            _ => None,
        }
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn recip(&self) -> Option<Scalar> {
        if self.is_zero() {
            return None;
        }
        Some(match self {
            Scalar::Rational(r) => Scalar::Rational(r.recip()),
            Scalar::Float(f) => Scalar::Float(1.0 / f),
        })
    }

    /// Integer power; `None` for 0 raised to a negative exponent.
    pub fn powi(&self, n: i32) -> Option<Scalar> {
        if n < 0 && self.is_zero() {
            return None;
        }
        Some(match self {
            Scalar::Rational(r) => Scalar::Rational(r.pow(n)),
            Scalar::Float(f) => Scalar::Float(f.powi(n)),
        })
    }

    pub fn neg(&self) -> Scalar {
        match self {
            Scalar::Rational(r) => Scalar::Rational(-r.clone()),
            Scalar::Float(f) => Scalar::Float(-f),
        }
    }

    pub fn add(&self, other: &Scalar) -> Scalar {
        match (self, other) {
            (Scalar::Rational(a), Scalar::Rational(b)) => Scalar::Rational(a + b),
            _ => Scalar::Float(self.to_f64() + other.to_f64()),
        }
    }

    pub fn mul(&self, other: &Scalar) -> Scalar {
        match (self, other) {
            (Scalar::Rational(a), Scalar::Rational(b)) => Scalar::Rational(a * b),
            _ => Scalar::Float(self.to_f64() * other.to_f64()),
        }
    }

    /// Division; `None` on a zero divisor.
    pub fn div(&self, other: &Scalar) -> Option<Scalar> {
        if other.is_zero() {
            return None;
        }
        Some(match (self, other) {
            (Scalar::Rational(a), Scalar::Rational(b)) => Scalar::Rational(a / b),
            _ => Scalar::Float(self.to_f64() / other.to_f64()),
        })
    }
}

impl PartialEq for Scalar {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Scalar::Rational(a), Scalar::Rational(b)) => a == b,
            // bit equality keeps Eq/Hash consistent for interning
            (Scalar::Float(a), Scalar::Float(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }
}

impl Eq for Scalar {}

impl Hash for Scalar {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Scalar::Rational(r) => {
                0u8.hash(state);
                r.hash(state);
            }
            Scalar::Float(f) => {
                1u8.hash(state);
                f.to_bits().hash(state);
            }
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Rational(r) => {
                if r.is_integer() {
                    write!(f, "{}", r.numer())
                } else {
                    write!(f, "{}/{}", r.numer(), r.denom())
                }
            }
            Scalar::Float(v) => write!(f, "{:?}", v),
        }
    }
}

/// Whether a symbol is a state variable or an unfolding parameter.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SymbolKind {
    Variable,
    Parameter,
}

/// Interned symbol handle. Identity is (name, kind); interning the same
/// pair twice yields the same handle.
#[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol(pub(crate) u32);

impl Symbol {
    pub fn new(name: &str, kind: SymbolKind) -> Result<Symbol, FieldError> {
        interner::intern_symbol(name, kind)
    }

    pub fn variable(name: &str) -> Symbol {
        Symbol::new(name, SymbolKind::Variable).expect("invalid symbol name")
    }

    pub fn parameter(name: &str) -> Symbol {
        Symbol::new(name, SymbolKind::Parameter).expect("invalid symbol name")
    }

    pub fn name(&self) -> String {
        interner::symbol_name(*self)
    }

    pub fn kind(&self) -> SymbolKind {
        interner::symbol_kind(*self)
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// Assignment of scalar values to symbols; the evaluation point (x, alpha).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Binding {
    map: BTreeMap<Symbol, Scalar>,
}

impl Binding {
    pub fn new() -> Self {
        Binding::default()
    }

    pub fn set(&mut self, sym: Symbol, value: Scalar) -> &mut Self {
        self.map.insert(sym, value);
        self
    }

    pub fn set_f64(&mut self, sym: Symbol, value: f64) -> &mut Self {
        self.set(sym, Scalar::Float(value))
    }

    pub fn with(mut self, sym: Symbol, value: Scalar) -> Self {
        self.map.insert(sym, value);
        self
    }

    pub fn with_f64(self, sym: Symbol, value: f64) -> Self {
        self.with(sym, Scalar::Float(value))
    }

    pub fn get(&self, sym: Symbol) -> Option<&Scalar> {
        self.map.get(&sym)
    }

    pub fn get_f64(&self, sym: Symbol) -> Option<f64> {
        self.map.get(&sym).map(Scalar::to_f64)
    }

    pub fn contains(&self, sym: Symbol) -> bool {
        self.map.contains_key(&sym)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Symbol, &Scalar)> {
        self.map.iter().map(|(s, v)| (*s, v))
    }

    pub fn symbols(&self) -> impl Iterator<Item = Symbol> + '_ {
        self.map.keys().copied()
    }

    /// True when every bound value is an exact rational.
    pub fn is_rational(&self) -> bool {
        self.map.values().all(Scalar::is_rational)
    }

    /// Union, with entries of `other` overriding entries of `self`.
    pub fn merged(&self, other: &Binding) -> Binding {
        let mut map = self.map.clone();
        for (s, v) in &other.map {
            map.insert(*s, v.clone());
        }
        Binding { map }
    }

    /// Max-norm distance over the given symbols (NaN if any is unbound).
    pub fn distance_max(&self, other: &Binding, over: &[Symbol]) -> f64 {
        let mut d = 0.0f64;
        for s in over {
            match (self.get_f64(*s), other.get_f64(*s)) {
                (Some(a), Some(b)) => d = d.max((a - b).abs()),
                _ => return f64::NAN,
            }
        }
        d
    }
}

impl FromIterator<(Symbol, Scalar)> for Binding {
    fn from_iter<T: IntoIterator<Item = (Symbol, Scalar)>>(iter: T) -> Self {
        Binding {
            map: iter.into_iter().collect(),
        }
    }
}

/// Deterministic ordering helper for f64 coordinate tuples.
pub(crate) fn total_cmp_slices(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            ord => return ord,
        }
    }
    a.len().cmp(&b.len())
}

/// Evaluation failure.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("domain error: {func}({arg}) is undefined")]
    Domain { func: &'static str, arg: f64 },
    #[error("unbound symbol `{0}`")]
    UnboundSymbol(String),
    #[error("expression has no exact rational value (float constant or function call)")]
    NotRational,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(vars: &[&str], params: &[&str]) -> SymbolTable {
        let mut t = SymbolTable::new();
        for v in vars {
            t.insert(Symbol::variable(v)).unwrap();
        }
        for p in params {
            t.insert(Symbol::parameter(p)).unwrap();
        }
        t
    }

    #[test]
    fn parse_single_symbol_is_the_symbol_node() {
        let t = table(&["x"], &[]);
        let e = parse_expr("x", &t).unwrap();
        assert_eq!(e, Expr::sym(t.get("x").unwrap()));
    }

    #[test]
    fn constant_folding_and_cancellation() {
        let t = table(&["x"], &[]);
        let e = parse_expr("2*3 + x - x", &t).unwrap();
        assert_eq!(e.as_constant().unwrap(), Scalar::from_int(6));
    }

    #[test]
    fn swallowtail_component_evaluates() {
        let t = table(&["x", "y"], &["alpha", "beta", "gamma"]);
        let e = parse_expr("y + x^3 + alpha*x + beta", &t).unwrap();
        let b = Binding::new()
            .with_f64(t.get("x").unwrap(), 0.5)
            .with_f64(t.get("y").unwrap(), -1.25)
            .with_f64(t.get("alpha").unwrap(), 2.0)
            .with_f64(t.get("beta").unwrap(), 0.75);
        let want = -1.25 + 0.125 + 2.0 * 0.5 + 0.75;
        assert!((e.evaluate(&b).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn derivative_examples() {
        let t = table(&["x", "y"], &["alpha", "beta", "gamma"]);
        let x = t.get("x").unwrap();
        let y = t.get("y").unwrap();
        let f = parse_expr("y + x^3 + alpha*x + beta", &t).unwrap();
        let expect = parse_expr("3*x^2 + alpha", &t).unwrap();
        assert_eq!(f.differentiate(x), expect);
        assert!(parse_expr("y", &t).unwrap().differentiate(x).is_zero_const());
        let g = parse_expr("y^2 + x + gamma", &t).unwrap();
        assert_eq!(g.differentiate(y), parse_expr("2*y", &t).unwrap());
    }

    #[test]
    fn exact_rational_evaluation() {
        let t = table(&["x"], &["alpha"]);
        let e = parse_expr("3*x^2 + alpha", &t).unwrap();
        let b = Binding::new()
            .with(t.get("x").unwrap(), Scalar::from_ratio(1, 3))
            .with(t.get("alpha").unwrap(), Scalar::from_ratio(2, 3));
        assert_eq!(
            e.evaluate_exact(&b).unwrap(),
            num::BigRational::from_integer(1.into())
        );
        assert_eq!(Expr::int(6).evaluate(&Binding::new()).unwrap(), 6.0);
    }

    #[test]
    fn simplify_identities() {
        let t = table(&["x"], &[]);
        let x = parse_expr("x", &t).unwrap();
        assert_eq!(parse_expr("x*1 + 0", &t).unwrap(), x);
        assert_eq!(
            parse_expr("2*x + 3*x", &t).unwrap(),
            parse_expr("5*x", &t).unwrap()
        );
        // idempotence by identity
        let e = parse_expr("(x + 1)*(x - 1) + x^2/x", &t).unwrap();
        assert_eq!(e.simplify(), e.simplify().simplify());
    }

    #[test]
    fn hash_consing_unifies_construction_orders() {
        let t = table(&["x", "y"], &[]);
        let x = Expr::sym(t.get("x").unwrap());
        let y = Expr::sym(t.get("y").unwrap());
        assert_eq!((x + y).id(), (y + x).id());
        assert_eq!((x * y * x).id(), (x.powi(2) * y).id());
    }

    #[test]
    fn parse_errors_carry_position() {
        let t = table(&["x"], &[]);
        let err = parse_expr("x + \n qq", &t).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UndeclaredSymbol("qq".into()));
        assert_eq!((err.line, err.col), (2, 2));
        let err = parse_expr("x^y", &t).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::UndeclaredSymbol(_)));
        let t2 = table(&["x", "y"], &[]);
        let err = parse_expr("x^y", &t2).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::NonIntegerExponent);
        let err = parse_expr("2 x", &t).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::UnexpectedToken(_)));
        let err = parse_expr("sinh(x)", &t).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::UnknownFunction(_)));
    }

    #[test]
    fn rational_literals_and_negative_exponents() {
        let t = table(&["x"], &[]);
        let e = parse_expr("3/4", &t).unwrap();
        assert_eq!(e.as_constant().unwrap(), Scalar::from_ratio(3, 4));
        let e = parse_expr("x^-2", &t).unwrap();
        let b = Binding::new().with_f64(t.get("x").unwrap(), 2.0);
        assert!((e.evaluate(&b).unwrap() - 0.25).abs() < 1e-15);
        // ^ binds tighter than unary minus
        let e = parse_expr("-2^2", &t).unwrap();
        assert_eq!(e.as_constant().unwrap(), Scalar::from_int(-4));
    }

    #[test]
    fn evaluation_errors() {
        let t = table(&["x"], &[]);
        let x = t.get("x").unwrap();
        let e = parse_expr("1/x", &t).unwrap();
        let b = Binding::new().with_f64(x, 0.0);
        assert_eq!(e.evaluate(&b).unwrap_err(), EvalError::DivisionByZero);
        let e = parse_expr("sqrt(x)", &t).unwrap();
        let b = Binding::new().with_f64(x, -1.0);
        assert!(matches!(e.evaluate(&b).unwrap_err(), EvalError::Domain { .. }));
        let e = parse_expr("x + 1", &t).unwrap();
        assert!(matches!(
            e.evaluate(&Binding::new()).unwrap_err(),
            EvalError::UnboundSymbol(_)
        ));
        // float constants poison exact mode
        let e = parse_expr("0.5*x", &t).unwrap();
        let b = Binding::new().with(x, Scalar::from_int(2));
        assert_eq!(e.evaluate_exact(&b).unwrap_err(), EvalError::NotRational);
    }

    #[test]
    fn functions_parse_and_differentiate() {
        let t = table(&["x"], &[]);
        let x = t.get("x").unwrap();
        let e = parse_expr("sin(x)*exp(x)", &t).unwrap();
        let d = e.differentiate(x);
        let b = Binding::new().with_f64(x, 0.7);
        let want = 0.7f64.cos() * 0.7f64.exp() + 0.7f64.sin() * 0.7f64.exp();
        assert!((d.evaluate(&b).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn field_validation() {
        let err = VectorField::parse("bad", &["x", "y"], &[], &["x"]).unwrap_err();
        assert!(matches!(err, FieldError::NotSquare { .. }));
        let err = VectorField::parse("dup", &["x"], &["x"], &["x"]).unwrap_err();
        assert!(matches!(err, FieldError::DuplicateSymbol(_)));
        let err = VectorField::parse("undecl", &["x"], &[], &["x + q"]).unwrap_err();
        assert!(matches!(err, FieldError::Parse { .. }));
    }
}
