//! Memoized numeric evaluation over the shared DAG.
//!
//! Each node is evaluated once per pass even when referenced many times,
//! which matters for the determinant chains where minors are heavily shared.
//! The f64 path is the hot loop for Newton iterations; the [`Scalar`] path
//! promotes to float only when a float constant or a function call appears,
//! so purely rational inputs yield exact rational values.

use std::collections::HashMap;

use super::interner::{self, Node};
use super::{Binding, EvalError, Expr, Scalar};

impl Expr {
    /// Floating evaluation with one memoized pass over the DAG.
    pub fn evaluate(self, binding: &Binding) -> Result<f64, EvalError> {
        Ok(eval_many(&[self], binding)?[0])
    }

    /// Evaluation preserving exact rationals where possible.
    pub fn evaluate_scalar(self, binding: &Binding) -> Result<Scalar, EvalError> {
        Ok(eval_many_scalar(&[self], binding)?.pop().unwrap())
    }

    /// Exact rational evaluation; fails with [`EvalError::NotRational`] if a
    /// float constant, a float binding, or a function call is involved.
    pub fn evaluate_exact(self, binding: &Binding) -> Result<num::BigRational, EvalError> {
        match self.evaluate_scalar(binding)? {
            Scalar::Rational(r) => Ok(r),
            Scalar::Float(_) => Err(EvalError::NotRational),
        }
    }
}

/// Evaluate several expressions sharing one memo table.
pub fn eval_many(exprs: &[Expr], binding: &Binding) -> Result<Vec<f64>, EvalError> {
    let g = interner::read();
    let vals: HashMap<u32, f64> = binding
        .iter()
        .map(|(s, v)| (s.0, v.to_f64()))
        .collect();
    let mut memo: HashMap<u32, f64> = HashMap::new();
    exprs
        .iter()
        .map(|e| eval_f64(&g, *e, &vals, &mut memo))
        .collect()
}

fn eval_f64(
    g: &interner::Interner,
    e: Expr,
    vals: &HashMap<u32, f64>,
    memo: &mut HashMap<u32, f64>,
) -> Result<f64, EvalError> {
    if let Some(&v) = memo.get(&e.0) {
        return Ok(v);
    }
    let out = match g.node(e) {
        Node::Const(c) => c.to_f64(),
        Node::Sym(s) => *vals
            .get(&s.0)
            .ok_or_else(|| EvalError::UnboundSymbol(g.symbol_name(*s).to_string()))?,
        Node::Sum(ch) => {
            let mut acc = 0.0;
            for c in ch.iter() {
                acc += eval_f64(g, *c, vals, memo)?;
            }
            acc
        }
        Node::Prod(ch) => {
            let mut acc = 1.0;
            for c in ch.iter() {
                acc *= eval_f64(g, *c, vals, memo)?;
            }
            acc
        }
        Node::Pow(b, n) => {
            let bv = eval_f64(g, *b, vals, memo)?;
            if bv == 0.0 && *n < 0 {
                return Err(EvalError::DivisionByZero);
            }
            bv.powi(*n)
        }
        Node::Quot(a, b) => {
            let av = eval_f64(g, *a, vals, memo)?;
            let bv = eval_f64(g, *b, vals, memo)?;
            if bv == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            av / bv
        }
        Node::Func(f, a) => {
            let av = eval_f64(g, *a, vals, memo)?;
            let out = f.apply(av);
            if out.is_nan() && !av.is_nan() {
                return Err(EvalError::Domain {
                    func: f.name(),
                    arg: av,
                });
            }
            out
        }
    };
    memo.insert(e.0, out);
    Ok(out)
}

/// Evaluate several expressions in [`Scalar`] arithmetic with a shared memo.
pub fn eval_many_scalar(exprs: &[Expr], binding: &Binding) -> Result<Vec<Scalar>, EvalError> {
    let g = interner::read();
    let vals: HashMap<u32, Scalar> = binding.iter().map(|(s, v)| (s.0, v.clone())).collect();
    let mut memo: HashMap<u32, Scalar> = HashMap::new();
    exprs
        .iter()
        .map(|e| eval_scalar(&g, *e, &vals, &mut memo))
        .collect()
}

fn eval_scalar(
    g: &interner::Interner,
    e: Expr,
    vals: &HashMap<u32, Scalar>,
    memo: &mut HashMap<u32, Scalar>,
) -> Result<Scalar, EvalError> {
    if let Some(v) = memo.get(&e.0) {
        return Ok(v.clone());
    }
    let out = match g.node(e) {
        Node::Const(c) => c.clone(),
        Node::Sym(s) => vals
            .get(&s.0)
            .ok_or_else(|| EvalError::UnboundSymbol(g.symbol_name(*s).to_string()))?
            .clone(),
        Node::Sum(ch) => {
            let mut acc = Scalar::zero();
            for c in ch.iter() {
                let v = eval_scalar(g, *c, vals, memo)?;
                acc = acc.add(&v);
            }
            acc
        }
        Node::Prod(ch) => {
            let mut acc = Scalar::one();
            for c in ch.iter() {
                let v = eval_scalar(g, *c, vals, memo)?;
                acc = acc.mul(&v);
            }
            acc
        }
        Node::Pow(b, n) => {
            let bv = eval_scalar(g, *b, vals, memo)?;
            bv.powi(*n).ok_or(EvalError::DivisionByZero)?
        }
        Node::Quot(a, b) => {
            let av = eval_scalar(g, *a, vals, memo)?;
            let bv = eval_scalar(g, *b, vals, memo)?;
            av.div(&bv).ok_or(EvalError::DivisionByZero)?
        }
        Node::Func(f, a) => {
            let av = eval_scalar(g, *a, vals, memo)?;
            let x = av.to_f64();
            let out = f.apply(x);
            if out.is_nan() && !x.is_nan() {
                return Err(EvalError::Domain {
                    func: f.name(),
                    arg: x,
                });
            }
            Scalar::Float(out)
        }
    };
    memo.insert(e.0, out.clone());
    Ok(out)
}
