//! Global hash-cons arena for expression nodes.
//!
//! All construction funnels through the smart constructors on [`Interner`],
//! which enforce the structural invariants: sums/products are flattened and
//! sorted, constants folded, like terms collected, integer powers merged.
//! Construction serializes through one write lock (the interning gate);
//! read-only passes (evaluation, printing) share a read lock.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{OnceLock, RwLock, RwLockReadGuard};

use super::{FieldError, Scalar, Symbol, SymbolKind};

/// Supported elementary functions.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Log,
}

impl Func {
    pub fn name(&self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Log => "log",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "log" => Func::Log,
            _ => return None,
        })
    }

    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Sqrt => x.sqrt(),
            Func::Log => x.ln(),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub(crate) enum Node {
    Const(Scalar),
    Sym(Symbol),
    /// >= 2 children, flattened, sorted by id, at most one leading Const.
    Sum(Box<[Expr]>),
    /// >= 2 children, flattened, sorted by id, at most one leading Const.
    Prod(Box<[Expr]>),
    /// Integer exponent, never 0 or 1.
    Pow(Expr, i32),
    Quot(Expr, Expr),
    Func(Func, Expr),
}

/// Handle to an interned expression. Copyable; equality is DAG identity,
/// which by hash-consing coincides with structural equality.
#[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Expr(pub(crate) u32);

struct SymbolData {
    name: String,
    kind: SymbolKind,
}

pub(crate) struct Interner {
    nodes: Vec<Node>,
    ids: HashMap<Node, u32>,
    symbols: Vec<SymbolData>,
    symbol_ids: HashMap<(String, SymbolKind), u32>,
    diff_cache: HashMap<(u32, u32), u32>,
    zero: u32,
    one: u32,
}

fn global() -> &'static RwLock<Interner> {
    static INTERNER: OnceLock<RwLock<Interner>> = OnceLock::new();
    INTERNER.get_or_init(|| RwLock::new(Interner::new()))
}

pub(crate) fn read() -> RwLockReadGuard<'static, Interner> {
    global().read().unwrap()
}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(crate) fn intern_symbol(name: &str, kind: SymbolKind) -> Result<Symbol, FieldError> {
    if !valid_name(name) {
        return Err(FieldError::InvalidSymbolName(name.to_string()));
    }
    let mut g = global().write().unwrap();
    Ok(Symbol(g.symbol(name, kind)))
}

pub(crate) fn symbol_name(s: Symbol) -> String {
    read().symbols[s.0 as usize].name.clone()
}

pub(crate) fn symbol_kind(s: Symbol) -> SymbolKind {
    read().symbols[s.0 as usize].kind
}

impl Interner {
    fn new() -> Self {
        let mut it = Interner {
            nodes: Vec::new(),
            ids: HashMap::new(),
            symbols: Vec::new(),
            symbol_ids: HashMap::new(),
            diff_cache: HashMap::new(),
            zero: 0,
            one: 0,
        };
        it.zero = it.intern(Node::Const(Scalar::zero()));
        it.one = it.intern(Node::Const(Scalar::one()));
        it
    }

    fn symbol(&mut self, name: &str, kind: SymbolKind) -> u32 {
        if let Some(&id) = self.symbol_ids.get(&(name.to_string(), kind)) {
            return id;
        }
        let id = self.symbols.len() as u32;
        self.symbols.push(SymbolData {
            name: name.to_string(),
            kind,
        });
        self.symbol_ids.insert((name.to_string(), kind), id);
        id
    }

    pub(crate) fn node(&self, e: Expr) -> &Node {
        &self.nodes[e.0 as usize]
    }

    pub(crate) fn symbol_name(&self, s: Symbol) -> &str {
        &self.symbols[s.0 as usize].name
    }

    fn intern(&mut self, node: Node) -> u32 {
        if let Some(&id) = self.ids.get(&node) {
            return id;
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(node.clone());
        self.ids.insert(node, id);
        id
    }

    pub(crate) fn zero(&self) -> Expr {
        Expr(self.zero)
    }

    pub(crate) fn one(&self) -> Expr {
        Expr(self.one)
    }

    pub(crate) fn constant(&mut self, s: Scalar) -> Expr {
        Expr(self.intern(Node::Const(s)))
    }

    pub(crate) fn sym(&mut self, s: Symbol) -> Expr {
        Expr(self.intern(Node::Sym(s)))
    }

    fn const_value(&self, e: Expr) -> Option<&Scalar> {
        match self.node(e) {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    fn is_zero(&self, e: Expr) -> bool {
        e.0 == self.zero
            || matches!(self.node(e), Node::Const(c) if c.is_zero())
    }

    /// Split a term into (coefficient, symbolic core); core `None` for a
    /// pure constant. Used by like-term collection in sums.
    fn split_coeff(&mut self, term: Expr) -> (Scalar, Option<Expr>) {
        match self.node(term).clone() {
            Node::Const(c) => (c, None),
            Node::Prod(children) => {
                let mut coeff = None;
                let mut rest: Vec<Expr> = Vec::with_capacity(children.len());
                for ch in children.iter() {
                    match self.node(*ch) {
                        Node::Const(c) => coeff = Some(c.clone()),
                        _ => rest.push(*ch),
                    }
                }
                match coeff {
                    None => (Scalar::one(), Some(term)),
                    Some(c) => {
                        let core = if rest.len() == 1 {
                            rest[0]
                        } else {
                            // invariant: children sorted, no consts left
                            Expr(self.intern(Node::Prod(rest.into_boxed_slice())))
                        };
                        (c, Some(core))
                    }
                }
            }
            _ => (Scalar::one(), Some(term)),
        }
    }

    pub(crate) fn add(&mut self, terms: &[Expr]) -> Expr {
        let mut flat: Vec<Expr> = Vec::with_capacity(terms.len());
        for t in terms {
            match self.node(*t) {
                Node::Sum(ch) => flat.extend(ch.iter().copied()),
                _ => flat.push(*t),
            }
        }
        // collect like terms keyed by symbolic core
        let mut cores: BTreeMap<Expr, Scalar> = BTreeMap::new();
        let mut const_acc = Scalar::zero();
        for t in flat {
            let (c, core) = self.split_coeff(t);
            match core {
                None => const_acc = const_acc.add(&c),
                Some(k) => match cores.get_mut(&k) {
                    Some(acc) => *acc = acc.add(&c),
                    None => {
                        cores.insert(k, c);
                    }
                },
            }
        }
        let mut rebuilt: Vec<Expr> = Vec::with_capacity(cores.len() + 1);
        for (core, coeff) in cores {
            if coeff.is_zero() {
                continue;
            }
            if coeff.is_one() {
                rebuilt.push(core);
            } else {
                let c = self.constant(coeff);
                rebuilt.push(self.mul(&[c, core]));
            }
        }
        rebuilt.sort();
        if !const_acc.is_zero() {
            rebuilt.insert(0, self.constant(const_acc));
        }
        match rebuilt.len() {
            0 => self.zero(),
            1 => rebuilt[0],
            _ => Expr(self.intern(Node::Sum(rebuilt.into_boxed_slice()))),
        }
    }

    pub(crate) fn mul(&mut self, factors: &[Expr]) -> Expr {
        let mut flat: Vec<Expr> = Vec::with_capacity(factors.len());
        for f in factors {
            match self.node(*f) {
                Node::Prod(ch) => flat.extend(ch.iter().copied()),
                _ => flat.push(*f),
            }
        }
        let mut coeff = Scalar::one();
        let mut powers: BTreeMap<Expr, i64> = BTreeMap::new();
        for f in flat {
            match self.node(f).clone() {
                Node::Const(c) => coeff = coeff.mul(&c),
                Node::Pow(base, n) => *powers.entry(base).or_insert(0) += n as i64,
                _ => *powers.entry(f).or_insert(0) += 1,
            }
        }
        if coeff.is_zero() {
            return self.zero();
        }
        let entries: Vec<(Expr, i64)> = powers.into_iter().filter(|(_, n)| *n != 0).collect();
        let mut rebuilt: Vec<Expr> = Vec::with_capacity(entries.len() + 1);
        for (base, n) in entries {
            let n = i32::try_from(n).expect("exponent overflow");
            if n == 1 {
                rebuilt.push(base);
            } else {
                rebuilt.push(self.pow(base, n));
            }
        }
        // a merged power may itself have folded to a constant
        let mut final_factors: Vec<Expr> = Vec::with_capacity(rebuilt.len());
        for f in rebuilt {
            match self.node(f) {
                Node::Const(c) => coeff = coeff.mul(&c.clone()),
                _ => final_factors.push(f),
            }
        }
        if coeff.is_zero() {
            return self.zero();
        }
        final_factors.sort();
        if final_factors.is_empty() {
            return self.constant(coeff);
        }
        if !coeff.is_one() {
            let c = self.constant(coeff);
            final_factors.insert(0, c);
        }
        match final_factors.len() {
            1 => final_factors[0],
            _ => Expr(self.intern(Node::Prod(final_factors.into_boxed_slice()))),
        }
    }

    pub(crate) fn neg(&mut self, e: Expr) -> Expr {
        let m1 = self.constant(Scalar::from_int(-1));
        self.mul(&[m1, e])
    }

    pub(crate) fn sub(&mut self, a: Expr, b: Expr) -> Expr {
        let nb = self.neg(b);
        self.add(&[a, nb])
    }

    pub(crate) fn pow(&mut self, base: Expr, n: i32) -> Expr {
        if n == 0 {
            return self.one();
        }
        if n == 1 {
            return base;
        }
        match self.node(base).clone() {
            Node::Const(c) => match c.powi(n) {
                Some(v) => self.constant(v),
                // 0^negative: keep the node, evaluation reports the error
                None => Expr(self.intern(Node::Pow(base, n))),
            },
            Node::Pow(b2, m) => {
                let total = (m as i64) * (n as i64);
                let total = i32::try_from(total).expect("exponent overflow");
                self.pow(b2, total)
            }
            Node::Prod(children) => {
                let parts: Vec<Expr> = children.iter().map(|c| self.pow(*c, n)).collect();
                self.mul(&parts)
            }
            Node::Quot(p, q) => {
                if n > 0 {
                    let pn = self.pow(p, n);
                    let qn = self.pow(q, n);
                    self.quot(pn, qn)
                } else {
                    let pn = self.pow(p, -n);
                    let qn = self.pow(q, -n);
                    self.quot(qn, pn)
                }
            }
            _ => Expr(self.intern(Node::Pow(base, n))),
        }
    }

    pub(crate) fn quot(&mut self, num: Expr, den: Expr) -> Expr {
        if num == den && self.const_value(den).is_none() {
            return self.one();
        }
        if let Some(c) = self.const_value(den).cloned() {
            if let Some(r) = c.recip() {
                let rc = self.constant(r);
                return self.mul(&[rc, num]);
            }
            // division by constant zero: keep, evaluation reports it
            return Expr(self.intern(Node::Quot(num, den)));
        }
        if self.is_zero(num) {
            return self.zero();
        }
        if let Node::Quot(p, q) = self.node(num).clone() {
            let d = self.mul(&[q, den]);
            return self.quot(p, d);
        }
        if let Node::Quot(p, q) = self.node(den).clone() {
            let n2 = self.mul(&[num, q]);
            return self.quot(n2, p);
        }
        Expr(self.intern(Node::Quot(num, den)))
    }

    pub(crate) fn func(&mut self, f: Func, arg: Expr) -> Expr {
        match self.node(arg).clone() {
            Node::Const(Scalar::Float(v)) => {
                let out = f.apply(v);
                if out.is_finite() {
                    return self.constant(Scalar::Float(out));
                }
            }
            Node::Const(Scalar::Rational(r)) => {
                use num::traits::{One, Zero};
                if r.is_zero() {
                    match f {
                        Func::Sin | Func::Sqrt => return self.zero(),
                        Func::Cos | Func::Exp => return self.one(),
                        Func::Log => {}
                    }
                } else if r.is_one() {
                    match f {
                        Func::Log => return self.zero(),
                        Func::Sqrt => return self.one(),
                        _ => {}
                    }
                }
            }
            _ => {}
        }
        Expr(self.intern(Node::Func(f, arg)))
    }

    pub(crate) fn diff(&mut self, e: Expr, s: Symbol) -> Expr {
        if let Some(&d) = self.diff_cache.get(&(e.0, s.0)) {
            return Expr(d);
        }
        let out = match self.node(e).clone() {
            Node::Const(_) => self.zero(),
            Node::Sym(sym) => {
                if sym == s {
                    self.one()
                } else {
                    self.zero()
                }
            }
            Node::Sum(children) => {
                let parts: Vec<Expr> = children.iter().map(|c| self.diff(*c, s)).collect();
                self.add(&parts)
            }
            Node::Prod(children) => {
                let mut terms: Vec<Expr> = Vec::new();
                for i in 0..children.len() {
                    let di = self.diff(children[i], s);
                    if self.is_zero(di) {
                        continue;
                    }
                    let mut factors: Vec<Expr> = Vec::with_capacity(children.len());
                    for (j, c) in children.iter().enumerate() {
                        factors.push(if i == j { di } else { *c });
                    }
                    terms.push(self.mul(&factors));
                }
                self.add(&terms)
            }
            Node::Pow(base, n) => {
                let db = self.diff(base, s);
                if self.is_zero(db) {
                    self.zero()
                } else {
                    let c = self.constant(Scalar::from_int(n as i64));
                    let p = self.pow(base, n - 1);
                    self.mul(&[c, p, db])
                }
            }
            Node::Quot(a, b) => {
                let da = self.diff(a, s);
                let db = self.diff(b, s);
                let t1 = self.mul(&[da, b]);
                let t2 = self.mul(&[a, db]);
                let num = self.sub(t1, t2);
                let den = self.pow(b, 2);
                self.quot(num, den)
            }
            Node::Func(f, a) => {
                let da = self.diff(a, s);
                if self.is_zero(da) {
                    self.zero()
                } else {
                    match f {
                        Func::Sin => {
                            let c = self.func(Func::Cos, a);
                            self.mul(&[c, da])
                        }
                        Func::Cos => {
                            let sn = self.func(Func::Sin, a);
                            let n = self.neg(sn);
                            self.mul(&[n, da])
                        }
                        Func::Exp => {
                            let ex = self.func(Func::Exp, a);
                            self.mul(&[ex, da])
                        }
                        Func::Sqrt => {
                            let sq = self.func(Func::Sqrt, a);
                            let two = self.constant(Scalar::from_int(2));
                            let den = self.mul(&[two, sq]);
                            self.quot(da, den)
                        }
                        Func::Log => self.quot(da, a),
                    }
                }
            }
        };
        self.diff_cache.insert((e.0, s.0), out.0);
        out
    }

    /// Bottom-up rebuild through the smart constructors. A no-op on anything
    /// already built through them, which makes the pass idempotent.
    pub(crate) fn resimplify(&mut self, e: Expr, memo: &mut HashMap<u32, Expr>) -> Expr {
        if let Some(&r) = memo.get(&e.0) {
            return r;
        }
        let out = match self.node(e).clone() {
            Node::Const(_) | Node::Sym(_) => e,
            Node::Sum(ch) => {
                let parts: Vec<Expr> = ch.iter().map(|c| self.resimplify(*c, memo)).collect();
                self.add(&parts)
            }
            Node::Prod(ch) => {
                let parts: Vec<Expr> = ch.iter().map(|c| self.resimplify(*c, memo)).collect();
                self.mul(&parts)
            }
            Node::Pow(b, n) => {
                let b2 = self.resimplify(b, memo);
                self.pow(b2, n)
            }
            Node::Quot(a, b) => {
                let a2 = self.resimplify(a, memo);
                let b2 = self.resimplify(b, memo);
                self.quot(a2, b2)
            }
            Node::Func(f, a) => {
                let a2 = self.resimplify(a, memo);
                self.func(f, a2)
            }
        };
        memo.insert(e.0, out);
        out
    }

    fn collect_symbols(&self, e: Expr, seen: &mut BTreeMap<Symbol, ()>, visited: &mut HashMap<u32, ()>) {
        if visited.contains_key(&e.0) {
            return;
        }
        visited.insert(e.0, ());
        match self.node(e) {
            Node::Const(_) => {}
            Node::Sym(s) => {
                seen.insert(*s, ());
            }
            Node::Sum(ch) | Node::Prod(ch) => {
                for c in ch.clone().iter() {
                    self.collect_symbols(*c, seen, visited);
                }
            }
            Node::Pow(b, _) => self.collect_symbols(*b, seen, visited),
            Node::Quot(a, b) => {
                let (a, b) = (*a, *b);
                self.collect_symbols(a, seen, visited);
                self.collect_symbols(b, seen, visited);
            }
            Node::Func(_, a) => self.collect_symbols(*a, seen, visited),
        }
    }

    fn fmt_expr(&self, e: Expr, f: &mut fmt::Formatter<'_>, parent_prec: u8) -> fmt::Result {
        // precedence: sum 1, product/quotient 2, unary minus 2, power 3
        match self.node(e) {
            Node::Const(c) => {
                let negative = match c {
                    Scalar::Rational(r) => r < &num::BigRational::from_integer(0.into()),
                    Scalar::Float(v) => *v < 0.0,
                };
                if negative && parent_prec >= 2 {
                    write!(f, "({})", c)
                } else {
                    write!(f, "{}", c)
                }
            }
            Node::Sym(s) => write!(f, "{}", self.symbol_name(*s)),
            Node::Sum(ch) => {
                let open = parent_prec > 1;
                if open {
                    write!(f, "(")?;
                }
                for (i, c) in ch.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    self.fmt_expr(*c, f, 1)?;
                }
                if open {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Node::Prod(ch) => {
                let open = parent_prec > 2;
                if open {
                    write!(f, "(")?;
                }
                for (i, c) in ch.iter().enumerate() {
                    if i > 0 {
                        write!(f, "*")?;
                    }
                    self.fmt_expr(*c, f, 2)?;
                }
                if open {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Node::Pow(b, n) => {
                self.fmt_expr(*b, f, 3)?;
                if *n < 0 {
                    write!(f, "^({})", n)
                } else {
                    write!(f, "^{}", n)
                }
            }
            Node::Quot(a, b) => {
                let open = parent_prec > 2;
                if open {
                    write!(f, "(")?;
                }
                self.fmt_expr(*a, f, 2)?;
                write!(f, " / ")?;
                self.fmt_expr(*b, f, 3)?;
                if open {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Node::Func(func, a) => {
                write!(f, "{}(", func.name())?;
                self.fmt_expr(*a, f, 0)?;
                write!(f, ")")
            }
        }
    }
}

impl Expr {
    /// Stable DAG identity; equal ids mean structurally equal expressions.
    pub fn id(self) -> u32 {
        self.0
    }

    pub fn constant(s: Scalar) -> Expr {
        global().write().unwrap().constant(s)
    }

    pub fn int(v: i64) -> Expr {
        Expr::constant(Scalar::from_int(v))
    }

    pub fn rational(num: i64, den: i64) -> Expr {
        Expr::constant(Scalar::from_ratio(num, den))
    }

    pub fn float(v: f64) -> Expr {
        Expr::constant(Scalar::Float(v))
    }

    pub fn sym(s: Symbol) -> Expr {
        global().write().unwrap().sym(s)
    }

    pub fn add_all(terms: &[Expr]) -> Expr {
        global().write().unwrap().add(terms)
    }

    pub fn mul_all(factors: &[Expr]) -> Expr {
        global().write().unwrap().mul(factors)
    }

    pub fn powi(self, n: i32) -> Expr {
        global().write().unwrap().pow(self, n)
    }

    pub fn apply(f: Func, arg: Expr) -> Expr {
        global().write().unwrap().func(f, arg)
    }

    pub fn sqrt(self) -> Expr {
        Expr::apply(Func::Sqrt, self)
    }

    /// Exact partial derivative with respect to `s`.
    pub fn differentiate(self, s: Symbol) -> Expr {
        global().write().unwrap().diff(self, s)
    }

    /// Rebuilds the expression through the simplifying constructors.
    /// Idempotent and value-preserving.
    pub fn simplify(self) -> Expr {
        let mut memo = HashMap::new();
        global().write().unwrap().resimplify(self, &mut memo)
    }

    /// The constant value, if this expression is a single constant node.
    pub fn as_constant(self) -> Option<Scalar> {
        match read().node(self) {
            Node::Const(c) => Some(c.clone()),
            _ => None,
        }
    }

    pub fn is_zero_const(self) -> bool {
        read().is_zero(self)
    }

    /// Free symbols, in deterministic (id) order.
    pub fn free_symbols(self) -> Vec<Symbol> {
        let g = read();
        let mut seen = BTreeMap::new();
        let mut visited = HashMap::new();
        g.collect_symbols(self, &mut seen, &mut visited);
        seen.into_keys().collect()
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        read().fmt_expr(*self, f, 0)
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::add_all(&[self, rhs])
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        global().write().unwrap().sub(self, rhs)
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::mul_all(&[self, rhs])
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        global().write().unwrap().quot(self, rhs)
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        global().write().unwrap().neg(self)
    }
}
