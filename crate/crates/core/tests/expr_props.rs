//! Property tests for the expression kernel.
//!
//! The oracle for construction/simplification is a tiny independent recipe
//! interpreter: random recipes are evaluated directly in f64 and compared
//! against the value of the built (and therefore simplified) expression.
//! Derivatives are checked against central finite differences.

use catkit::expr::{Binding, Expr, Symbol, SymbolTable};
use proptest::prelude::*;

#[derive(Clone, Debug)]
enum Recipe {
    Const(i64),
    Var(usize),
    Add(Box<Recipe>, Box<Recipe>),
    Sub(Box<Recipe>, Box<Recipe>),
    Mul(Box<Recipe>, Box<Recipe>),
    Pow(Box<Recipe>, u32),
    Neg(Box<Recipe>),
}

const VARS: [&str; 3] = ["x", "y", "z"];

fn symbols() -> (SymbolTable, Vec<Symbol>) {
    let mut t = SymbolTable::new();
    let syms: Vec<Symbol> = VARS
        .iter()
        .map(|v| {
            let s = Symbol::variable(v);
            let _ = t.insert(s);
            s
        })
        .collect();
    (t, syms)
}

impl Recipe {
    fn build(&self, syms: &[Symbol]) -> Expr {
        match self {
            Recipe::Const(c) => Expr::int(*c),
            Recipe::Var(i) => Expr::sym(syms[*i]),
            Recipe::Add(a, b) => a.build(syms) + b.build(syms),
            Recipe::Sub(a, b) => a.build(syms) - b.build(syms),
            Recipe::Mul(a, b) => a.build(syms) * b.build(syms),
            Recipe::Pow(a, n) => a.build(syms).powi(*n as i32),
            Recipe::Neg(a) => -a.build(syms),
        }
    }

    // direct interpretation, independent of the expression kernel
    fn value(&self, at: &[f64]) -> f64 {
        match self {
            Recipe::Const(c) => *c as f64,
            Recipe::Var(i) => at[*i],
            Recipe::Add(a, b) => a.value(at) + b.value(at),
            Recipe::Sub(a, b) => a.value(at) - b.value(at),
            Recipe::Mul(a, b) => a.value(at) * b.value(at),
            Recipe::Pow(a, n) => a.value(at).powi(*n as i32),
            Recipe::Neg(a) => -a.value(at),
        }
    }
}

fn recipe_strategy() -> impl Strategy<Value = Recipe> {
    let leaf = prop_oneof![
        (-6i64..=6).prop_map(Recipe::Const),
        (0usize..VARS.len()).prop_map(Recipe::Var),
    ];
    leaf.prop_recursive(5, 48, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Recipe::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Recipe::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Recipe::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), 2u32..=4).prop_map(|(a, n)| Recipe::Pow(Box::new(a), n)),
            inner.clone().prop_map(|a| Recipe::Neg(Box::new(a))),
        ]
    })
}

fn binding_for(syms: &[Symbol], at: &[f64]) -> Binding {
    syms.iter()
        .zip(at.iter())
        .map(|(s, v)| (*s, catkit::expr::Scalar::Float(*v)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn construction_preserves_value(recipe in recipe_strategy(),
                                    at in prop::array::uniform3(-2.0f64..2.0)) {
        let (_t, syms) = symbols();
        let e = recipe.build(&syms);
        let want = recipe.value(&at);
        let got = e.evaluate(&binding_for(&syms, &at)).unwrap();
        let tol = 1e-9 * (1.0 + want.abs());
        prop_assert!((got - want).abs() <= tol, "got {got}, want {want}");
    }

    #[test]
    fn simplify_is_idempotent_and_value_preserving(recipe in recipe_strategy(),
                                                   at in prop::array::uniform3(-2.0f64..2.0)) {
        let (_t, syms) = symbols();
        let e = recipe.build(&syms);
        let s = e.simplify();
        prop_assert_eq!(s, s.simplify());
        let b = binding_for(&syms, &at);
        let v0 = e.evaluate(&b).unwrap();
        let v1 = s.evaluate(&b).unwrap();
        prop_assert!((v0 - v1).abs() <= 1e-12 * (1.0 + v0.abs()));
    }

    #[test]
    fn hash_consing_gives_equal_ids(recipe in recipe_strategy()) {
        let (_t, syms) = symbols();
        let a = recipe.build(&syms);
        let b = recipe.build(&syms);
        prop_assert_eq!(a.id(), b.id());
    }

    #[test]
    fn derivative_matches_finite_differences(recipe in recipe_strategy(),
                                             at in prop::array::uniform3(-1.5f64..1.5)) {
        let (_t, syms) = symbols();
        let e = recipe.build(&syms);
        let d = e.differentiate(syms[0]);
        let b = binding_for(&syms, &at);
        let sym_val = d.evaluate(&b).unwrap();
        let h = 1e-5;
        let mut hi = at;
        hi[0] += h;
        let mut lo = at;
        lo[0] -= h;
        let f_hi = e.evaluate(&binding_for(&syms, &hi)).unwrap();
        let f_lo = e.evaluate(&binding_for(&syms, &lo)).unwrap();
        let fd = (f_hi - f_lo) / (2.0 * h);
        // FD error scales with the third-derivative magnitude; normalize by
        // the local value scale of the expression as well
        let scale = 1.0 + sym_val.abs().max(f_hi.abs()).max(f_lo.abs());
        prop_assert!((sym_val - fd).abs() <= 1e-4 * scale,
                     "symbolic {sym_val} vs FD {fd}");
    }

    #[test]
    fn sum_rule_is_structural(ra in recipe_strategy(), rb in recipe_strategy()) {
        let (_t, syms) = symbols();
        let (a, b) = (ra.build(&syms), rb.build(&syms));
        let x = syms[0];
        prop_assert_eq!((a + b).differentiate(x), a.differentiate(x) + b.differentiate(x));
    }

    #[test]
    fn product_rule_holds_numerically(ra in recipe_strategy(), rb in recipe_strategy(),
                                      at in prop::array::uniform3(-1.5f64..1.5)) {
        let (_t, syms) = symbols();
        let (a, b) = (ra.build(&syms), rb.build(&syms));
        let x = syms[0];
        let lhs = (a * b).differentiate(x);
        let rhs = a.differentiate(x) * b + a * b.differentiate(x);
        let bind = binding_for(&syms, &at);
        let (l, r) = (lhs.evaluate(&bind).unwrap(), rhs.evaluate(&bind).unwrap());
        prop_assert!((l - r).abs() <= 1e-9 * (1.0 + l.abs()), "{l} vs {r}");
    }
}

#[test]
fn derivative_fd_check_on_degree_6_polynomials() {
    // the fixed-seed version of the invariant: polynomials of degree <= 6,
    // 20 random points, |symbolic - FD| <= 1e-6 * (1 + |symbolic|)
    use rand::{Rng, SeedableRng};
    let (_t, syms) = symbols();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let coeffs: Vec<i64> = (0..7).map(|_| rng.random_range(-5..=5)).collect();
        let x = Expr::sym(syms[0]);
        let terms: Vec<Expr> = coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| Expr::int(*c) * x.powi(k as i32))
            .collect();
        let poly = Expr::add_all(&terms);
        let d = poly.differentiate(syms[0]);
        for _ in 0..20 {
            let at: f64 = rng.random_range(-1.5..1.5);
            let b = Binding::new().with_f64(syms[0], at);
            let sym_val = d.evaluate(&b).unwrap();
            let h = 1e-5;
            let f = |v: f64| {
                poly.evaluate(&Binding::new().with_f64(syms[0], v)).unwrap()
            };
            let fd = (f(at + h) - f(at - h)) / (2.0 * h);
            assert!(
                (sym_val - fd).abs() <= 1e-6 * (1.0 + sym_val.abs()),
                "deg-6 poly: symbolic {sym_val} vs FD {fd}"
            );
        }
    }
}
