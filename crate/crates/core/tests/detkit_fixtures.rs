//! Determinant-family regressions against hand-checked fixture values.

use catkit::detkit::{
    det_f64, eval_matrix_det, hadamard_bound, jacobian, symbolic_det, BgStack, IndexString,
};
use catkit::expr::{Binding, Scalar, VectorField};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn swallowtail_field() -> VectorField {
    // (f,g) = (y + x^3 + alpha x + beta, y^2 + x + gamma)
    VectorField::parse(
        "cubic-quadratic",
        &["x", "y"],
        &["alpha", "beta", "gamma"],
        &["y + x^3 + alpha*x + beta", "y^2 + x + gamma"],
    )
    .unwrap()
}

fn butterfly_field() -> VectorField {
    VectorField::parse(
        "double-cubic",
        &["x", "y"],
        &["alpha", "beta", "gamma", "delta"],
        &["y + x^3 + alpha*x + beta", "x + y^3 + gamma*y + delta"],
    )
    .unwrap()
}

/// 1/(3*2^(3/5)), 2^(-4/5), 5/(6*2^(1/5)), -35/(27*2^(4/5)), -5/(6*2^(3/5))
fn swallowtail_point(field: &VectorField) -> Binding {
    let p = |n: &str| field.symbol(n).unwrap();
    let c35 = 2f64.powf(0.6);
    let c45 = 2f64.powf(0.8);
    let c15 = 2f64.powf(0.2);
    Binding::new()
        .with_f64(p("x"), 1.0 / (3.0 * c35))
        .with_f64(p("y"), 1.0 / c45)
        .with_f64(p("alpha"), 5.0 / (6.0 * c15))
        .with_f64(p("beta"), -35.0 / (27.0 * c45))
        .with_f64(p("gamma"), -5.0 / (6.0 * c35))
}

fn rational_binding(field: &VectorField, vals: &[(&str, i64, i64)]) -> Binding {
    let mut b = Binding::new();
    for (name, num, den) in vals {
        b.set(field.symbol(name).unwrap(), Scalar::from_ratio(*num, *den));
    }
    b
}

#[test]
fn jacobian_matches_printed_swallowtail_matrix() {
    let f = swallowtail_field();
    let vars = f.variables().to_vec();
    let j = jacobian(f.components(), &vars);
    // [[alpha + 3x^2, 1], [1, 2y]]
    assert_eq!(j.at(0, 1).to_string(), "1");
    assert_eq!(j.at(1, 0).to_string(), "1");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let b = Binding::new()
            .with_f64(f.symbol("x").unwrap(), rng.random_range(-2.0..2.0))
            .with_f64(f.symbol("y").unwrap(), rng.random_range(-2.0..2.0))
            .with_f64(f.symbol("alpha").unwrap(), rng.random_range(-2.0..2.0));
        let x = b.get_f64(f.symbol("x").unwrap()).unwrap();
        let y = b.get_f64(f.symbol("y").unwrap()).unwrap();
        let a = b.get_f64(f.symbol("alpha").unwrap()).unwrap();
        assert!((j.at(0, 0).evaluate(&b).unwrap() - (a + 3.0 * x * x)).abs() < 1e-12);
        assert!((j.at(1, 1).evaluate(&b).unwrap() - 2.0 * y).abs() < 1e-12);
    }
}

#[test]
fn b_chain_matches_printed_swallowtail_expressions() {
    // B1 = -1 + 2 alpha y + 6 x^2 y ; B2 = 24 x y^2 - 6 x^2 - 2 alpha ;
    // B3 = 24 y (2 y^2 - 3 x). Agreement checked exactly at 50 random
    // rational points.
    let f = swallowtail_field();
    let mut stack = BgStack::new(f.clone());
    let b1 = stack.b_canonical(1).unwrap();
    let b2 = stack.b_canonical(2).unwrap();
    let b3 = stack.b_canonical(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let mut draws = Vec::new();
        for name in ["x", "y", "alpha", "beta", "gamma"] {
            draws.push((name, rng.random_range(-40i64..40), rng.random_range(1i64..12)));
        }
        let b = rational_binding(&f, &draws);
        let get = |n: &str| {
            b.get(f.symbol(n).unwrap())
                .unwrap()
                .as_rational()
                .unwrap()
                .clone()
        };
        let (x, y, a) = (get("x"), get("y"), get("alpha"));
        let r = |v: i64| num::BigRational::from_integer(v.into());
        let e1 = r(-1) + r(2) * &a * &y + r(6) * &x * &x * &y;
        let e2 = r(24) * &x * &y * &y - r(6) * &x * &x - r(2) * &a;
        let e3 = r(24) * &y * (r(2) * &y * &y - r(3) * &x);
        assert_eq!(b1.evaluate_exact(&b).unwrap(), e1);
        assert_eq!(b2.evaluate_exact(&b).unwrap(), e2);
        assert_eq!(b3.evaluate_exact(&b).unwrap(), e3);
    }
}

#[test]
fn b3_value_at_unit_point() {
    // B3 = 24 y (2y^2 - 3x) -> 24 * (2 - 3) = -24 at (1,1)
    let f = swallowtail_field();
    let mut stack = BgStack::new(f.clone());
    let b3 = stack.b_canonical(3).unwrap();
    let b = rational_binding(&f, &[("x", 1, 1), ("y", 1, 1), ("alpha", 0, 1)]);
    assert_eq!(b3.evaluate_exact(&b).unwrap(), num::BigRational::from_integer((-24).into()));
}

#[test]
fn symbolic_det_identity_and_fold_entries() {
    // identity 3x3 -> 1
    let one = catkit::expr::Expr::int(1);
    let zero = catkit::expr::Expr::int(0);
    let m = catkit::detkit::ExprMatrix::from_rows(
        vec![
            vec![one, zero, zero],
            vec![zero, one, zero],
            vec![zero, zero, one],
        ],
        vec!["a".into(), "b".into(), "c".into()],
        vec!["x".into(), "y".into(), "z".into()],
    );
    assert_eq!(symbolic_det(&m).unwrap().to_string(), "1");

    // [[2x, -1], [0, 1]] -> 2x (simple fold Jacobian)
    let f = VectorField::parse("fold", &["x", "y"], &["alpha"], &["x^2 - y", "y - alpha"]).unwrap();
    let vars = f.variables().to_vec();
    let j = jacobian(f.components(), &vars);
    let det = symbolic_det(&j).unwrap();
    let two_x = catkit::expr::Expr::int(2) * catkit::expr::Expr::sym(f.symbol("x").unwrap());
    assert_eq!(det, two_x);
}

#[test]
fn whitney_jacobian_matches_printed_rows() {
    // (f,g,h) = (x^2 + 2zx + gamma y^2, y - beta, z - alpha)
    // rows (2x+2z, 2 gamma y, 2x), (0,1,0), (0,0,1)
    let f = VectorField::parse(
        "whitney",
        &["x", "y", "z"],
        &["alpha", "beta", "gamma"],
        &["x^2 + 2*z*x + gamma*y^2", "y - beta", "z - alpha"],
    )
    .unwrap();
    let vars = f.variables().to_vec();
    let j = jacobian(f.components(), &vars);
    for (i, jcol, expect) in [
        (1usize, 0usize, "0"),
        (1, 1, "1"),
        (1, 2, "0"),
        (2, 0, "0"),
        (2, 1, "0"),
        (2, 2, "1"),
    ] {
        assert_eq!(j.at(i, jcol).to_string(), expect);
    }
    let b = rational_binding(&f, &[("x", 3, 1), ("y", 5, 1), ("z", 7, 1), ("gamma", 2, 1)]);
    assert_eq!(j.at(0, 0).evaluate(&b).unwrap(), 20.0); // 2x + 2z
    assert_eq!(j.at(0, 1).evaluate(&b).unwrap(), 20.0); // 2 gamma y
    assert_eq!(j.at(0, 2).evaluate(&b).unwrap(), 6.0); // 2x
}

#[test]
fn g_values_exact_for_simple_cusp() {
    // (f,g,h) = (y + x^3 + alpha x + beta, y + k z, z): the three G_2
    // determinants evaluate to -6, 6, -6k (here k = 5).
    let f = VectorField::parse(
        "simple-cusp",
        &["x", "y", "z"],
        &["alpha", "beta", "k"],
        &["y + x^3 + alpha*x + beta", "y + k*z", "z"],
    )
    .unwrap();
    let mut stack = BgStack::new(f.clone());
    let free = vec![f.symbol("alpha").unwrap(), f.symbol("beta").unwrap()];
    let b = rational_binding(
        &f,
        &[("x", 0, 1), ("y", 0, 1), ("z", 0, 1), ("alpha", 0, 1), ("beta", 0, 1), ("k", 5, 1)],
    );
    let expected = [(-6i64, 1u8), (6, 2), (-30, 3)];
    for (want, idx) in expected {
        let ev = stack
            .eval_g(2, &IndexString::new(vec![idx]), &free, &b)
            .unwrap();
        assert_eq!(
            ev.value.as_rational().unwrap(),
            &num::BigRational::from_integer(want.into()),
            "G_2,{idx}"
        );
    }
}

#[test]
fn g_sweep_swallowtail_values() {
    // G_3,11 = 720, G_3,12 = -360*2^(4/5), G_3,21 = 360*2^(3/5),
    // G_3,22 = -360*2^(2/5)
    let f = swallowtail_field();
    let mut stack = BgStack::new(f.clone());
    let free: Vec<_> = f.parameters().to_vec();
    let b = swallowtail_point(&f);
    let expect = [
        (vec![1u8, 1], 720.0),
        (vec![1, 2], -360.0 * 2f64.powf(0.8)),
        (vec![2, 1], 360.0 * 2f64.powf(0.6)),
        (vec![2, 2], -360.0 * 2f64.powf(0.4)),
    ];
    for (idx, want) in expect {
        let ev = stack
            .eval_g(3, &IndexString::new(idx.clone()), &free, &b)
            .unwrap();
        let got = ev.value.to_f64();
        assert!(
            (got - want).abs() <= 1e-8 * want.abs(),
            "G_3,{idx:?}: got {got}, want {want}"
        );
    }
}

#[test]
fn butterfly_g_values_exact_in_rational_mode() {
    let f = butterfly_field();
    let mut stack = BgStack::new(f.clone());
    let free: Vec<_> = f.parameters().to_vec();
    for sign in [1i64, -1] {
        let b = rational_binding(
            &f,
            &[
                ("x", sign, 3),
                ("y", sign, 3),
                ("alpha", 2, 3),
                ("gamma", 2, 3),
                ("beta", -16 * sign, 27),
                ("delta", -16 * sign, 27),
            ],
        );
        for idx in IndexString::all(2, 3) {
            let ev = stack.eval_g(4, &idx, &free, &b).unwrap();
            let v = ev.value.as_rational().expect("rational mode");
            let abs = if v < &num::BigRational::from_integer(0.into()) {
                -v.clone()
            } else {
                v.clone()
            };
            assert_eq!(
                abs,
                num::BigRational::from_integer(103680.into()),
                "G_4,{idx} at sign {sign}"
            );
        }
    }
}

#[test]
fn degenerate_parameter_gives_zero_g_column() {
    // a parameter absent from all components -> last column zero, det 0
    let f = VectorField::parse("degen", &["x"], &["mu"], &["x^2 - 1"]).unwrap();
    let mut stack = BgStack::new(f.clone());
    let free = vec![f.symbol("mu").unwrap()];
    let b = rational_binding(&f, &[("x", 1, 1), ("mu", 3, 1)]);
    let ev = stack.eval_g(1, &IndexString::empty(), &free, &b).unwrap();
    assert!(ev.value.is_zero());
}

#[test]
fn symbolic_det_agrees_with_lu_on_random_bindings() {
    let f = butterfly_field();
    let mut stack = BgStack::new(f.clone());
    let m = stack
        .g_matrix(2, &IndexString::new(vec![2]), &f.parameters()[..2].to_vec())
        .unwrap();
    let det = catkit::detkit::symbolic_det(&m).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..25 {
        let mut b = Binding::new();
        for s in f.all_symbols() {
            b.set_f64(s, rng.random_range(-2.0..2.0));
        }
        let sym = det.evaluate(&b).unwrap();
        let num = det_f64(&m.evaluate_f64(&b).unwrap());
        assert!(
            (sym - num).abs() <= 1e-9 * (1.0 + sym.abs()),
            "sym {sym} vs LU {num}"
        );
    }
}

#[test]
fn index_string_covanishing_at_swallowtail() {
    // wherever the canonical chain vanishes, every index-string variant
    // vanishes too (scaled)
    let f = swallowtail_field();
    let mut stack = BgStack::new(f.clone());
    let b = swallowtail_point(&f);
    for s in 1..=3usize {
        for idx in IndexString::all(2, s - 1) {
            let ev = stack.eval_b(s, &idx, &b).unwrap();
            assert!(
                ev.scaled() <= 1e-6,
                "B_{s},{idx} scaled {} at swallowtail",
                ev.scaled()
            );
        }
    }
}

#[test]
fn hadamard_bound_is_product_of_row_norms() {
    let m = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 0.0, 2.0]);
    assert!((hadamard_bound(&m) - 10.0).abs() < 1e-12);
}

#[test]
fn primary_form_reduces_to_scaled_derivatives() {
    // F = (phi(x1) + k.x, lambda_2 x_2, ..., lambda_n x_n) gives
    // B_s = (lambda_2...lambda_n)^s phi^(s)(x1); fixed instance n=3,
    // phi = x1^4, lambda = (2,3): B_r = 6^r phi^(r).
    let f = VectorField::parse(
        "primary",
        &["x1", "x2", "x3"],
        &[],
        &["x1^4 + 1*x2 + 1*x3", "2*x2", "3*x3"],
    )
    .unwrap();
    let mut stack = BgStack::new(f.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let x1: f64 = rng.random_range(-2.0..2.0);
        let b = Binding::new()
            .with_f64(f.symbol("x1").unwrap(), x1)
            .with_f64(f.symbol("x2").unwrap(), rng.random_range(-2.0..2.0))
            .with_f64(f.symbol("x3").unwrap(), rng.random_range(-2.0..2.0));
        let phi = [
            4.0 * x1.powi(3),
            12.0 * x1.powi(2),
            24.0 * x1,
        ];
        for r in 1..=3usize {
            let got = stack.eval_b_canonical(r, &b).unwrap().value_f64();
            let want = 6f64.powi(r as i32) * phi[r - 1];
            assert!(
                (got - want).abs() <= 1e-10 * (1.0 + want.abs()),
                "B_{r} at x1={x1}: got {got}, want {want}"
            );
        }
    }
}

#[test]
fn rebuilding_stack_yields_identical_dag_ids() {
    let f = swallowtail_field();
    let mut s1 = BgStack::new(f.clone());
    let mut s2 = BgStack::new(f);
    let a = s1.b_canonical(3).unwrap();
    let b = s2.b_canonical(3).unwrap();
    assert_eq!(a.id(), b.id());
}

#[test]
fn g_matrix_dimensions_and_labels() {
    let f = swallowtail_field();
    let mut stack = BgStack::new(f.clone());
    let m = stack
        .g_matrix(3, &IndexString::new(vec![1, 2]), &f.parameters().to_vec())
        .unwrap();
    assert_eq!(m.nrows(), 5);
    assert_eq!(m.ncols(), 5);
    assert_eq!(m.row_labels()[2], "B1");
    assert_eq!(m.row_labels()[3], "B2,1");
    assert_eq!(m.row_labels()[4], "B3,12");
    assert_eq!(m.col_labels()[2], "alpha");
}

#[test]
fn eval_matrix_det_matches_rational_and_float_paths() {
    let f = swallowtail_field();
    let mut stack = BgStack::new(f.clone());
    let m = stack
        .g_matrix(1, &IndexString::empty(), &f.parameters()[..1].to_vec())
        .unwrap();
    let exact = rational_binding(
        &f,
        &[("x", 1, 2), ("y", 1, 3), ("alpha", 2, 1), ("beta", 0, 1), ("gamma", 1, 1)],
    );
    let ev = eval_matrix_det(&m, &exact).unwrap();
    assert!(ev.value.is_rational());
    let mut floaty = Binding::new();
    for (s, v) in exact.iter() {
        floaty.set_f64(s, v.to_f64());
    }
    let ev2 = eval_matrix_det(&m, &floaty).unwrap();
    assert!(!ev2.value.is_rational());
    assert!((ev.value.to_f64() - ev2.value.to_f64()).abs() < 1e-9);
}
