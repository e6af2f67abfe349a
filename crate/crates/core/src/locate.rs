//! Solving and classifying the catastrophe conditions.
//!
//! A codimension-r point satisfies the square augmented system
//! F = 0, B_1 = ... = B_r = 0 in the variables plus r freed parameters.
//! [`newton_solve`] handles the root find (damped Newton with symbolic
//! Jacobian), [`find_catastrophe`] runs multi-seed searches with
//! deduplication, and [`classify_point`] scans the B chain upward at a given
//! point and attaches the full non-degeneracy sweep.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::detkit::{eval_matrix_det, BgStack, DetError, DetEval, IndexString};
use crate::expr::{
    eval_many, total_cmp_slices, Binding, EvalError, Expr, Scalar, Symbol, VectorField,
};

/// Scale-aware zero thresholds. The B/G tests compare |value| against
/// eps * max(hadamard, 1).
#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    pub eps_b: f64,
    pub eps_g: f64,
    pub residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eps_b: 1e-6,
            eps_g: 1e-6,
            residual: 1e-11,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonConfig {
    pub max_iters: usize,
    pub residual_tol: f64,
    /// Line-search backtracking factor.
    pub backtrack: f64,
    /// Smallest accepted damping factor.
    pub min_step: f64,
    /// Abort when the unknown max-norm exceeds this.
    pub diverge_norm: f64,
    /// Largest acceptable Jacobian condition estimate.
    pub max_condition: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            max_iters: 80,
            residual_tol: 1e-11,
            backtrack: 0.5,
            min_step: (2.0f64).powi(-30),
            diverge_norm: 1e6,
            max_condition: 1e14,
        }
    }
}

#[derive(Clone, Debug, thiserror::Error)]
pub enum NewtonError {
    #[error("no convergence after {iters} iterations (residual {residual:.3e})")]
    NoConvergence {
        iters: usize,
        residual: f64,
        last: Vec<f64>,
    },
    #[error("singular Newton Jacobian (condition estimate {cond:.3e})")]
    SingularJacobian { cond: f64, last: Vec<f64> },
    #[error("iteration diverged (max-norm {norm:.3e})")]
    Diverged { norm: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Debug, thiserror::Error)]
pub enum LocateError {
    #[error("free parameters: {0}")]
    BadParameters(String),
    #[error("seed does not bind unknown `{0}`")]
    UnboundSeed(String),
    #[error("not a critical point: max |F_i| = {residual:.3e} exceeds tolerance")]
    NotCriticalPoint { residual: f64 },
    #[error("point does not satisfy the codimension-{codim} conditions (scaled |B_{level}| = {value:.3e})")]
    ConditionsNotMet {
        codim: usize,
        level: usize,
        value: f64,
    },
    #[error(transparent)]
    Det(#[from] DetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Newton(#[from] NewtonError),
}

/// The square (or, for continuation, once-underdetermined) system
/// F = B_1 = ... = B_r = 0 over the variables and freed parameters.
pub struct AugmentedSystem {
    stack: BgStack,
    codim: usize,
    free_params: Vec<Symbol>,
    fixed: Binding,
    equations: Vec<Expr>,
    unknowns: Vec<Symbol>,
    jac: Vec<Expr>, // row-major, len = equations * unknowns
}

impl AugmentedSystem {
    /// `free_params.len()` must be `codim` for a square solve or `codim + 1`
    /// for branch continuation. The remaining parameters must be bound in
    /// `fixed`.
    pub fn new(
        field: VectorField,
        codim: usize,
        free_params: Vec<Symbol>,
        fixed: Binding,
    ) -> Result<Self, LocateError> {
        if free_params.len() != codim && free_params.len() != codim + 1 {
            return Err(LocateError::BadParameters(format!(
                "need {} (or {}) free parameters, got {}",
                codim,
                codim + 1,
                free_params.len()
            )));
        }
        for (i, p) in free_params.iter().enumerate() {
            if !field.parameters().contains(p) {
                return Err(LocateError::BadParameters(format!(
                    "`{}` is not a declared parameter",
                    p.name()
                )));
            }
            if free_params[..i].contains(p) {
                return Err(LocateError::BadParameters(format!(
                    "duplicate free parameter `{}`",
                    p.name()
                )));
            }
        }
        for p in field.parameters() {
            if !free_params.contains(p) && !fixed.contains(*p) {
                return Err(LocateError::BadParameters(format!(
                    "parameter `{}` is neither free nor fixed",
                    p.name()
                )));
            }
        }
        let mut stack = BgStack::new(field);
        let mut equations: Vec<Expr> = stack.field().components().to_vec();
        for s in 1..=codim {
            equations.push(stack.b_canonical(s)?);
        }
        let unknowns: Vec<Symbol> = stack
            .field()
            .variables()
            .iter()
            .chain(free_params.iter())
            .copied()
            .collect();
        let jac: Vec<Expr> = equations
            .iter()
            .flat_map(|e| unknowns.iter().map(|u| e.differentiate(*u)).collect::<Vec<_>>())
            .collect();
        Ok(AugmentedSystem {
            stack,
            codim,
            free_params,
            fixed,
            equations,
            unknowns,
            jac,
        })
    }

    /// Square system with the default free parameters (the first r declared).
    pub fn with_default_params(
        field: VectorField,
        codim: usize,
        fixed: Binding,
    ) -> Result<Self, LocateError> {
        if field.p() < codim {
            return Err(LocateError::BadParameters(format!(
                "codimension {} needs at least {} parameters, field has {}",
                codim, codim, field.p()
            )));
        }
        let free: Vec<Symbol> = field.parameters()[..codim].to_vec();
        AugmentedSystem::new(field, codim, free, fixed)
    }

    pub fn codim(&self) -> usize {
        self.codim
    }

    pub fn unknowns(&self) -> &[Symbol] {
        &self.unknowns
    }

    pub fn free_params(&self) -> &[Symbol] {
        &self.free_params
    }

    pub fn fixed(&self) -> &Binding {
        &self.fixed
    }

    pub fn equations(&self) -> &[Expr] {
        &self.equations
    }

    pub fn field(&self) -> &VectorField {
        self.stack.field()
    }

    pub fn stack_mut(&mut self) -> &mut BgStack {
        &mut self.stack
    }

    /// Merge unknown values into a full evaluation binding.
    pub fn binding_for(&self, unknown_values: &DVector<f64>) -> Binding {
        let mut b = self.fixed.clone();
        for (s, v) in self.unknowns.iter().zip(unknown_values.iter()) {
            b.set_f64(*s, *v);
        }
        b
    }

    pub fn unknown_vector(&self, b: &Binding) -> Result<DVector<f64>, LocateError> {
        let vals: Vec<f64> = self
            .unknowns
            .iter()
            .map(|s| {
                b.get_f64(*s)
                    .ok_or_else(|| LocateError::UnboundSeed(s.name()))
            })
            .collect::<Result<_, _>>()?;
        Ok(DVector::from_vec(vals))
    }

    pub fn residual(&self, b: &Binding) -> Result<DVector<f64>, EvalError> {
        Ok(DVector::from_vec(eval_many(&self.equations, b)?))
    }

    pub fn jacobian_at(&self, b: &Binding) -> Result<DMatrix<f64>, EvalError> {
        let vals = eval_many(&self.jac, b)?;
        Ok(DMatrix::from_row_slice(
            self.equations.len(),
            self.unknowns.len(),
            &vals,
        ))
    }
}

/// Damped Newton on a square augmented system.
///
/// The Jacobian is assembled from symbolic partials; steps are backtracked
/// until the residual 2-norm decreases.
pub fn newton_solve(
    sys: &AugmentedSystem,
    seed: &Binding,
    cfg: &NewtonConfig,
) -> Result<Binding, LocateError> {
    if sys.unknowns.len() != sys.equations.len() {
        return Err(LocateError::BadParameters(
            "system is not square; continuation systems need the arclength constraint".into(),
        ));
    }
    let mut x = sys.unknown_vector(seed)?;
    let mut res = sys.residual(&sys.binding_for(&x))?;
    let mut res_norm = res.norm();
    for iter in 0..cfg.max_iters {
        if res.amax() <= cfg.residual_tol {
            return Ok(sys.binding_for(&x));
        }
        if x.amax() > cfg.diverge_norm {
            return Err(NewtonError::Diverged { norm: x.amax() }.into());
        }
        let jac = sys.jacobian_at(&sys.binding_for(&x))?;
        let svd = jac.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 0.0) || smax / smin > cfg.max_condition {
            return Err(NewtonError::SingularJacobian {
                cond: if smin > 0.0 { smax / smin } else { f64::INFINITY },
                last: x.iter().copied().collect(),
            }
            .into());
        }
        let step = svd
            .solve(&(-&res), 0.0)
            .map_err(|_| NewtonError::SingularJacobian {
                cond: f64::INFINITY,
                last: x.iter().copied().collect(),
            })?;
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda >= cfg.min_step {
            let trial = &x + &step * lambda;
            match sys.residual(&sys.binding_for(&trial)) {
                Ok(r) if r.norm() < res_norm => {
                    x = trial;
                    res = r;
                    res_norm = res.norm();
                    accepted = true;
                    break;
                }
                _ => lambda *= cfg.backtrack,
            }
        }
        if !accepted {
            return Err(NewtonError::NoConvergence {
                iters: iter + 1,
                residual: res.amax(),
                last: x.iter().copied().collect(),
            }
            .into());
        }
    }
    if res.amax() <= cfg.residual_tol {
        return Ok(sys.binding_for(&x));
    }
    Err(NewtonError::NoConvergence {
        iters: cfg.max_iters,
        residual: res.amax(),
        last: x.iter().copied().collect(),
    }
    .into())
}

/// One evaluated non-degeneracy determinant.
#[derive(Clone, Debug)]
pub struct GEntry {
    pub value: Scalar,
    pub scale: f64,
    pub nonzero: bool,
}

/// A located or classified degenerate critical point.
#[derive(Clone, Debug)]
pub struct CatastrophePoint {
    /// Values for all variables and parameters.
    pub point: Binding,
    pub codim: usize,
    /// True when the B chain still vanished at the scan cap, so the true
    /// codimension may be higher.
    pub codim_is_lower_bound: bool,
    /// Fresh max |F_i| at the point.
    pub residual_norm: f64,
    /// Canonical B_1 .. B_{codim+1} with Hadamard scales.
    pub b_values: Vec<DetEval>,
    /// Fullness sweep over all index strings at the reported codimension.
    pub g_report: BTreeMap<IndexString, GEntry>,
    /// Parameters the sweep differentiated against.
    pub g_params: Vec<Symbol>,
    pub full: bool,
    /// Set when a requested codimension-r search escalated because B_{r+1}
    /// also vanished.
    pub escalated_from: Option<usize>,
    pub label: String,
}

/// Thom-style naming for low codimensions.
pub fn codim_label(codim: usize, lower_bound: bool) -> String {
    if lower_bound {
        return format!("codim >= {}", codim);
    }
    match codim {
        0 => "regular critical point".to_string(),
        1 => "fold".to_string(),
        2 => "cusp".to_string(),
        3 => "swallowtail".to_string(),
        4 => "butterfly".to_string(),
        5 => "wigwam".to_string(),
        6 => "star".to_string(),
        r => format!("codim-{}", r),
    }
}

/// Evaluate all n^(r-1) non-degeneracy determinants G_{r,I} at a point.
///
/// Matrices are built sequentially (interner writes), evaluated in parallel.
pub fn fullness_sweep(
    stack: &mut BgStack,
    point: &Binding,
    r: usize,
    free_params: &[Symbol],
    tol: &Tolerances,
) -> Result<BTreeMap<IndexString, GEntry>, LocateError> {
    let n = stack.field().n();
    let strings = IndexString::all(n, r.saturating_sub(1));
    let mut matrices = Vec::with_capacity(strings.len());
    for s in &strings {
        matrices.push(stack.g_matrix(r, s, free_params)?);
    }
    let evals: Vec<Result<DetEval, DetError>> = matrices
        .par_iter()
        .map(|m| eval_matrix_det(m, point))
        .collect();
    let mut out = BTreeMap::new();
    for (s, ev) in strings.into_iter().zip(evals) {
        let ev = ev?;
        let nonzero = ev.scaled() > tol.eps_g;
        out.insert(
            s,
            GEntry {
                value: ev.value,
                scale: ev.hadamard,
                nonzero,
            },
        );
    }
    Ok(out)
}

/// Pick the sweep parameters: prefer the hint, extend with remaining
/// declared parameters in order, truncate to exactly `r`.
fn sweep_params(field: &VectorField, hint: &[Symbol], r: usize) -> Option<Vec<Symbol>> {
    let mut params: Vec<Symbol> = hint.iter().take(r).copied().collect();
    for p in field.parameters() {
        if params.len() >= r {
            break;
        }
        if !params.contains(p) {
            params.push(*p);
        }
    }
    (params.len() == r).then_some(params)
}

/// Scan the canonical B chain upward at `point` and assemble the report.
/// `min_codim` is the codimension the caller has already imposed (0 when
/// classifying a raw point).
fn build_point(
    stack: &mut BgStack,
    point: &Binding,
    min_codim: usize,
    r_max: usize,
    free_hint: &[Symbol],
    tol: &Tolerances,
) -> Result<CatastrophePoint, LocateError> {
    let f_vals = eval_many(stack.field().components(), point)?;
    let residual_norm = f_vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    let mut b_values: Vec<DetEval> = Vec::new();
    let mut codim = 0usize;
    let mut lower_bound = false;
    loop {
        let ev = stack.eval_b_canonical(codim + 1, point)?;
        let zero = ev.is_zero(tol.eps_b);
        b_values.push(ev);
        if !zero {
            break;
        }
        codim += 1;
        if codim >= r_max {
            lower_bound = true;
            break;
        }
    }

    let mut g_report = BTreeMap::new();
    let mut g_params: Vec<Symbol> = Vec::new();
    let mut full = false;
    if codim >= 1 && !lower_bound {
        if let Some(params) = sweep_params(stack.field(), free_hint, codim) {
            g_report = fullness_sweep(stack, point, codim, &params, tol)?;
            g_params = params;
            full = g_report.values().all(|g| g.nonzero);
        }
    }

    let escalated_from = (min_codim > 0 && codim > min_codim).then_some(min_codim);
    Ok(CatastrophePoint {
        point: point.clone(),
        codim,
        codim_is_lower_bound: lower_bound,
        residual_norm,
        b_values,
        g_report,
        g_params,
        full,
        escalated_from,
        label: codim_label(codim, lower_bound),
    })
}

/// Classify a critical point: find the largest r with B_1..B_r vanishing
/// (scale-aware) and B_{r+1} not, then run the fullness sweep.
pub fn classify_point(
    field: &VectorField,
    point: &Binding,
    r_max: usize,
    tol: &Tolerances,
) -> Result<CatastrophePoint, LocateError> {
    let f_vals = eval_many(field.components(), point)?;
    let residual = f_vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let coord_scale = point
        .iter()
        .fold(1.0f64, |a, (_, v)| a.max(v.to_f64().abs()));
    if residual > tol.eps_b * coord_scale {
        return Err(LocateError::NotCriticalPoint { residual });
    }
    let mut stack = BgStack::new(field.clone());
    build_point(&mut stack, point, 0, r_max, &[], tol)
}

/// Result of a multi-seed catastrophe search.
#[derive(Debug)]
pub struct FindOutcome {
    pub points: Vec<CatastrophePoint>,
    /// Human-readable per-seed failures (index, error).
    pub failures: Vec<(usize, String)>,
}

/// Newton dedup radius in unknown space (max-norm).
pub const DEDUP_RADIUS: f64 = 1e-6;

/// Solve F = B_1 = ... = B_r = 0 from every seed, deduplicate converged
/// points, and assess each survivor (B_{r+1}, fullness sweep, escalation
/// when B_{r+1} also vanishes).
pub fn find_catastrophe(
    field: &VectorField,
    codim: usize,
    free_params: Vec<Symbol>,
    fixed: Binding,
    seeds: &[Binding],
    tol: &Tolerances,
    cfg: &NewtonConfig,
) -> Result<FindOutcome, LocateError> {
    if field.p() < codim {
        return Err(LocateError::BadParameters(format!(
            "codimension {} needs p >= {}, field has p = {}",
            codim,
            codim,
            field.p()
        )));
    }
    let mut sys = AugmentedSystem::new(field.clone(), codim, free_params, fixed)?;
    let results: Vec<Result<Binding, LocateError>> = seeds
        .par_iter()
        .map(|seed| newton_solve(&sys, seed, cfg))
        .collect();

    let mut converged: Vec<(Vec<f64>, Binding)> = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(b) => {
                let coords: Vec<f64> = sys
                    .unknowns()
                    .iter()
                    .map(|s| b.get_f64(*s).unwrap())
                    .collect();
                converged.push((coords, b));
            }
            Err(e) => failures.push((i, e.to_string())),
        }
    }
    converged.sort_by(|a, b| total_cmp_slices(&a.0, &b.0));
    let mut unique: Vec<(Vec<f64>, Binding)> = Vec::new();
    'outer: for (coords, b) in converged {
        for (ucoords, _) in &unique {
            let d = coords
                .iter()
                .zip(ucoords.iter())
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            if d <= DEDUP_RADIUS {
                continue 'outer;
            }
        }
        unique.push((coords, b));
    }

    let free_hint = sys.free_params().to_vec();
    let mut points = Vec::with_capacity(unique.len());
    for (_, b) in unique {
        points.push(build_point(
            sys.stack_mut(),
            &b,
            codim,
            codim.max(6) + 2,
            &free_hint,
            tol,
        )?);
    }
    Ok(FindOutcome { points, failures })
}

/// Regular grid of seed bindings over a box in unknown space.
pub fn grid_seeds(unknowns: &[Symbol], lo: &[f64], hi: &[f64], per_axis: usize) -> Vec<Binding> {
    assert_eq!(unknowns.len(), lo.len());
    assert_eq!(unknowns.len(), hi.len());
    assert!(per_axis >= 1);
    let dim = unknowns.len();
    let total = per_axis.pow(dim as u32);
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        let mut b = Binding::new();
        let mut rest = flat;
        for d in 0..dim {
            let i = rest % per_axis;
            rest /= per_axis;
            let frac = if per_axis == 1 {
                0.5
            } else {
                (i as f64 + 0.5) / per_axis as f64
            };
            b.set_f64(unknowns[d], lo[d] + frac * (hi[d] - lo[d]));
        }
        out.push(b);
    }
    out
}
