//! Pseudo-arclength continuation of codimension-r catastrophe sets.
//!
//! The traced system is F = B_1 = ... = B_r = 0 with r+1 freed parameters
//! (n+r equations, n+r+1 unknowns), so branches round parameter turning
//! points. Each accepted sample logs B_{r+1}; a sign change triggers
//! bisection refinement followed by a full codimension-(r+1) solve with the
//! extra parameter freed, rediscovering higher catastrophes along the set.

use nalgebra::{DMatrix, DVector};

use crate::detkit::{DetError, DetEval, IndexString};
use crate::expr::{Binding, EvalError, Symbol};
use crate::locate::{
    fullness_sweep, newton_solve, AugmentedSystem, CatastrophePoint, LocateError, NewtonConfig,
    Tolerances, codim_label,
};

#[derive(Clone, Copy, Debug)]
pub struct StepControl {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub grow: f64,
    pub shrink: f64,
    /// Corrector iteration count under which the step grows.
    pub easy_iters: usize,
    pub max_samples: usize,
    /// Corrector iteration cap per step.
    pub corrector_iters: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            initial_step: 0.01,
            min_step: 1e-6,
            max_step: 0.25,
            grow: 1.5,
            shrink: 0.5,
            easy_iters: 3,
            max_samples: 400,
            corrector_iters: 12,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BranchSample {
    pub point: Binding,
    /// Residuals of the traced equations (F then B_1..B_r).
    pub residuals: Vec<f64>,
    /// Canonical B_{r+1} at the sample.
    pub monitor: DetEval,
    pub arclength: f64,
}

#[derive(Clone, Debug)]
pub struct BranchEvent {
    /// Index of the sample just after the sign change.
    pub sample_index: usize,
    pub point: CatastrophePoint,
}

#[derive(Debug)]
pub struct Branch {
    pub codim: usize,
    pub unknowns: Vec<Symbol>,
    pub samples: Vec<BranchSample>,
    pub events: Vec<BranchEvent>,
    /// Reason the branch stopped before `max_samples`, if it did.
    pub truncated: Option<String>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

#[derive(Clone, Debug, thiserror::Error)]
pub enum TraceError {
    #[error("augmented Jacobian is rank deficient at the start point")]
    RankDeficientStart,
    #[error("start point does not satisfy the branch system (residual {0:.3e})")]
    BadStart(f64),
    #[error(transparent)]
    Locate(#[from] LocateError),
    #[error(transparent)]
    Det(#[from] DetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Unit tangent: null direction of the (n+r) x (n+r+1) augmented Jacobian.
///
/// The sign is canonicalized so the largest-magnitude entry is positive;
/// callers flip it to continue a heading. Errors if the Jacobian drops rank
/// (smallest retained singular value below 1e-10 times the largest).
pub fn tangent(sys: &AugmentedSystem, at: &Binding) -> Result<DVector<f64>, TraceError> {
    let jac = sys.jacobian_at(at)?;
    let (rows, cols) = (jac.nrows(), jac.ncols());
    debug_assert_eq!(cols, rows + 1);
    let svd = jac.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax.max(1.0)) {
        return Err(TraceError::RankDeficientStart);
    }
    let vt = svd.v_t.as_ref().expect("svd with vectors");
    // nalgebra's thin SVD of an m x (m+1) matrix keeps m right-singular
    // vectors; recover the null direction by orthogonalizing against them.
    let mut null = DVector::zeros(cols);
    if vt.nrows() == cols {
        null.copy_from(&vt.row(cols - 1).transpose());
    } else {
        // start from the coordinate axis least represented in the row space
        let mut best_axis = 0;
        let mut best_norm = f64::INFINITY;
        for axis in 0..cols {
            let mut col_norm = 0.0;
            for r in 0..vt.nrows() {
                col_norm += vt[(r, axis)] * vt[(r, axis)];
            }
            if col_norm < best_norm {
                best_norm = col_norm;
                best_axis = axis;
            }
        }
        null[best_axis] = 1.0;
        for r in 0..vt.nrows() {
            let row = vt.row(r).transpose();
            let proj = null.dot(&row);
            null -= row * proj;
        }
        let norm = null.norm();
        if !(norm > 1e-12) {
            return Err(TraceError::RankDeficientStart);
        }
        null /= norm;
    }
    // canonical sign: largest-magnitude component positive
    let mut imax = 0;
    for i in 0..cols {
        if null[i].abs() > null[imax].abs() {
            imax = i;
        }
    }
    if null[imax] < 0.0 {
        null = -null;
    }
    Ok(null)
}

/// Corrector: Newton on the branch equations plus the arclength hyperplane
/// through `anchor` orthogonal to `dir`. Returns (solution, iterations).
fn correct(
    sys: &AugmentedSystem,
    start: &DVector<f64>,
    anchor: &DVector<f64>,
    dir: &DVector<f64>,
    cfg: &NewtonConfig,
    iters: usize,
) -> Option<(DVector<f64>, usize)> {
    let n_eq = sys.equations().len();
    let dim = sys.unknowns().len();
    let mut x = start.clone();
    for it in 0..iters {
        let b = sys.binding_for(&x);
        let res = sys.residual(&b).ok()?;
        let constraint = dir.dot(&(&x - anchor));
        let res_norm = res.amax().max(constraint.abs());
        if res_norm <= cfg.residual_tol {
            return Some((x, it));
        }
        let jac = sys.jacobian_at(&b).ok()?;
        let mut full = DMatrix::zeros(n_eq + 1, dim);
        full.view_mut((0, 0), (n_eq, dim)).copy_from(&jac);
        for c in 0..dim {
            full[(n_eq, c)] = dir[c];
        }
        let mut rhs = DVector::zeros(n_eq + 1);
        for r in 0..n_eq {
            rhs[r] = -res[r];
        }
        rhs[n_eq] = -constraint;
        let step = full.lu().solve(&rhs)?;
        if !step.iter().all(|v| v.is_finite()) {
            return None;
        }
        x += step;
        if x.amax() > cfg.diverge_norm {
            return None;
        }
    }
    None
}

/// Continue a codimension-r branch from `start`.
///
/// `sys` must have r+1 free parameters. `orientation` (+-1) picks the
/// initial heading relative to the canonical tangent sign.
pub fn continue_branch(
    sys: &mut AugmentedSystem,
    start: &Binding,
    orientation: f64,
    ctrl: &StepControl,
    tol: &Tolerances,
    detect_events: bool,
) -> Result<Branch, TraceError> {
    let r = sys.codim();
    let cfg = NewtonConfig {
        residual_tol: tol.residual.max(1e-12),
        ..NewtonConfig::default()
    };
    let monitor_index = IndexString::canonical(r);

    let mut u = sys.unknown_vector(start)?;
    // polish the start onto the branch along the hyperplane through it
    let t0 = tangent(sys, &sys.binding_for(&u))?;
    if let Some((polished, _)) = correct(sys, &u, &u.clone(), &t0, &cfg, ctrl.corrector_iters) {
        u = polished;
    } else {
        let res = sys.residual(&sys.binding_for(&u))?;
        if res.amax() > 1e-6 {
            return Err(TraceError::BadStart(res.amax()));
        }
    }

    let mut branch = Branch {
        codim: r,
        unknowns: sys.unknowns().to_vec(),
        samples: Vec::new(),
        events: Vec::new(),
        truncated: None,
        accepted_steps: 0,
        rejected_steps: 0,
    };

    let push_sample = |sys: &mut AugmentedSystem,
                           u: &DVector<f64>,
                           arc: f64,
                           samples: &mut Vec<BranchSample>|
     -> Result<(), TraceError> {
        let b = sys.binding_for(u);
        let residuals: Vec<f64> = sys.residual(&b)?.iter().copied().collect();
        let monitor = sys.stack_mut().eval_b(r + 1, &monitor_index, &b)?;
        samples.push(BranchSample {
            point: b,
            residuals,
            monitor,
            arclength: arc,
        });
        Ok(())
    };

    push_sample(sys, &u, 0.0, &mut branch.samples)?;

    let mut t = tangent(sys, &sys.binding_for(&u))? * orientation.signum();
    let mut h = ctrl.initial_step;
    let mut arc = 0.0f64;

    while branch.samples.len() < ctrl.max_samples {
        let pred = &u + &t * h;
        match correct(sys, &pred, &pred, &t, &cfg, ctrl.corrector_iters) {
            Some((next, iters)) => {
                let prev_u = u.clone();
                let prev_t = t.clone();
                arc += (&next - &u).norm();
                u = next;
                branch.accepted_steps += 1;
                push_sample(sys, &u, arc, &mut branch.samples)?;

                if detect_events {
                    let k = branch.samples.len() - 1;
                    let a = branch.samples[k - 1].monitor.value_f64();
                    let b = branch.samples[k].monitor.value_f64();
                    if a * b < 0.0 {
                        if let Some(ev) =
                            refine_event(sys, &prev_u, &prev_t, h, &cfg, ctrl, tol, k)?
                        {
                            let duplicate = branch.events.iter().any(|e| {
                                e.point.point.distance_max(
                                    &ev.point.point,
                                    sys.unknowns(),
                                ) <= 1e-6
                            });
                            if !duplicate {
                                branch.events.push(ev);
                            }
                        }
                    }
                }

                match tangent(sys, &sys.binding_for(&u)) {
                    Ok(mut fresh) => {
                        if fresh.dot(&prev_t) < 0.0 {
                            fresh = -fresh;
                        }
                        t = fresh;
                    }
                    Err(_) => {
                        branch.truncated = Some("degenerate point on branch".to_string());
                        break;
                    }
                }
                if iters < ctrl.easy_iters {
                    h = (h * ctrl.grow).min(ctrl.max_step);
                }
            }
            None => {
                branch.rejected_steps += 1;
                h *= ctrl.shrink;
                if h < ctrl.min_step {
                    branch.truncated =
                        Some("corrector failure below minimum step".to_string());
                    break;
                }
            }
        }
    }
    Ok(branch)
}

/// Bisection on the predictor step to bracket the B_{r+1} sign change,
/// then a full codimension-(r+1) Newton solve with the extra parameter
/// freed, then classification.
#[allow(clippy::too_many_arguments)]
fn refine_event(
    sys: &mut AugmentedSystem,
    from: &DVector<f64>,
    dir: &DVector<f64>,
    h: f64,
    cfg: &NewtonConfig,
    ctrl: &StepControl,
    tol: &Tolerances,
    sample_index: usize,
) -> Result<Option<BranchEvent>, TraceError> {
    let r = sys.codim();
    let monitor_index = IndexString::canonical(r);
    let eval_at = |sys: &mut AugmentedSystem, step: f64| -> Option<(DVector<f64>, f64)> {
        let pred = from + dir * step;
        let (pt, _) = correct(sys, &pred, &pred, dir, cfg, ctrl.corrector_iters)?;
        let b = sys.binding_for(&pt);
        let m = sys.stack_mut().eval_b(r + 1, &monitor_index, &b).ok()?;
        Some((pt, m.value_f64()))
    };
    let Some((_, mut fa)) = eval_at(sys, 0.0) else {
        return Ok(None);
    };
    let mut lo = 0.0f64;
    let mut hi = h;
    let mut best = None;
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        let Some((pt, fm)) = eval_at(sys, mid) else {
            break;
        };
        if fa * fm <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            fa = fm;
        }
        best = Some(pt);
        if (hi - lo) < 1e-12 * h.max(1.0) {
            break;
        }
    }
    let Some(seed_u) = best else {
        return Ok(None);
    };

    // escalate: solve the square codim-(r+1) system with all parameters free
    let field = sys.field().clone();
    let free = sys.free_params().to_vec();
    let fixed = sys.fixed().clone();
    let mut up =
        AugmentedSystem::new(field, r + 1, free.clone(), fixed).map_err(TraceError::Locate)?;
    let seed = sys.binding_for(&seed_u);
    let solved = match newton_solve(&up, &seed, cfg) {
        Ok(b) => b,
        Err(_) => return Ok(None),
    };

    // assess at the refined point
    let residual_norm = up
        .residual(&solved)?
        .rows(0, up.field().n())
        .amax();
    let mut b_values = Vec::new();
    for s in 1..=(r + 2) {
        b_values.push(up.stack_mut().eval_b_canonical(s, &solved)?);
    }
    let g_report = fullness_sweep(up.stack_mut(), &solved, r + 1, &free, tol)?;
    let full = g_report.values().all(|g| g.nonzero)
        && !b_values[r + 1].is_zero(tol.eps_b);
    let point = CatastrophePoint {
        point: solved,
        codim: r + 1,
        codim_is_lower_bound: false,
        residual_norm,
        b_values,
        g_report,
        g_params: free,
        full,
        escalated_from: Some(r),
        label: codim_label(r + 1, false),
    };
    Ok(Some(BranchEvent {
        sample_index,
        point,
    }))
}

/// A closed-form parametric set in a subset of the coordinates, used to
/// check traced branches against printed parameterizations.
pub struct ParametricCurve {
    pub coords: Vec<Symbol>,
    /// Parameter ranges; one entry per curve parameter (1 or 2).
    pub domain: Vec<(f64, f64)>,
    pub map: Box<dyn Fn(&[f64]) -> Vec<f64> + Sync>,
}

impl ParametricCurve {
    fn point(&self, t: &[f64]) -> Vec<f64> {
        (self.map)(t)
    }

    fn distance2(&self, t: &[f64], target: &[f64]) -> f64 {
        self.point(t)
            .iter()
            .zip(target.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Distance from `target` to the set, by dense scan plus golden-section
    /// coordinate refinement.
    pub fn distance(&self, target: &[f64]) -> f64 {
        let dims = self.domain.len();
        assert!(dims == 1 || dims == 2, "1- or 2-parameter sets only");
        let coarse = if dims == 1 { 2048 } else { 128 };
        let mut best_t = vec![0.0; dims];
        let mut best = f64::INFINITY;
        let steps: Vec<Vec<f64>> = self
            .domain
            .iter()
            .map(|(lo, hi)| {
                (0..=coarse)
                    .map(|i| lo + (hi - lo) * i as f64 / coarse as f64)
                    .collect()
            })
            .collect();
        if dims == 1 {
            for &t0 in &steps[0] {
                let d = self.distance2(&[t0], target);
                if d < best {
                    best = d;
                    best_t = vec![t0];
                }
            }
        } else {
            for &t0 in &steps[0] {
                for &t1 in &steps[1] {
                    let d = self.distance2(&[t0, t1], target);
                    if d < best {
                        best = d;
                        best_t = vec![t0, t1];
                    }
                }
            }
        }
        // golden-section refinement, coordinate-wise
        for round in 0..4 {
            for d in 0..dims {
                let span = (self.domain[d].1 - self.domain[d].0)
                    / (coarse as f64)
                    / (4.0f64.powi(round));
                let (mut lo, mut hi) = (best_t[d] - 2.0 * span, best_t[d] + 2.0 * span);
                lo = lo.max(self.domain[d].0);
                hi = hi.min(self.domain[d].1);
                let phi = 0.5 * (3.0 - 5.0f64.sqrt());
                let mut a = lo + phi * (hi - lo);
                let mut b = hi - phi * (hi - lo);
                let eval = |t: f64, best_t: &[f64]| {
                    let mut tt = best_t.to_vec();
                    tt[d] = t;
                    self.distance2(&tt, target)
                };
                let mut fa = eval(a, &best_t);
                let mut fb = eval(b, &best_t);
                for _ in 0..60 {
                    if fa < fb {
                        hi = b;
                        b = a;
                        fb = fa;
                        a = lo + phi * (hi - lo);
                        fa = eval(a, &best_t);
                    } else {
                        lo = a;
                        a = b;
                        fa = fb;
                        b = hi - phi * (hi - lo);
                        fb = eval(b, &best_t);
                    }
                }
                let t_star = 0.5 * (lo + hi);
                let f_star = eval(t_star, &best_t);
                if f_star < best {
                    best = f_star;
                    best_t[d] = t_star;
                }
            }
        }
        best.sqrt()
    }
}

/// Maximum nearest-point deviation of the branch samples from a closed-form
/// parametric set (distance measured in the curve's coordinate subset).
pub fn validate_against_parametric(branch: &Branch, curve: &ParametricCurve) -> f64 {
    let mut max_dev = 0.0f64;
    for s in &branch.samples {
        let target: Vec<f64> = curve
            .coords
            .iter()
            .map(|c| s.point.get_f64(*c).unwrap_or(f64::NAN))
            .collect();
        max_dev = max_dev.max(curve.distance(&target));
    }
    max_dev
}

impl Branch {
    /// CSV export: variables, parameters, arclength, B_1..B_{r+1}.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut header: Vec<String> = self.unknowns.iter().map(|s| s.name()).collect();
        if let Some(first) = self.samples.first() {
            for (sym, _) in first.point.iter() {
                if !self.unknowns.contains(&sym) {
                    header.push(sym.name());
                }
            }
        }
        header.push("arclength".to_string());
        let n_res = self.samples.first().map_or(0, |s| s.residuals.len());
        let n_vars = n_res.saturating_sub(self.codim);
        for s in 1..=self.codim {
            header.push(format!("B{}", s));
        }
        out.push_str(&header.join(","));
        out.push_str(&format!(",B{}\n", self.codim + 1));
        for s in &self.samples {
            let mut cells: Vec<String> = self
                .unknowns
                .iter()
                .map(|sym| fmt_csv(s.point.get_f64(*sym).unwrap_or(f64::NAN)))
                .collect();
            for (sym, v) in s.point.iter() {
                if !self.unknowns.contains(&sym) {
                    cells.push(fmt_csv(v.to_f64()));
                }
            }
            cells.push(fmt_csv(s.arclength));
            for r in &s.residuals[n_vars..] {
                cells.push(fmt_csv(*r));
            }
            cells.push(fmt_csv(s.monitor.value_f64()));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Sidecar JSON for detected events.
    pub fn events_json(&self) -> serde_json::Value {
        let events: Vec<serde_json::Value> = self
            .events
            .iter()
            .map(|e| {
                let coords: serde_json::Map<String, serde_json::Value> = e
                    .point
                    .point
                    .iter()
                    .map(|(s, v)| (s.name(), serde_json::json!(v.to_f64())))
                    .collect();
                serde_json::json!({
                    "sample_index": e.sample_index,
                    "codim": e.point.codim,
                    "label": e.point.label,
                    "full": e.point.full,
                    "point": coords,
                })
            })
            .collect();
        serde_json::Value::Array(events)
    }
}

pub(crate) fn fmt_csv(v: f64) -> String {
    format!("{:.12e}", v)
}
