//! Brute-force critical-point oracle.
//!
//! Independent of the determinant machinery: Newton-polish from every cell
//! of a regular grid, keep converged in-box roots, deduplicate. Used to
//! validate unfolding geometry (root counts change by 2 across folds, a
//! codimension-r point unfolds into up to r+1 roots).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::detkit::jacobian;
use crate::expr::{eval_many, total_cmp_slices, Binding, EvalError, Expr, Symbol, VectorField};

/// Residual a polished root must reach to be accepted.
pub const ROOT_RESIDUAL: f64 = 1e-9;
/// Newton target during polishing (tighter than the acceptance bound).
const POLISH_TOL: f64 = 1e-13;
const POLISH_ITERS: usize = 40;

/// Axis-aligned search region with per-axis grid resolution.
#[derive(Clone, Debug)]
pub struct SearchBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub resolution: usize,
}

#[derive(Clone, Debug, thiserror::Error)]
pub enum OracleError {
    #[error("box bounds must be finite with lo < hi on every axis")]
    BadBounds,
    #[error("grid resolution must be at least 4")]
    BadResolution,
    #[error("box dimension {got} does not match the field's {expected} variables")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("grid search supports at most 4 variables, field has {0}")]
    TooManyVariables(usize),
    #[error("parameter `{0}` is unbound")]
    UnboundParameter(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl SearchBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, resolution: usize) -> Result<Self, OracleError> {
        if lo.len() != hi.len()
            || lo.iter().chain(hi.iter()).any(|v| !v.is_finite())
            || lo.iter().zip(hi.iter()).any(|(a, b)| a >= b)
        {
            return Err(OracleError::BadBounds);
        }
        if resolution < 4 {
            return Err(OracleError::BadResolution);
        }
        Ok(SearchBox {
            lo,
            hi,
            resolution,
        })
    }

    /// Cube centered on a point, used for local unfolding counts.
    pub fn centered(center: &[f64], half_width: f64, resolution: usize) -> Result<Self, OracleError> {
        SearchBox::new(
            center.iter().map(|c| c - half_width).collect(),
            center.iter().map(|c| c + half_width).collect(),
            resolution,
        )
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Euclidean diagonal, the scale for the merge radius.
    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(self.hi.iter())
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, pt: &[f64]) -> bool {
        pt.iter()
            .enumerate()
            .all(|(i, v)| *v >= self.lo[i] && *v <= self.hi[i])
    }

    fn cell_center(&self, flat: usize) -> Vec<f64> {
        let mut rest = flat;
        (0..self.dim())
            .map(|d| {
                let i = rest % self.resolution;
                rest /= self.resolution;
                self.lo[d] + (i as f64 + 0.5) / self.resolution as f64 * (self.hi[d] - self.lo[d])
            })
            .collect()
    }
}

/// Deduplicated critical points found in a box.
#[derive(Clone, Debug)]
pub struct RootSet {
    pub roots: Vec<Root>,
    pub merge_radius: f64,
}

#[derive(Clone, Debug)]
pub struct Root {
    pub coords: Vec<f64>,
    pub residual: f64,
}

impl RootSet {
    pub fn count(&self) -> usize {
        self.roots.len()
    }
}

struct GridProblem {
    components: Vec<Expr>,
    jac: Vec<Expr>,
    variables: Vec<Symbol>,
    params: Binding,
}

impl GridProblem {
    fn new(field: &VectorField, params: &Binding) -> Result<Self, OracleError> {
        for p in field.parameters() {
            if !params.contains(*p) {
                return Err(OracleError::UnboundParameter(p.name()));
            }
        }
        let variables = field.variables().to_vec();
        let jac = jacobian(field.components(), &variables);
        Ok(GridProblem {
            components: field.components().to_vec(),
            jac: jac.entries().to_vec(),
            variables,
            params: params.clone(),
        })
    }

    fn binding(&self, x: &[f64]) -> Binding {
        let mut b = self.params.clone();
        for (s, v) in self.variables.iter().zip(x.iter()) {
            b.set_f64(*s, *v);
        }
        b
    }

    /// Plain Newton from a start; None unless it converges inside twice the
    /// box extent.
    fn polish(&self, start: &[f64], sbox: &SearchBox) -> Option<Root> {
        let n = self.variables.len();
        let mut x = DVector::from_column_slice(start);
        let escape = 2.0 * sbox.diameter().max(1.0);
        for _ in 0..POLISH_ITERS {
            let b = self.binding(x.as_slice());
            let res = DVector::from_vec(eval_many(&self.components, &b).ok()?);
            if res.amax() <= POLISH_TOL {
                let coords: Vec<f64> = x.iter().copied().collect();
                if sbox.contains(&coords) && res.amax() <= ROOT_RESIDUAL {
                    return Some(Root {
                        coords,
                        residual: res.amax(),
                    });
                }
                return None;
            }
            let jvals = eval_many(&self.jac, &b).ok()?;
            let jac = DMatrix::from_row_slice(n, n, &jvals);
            let step = jac.lu().solve(&(-&res))?;
            if !step.iter().all(|v| v.is_finite()) {
                return None;
            }
            x += step;
            if x.amax() > escape + start.iter().fold(0.0f64, |a, v| a.max(v.abs())) {
                return None;
            }
        }
        None
    }
}

/// Newton-polish from every grid cell center; keep converged roots inside
/// the box; deduplicate at 1e-5 times the box diameter.
pub fn count_critical_points(
    field: &VectorField,
    params: &Binding,
    sbox: &SearchBox,
) -> Result<RootSet, OracleError> {
    let n = field.n();
    if n > 4 {
        return Err(OracleError::TooManyVariables(n));
    }
    if sbox.dim() != n {
        return Err(OracleError::DimensionMismatch {
            got: sbox.dim(),
            expected: n,
        });
    }
    let problem = GridProblem::new(field, params)?;
    let total = sbox.resolution.pow(n as u32);
    let mut found: Vec<Root> = (0..total)
        .into_par_iter()
        .filter_map(|flat| problem.polish(&sbox.cell_center(flat), sbox))
        .collect();
    found.sort_by(|a, b| total_cmp_slices(&a.coords, &b.coords));
    let merge_radius = 1e-5 * sbox.diameter();
    let mut roots: Vec<Root> = Vec::new();
    'outer: for r in found {
        for kept in &roots {
            let d = r
                .coords
                .iter()
                .zip(kept.coords.iter())
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            if d <= merge_radius {
                continue 'outer;
            }
        }
        roots.push(r);
    }
    Ok(RootSet {
        roots,
        merge_radius,
    })
}

/// Per-cell critical-point counts over a 2-parameter plane.
#[derive(Clone, Debug)]
pub struct Census {
    pub param_x: Symbol,
    pub param_y: Symbol,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub grid: [usize; 2],
    /// Row-major: counts[j * grid[0] + i] at plane cell (i, j).
    pub counts: Vec<u32>,
    pub fixed: Binding,
}

impl Census {
    pub fn count_at(&self, i: usize, j: usize) -> u32 {
        self.counts[j * self.grid[0] + i]
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.lo[0] + (i as f64 + 0.5) / self.grid[0] as f64 * (self.hi[0] - self.lo[0]),
            self.lo[1] + (j as f64 + 0.5) / self.grid[1] as f64 * (self.hi[1] - self.lo[1]),
        ]
    }

    /// CSV matrix of counts; rows are y cells from low to high.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 0..self.grid[1] {
            let row: Vec<String> = (0..self.grid[0])
                .map(|i| self.count_at(i, j).to_string())
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// JSON metadata describing the plane, grid, and fixed parameters.
    pub fn metadata_json(&self) -> serde_json::Value {
        let fixed: serde_json::Map<String, serde_json::Value> = self
            .fixed
            .iter()
            .map(|(s, v)| (s.name(), serde_json::json!(v.to_f64())))
            .collect();
        serde_json::json!({
            "plane": [self.param_x.name(), self.param_y.name()],
            "box": { "lo": self.lo, "hi": self.hi },
            "grid": self.grid,
            "fixed": fixed,
        })
    }
}

/// Critical-point census over a parameter-plane grid; each cell runs the
/// grid+Newton count at its center.
pub fn region_census(
    field: &VectorField,
    param_x: Symbol,
    param_y: Symbol,
    fixed: &Binding,
    plane_lo: [f64; 2],
    plane_hi: [f64; 2],
    plane_grid: [usize; 2],
    sbox: &SearchBox,
) -> Result<Census, OracleError> {
    if plane_lo.iter().zip(plane_hi.iter()).any(|(a, b)| a >= b)
        || plane_lo.iter().chain(plane_hi.iter()).any(|v| !v.is_finite())
    {
        return Err(OracleError::BadBounds);
    }
    let cells: Vec<(usize, usize)> = (0..plane_grid[1])
        .flat_map(|j| (0..plane_grid[0]).map(move |i| (i, j)))
        .collect();
    let census = Census {
        param_x,
        param_y,
        lo: plane_lo,
        hi: plane_hi,
        grid: plane_grid,
        counts: Vec::new(),
        fixed: fixed.clone(),
    };
    let counts: Vec<u32> = cells
        .par_iter()
        .map(|(i, j)| {
            let c = census.cell_center(*i, *j);
            let mut params = fixed.clone();
            params.set_f64(param_x, c[0]);
            params.set_f64(param_y, c[1]);
            count_critical_points(field, &params, sbox)
                .map(|rs| rs.count() as u32)
                .unwrap_or(u32::MAX)
        })
        .collect();
    Ok(Census { counts, ..census })
}
