//! The augmented determinant family B and G.
//!
//! `B1` is the determinant of the Jacobian dF/dx. Each higher determinant
//! replaces one vector-field component with the previous level:
//!
//! ```text
//! B_{s,I} = det d( (F_1,...,F_n) with component i_{s-1} := B_{s-1,I'} ) / dx
//! ```
//!
//! where `I = i_1...i_{s-1}` is an index string and `I'` its prefix; the
//! canonical chain `B_s` uses the all-ones string. The non-degeneracy
//! determinants extend the Jacobian with the B chain and parameter columns:
//!
//! ```text
//! G_{r,I} = det d(F_1,...,F_n, B_1, B_{2,i_1}, ..., B_{r,I})
//!              / d(x_1,...,x_n, a_1,...,a_r)
//! ```
//!
//! B expressions stay symbolic (they are differentiated again to build the
//! next level); G matrices are only ever evaluated numerically — exactly,
//! via fraction-free elimination, when the binding is rational.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num::rational::BigRational;
use num::traits::Zero;

use crate::expr::{eval_many, eval_many_scalar, Binding, EvalError, Expr, Scalar, Symbol, VectorField};

/// Maximum matrix size accepted by [`symbolic_det`].
pub const DEFAULT_DET_LIMIT: usize = 6;

/// Index string i_1...i_s selecting which component each level of the B
/// recursion replaces. Entries are 1-based, each in 1..=n.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexString(Vec<u8>);

impl IndexString {
    pub fn new(entries: Vec<u8>) -> Self {
        IndexString(entries)
    }

    /// The canonical all-ones string of the given length.
    pub fn canonical(len: usize) -> Self {
        IndexString(vec![1; len])
    }

    pub fn empty() -> Self {
        IndexString(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[u8] {
        &self.0
    }

    pub fn is_canonical(&self) -> bool {
        self.0.iter().all(|&i| i == 1)
    }

    fn prefix(&self, len: usize) -> IndexString {
        IndexString(self.0[..len].to_vec())
    }

    /// All n^len strings over {1..n}, in lexicographic order.
    pub fn all(n: usize, len: usize) -> Vec<IndexString> {
        let mut out = vec![IndexString::empty()];
        for _ in 0..len {
            let mut next = Vec::with_capacity(out.len() * n);
            for s in &out {
                for i in 1..=n {
                    let mut e = s.0.clone();
                    e.push(i as u8);
                    next.push(IndexString(e));
                }
            }
            out = next;
        }
        out
    }
}

impl fmt::Display for IndexString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "-");
        }
        if self.0.iter().all(|&i| i <= 9) {
            for i in &self.0 {
                write!(f, "{}", i)?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
            write!(f, "{}", parts.join("."))
        }
    }
}

/// Rectangular matrix of expressions with row/column labels.
#[derive(Clone, Debug)]
pub struct ExprMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<Expr>,
    row_labels: Vec<String>,
    col_labels: Vec<String>,
}

impl ExprMatrix {
    pub fn from_rows(
        rows: Vec<Vec<Expr>>,
        row_labels: Vec<String>,
        col_labels: Vec<String>,
    ) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == ncols), "ragged matrix");
        ExprMatrix {
            nrows,
            ncols,
            data: rows.into_iter().flatten().collect(),
            row_labels,
            col_labels,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn at(&self, i: usize, j: usize) -> Expr {
        self.data[i * self.ncols + j]
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }

    pub fn entries(&self) -> &[Expr] {
        &self.data
    }

    /// Evaluate all entries at a binding in scalar (exact-capable) mode.
    pub fn evaluate(&self, b: &Binding) -> Result<Vec<Scalar>, EvalError> {
        eval_many_scalar(&self.data, b)
    }

    /// Evaluate all entries as f64.
    pub fn evaluate_f64(&self, b: &Binding) -> Result<DMatrix<f64>, EvalError> {
        let vals = eval_many(&self.data, b)?;
        Ok(DMatrix::from_row_slice(self.nrows, self.ncols, &vals))
    }
}

#[derive(Clone, Debug, thiserror::Error)]
pub enum DetError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix size {size} exceeds the symbolic determinant limit {limit}")]
    TooLarge { size: usize, limit: usize },
    #[error("index string {given} has length {got}, expected {expected}")]
    IndexLength {
        given: String,
        got: usize,
        expected: usize,
    },
    #[error("index entry {entry} out of range 1..={n}")]
    IndexRange { entry: u8, n: usize },
    #[error("order must be >= 1")]
    ZeroOrder,
    #[error("free parameter `{0}` is not declared in the field")]
    UnknownParameter(String),
    #[error("duplicate free parameter `{0}`")]
    DuplicateParameter(String),
    #[error("expected {expected} free parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Jacobian matrix: entry (i,j) = d fns[i] / d syms[j].
pub fn jacobian(fns: &[Expr], syms: &[Symbol]) -> ExprMatrix {
    let rows: Vec<Vec<Expr>> = fns
        .iter()
        .map(|f| syms.iter().map(|s| f.differentiate(*s)).collect())
        .collect();
    let row_labels = (0..fns.len()).map(|i| format!("F{}", i + 1)).collect();
    let col_labels = syms.iter().map(|s| s.name()).collect();
    ExprMatrix::from_rows(rows, row_labels, col_labels)
}

/// Exact symbolic determinant by cofactor expansion with memoized minors.
pub fn symbolic_det(m: &ExprMatrix) -> Result<Expr, DetError> {
    symbolic_det_limit(m, DEFAULT_DET_LIMIT)
}

pub fn symbolic_det_limit(m: &ExprMatrix, limit: usize) -> Result<Expr, DetError> {
    if m.nrows != m.ncols {
        return Err(DetError::NotSquare {
            rows: m.nrows,
            cols: m.ncols,
        });
    }
    if m.nrows > limit {
        return Err(DetError::TooLarge {
            size: m.nrows,
            limit,
        });
    }
    let n = m.nrows;
    if n == 0 {
        return Ok(Expr::int(1));
    }
    let mut memo: BTreeMap<u32, Expr> = BTreeMap::new();
    Ok(det_minor(m, (1u32 << n) - 1, 0, &mut memo))
}

// Minor over the active rows of `mask`, columns col.. ; memoized on the row
// mask (the column offset is determined by the popcount).
fn det_minor(m: &ExprMatrix, mask: u32, col: usize, memo: &mut BTreeMap<u32, Expr>) -> Expr {
    if mask == 0 {
        return Expr::int(1);
    }
    if let Some(&e) = memo.get(&mask) {
        return e;
    }
    let mut terms: Vec<Expr> = Vec::new();
    let mut sign = 1i64;
    for row in 0..m.nrows {
        if mask & (1 << row) == 0 {
            continue;
        }
        let entry = m.at(row, col);
        if !entry.is_zero_const() {
            let minor = det_minor(m, mask & !(1 << row), col + 1, memo);
            let term = if sign > 0 {
                entry * minor
            } else {
                -(entry * minor)
            };
            terms.push(term);
        }
        sign = -sign;
    }
    let out = Expr::add_all(&terms);
    memo.insert(mask, out);
    out
}

/// A determinant value together with the Hadamard bound of its defining
/// matrix (product of row 2-norms), the natural scale for zero tests.
#[derive(Clone, Debug)]
pub struct DetEval {
    pub value: Scalar,
    pub hadamard: f64,
}

impl DetEval {
    pub fn value_f64(&self) -> f64 {
        self.value.to_f64()
    }

    /// |value| / max(hadamard, 1).
    pub fn scaled(&self) -> f64 {
        self.value.to_f64().abs() / self.hadamard.max(1.0)
    }

    /// Scale-aware zero test: |v| <= eps * max(H, 1).
    pub fn is_zero(&self, eps: f64) -> bool {
        self.scaled() <= eps
    }
}

pub fn hadamard_bound(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .product()
}

/// Floating determinant via LU.
pub fn det_f64(m: &DMatrix<f64>) -> f64 {
    m.clone().lu().determinant()
}

/// Exact determinant of a rational matrix by Gaussian elimination.
pub fn det_rational(rows: Vec<Vec<BigRational>>) -> BigRational {
    let n = rows.len();
    let mut a = rows;
    let mut det = BigRational::from_integer(1.into());
    for col in 0..n {
        let Some(pivot_row) = (col..n).find(|&r| !a[r][col].is_zero()) else {
            return BigRational::zero();
        };
        if pivot_row != col {
            a.swap(pivot_row, col);
            det = -det;
        }
        let pivot = a[col][col].clone();
        det *= &pivot;
        for r in col + 1..n {
            if a[r][col].is_zero() {
                continue;
            }
            let factor = &a[r][col] / &pivot;
            for c in col..n {
                let sub = &factor * &a[col][c];
                a[r][c] -= sub;
            }
        }
    }
    det
}

/// Lazily built cache of the B/G family for one vector field.
pub struct BgStack {
    field: VectorField,
    b_exprs: BTreeMap<(usize, IndexString), Expr>,
    b_matrices: BTreeMap<(usize, IndexString), ExprMatrix>,
    g_matrices: BTreeMap<(usize, IndexString, Vec<Symbol>), ExprMatrix>,
    det_limit: usize,
}

impl BgStack {
    pub fn new(field: VectorField) -> Self {
        BgStack {
            field,
            b_exprs: BTreeMap::new(),
            b_matrices: BTreeMap::new(),
            g_matrices: BTreeMap::new(),
            det_limit: DEFAULT_DET_LIMIT,
        }
    }

    pub fn with_det_limit(field: VectorField, det_limit: usize) -> Self {
        BgStack {
            det_limit,
            ..BgStack::new(field)
        }
    }

    pub fn field(&self) -> &VectorField {
        &self.field
    }

    fn check_index(&self, s: usize, index: &IndexString) -> Result<(), DetError> {
        if s == 0 {
            return Err(DetError::ZeroOrder);
        }
        if index.len() != s - 1 {
            return Err(DetError::IndexLength {
                given: index.to_string(),
                got: index.len(),
                expected: s - 1,
            });
        }
        let n = self.field.n();
        for &e in index.entries() {
            if e == 0 || e as usize > n {
                return Err(DetError::IndexRange { entry: e, n });
            }
        }
        Ok(())
    }

    /// The defining Jacobian-like matrix of B_{s,I}.
    pub fn b_matrix(&mut self, s: usize, index: &IndexString) -> Result<ExprMatrix, DetError> {
        self.check_index(s, index)?;
        let key = (s, index.clone());
        if let Some(m) = self.b_matrices.get(&key) {
            return Ok(m.clone());
        }
        let vars = self.field.variables().to_vec();
        let m = if s == 1 {
            jacobian(self.field.components(), &vars)
        } else {
            let prev = self.b(s - 1, &index.prefix(s - 2))?;
            let replaced = index.entries()[s - 2] as usize; // 1-based
            let mut fns = self.field.components().to_vec();
            fns[replaced - 1] = prev;
            let mut m = jacobian(&fns, &vars);
            m.row_labels[replaced - 1] = format!("B{},{}", s - 1, index.prefix(s - 2));
            m
        };
        self.b_matrices.insert(key, m.clone());
        Ok(m)
    }

    /// B_{s,I}, built recursively and cached. Rebuilding yields the same
    /// interned expression.
    pub fn b(&mut self, s: usize, index: &IndexString) -> Result<Expr, DetError> {
        self.check_index(s, index)?;
        let key = (s, index.clone());
        if let Some(&e) = self.b_exprs.get(&key) {
            return Ok(e);
        }
        let m = self.b_matrix(s, index)?;
        let e = symbolic_det_limit(&m, self.det_limit)?;
        self.b_exprs.insert(key, e);
        Ok(e)
    }

    /// Canonical B_s (all-ones index string).
    pub fn b_canonical(&mut self, s: usize) -> Result<Expr, DetError> {
        self.b(s, &IndexString::canonical(s.saturating_sub(1)))
    }

    /// The (n+r)-square matrix behind G_{r,I} for the given ordered free
    /// parameters: rows are F_1..F_n, B_1, B_{2,i1}, ..., B_{r,I}; columns
    /// are the variables followed by the free parameters.
    pub fn g_matrix(
        &mut self,
        r: usize,
        index: &IndexString,
        free_params: &[Symbol],
    ) -> Result<ExprMatrix, DetError> {
        self.check_index(r, index)?;
        if free_params.len() != r {
            return Err(DetError::ParamCount {
                expected: r,
                got: free_params.len(),
            });
        }
        let declared = self.field.parameters();
        for (i, p) in free_params.iter().enumerate() {
            if !declared.contains(p) {
                return Err(DetError::UnknownParameter(p.name()));
            }
            if free_params[..i].contains(p) {
                return Err(DetError::DuplicateParameter(p.name()));
            }
        }
        let key = (r, index.clone(), free_params.to_vec());
        if let Some(m) = self.g_matrices.get(&key) {
            return Ok(m.clone());
        }
        let mut rows: Vec<Expr> = self.field.components().to_vec();
        let mut row_labels: Vec<String> =
            (0..rows.len()).map(|i| format!("F{}", i + 1)).collect();
        for s in 1..=r {
            rows.push(self.b(s, &index.prefix(s.saturating_sub(1)))?);
            row_labels.push(if s == 1 {
                "B1".to_string()
            } else {
                format!("B{},{}", s, index.prefix(s - 1))
            });
        }
        let cols: Vec<Symbol> = self
            .field
            .variables()
            .iter()
            .chain(free_params.iter())
            .copied()
            .collect();
        let entries: Vec<Vec<Expr>> = rows
            .iter()
            .map(|f| cols.iter().map(|s| f.differentiate(*s)).collect())
            .collect();
        let col_labels = cols.iter().map(|s| s.name()).collect();
        let m = ExprMatrix::from_rows(entries, row_labels, col_labels);
        self.g_matrices.insert(key, m.clone());
        Ok(m)
    }

    /// Evaluate B_{s,I} and the Hadamard bound of its defining matrix.
    pub fn eval_b(
        &mut self,
        s: usize,
        index: &IndexString,
        binding: &Binding,
    ) -> Result<DetEval, DetError> {
        let e = self.b(s, index)?;
        let m = self.b_matrix(s, index)?;
        let value = e.evaluate_scalar(binding)?;
        let hadamard = hadamard_bound(&m.evaluate_f64(binding)?);
        Ok(DetEval { value, hadamard })
    }

    pub fn eval_b_canonical(&mut self, s: usize, binding: &Binding) -> Result<DetEval, DetError> {
        self.eval_b(s, &IndexString::canonical(s.saturating_sub(1)), binding)
    }

    /// Evaluate G_{r,I}: the matrix is evaluated entry-by-entry and the
    /// determinant taken numerically (exact elimination when every entry is
    /// rational, floating LU otherwise). The matrix is never expanded
    /// symbolically.
    pub fn eval_g(
        &mut self,
        r: usize,
        index: &IndexString,
        free_params: &[Symbol],
        binding: &Binding,
    ) -> Result<DetEval, DetError> {
        let m = self.g_matrix(r, index, free_params)?;
        eval_matrix_det(&m, binding)
    }
}

/// Shared evaluation path: exact when possible, f64 LU otherwise.
pub fn eval_matrix_det(m: &ExprMatrix, binding: &Binding) -> Result<DetEval, DetError> {
    let scalars = m.evaluate(binding)?;
    let float = DMatrix::from_row_slice(
        m.nrows(),
        m.ncols(),
        &scalars.iter().map(Scalar::to_f64).collect::<Vec<_>>(),
    );
    let hadamard = hadamard_bound(&float);
    let value = if scalars.iter().all(Scalar::is_rational) {
        let rows: Vec<Vec<BigRational>> = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .map(|j| scalars[i * m.ncols() + j].as_rational().unwrap().clone())
                    .collect()
            })
            .collect();
        Scalar::Rational(det_rational(rows))
    } else {
        Scalar::Float(det_f64(&float))
    };
    Ok(DetEval { value, hadamard })
}
