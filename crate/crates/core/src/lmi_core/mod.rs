//! Affine matrix-inequality representation and semidefinite feasibility.
//!
//! Constraints are affine in symmetric/rectangular decision variables.
//! Quadratic terms are lifted via Schur complement before assembly; the
//! assembled family is vectorized into a standard-form conic feasibility
//! problem over PSD cones and handed to the backend solver. An independent
//! dense-eigenvalue audit re-checks any candidate solution.

mod expr;
mod solver;

pub use expr::{AffineExpr, Term};
pub use solver::{solve_feasibility, to_feasibility, Objective, Problem, SolveOptions};

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LmiError {
    #[error("variable name '{0}' already registered")]
    DuplicateName(String),
    #[error("undeclared or out-of-range variable id {0}")]
    UnknownVar(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    /// Symmetric n x n; n(n+1)/2 free scalars.
    Symmetric(usize),
    /// Rectangular m x n; m*n free scalars.
    Rectangular(usize, usize),
}

impl VarKind {
    pub fn shape(&self) -> (usize, usize) {
        match *self {
            VarKind::Symmetric(n) => (n, n),
            VarKind::Rectangular(m, n) => (m, n),
        }
    }

    pub fn scalar_count(&self) -> usize {
        match *self {
            VarKind::Symmetric(n) => n * (n + 1) / 2,
            VarKind::Rectangular(m, n) => m * n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecisionVar {
    pub name: String,
    pub kind: VarKind,
}

/// Registry of decision variables; scalar packing is svec (column-major
/// upper triangle) for symmetric variables and row-major for rectangular.
#[derive(Debug, Clone, Default)]
pub struct VarRegistry {
    vars: Vec<DecisionVar>,
    offsets: Vec<usize>,
    total: usize,
}

impl VarRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, kind: VarKind) -> Result<VarId, LmiError> {
        let name = name.into();
        if self.vars.iter().any(|v| v.name == name) {
            return Err(LmiError::DuplicateName(name));
        }
        let (m, n) = kind.shape();
        if m == 0 || n == 0 {
            return Err(LmiError::Input(format!("variable '{name}' has zero dimension")));
        }
        self.offsets.push(self.total);
        self.total += kind.scalar_count();
        self.vars.push(DecisionVar { name, kind });
        Ok(VarId(self.vars.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn total_scalars(&self) -> usize {
        self.total
    }

    pub fn var(&self, id: VarId) -> &DecisionVar {
        &self.vars[id.0]
    }

    pub fn offset(&self, id: VarId) -> usize {
        self.offsets[id.0]
    }

    /// Pack matrix values (one per variable, in registration order) into the
    /// flat scalar vector.
    pub fn pack(&self, values: &[DMatrix<f64>]) -> Result<Vec<f64>, LmiError> {
        if values.len() != self.vars.len() {
            return Err(LmiError::Dimension(format!(
                "expected {} value matrices, got {}",
                self.vars.len(),
                values.len()
            )));
        }
        let mut y = vec![0.0; self.total];
        for (idx, (var, value)) in self.vars.iter().zip(values).enumerate() {
            if value.shape() != var.kind.shape() {
                return Err(LmiError::Dimension(format!(
                    "variable '{}' expects shape {:?}, got {:?}",
                    var.name,
                    var.kind.shape(),
                    value.shape()
                )));
            }
            let base = self.offsets[idx];
            match var.kind {
                VarKind::Symmetric(n) => {
                    let mut t = 0;
                    for q in 0..n {
                        for p in 0..=q {
                            y[base + t] = value[(p, q)];
                            t += 1;
                        }
                    }
                }
                VarKind::Rectangular(m, n) => {
                    for p in 0..m {
                        for q in 0..n {
                            y[base + p * n + q] = value[(p, q)];
                        }
                    }
                }
            }
        }
        Ok(y)
    }

    /// Inverse of [`Self::pack`].
    pub fn unpack(&self, y: &[f64]) -> Result<Vec<DMatrix<f64>>, LmiError> {
        if y.len() < self.total {
            return Err(LmiError::Dimension(format!(
                "scalar vector too short: {} < {}",
                y.len(),
                self.total
            )));
        }
        let mut out = Vec::with_capacity(self.vars.len());
        for (idx, var) in self.vars.iter().enumerate() {
            let base = self.offsets[idx];
            match var.kind {
                VarKind::Symmetric(n) => {
                    let mut m = DMatrix::zeros(n, n);
                    let mut t = 0;
                    for q in 0..n {
                        for p in 0..=q {
                            m[(p, q)] = y[base + t];
                            m[(q, p)] = y[base + t];
                            t += 1;
                        }
                    }
                    out.push(m);
                }
                VarKind::Rectangular(rows, cols) => {
                    let mut m = DMatrix::zeros(rows, cols);
                    for p in 0..rows {
                        for q in 0..cols {
                            m[(p, q)] = y[base + p * cols + q];
                        }
                    }
                    out.push(m);
                }
            }
        }
        Ok(out)
    }
}

/// Constraint sense; strict senses carry a positive margin that shifts the
/// inequality to its nonstrict surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    PosDef,
    PosSemi,
    NegDef,
    NegSemi,
}

impl Sense {
    pub fn is_strict(&self) -> bool {
        matches!(self, Sense::PosDef | Sense::NegDef)
    }

    /// +1 for positive senses, -1 for negative.
    pub fn sign(&self) -> f64 {
        match self {
            Sense::PosDef | Sense::PosSemi => 1.0,
            Sense::NegDef | Sense::NegSemi => -1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub label: String,
    pub expr: AffineExpr,
    pub sense: Sense,
    pub epsilon: f64,
}

impl Constraint {
    pub fn new(
        label: impl Into<String>,
        expr: AffineExpr,
        sense: Sense,
        epsilon: f64,
    ) -> Result<Self, LmiError> {
        if expr.rows() != expr.cols() {
            return Err(LmiError::Dimension(format!(
                "constraint matrix must be square, got {}x{}",
                expr.rows(),
                expr.cols()
            )));
        }
        if sense.is_strict() && epsilon <= 0.0 {
            return Err(LmiError::Input(
                "strict constraints need a positive margin".into(),
            ));
        }
        Ok(Self {
            label: label.into(),
            expr,
            sense,
            epsilon,
        })
    }

    /// Strict constraint with the default margin 1e-6 * scale, where scale
    /// is derived from the constant part's magnitude.
    pub fn strict(
        label: impl Into<String>,
        expr: AffineExpr,
        sense: Sense,
    ) -> Result<Self, LmiError> {
        let scale = expr
            .constant()
            .iter()
            .fold(1.0f64, |acc, v| acc.max(v.abs()));
        Self::new(label, expr, sense, 1e-6 * scale)
    }
}

/// Lift quadratic terms with a Schur complement: for a base matrix used in
/// a negative-definiteness constraint and factors (L_t, rho_t), the lifted
/// matrix
///
/// ```text
/// [ base  L_1^T ... L_k^T ]
/// [ L_1  -rho_1 I         ]
/// [ ...            ...    ]
/// [ L_k         -rho_k I  ]
/// ```
///
/// is negative definite iff base + sum_t rho_t^{-1} L_t^T L_t is.
pub fn schur_linearize(
    base: &AffineExpr,
    quad_terms: &[(AffineExpr, f64)],
) -> Result<AffineExpr, LmiError> {
    let d = base.rows();
    if base.cols() != d {
        return Err(LmiError::Dimension("schur base must be square".into()));
    }
    for (factor, rho) in quad_terms {
        if *rho <= 0.0 {
            return Err(LmiError::Input(format!(
                "schur weight must be positive, got {rho}"
            )));
        }
        if factor.cols() != d {
            return Err(LmiError::Dimension(format!(
                "schur factor has {} columns, expected {d}",
                factor.cols()
            )));
        }
    }
    if quad_terms.is_empty() {
        return Ok(base.clone());
    }
    let total = d + quad_terms.iter().map(|(f, _)| f.rows()).sum::<usize>();
    let mut out = AffineExpr::zeros(total, total);
    out.add_embedded(base, 0, 0);
    let mut off = d;
    for (factor, rho) in quad_terms {
        let r = factor.rows();
        out.add_embedded(factor, off, 0);
        out.add_embedded(&factor.transposed(), 0, off);
        out.add_embedded(
            &AffineExpr::from_const(DMatrix::identity(r, r) * (-rho)),
            off,
            off,
        );
        off += r;
    }
    Ok(out)
}

/// Per-constraint a-posteriori audit entry.
#[derive(Debug, Clone)]
pub struct ConstraintReport {
    pub label: String,
    pub sense: Sense,
    /// Smallest eigenvalue of the instantiated matrix (positive senses) or
    /// negated largest eigenvalue (negative senses): the margin toward the
    /// cone boundary, positive when satisfied.
    pub margin: f64,
    pub satisfied: bool,
}

/// Instantiate every constraint at the given variable values and report the
/// extreme eigenvalue against its sense.
pub fn check_solution(
    constraints: &[Constraint],
    values: &[DMatrix<f64>],
    tol: f64,
) -> Result<Vec<ConstraintReport>, LmiError> {
    let mut reports = Vec::with_capacity(constraints.len());
    for c in constraints {
        let m = c.expr.evaluate(values)?;
        let sym = (&m + m.transpose()) * 0.5;
        let eig = sym.symmetric_eigenvalues();
        let min_eig = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let max_eig = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let margin = match c.sense {
            Sense::PosDef | Sense::PosSemi => min_eig,
            Sense::NegDef | Sense::NegSemi => -max_eig,
        };
        reports.push(ConstraintReport {
            label: c.label.clone(),
            sense: c.sense,
            margin,
            satisfied: margin >= -tol,
        });
    }
    Ok(reports)
}

/// Solve outcome classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Feasible,
    Infeasible,
    NumericalFailure,
}

/// Decision-variable assignment plus solver/audit bookkeeping.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// One value matrix per registered variable (empty unless feasible).
    pub values: Vec<DMatrix<f64>>,
    /// Audit margins per constraint (empty unless feasible).
    pub reports: Vec<ConstraintReport>,
    /// Achieved uniform slack beyond the epsilon shifts (phase-1 margin);
    /// negative when classified infeasible.
    pub slack: f64,
    pub iterations: u32,
    pub solve_time_s: f64,
}
