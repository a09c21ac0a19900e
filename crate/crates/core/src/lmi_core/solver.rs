//! Vectorization to standard-form conic feasibility and the solver backend.
//!
//! Each constraint `F(y) (sense) 0` becomes a PSD-cone row block
//! `svec(sign * F(y) - eps * I)` with sqrt(2)-scaled off-diagonals. A
//! phase-1 slack `t` is (optionally) subtracted from every strict
//! constraint and maximized, so feasibility is classified by the sign of
//! the achieved slack rather than by infeasibility certificates alone.

use super::{Constraint, LmiError, SdpSolution, SolveStatus, VarRegistry};
use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;

/// Objective used by [`solve_feasibility`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Pure feasibility: zero objective, strict constraints shifted by
    /// their epsilon only.
    Feasibility,
    /// Maximize a uniform extra slack on all strict constraints, capped to
    /// keep the problem bounded. Feasible iff the optimal slack is >= 0.
    MaximizeSlack { cap: f64 },
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub objective: Objective,
    pub max_iter: u32,
    pub verbose: bool,
    /// Audit tolerance used for the a-posteriori eigenvalue check.
    pub audit_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            objective: Objective::MaximizeSlack { cap: 1.0 },
            max_iter: 200,
            verbose: false,
            audit_tol: 1e-7,
        }
    }
}

/// Assembled standard-form problem: `s = b - A y` with `s` in a product of
/// PSD (and optionally nonnegative) cones, linear objective `q^T y`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub num_vars: usize,
    /// triplets (row, col, value) of A, ordered by constraint then column
    pub a_triplets: Vec<(usize, usize, f64)>,
    pub b: Vec<f64>,
    pub q: Vec<f64>,
    /// side length of each PSD triangle cone, in row order
    pub psd_cones: Vec<usize>,
    /// trailing nonnegative-cone dimension (phase-1 slack cap rows)
    pub nonneg_rows: usize,
    /// column index of the phase-1 slack, if any
    pub slack_col: Option<usize>,
    pub constraint_labels: Vec<String>,
}

fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Scaled svec of a symmetric matrix: column-major upper triangle with
/// sqrt(2) on off-diagonals (isometric with the Frobenius inner product).
pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut out = Vec::with_capacity(svec_len(n));
    for q in 0..n {
        for p in 0..=q {
            let v = (m[(p, q)] + m[(q, p)]) * 0.5;
            out.push(if p == q { v } else { sqrt2 * v });
        }
    }
    out
}

/// Vectorize a constraint family into a [`Problem`].
pub fn to_feasibility(
    registry: &VarRegistry,
    constraints: &[Constraint],
    objective: Objective,
) -> Result<Problem, LmiError> {
    for c in constraints {
        for t in c.expr.terms() {
            if t.var.0 >= registry.len() {
                return Err(LmiError::UnknownVar(t.var.0));
            }
            let (vr, vc) = registry.var(t.var).kind.shape();
            let (er, ec) = if t.transposed { (vc, vr) } else { (vr, vc) };
            if t.left.ncols() != er || t.right.nrows() != ec {
                return Err(LmiError::Dimension(format!(
                    "constraint '{}': term coefficients do not match variable '{}'",
                    c.label,
                    registry.var(t.var).name
                )));
            }
        }
    }

    let slack_col = match objective {
        Objective::Feasibility => None,
        Objective::MaximizeSlack { .. } => Some(registry.total_scalars()),
    };
    let num_vars = registry.total_scalars() + slack_col.map_or(0, |_| 1);

    let mut a_triplets = Vec::new();
    let mut b = Vec::new();
    let mut psd_cones = Vec::new();
    let mut labels = Vec::new();
    let mut row_base = 0usize;

    for c in constraints {
        let d = c.expr.rows();
        let sign = c.sense.sign();
        let shift = if c.sense.is_strict() { c.epsilon } else { 0.0 };

        // constant part: sign * C - shift * I
        let mut constant = c.expr.constant() * sign;
        for i in 0..d {
            constant[(i, i)] -= shift;
        }
        b.extend(svec(&constant));

        // variable columns: s = b - A y must equal svec(sign*F - shift*I),
        // so A[:, j] = -sign * svec(dF/dy_j)
        for vidx in 0..registry.len() {
            let id = super::VarId(vidx);
            if !c.expr.terms().iter().any(|t| t.var == id) {
                continue;
            }
            let kind = registry.var(id).kind;
            let base = registry.offset(id);
            for comp in 0..kind.scalar_count() {
                let deriv = c.expr.derivative(registry, id, comp);
                if deriv.amax() == 0.0 {
                    continue;
                }
                let col = base + comp;
                for (k, v) in svec(&deriv).into_iter().enumerate() {
                    if v != 0.0 {
                        a_triplets.push((row_base + k, col, -sign * v));
                    }
                }
            }
        }

        // phase-1 slack subtracts t*I from every strict constraint
        if let Some(tcol) = slack_col {
            if c.sense.is_strict() {
                let eye = DMatrix::<f64>::identity(d, d);
                for (k, v) in svec(&eye).into_iter().enumerate() {
                    if v != 0.0 {
                        a_triplets.push((row_base + k, tcol, v));
                    }
                }
            }
        }

        psd_cones.push(d);
        labels.push(c.label.clone());
        row_base += svec_len(d);
    }

    // slack cap row: cap - t >= 0
    let mut q = vec![0.0; num_vars];
    let mut nonneg_rows = 0;
    if let (Some(tcol), Objective::MaximizeSlack { cap }) = (slack_col, objective) {
        a_triplets.push((row_base, tcol, 1.0));
        b.push(cap);
        nonneg_rows = 1;
        q[tcol] = -1.0;
    }

    Ok(Problem {
        num_vars,
        a_triplets,
        b,
        q,
        psd_cones,
        nonneg_rows,
        slack_col,
        constraint_labels: labels,
    })
}

impl Problem {
    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    /// Plain-text sparse dump for cross-checking with external tools.
    ///
    /// Format: a header line `it2lmi-sdp <rows> <cols> <nnz>`, one line
    /// `cone psd <dim>` per PSD block and `cone nonneg <dim>` for the
    /// trailing orthant, then `A <row> <col> <value>` triplets, `b <row>
    /// <value>` and `q <col> <value>` entries (zero entries omitted).
    /// Rows/cols are 0-based; the PSD blocks use scaled svec ordering.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(
            out,
            "it2lmi-sdp {} {} {}",
            self.num_rows(),
            self.num_vars,
            self.a_triplets.len()
        )
        .unwrap();
        for d in &self.psd_cones {
            writeln!(out, "cone psd {d}").unwrap();
        }
        if self.nonneg_rows > 0 {
            writeln!(out, "cone nonneg {}", self.nonneg_rows).unwrap();
        }
        for &(r, c, v) in &self.a_triplets {
            writeln!(out, "A {r} {c} {v:.17e}").unwrap();
        }
        for (r, v) in self.b.iter().enumerate() {
            if *v != 0.0 {
                writeln!(out, "b {r} {v:.17e}").unwrap();
            }
        }
        for (c, v) in self.q.iter().enumerate() {
            if *v != 0.0 {
                writeln!(out, "q {c} {v:.17e}").unwrap();
            }
        }
        out
    }
}

/// Solve the vectorized family and audit any candidate solution with the
/// dense eigenvalue check.
pub fn solve_feasibility(
    registry: &VarRegistry,
    constraints: &[Constraint],
    options: &SolveOptions,
) -> Result<SdpSolution, LmiError> {
    let problem = to_feasibility(registry, constraints, options.objective)?;
    let m = problem.num_rows();
    let n = problem.num_vars;

    let (rows, cols, vals): (Vec<usize>, Vec<usize>, Vec<f64>) = {
        let mut r = Vec::with_capacity(problem.a_triplets.len());
        let mut c = Vec::with_capacity(problem.a_triplets.len());
        let mut v = Vec::with_capacity(problem.a_triplets.len());
        for &(ri, ci, vi) in &problem.a_triplets {
            r.push(ri);
            c.push(ci);
            v.push(vi);
        }
        (r, c, v)
    };
    let a = CscMatrix::new_from_triplets(m, n, rows, cols, vals);
    let p = CscMatrix::zeros((n, n));

    let mut cones: Vec<SupportedConeT<f64>> = problem
        .psd_cones
        .iter()
        .map(|&d| SupportedConeT::PSDTriangleConeT(d))
        .collect();
    if problem.nonneg_rows > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(problem.nonneg_rows));
    }

    let settings = DefaultSettings {
        verbose: options.verbose,
        max_iter: options.max_iter,
        ..Default::default()
    };
    let mut solver = DefaultSolver::new(&p, &problem.q, &a, &problem.b, &cones, settings)
        .map_err(|e| LmiError::Solver(format!("setup failed: {e}")))?;
    solver.solve();
    let sol = &solver.solution;

    let (status, slack) = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            let slack = problem
                .slack_col
                .map(|c| sol.x[c])
                .unwrap_or(0.0);
            if slack >= 0.0 {
                (SolveStatus::Feasible, slack)
            } else {
                (SolveStatus::Infeasible, slack)
            }
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            (SolveStatus::Infeasible, f64::NEG_INFINITY)
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            // unbounded slack: the constraints admit arbitrarily large margins
            (SolveStatus::Feasible, f64::INFINITY)
        }
        _ => (SolveStatus::NumericalFailure, f64::NAN),
    };

    let (values, reports) = if status == SolveStatus::Feasible && sol.x.len() >= registry.total_scalars()
    {
        let values = registry.unpack(&sol.x)?;
        let reports = super::check_solution(constraints, &values, options.audit_tol)?;
        (values, reports)
    } else {
        (Vec::new(), Vec::new())
    };

    Ok(SdpSolution {
        status,
        values,
        reports,
        slack,
        iterations: sol.iterations,
        solve_time_s: sol.solve_time,
    })
}
