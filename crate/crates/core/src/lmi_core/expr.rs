//! Affine matrix expressions: constant + sum of left * V * right terms.

use super::{LmiError, VarId, VarKind, VarRegistry};
use nalgebra::DMatrix;

/// One affine term `left * V * right` (or `left * V^T * right`).
#[derive(Debug, Clone)]
pub struct Term {
    pub left: DMatrix<f64>,
    pub var: VarId,
    pub transposed: bool,
    pub right: DMatrix<f64>,
}

/// Matrix-valued affine function of the registered decision variables.
#[derive(Debug, Clone)]
pub struct AffineExpr {
    constant: DMatrix<f64>,
    terms: Vec<Term>,
}

impl AffineExpr {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            constant: DMatrix::zeros(rows, cols),
            terms: Vec::new(),
        }
    }

    pub fn from_const(constant: DMatrix<f64>) -> Self {
        Self {
            constant,
            terms: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.constant.nrows()
    }

    pub fn cols(&self) -> usize {
        self.constant.ncols()
    }

    pub fn constant(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn add_const(&mut self, m: &DMatrix<f64>) {
        self.constant += m;
    }

    /// Append `left * V^(T) * right`; the result shape must match the expression.
    pub fn add_term(
        &mut self,
        left: DMatrix<f64>,
        var: VarId,
        transposed: bool,
        right: DMatrix<f64>,
    ) {
        debug_assert_eq!(left.nrows(), self.rows());
        debug_assert_eq!(right.ncols(), self.cols());
        self.terms.push(Term {
            left,
            var,
            transposed,
            right,
        });
    }

    pub fn add_scaled(&mut self, other: &AffineExpr, scale: f64) {
        debug_assert_eq!((self.rows(), self.cols()), (other.rows(), other.cols()));
        self.constant += &other.constant * scale;
        for t in &other.terms {
            self.terms.push(Term {
                left: &t.left * scale,
                var: t.var,
                transposed: t.transposed,
                right: t.right.clone(),
            });
        }
    }

    pub fn add_expr(&mut self, other: &AffineExpr) {
        self.add_scaled(other, 1.0);
    }

    pub fn transposed(&self) -> AffineExpr {
        let mut out = AffineExpr::from_const(self.constant.transpose());
        for t in &self.terms {
            out.terms.push(Term {
                left: t.right.transpose(),
                var: t.var,
                transposed: !t.transposed,
                right: t.left.transpose(),
            });
        }
        out
    }

    /// Self plus its transpose.
    pub fn he(&self) -> AffineExpr {
        let mut out = self.clone();
        out.add_expr(&self.transposed());
        out
    }

    /// Add `other` into this expression at block offset (row_off, col_off).
    pub fn add_embedded(&mut self, other: &AffineExpr, row_off: usize, col_off: usize) {
        debug_assert!(row_off + other.rows() <= self.rows());
        debug_assert!(col_off + other.cols() <= self.cols());
        self.constant
            .view_mut((row_off, col_off), (other.rows(), other.cols()))
            .add_assign(&other.constant);
        for t in &other.terms {
            let mut left = DMatrix::zeros(self.rows(), t.left.ncols());
            left.view_mut((row_off, 0), (t.left.nrows(), t.left.ncols()))
                .copy_from(&t.left);
            let mut right = DMatrix::zeros(t.right.nrows(), self.cols());
            right
                .view_mut((0, col_off), (t.right.nrows(), t.right.ncols()))
                .copy_from(&t.right);
            self.terms.push(Term {
                left,
                var: t.var,
                transposed: t.transposed,
                right,
            });
        }
    }

    /// Assemble a symmetric block matrix from its upper triangle (diagonal
    /// included); the lower triangle mirrors the transposes. `None` blocks
    /// are zero. Block sizes come from the diagonal entries, which must all
    /// be present and square.
    pub fn sym_from_upper(blocks: &[Vec<Option<AffineExpr>>]) -> Result<AffineExpr, LmiError> {
        let nb = blocks.len();
        let mut sizes = vec![0usize; nb];
        for (i, row) in blocks.iter().enumerate() {
            if row.len() != nb {
                return Err(LmiError::Dimension(
                    "block grid must be square".into(),
                ));
            }
            match &row[i] {
                Some(d) if d.rows() == d.cols() => sizes[i] = d.rows(),
                Some(_) => {
                    return Err(LmiError::Dimension(format!(
                        "diagonal block {i} must be square"
                    )))
                }
                None => {
                    return Err(LmiError::Dimension(format!(
                        "diagonal block {i} must be present"
                    )))
                }
            }
        }
        let total: usize = sizes.iter().sum();
        let offsets: Vec<usize> = sizes
            .iter()
            .scan(0usize, |acc, &s| {
                let o = *acc;
                *acc += s;
                Some(o)
            })
            .collect();
        let mut out = AffineExpr::zeros(total, total);
        for i in 0..nb {
            for j in i..nb {
                let Some(b) = &blocks[i][j] else { continue };
                if b.rows() != sizes[i] || b.cols() != sizes[j] {
                    return Err(LmiError::Dimension(format!(
                        "block ({i}, {j}) has shape {}x{}, expected {}x{}",
                        b.rows(),
                        b.cols(),
                        sizes[i],
                        sizes[j]
                    )));
                }
                out.add_embedded(b, offsets[i], offsets[j]);
                if i != j {
                    out.add_embedded(&b.transposed(), offsets[j], offsets[i]);
                }
            }
        }
        Ok(out)
    }

    /// Instantiate at concrete variable values (indexed by `VarId`).
    pub fn evaluate(&self, values: &[DMatrix<f64>]) -> Result<DMatrix<f64>, LmiError> {
        let mut out = self.constant.clone();
        for t in &self.terms {
            let v = values.get(t.var.0).ok_or(LmiError::UnknownVar(t.var.0))?;
            let prod = if t.transposed {
                &t.left * v.transpose() * &t.right
            } else {
                &t.left * v * &t.right
            };
            if prod.shape() != out.shape() {
                return Err(LmiError::Dimension(format!(
                    "term for variable {} evaluates to {:?}, expected {:?}",
                    t.var.0,
                    prod.shape(),
                    out.shape()
                )));
            }
            out += prod;
        }
        Ok(out)
    }

    /// Partial derivative with respect to one scalar component of `var`
    /// (`component` in the registry's packing order), as a dense matrix.
    pub fn derivative(
        &self,
        registry: &VarRegistry,
        var: VarId,
        component: usize,
    ) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows(), self.cols());
        let kind = registry.var(var).kind;
        for t in &self.terms {
            if t.var != var {
                continue;
            }
            match kind {
                VarKind::Symmetric(n) => {
                    // component -> (p, q), p <= q, column-major upper triangle
                    let (p, q) = sym_component(n, component);
                    add_outer(&mut out, &t.left, p, &t.right, q);
                    if p != q {
                        add_outer(&mut out, &t.left, q, &t.right, p);
                    }
                }
                VarKind::Rectangular(_, n_cols) => {
                    let p = component / n_cols;
                    let q = component % n_cols;
                    if t.transposed {
                        add_outer(&mut out, &t.left, q, &t.right, p);
                    } else {
                        add_outer(&mut out, &t.left, p, &t.right, q);
                    }
                }
            }
        }
        out
    }
}

fn add_outer(out: &mut DMatrix<f64>, left: &DMatrix<f64>, lcol: usize, right: &DMatrix<f64>, rrow: usize) {
    for r in 0..out.nrows() {
        let lv = left[(r, lcol)];
        if lv == 0.0 {
            continue;
        }
        for c in 0..out.ncols() {
            out[(r, c)] += lv * right[(rrow, c)];
        }
    }
}

/// Map a packed symmetric component index to its (row, col) with row <= col.
pub fn sym_component(n: usize, component: usize) -> (usize, usize) {
    let mut t = component;
    for q in 0..n {
        if t <= q {
            return (t, q);
        }
        t -= q + 1;
    }
    panic!("component {component} out of range for symmetric {n}");
}

use std::ops::AddAssign;
