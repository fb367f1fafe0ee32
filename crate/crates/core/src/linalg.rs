//! Small dense/sparse complex linear-algebra helpers.
//!
//! Operators are stored densely (`CMatrix`). Hot loops apply them through
//! [`SparseMatrix`], a CSR copy holding only the structurally nonzero
//! entries; the LMG Hamiltonian has three nonzero bands in the Dicke basis.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Compressed-row copy of a dense matrix.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    dim: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl SparseMatrix {
    pub fn from_dense(m: &CMatrix) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "square matrix expected");
        let dim = m.nrows();
        let mut row_start = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_start.push(0);
        for r in 0..dim {
            for c in 0..dim {
                let v = m[(r, c)];
                if v != ZERO {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_start.push(cols.len());
        }
        Self {
            dim,
            row_start,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `out = self * x`
    pub fn mul_vec_into(&self, x: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.row_start[r]..self.row_start[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *o = acc;
        }
    }

    /// `out = self * rho` for a dense square matrix `rho`.
    pub fn mul_mat_into(&self, rho: &CMatrix, out: &mut CMatrix) {
        let d = self.dim;
        debug_assert_eq!(rho.nrows(), d);
        // column-major storage: iterate column by column
        for c in 0..d {
            let col = rho.column(c);
            for r in 0..d {
                let mut acc = ZERO;
                for k in self.row_start[r]..self.row_start[r + 1] {
                    acc += self.vals[k] * col[self.cols[k]];
                }
                out[(r, c)] = acc;
            }
        }
    }
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_hermitian(m: &CMatrix, tol: f64) -> bool {
    m.nrows() == m.ncols() && max_abs(&(m - m.adjoint())) <= tol
}

/// `tr(rho * op)` without forming the product.
pub fn trace_product(rho: &CMatrix, op: &CMatrix) -> Complex64 {
    let d = rho.nrows();
    let mut acc = ZERO;
    for m in 0..d {
        for n in 0..d {
            acc += rho[(m, n)] * op[(n, m)];
        }
    }
    acc
}

/// Pairwise (cascade) summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
