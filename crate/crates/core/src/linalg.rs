//! Dense symmetric solves and block-diagonal covariance support.

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};

/// Relative pivot floor for Gram-matrix factorizations: the smallest Cholesky
/// pivot must be at least this fraction of the largest diagonal entry.
pub const GRAM_PIVOT_REL_TOL: f64 = 1e-12;

/// Absolute tolerance for symmetry checks on covariance matrices.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    /// Factor `m` (assumed symmetric), requiring every pivot to stay at or
    /// above `rel_pivot_tol` times the largest diagonal entry of `m`.
    /// With `rel_pivot_tol == 0` pivots only have to be strictly positive.
    pub fn factor(m: &DMatrix<f64>, rel_pivot_tol: f64) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(CoreError::validation(format!(
                "Cholesky needs a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let mut max_diag: f64 = 0.0;
        for i in 0..n {
            let d = m[(i, i)];
            if !d.is_finite() {
                return Err(CoreError::validation("non-finite diagonal in Cholesky input"));
            }
            max_diag = max_diag.max(d.abs());
        }
        let floor = rel_pivot_tol * max_diag;
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = m[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            let ok = if rel_pivot_tol > 0.0 { d >= floor && d > 0.0 } else { d > 0.0 };
            if !ok || !d.is_finite() {
                return Err(CoreError::singular(format!(
                    "pivot {:.3e} at index {} below floor {:.3e} (dim {})",
                    d, j, floor, n
                )));
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Solve `m x = b` for one right-hand side.
    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        let mut x = b.clone();
        // forward: L y = b
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[(i, k)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solve `m X = B` columnwise.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::<f64>::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            let col = DVector::from_column_slice(b.column(j).as_slice());
            out.set_column(j, &self.solve_vec(&col));
        }
        out
    }
}

/// `x^T x` for a tall design slice.
pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.tr_mul(x)
}

/// Copy of the columns of `x` listed in `idx`, in that order.
pub fn columns(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::<f64>::zeros(x.nrows(), idx.len());
    for (k, &i) in idx.iter().enumerate() {
        out.set_column(k, &x.column(i));
    }
    out
}

/// Copy of the rows of `x` listed in `idx`, in that order.
pub fn rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::<f64>::zeros(idx.len(), x.ncols());
    for (k, &i) in idx.iter().enumerate() {
        out.set_row(k, &x.row(i));
    }
    out
}

/// Submatrix of `m` at the row/column index sets, in the given orders.
pub fn submatrix(m: &DMatrix<f64>, ri: &[usize], ci: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::<f64>::zeros(ri.len(), ci.len());
    for (a, &i) in ri.iter().enumerate() {
        for (b, &j) in ci.iter().enumerate() {
            out[(a, b)] = m[(i, j)];
        }
    }
    out
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Fail unless `m` is symmetric within `tol` (absolute, entrywise).
pub fn check_symmetric(m: &DMatrix<f64>, tol: f64, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(CoreError::validation(format!(
            "{} must be square, got {}x{}",
            what,
            m.nrows(),
            m.ncols()
        )));
    }
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let d = (m[(i, j)] - m[(j, i)]).abs();
            if !(d <= tol) {
                return Err(CoreError::validation(format!(
                    "{} asymmetric at ({}, {}): |{} - {}| = {:.3e} > {:.3e}",
                    what,
                    i,
                    j,
                    m[(i, j)],
                    m[(j, i)],
                    d,
                    tol
                )));
            }
        }
    }
    Ok(())
}

/// Block-diagonal symmetric matrix stored by blocks, used for the stacked
/// per-task covariance. Never materialized unless asked to.
#[derive(Debug, Clone)]
pub struct BlockDiag {
    blocks: Vec<DMatrix<f64>>,
    offsets: Vec<usize>,
    dim: usize,
}

impl BlockDiag {
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut dim = 0;
        for (i, b) in blocks.iter().enumerate() {
            if b.nrows() != b.ncols() {
                return Err(CoreError::validation(format!(
                    "block {} is {}x{}, not square",
                    i,
                    b.nrows(),
                    b.ncols()
                )));
            }
            offsets.push(dim);
            dim += b.nrows();
        }
        Ok(BlockDiag { blocks, offsets, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(v.len(), self.dim);
        let mut out = DVector::<f64>::zeros(self.dim);
        for (b, &off) in self.blocks.iter().zip(&self.offsets) {
            let n = b.nrows();
            let seg = v.rows(off, n);
            let prod = b * seg;
            out.rows_mut(off, n).copy_from(&prod);
        }
        out
    }

    /// `v^T Sigma v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&self.mul_vec(v))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::<f64>::zeros(self.dim, self.dim);
        for (b, &off) in self.blocks.iter().zip(&self.offsets) {
            out.view_mut((off, off), (b.nrows(), b.ncols())).copy_from(b);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cholesky_solves_spd_system() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let ch = Cholesky::factor(&m, GRAM_PIVOT_REL_TOL).unwrap();
        let b = DVector::from_row_slice(&[1.0, -2.0, 0.7]);
        let x = ch.solve_vec(&b);
        let back = &m * &x;
        assert_relative_eq!(back, b, epsilon = 1e-12);
    }

    #[test]
    fn cholesky_rejects_rank_deficiency() {
        // second column is twice the first
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, -1.0, -2.0]);
        let g = gram(&x);
        assert!(matches!(
            Cholesky::factor(&g, GRAM_PIVOT_REL_TOL),
            Err(CoreError::Singular(_))
        ));
    }

    #[test]
    fn cholesky_pivot_floor_is_relative_to_largest_diagonal() {
        // floor = 1e-12 * max_diag = 1e-6 here; a trailing pivot of 1e-4
        // clears it, a trailing pivot of 1e-8 does not.
        let eps = 1e-4;
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[1e6, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0 + eps],
        );
        assert!(Cholesky::factor(&m, GRAM_PIVOT_REL_TOL).is_ok());
        let eps = 1e-8;
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[1e6, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0 + eps],
        );
        assert!(Cholesky::factor(&m, GRAM_PIVOT_REL_TOL).is_err());
    }

    #[test]
    fn empty_factorization_is_fine() {
        let m = DMatrix::<f64>::zeros(0, 0);
        let ch = Cholesky::factor(&m, GRAM_PIVOT_REL_TOL).unwrap();
        let x = ch.solve_vec(&DVector::zeros(0));
        assert_eq!(x.len(), 0);
    }

    #[test]
    fn block_diag_matches_dense() {
        let b1 = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let b2 = DMatrix::from_row_slice(1, 1, &[4.0]);
        let bd = BlockDiag::new(vec![b1, b2]).unwrap();
        let v = DVector::from_row_slice(&[1.0, -1.0, 2.0]);
        let dense = bd.to_dense();
        assert_relative_eq!(bd.mul_vec(&v), &dense * &v, epsilon = 1e-14);
        assert_relative_eq!(bd.quad_form(&v), (&dense * &v).dot(&v), epsilon = 1e-12);
    }
}
