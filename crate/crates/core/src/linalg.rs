//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Relative pivot below which a column is treated as lying in the span of the others:
/// `‖(I − P)x‖² ≤ SINGULAR_PIVOT · ‖x‖²`.
pub const SINGULAR_PIVOT: f64 = 1e-10;

pub fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Minimum-norm least-squares solution of `X·x ≈ target` via SVD.
pub fn least_squares(x: &DMatrix<f64>, target: &DVector<f64>) -> DVector<f64> {
    let svd = x.clone().svd(true, true);
    let tol = svd.singular_values.max() * 1e-12 * (x.nrows().max(x.ncols()) as f64);
    svd.solve(target, tol).unwrap_or_else(|_| DVector::zeros(x.ncols()))
}

/// `‖target − X·x̂‖₂` for the least-squares solution `x̂`.
pub fn least_squares_residual(x: &DMatrix<f64>, target: &DVector<f64>) -> f64 {
    (target - x * least_squares(x, target)).norm()
}

/// Cholesky factor of a Gram submatrix that grows one column at a time.
///
/// Stored as dense lower-triangular rows; `push` costs O(k²), `remove` refactors.
#[derive(Debug, Clone, Default)]
pub struct GrowingCholesky {
    rows: Vec<Vec<f64>>,
}

impl GrowingCholesky {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Appends a column with cross terms `cross[i] = A[new, i]` and diagonal `diag`.
    /// Returns `false`, leaving the factor unchanged, when the new column is numerically
    /// dependent on the existing ones.
    pub fn push(&mut self, cross: &[f64], diag: f64) -> bool {
        debug_assert_eq!(cross.len(), self.rows.len());
        let k = self.rows.len();
        let mut w = vec![0.0; k + 1];
        for i in 0..k {
            let row = &self.rows[i];
            let mut acc = cross[i];
            for j in 0..i {
                acc -= row[j] * w[j];
            }
            w[i] = acc / row[i];
        }
        let d2 = diag - w[..k].iter().map(|v| v * v).sum::<f64>();
        if !(d2 > SINGULAR_PIVOT * diag) {
            return false;
        }
        w[k] = d2.sqrt();
        self.rows.push(w);
        true
    }

    /// Solves `L Lᵀ x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let k = self.rows.len();
        let mut y = vec![0.0; k];
        for i in 0..k {
            let row = &self.rows[i];
            let mut acc = b[i];
            for (j, yj) in y.iter().enumerate().take(i) {
                acc -= row[j] * yj;
            }
            y[i] = acc / row[i];
        }
        for i in (0..k).rev() {
            let mut acc = y[i];
            for (row, yj) in self.rows.iter().zip(&y).skip(i + 1) {
                acc -= row[i] * yj;
            }
            y[i] = acc / self.rows[i][i];
        }
        y
    }

    /// Rebuilds the factor for an index list, with `gram(i, j)` giving entries.
    /// Returns the first position whose column was dependent, if any.
    pub fn rebuild<F: Fn(usize, usize) -> f64>(idx: &[usize], gram: F) -> Result<Self, usize> {
        let mut chol = Self::new();
        for (pos, &k) in idx.iter().enumerate() {
            let cross: Vec<f64> = idx[..pos].iter().map(|&j| gram(k, j)).collect();
            if !chol.push(&cross, gram(k, k)) {
                return Err(pos);
            }
        }
        Ok(chol)
    }
}

/// Solves a symmetric positive-definite system, or `None` when it is numerically singular.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let k = a.nrows();
    let chol = GrowingCholesky::rebuild(&(0..k).collect::<Vec<_>>(), |i, j| a[(i, j)]).ok()?;
    Some(DVector::from_vec(chol.solve(b.as_slice())))
}
