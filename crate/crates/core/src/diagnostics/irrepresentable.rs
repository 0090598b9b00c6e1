use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::GrowingCholesky;
use crate::model::{GramMatrix, SignPattern};

#[derive(Debug, Clone, Serialize)]
pub struct IrrepresentableReport {
    pub support: Vec<usize>,
    pub signs: Vec<i8>,
    /// `‖C_NK C_KK⁻¹ s_K‖∞`
    pub value: f64,
    pub holds: bool,
    pub margin: f64,
    /// One minus the worst case of `value` over all sign vectors.
    pub erc: f64,
    /// Column of N attaining `value`.
    pub worst_column: Option<usize>,
    /// Columns of N with `|C_kK C_KK⁻¹ s_K| ≥ 1`.
    pub violating: Vec<usize>,
    pub condition_number: f64,
}

pub fn irrepresentable_check(c: &GramMatrix, support: &[usize], signs: &SignPattern) -> Result<IrrepresentableReport> {
    let p = c.p();
    if support.is_empty() {
        return Err(Error::InvalidInput("support must be non-empty".into()));
    }
    if signs.len() != support.len() {
        return Err(Error::InvalidInput(format!(
            "{} signs given for a support of size {}",
            signs.len(),
            support.len()
        )));
    }
    if signs.as_slice().contains(&0) {
        return Err(Error::InvalidInput("signs on the support must be nonzero".into()));
    }
    let mut seen = vec![false; p];
    for &k in support {
        if k >= p || seen[k] {
            return Err(Error::InvalidInput(format!("support index {k} out of range or repeated")));
        }
        seen[k] = true;
    }
    let null: Vec<usize> = (0..p).filter(|&k| !seen[k]).collect();

    let ckk = c.submatrix(support, support);
    let singular = || Error::Singular { columns: sorted(support) };
    let chol = GrowingCholesky::rebuild(&(0..support.len()).collect::<Vec<_>>(), |i, j| ckk[(i, j)])
        .map_err(|_| singular())?;
    let eig = ckk.clone().symmetric_eigen().eigenvalues;
    let condition_number = eig.max() / eig.min();

    let s: Vec<f64> = signs.as_slice().iter().map(|&v| v as f64).collect();
    let w = DVector::from_vec(chol.solve(&s));
    let cnk = c.submatrix(&null, support);
    let v = &cnk * &w;

    // rows of C_NK C_KK⁻¹ = (C_KK⁻¹ C_KN)ᵀ
    let mut coupling = DMatrix::<f64>::zeros(null.len(), support.len());
    for (r, row) in cnk.row_iter().enumerate() {
        let sol = chol.solve(row.transpose().as_slice());
        coupling.row_mut(r).copy_from_slice(&sol);
    }
    let worst_row = coupling.row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max);

    let (value, worst_column) = match v.iamax_full() {
        _ if null.is_empty() => (0.0, None),
        (i, _) => (v[i].abs(), Some(null[i])),
    };
    let violating = null.iter().zip(v.iter()).filter(|(_, x)| x.abs() >= 1.0).map(|(&k, _)| k).collect();
    Ok(IrrepresentableReport {
        support: support.to_vec(),
        signs: signs.as_slice().to_vec(),
        value,
        holds: value < 1.0,
        margin: 1.0 - value,
        erc: 1.0 - worst_row,
        worst_column,
        violating,
        condition_number,
    })
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use itertools::Itertools;

    fn gram(rows: &[&[f64]]) -> GramMatrix {
        let p = rows.len();
        GramMatrix::from_matrix(DMatrix::from_fn(p, p, |i, j| rows[i][j]), None).unwrap()
    }

    fn signs(v: &[i8]) -> SignPattern {
        SignPattern::new(v.to_vec()).unwrap()
    }

    #[test]
    fn orthogonal_design_holds_trivially() {
        let c = GramMatrix::from_matrix(DMatrix::identity(5, 5), None).unwrap();
        let r = irrepresentable_check(&c, &[1, 3], &signs(&[1, -1])).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.holds);
        assert_eq!(r.erc, 1.0);
    }

    #[test]
    fn three_column_violation() {
        let c = gram(&[&[1.0, 0.5, 0.8], &[0.5, 1.0, 0.8], &[0.8, 0.8, 1.0]]);
        let r = irrepresentable_check(&c, &[0, 1], &signs(&[1, 1])).unwrap();
        assert!((r.value - 16.0 / 15.0).abs() < 1e-12);
        assert!(!r.holds);
        assert_eq!(r.worst_column, Some(2));
        assert_eq!(r.violating, vec![2]);
    }

    #[test]
    fn erc_matches_sign_enumeration() {
        let c = gram(&[
            &[1.0, 0.3, -0.2, 0.4, 0.1],
            &[0.3, 1.0, 0.25, -0.1, 0.2],
            &[-0.2, 0.25, 1.0, 0.3, -0.3],
            &[0.4, -0.1, 0.3, 1.0, 0.05],
            &[0.1, 0.2, -0.3, 0.05, 1.0],
        ]);
        let support = [0, 2, 4];
        let r = irrepresentable_check(&c, &support, &signs(&[1, 1, 1])).unwrap();
        let worst = (0..3)
            .map(|_| [-1i8, 1])
            .multi_cartesian_product()
            .map(|s| irrepresentable_check(&c, &support, &signs(&s)).unwrap().value)
            .fold(0.0, f64::max);
        assert!((r.erc - (1.0 - worst)).abs() < 1e-12);
        assert!(r.erc <= r.margin + 1e-15);
    }

    #[test]
    fn singular_block_names_support() {
        let c = gram(&[&[1.0, 1.0, 0.0], &[1.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        let err = irrepresentable_check(&c, &[1, 0], &signs(&[1, 1])).unwrap_err();
        assert!(matches!(err, Error::Singular { columns } if columns == vec![0, 1]));
    }
}
