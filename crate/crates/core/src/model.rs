//! Shared data model: designs, Gram matrices, coefficient vectors, sign patterns and
//! regression problems with optional simulation ground truth.

use std::ops::{Deref, Index};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::solver::{lasso_path, PathOptions};

/// Two columns are flagged as collinear when `1 - |cos angle| <= COLLINEAR_TOL`.
pub const COLLINEAR_TOL: f64 = 1e-10;

/// Fixed n × p design matrix.
///
/// Construction validates finiteness and rejects zero columns. `XᵀX` is cached because
/// every solver and diagnostic needs it.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
    labels: Option<Vec<String>>,
    cross: DMatrix<f64>,
    collinear: Vec<(usize, usize)>,
    column_scale: Option<Vec<f64>>,
}

impl DesignMatrix {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(Error::InvalidInput(format!("design must be non-empty, got {n}x{p}")));
        }
        for j in 0..p {
            for i in 0..n {
                if !x[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, column: j });
                }
            }
        }
        for j in 0..p {
            if x.column(j).iter().all(|&v| v == 0.0) {
                return Err(Error::ZeroColumn { column: j });
            }
        }
        let cross = linalg::symmetrize(x.tr_mul(&x));
        let collinear = collinear_pairs(&cross);
        Ok(Self { x, labels: None, cross, collinear, column_scale: None })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidInput("ragged rows".into()));
        }
        Self::new(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.p() {
            return Err(Error::InvalidInput(format!("{} labels for {} columns", labels.len(), self.p())));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Rescales every column to `‖X_k‖² = n` so that `diag(C) = 1`.
    pub fn normalized(&self) -> DesignMatrix {
        let n = self.n() as f64;
        let scale: Vec<f64> = (0..self.p()).map(|k| (n / self.cross[(k, k)]).sqrt()).collect();
        let mut x = self.x.clone();
        for (k, s) in scale.iter().enumerate() {
            x.column_mut(k).scale_mut(*s);
        }
        let mut out = DesignMatrix::new(x).expect("rescaling preserves validity");
        out.labels = self.labels.clone();
        out.column_scale = Some(scale);
        out
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn column(&self, k: usize) -> nalgebra::DVectorView<'_, f64> {
        self.x.column(k)
    }

    /// Unscaled cross-product `XᵀX`.
    pub fn cross_product(&self) -> &DMatrix<f64> {
        &self.cross
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Per-column factors applied by [`DesignMatrix::normalized`], if any.
    pub fn column_scale(&self) -> Option<&[f64]> {
        self.column_scale.as_deref()
    }

    /// `‖X_k‖²` for every column.
    pub fn column_sq_norms(&self) -> Vec<f64> {
        (0..self.p()).map(|k| self.cross[(k, k)]).collect()
    }

    /// Pairs of columns that are collinear to within [`COLLINEAR_TOL`].
    pub fn collinear_pairs(&self) -> &[(usize, usize)] {
        &self.collinear
    }

    pub fn is_flagged(&self) -> bool {
        !self.collinear.is_empty()
    }

    pub fn times(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.x * beta
    }

    /// `XᵀY`
    pub fn tr_times(&self, y: &DVector<f64>) -> DVector<f64> {
        self.x.tr_mul(y)
    }
}

fn collinear_pairs(cross: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let p = cross.nrows();
    let mut pairs = Vec::new();
    for i in 0..p {
        for j in (i + 1)..p {
            let cos = cross[(i, j)] / (cross[(i, i)] * cross[(j, j)]).sqrt();
            if 1.0 - cos.abs() <= COLLINEAR_TOL {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// `C = n⁻¹XᵀX`, or any symmetric PSD matrix supplied directly to the diagnostics.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    c: DMatrix<f64>,
    n: Option<usize>,
}

impl GramMatrix {
    /// Validates symmetry and positive semi-definiteness of a caller-supplied matrix.
    /// `n` is the number of samples behind it, when known; it bounds the rank.
    pub fn from_matrix(c: DMatrix<f64>, n: Option<usize>) -> Result<Self> {
        let p = c.nrows();
        if p == 0 || c.ncols() != p {
            return Err(Error::InvalidInput(format!("Gram matrix must be square, got {:?}", c.shape())));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("Gram matrix has non-finite entries".into()));
        }
        let scale = c.amax().max(1.0);
        let asym = (&c - c.transpose()).amax();
        if asym > 1e-10 * scale {
            return Err(Error::InvalidInput(format!("Gram matrix is not symmetric (max asymmetry {asym:e})")));
        }
        let c = linalg::symmetrize(c);
        let diagonal = (0..p).all(|i| (0..p).all(|j| i == j || c[(i, j)] == 0.0));
        let min_eig = if diagonal { c.diagonal().min() } else { c.clone().symmetric_eigen().eigenvalues.min() };
        if min_eig < -1e-10 * scale {
            return Err(Error::InvalidInput(format!("Gram matrix is not PSD (smallest eigenvalue {min_eig:e})")));
        }
        Ok(Self { c, n })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn samples(&self) -> Option<usize> {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.c[(i, j)]
    }

    /// `C_HK`: rows in `rows`, columns in `cols`.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.c[(rows[i], cols[j])])
    }

    pub fn is_diagonal(&self) -> bool {
        let p = self.p();
        (0..p).all(|i| (0..p).all(|j| i == j || self.c[(i, j)] == 0.0))
    }
}

/// `C = n⁻¹XᵀX`, symmetrized.
pub fn build_gram(design: &DesignMatrix) -> GramMatrix {
    let n = design.n();
    GramMatrix { c: design.cross_product() / n as f64, n: Some(n) }
}

/// Real p-vector aligned with design columns (true β, Lasso fits, biases, restricted OLS).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct CoefficientVector(#[serde(serialize_with = "serialize_dvector")] DVector<f64>);

fn serialize_dvector<S: serde::Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

impl CoefficientVector {
    pub fn new(values: DVector<f64>) -> Self {
        Self(values)
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(DVector::from_vec(values))
    }

    pub fn zeros(p: usize) -> Self {
        Self(DVector::zeros(p))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn support(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(k, _)| k).collect()
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.lp_norm(1)
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn linf_distance(&self, other: &CoefficientVector) -> f64 {
        (&self.0 - &other.0).amax()
    }

    pub fn signs(&self) -> SignPattern {
        sign_of(self)
    }
}

impl Deref for CoefficientVector {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

impl Index<usize> for CoefficientVector {
    type Output = f64;

    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

impl From<DVector<f64>> for CoefficientVector {
    fn from(v: DVector<f64>) -> Self {
        Self(v)
    }
}

/// Componentwise sign over {−1, 0, +1}.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct SignPattern(Vec<i8>);

impl SignPattern {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if signs.iter().any(|s| !matches!(s, -1..=1)) {
            return Err(Error::InvalidInput("sign entries must be -1, 0 or +1".into()));
        }
        Ok(Self(signs))
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn restrict(&self, idx: &[usize]) -> SignPattern {
        SignPattern(idx.iter().map(|&k| self.0[k]).collect())
    }
}

pub fn sign_scalar(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

pub fn sign_of(v: &CoefficientVector) -> SignPattern {
    SignPattern(v.iter().map(|&x| sign_scalar(x)).collect())
}

/// Simulation ground truth.
#[derive(Debug, Clone)]
pub struct TruthSpec {
    beta: CoefficientVector,
    support: Vec<usize>,
    sigma: f64,
}

impl TruthSpec {
    pub fn new(beta: CoefficientVector, sigma: f64) -> Result<Self> {
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("true coefficients must be finite".into()));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("noise level must be >= 0, got {sigma}")));
        }
        let support = beta.support();
        Ok(Self { beta, support, sigma })
    }

    pub fn beta(&self) -> &CoefficientVector {
        &self.beta
    }

    /// K = {k : β_k ≠ 0}
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// N = complement of K.
    pub fn null_set(&self) -> Vec<usize> {
        (0..self.beta.len()).filter(|k| self.beta[*k] == 0.0).collect()
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// `Y = Xβ + ε` with optional stored truth and noise.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    design: Arc<DesignMatrix>,
    response: DVector<f64>,
    truth: Option<TruthSpec>,
    noise: Option<DVector<f64>>,
}

impl RegressionProblem {
    pub fn new(design: Arc<DesignMatrix>, response: DVector<f64>) -> Result<Self> {
        if response.len() != design.n() {
            return Err(Error::InvalidInput(format!(
                "response has {} entries, design has {} rows",
                response.len(),
                design.n()
            )));
        }
        if let Some(i) = response.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, column: 0 });
        }
        Ok(Self { design, response, truth: None, noise: None })
    }

    /// Builds `Y = Xβ + ε` from the truth and a noise draw, retaining both.
    pub fn simulated(design: Arc<DesignMatrix>, truth: TruthSpec, noise: DVector<f64>) -> Result<Self> {
        if truth.beta().len() != design.p() {
            return Err(Error::InvalidInput("truth length differs from design width".into()));
        }
        if noise.len() != design.n() {
            return Err(Error::InvalidInput("noise length differs from design height".into()));
        }
        let response = design.times(truth.beta().as_vector()) + &noise;
        let mut problem = Self::new(design, response)?;
        problem.truth = Some(truth);
        problem.noise = Some(noise);
        Ok(problem)
    }

    /// Attaches truth to an observed problem (no noise retained).
    pub fn with_truth(mut self, truth: TruthSpec) -> Result<Self> {
        if truth.beta().len() != self.design.p() {
            return Err(Error::InvalidInput("truth length differs from design width".into()));
        }
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    pub fn design_arc(&self) -> &Arc<DesignMatrix> {
        &self.design
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn truth(&self) -> Option<&TruthSpec> {
        self.truth.as_ref()
    }

    pub fn noise(&self) -> Option<&DVector<f64>> {
        self.noise.as_ref()
    }

    pub fn n(&self) -> usize {
        self.design.n()
    }

    pub fn p(&self) -> usize {
        self.design.p()
    }

    /// Same design and truth, different response. Noise is dropped.
    pub fn with_response(&self, response: DVector<f64>) -> Result<Self> {
        let mut out = Self::new(self.design.clone(), response)?;
        out.truth = self.truth.clone();
        Ok(out)
    }

    pub(crate) fn with_parts(
        design: Arc<DesignMatrix>,
        response: DVector<f64>,
        truth: Option<TruthSpec>,
        noise: Option<DVector<f64>>,
    ) -> Self {
        Self { design, response, truth, noise }
    }
}

/// Minimal-ℓ1 coefficient vector reproducing `target` exactly, obtained as the λ → 0⁺
/// end of the homotopy path. When the minimiser is not unique any minimiser is returned;
/// callers should compare ℓ1 norms rather than vectors.
pub fn minimal_l1_representation(design: &Arc<DesignMatrix>, target: &DVector<f64>) -> Result<CoefficientVector> {
    if target.len() != design.n() {
        return Err(Error::InvalidInput("target length differs from design height".into()));
    }
    let residual = linalg::least_squares_residual(design.matrix(), target);
    let scale = target.norm().max(f64::MIN_POSITIVE);
    if residual / scale > 1e-8 && residual > 0.0 {
        return Err(Error::Infeasible { residual: residual / scale });
    }
    let problem = RegressionProblem::new(design.clone(), target.clone())?;
    let opts = PathOptions { force: true, ..PathOptions::default() };
    let path = lasso_path(&problem, 0.0, &opts)?;
    Ok(path.coefficients_at(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn gram_of_identity() {
        let d = DesignMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let c = build_gram(&d);
        assert_eq!(c.matrix(), &DMatrix::from_diagonal_element(2, 2, 0.5));
    }

    #[test]
    fn gram_duplicate_columns() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, -1.0, -1.0]);
        let d = DesignMatrix::new(x).unwrap();
        assert!(d.is_flagged());
        assert_eq!(d.collinear_pairs(), &[(0, 1)]);
        let c = build_gram(&d);
        assert_eq!(c.get(0, 0), c.get(0, 1));
        assert_eq!(c.get(0, 1), c.get(1, 1));
    }

    #[test]
    fn gram_matches_triple_loop() {
        let x = random_matrix(5, 3, 11);
        let c = build_gram(&DesignMatrix::new(x.clone()).unwrap());
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for r in 0..5 {
                    acc += x[(r, i)] * x[(r, j)];
                }
                assert!((c.get(i, j) - acc / 5.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn gram_invariant_under_row_permutation() {
        let x = random_matrix(7, 4, 3);
        let mut perm = x.clone();
        perm.swap_rows(0, 6);
        perm.swap_rows(2, 3);
        let a = build_gram(&DesignMatrix::new(x).unwrap());
        let b = build_gram(&DesignMatrix::new(perm).unwrap());
        assert!((a.matrix() - b.matrix()).amax() <= 1e-14);
    }

    #[test]
    fn rejects_zero_column_and_nan() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]);
        assert!(matches!(DesignMatrix::new(x), Err(Error::ZeroColumn { column: 1 })));
        let x = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, 2.0, 1.0]);
        assert!(matches!(DesignMatrix::new(x), Err(Error::NonFinite { row: 0, column: 1 })));
    }

    #[test]
    fn normalization_sets_unit_diagonal() {
        let d = DesignMatrix::new(random_matrix(10, 4, 5)).unwrap().normalized();
        let c = build_gram(&d);
        for k in 0..4 {
            assert!((c.get(k, k) - 1.0).abs() < 1e-12);
        }
        assert!(d.column_scale().is_some());
    }

    #[test]
    fn gram_from_matrix_rejects_non_psd() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GramMatrix::from_matrix(c, None).is_err());
    }

    #[test]
    fn sign_examples() {
        let v = CoefficientVector::from_vec(vec![2.0, -0.5, 0.0]);
        assert_eq!(sign_of(&v).as_slice(), &[1, -1, 0]);
        assert_eq!(sign_of(&CoefficientVector::zeros(4)).as_slice(), &[0, 0, 0, 0]);
        let v = CoefficientVector::from_vec(vec![3.0, -1.0, 0.0, 0.0, 0.2, 7.0, -4.0, 1.0, 0.0, 0.0]);
        assert_eq!(sign_of(&v).as_slice(), &[1, -1, 0, 0, 1, 1, -1, 1, 0, 0]);
    }

    #[test]
    fn simulated_response_is_exact() {
        let d = Arc::new(DesignMatrix::new(random_matrix(6, 3, 9)).unwrap());
        let truth = TruthSpec::new(CoefficientVector::from_vec(vec![1.0, 0.0, -2.0]), 0.3).unwrap();
        let eps = DVector::from_vec(vec![0.1, -0.2, 0.05, 0.0, 0.3, -0.1]);
        let prob = RegressionProblem::simulated(d.clone(), truth, eps.clone()).unwrap();
        let back = prob.response() - d.times(prob.truth().unwrap().beta()) - eps;
        assert!(back.amax() <= 1e-12 * prob.response().amax());
        assert_eq!(prob.truth().unwrap().support(), &[0, 2]);
        assert_eq!(prob.truth().unwrap().null_set(), vec![1]);
    }

    #[test]
    fn minimal_l1_invertible() {
        let x = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.1, 1.0, 0.3, 0.0, -0.4, 1.5]);
        let d = Arc::new(DesignMatrix::new(x).unwrap());
        let beta0 = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let b = minimal_l1_representation(&d, &d.times(&beta0)).unwrap();
        assert!((b.as_vector() - beta0).amax() < 1e-9);
    }

    #[test]
    fn minimal_l1_duplicate_columns() {
        let v = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let x = DMatrix::from_columns(&[v.clone(), v.clone()]);
        let d = Arc::new(DesignMatrix::new(x).unwrap());
        let b = minimal_l1_representation(&d, &v).unwrap();
        assert!((b.l1_norm() - 1.0).abs() < 1e-12);
        // oracle: β = (a, 1 − a) minimises |a| + |1 − a| at value 1 over a ∈ [0, 1]
        let oracle = (0..=1000)
            .map(|i| -1.0 + 3.0 * i as f64 / 1000.0)
            .map(|a: f64| a.abs() + (1.0 - a).abs())
            .fold(f64::INFINITY, f64::min);
        assert!((b.l1_norm() - oracle).abs() < 1e-12);
    }

    #[test]
    fn minimal_l1_matches_grid_search() {
        // X₃ = (X₁ + X₂)/‖X₁ + X₂‖ makes the solution set a line; the target is a mix.
        let x1 = DVector::from_vec(vec![1.0, 0.2, -0.3]);
        let x2 = DVector::from_vec(vec![0.1, 0.9, 0.4]);
        let sum = &x1 + &x2;
        let x3: DVector<f64> = &sum / sum.norm();
        let x = DMatrix::from_columns(&[x1.clone(), x2.clone(), x3.clone()]);
        let d = Arc::new(DesignMatrix::new(x).unwrap());
        let target = &x1 * 0.7 + &x2 * 1.3;
        let b = minimal_l1_representation(&d, &target).unwrap();
        assert!((d.times(b.as_vector()) - &target).amax() < 1e-9);

        // solutions: (0.7, 1.3, 0) + t (1, 1, −‖x1+x2‖)
        let norm = sum.norm();
        let l1 = |t: f64| (0.7 + t).abs() + (1.3 + t).abs() + (norm * t).abs();
        let coarse =
            (0..=200_000).map(|i| -3.0 + 6.0 * i as f64 / 200_000.0).min_by(|a, b| l1(*a).total_cmp(&l1(*b))).unwrap();
        let fine =
            (0..=200_000).map(|i| coarse - 1e-4 + 2e-4 * i as f64 / 200_000.0).map(l1).fold(f64::INFINITY, f64::min);
        assert!((b.l1_norm() - fine).abs() < 1e-6, "{} vs {}", b.l1_norm(), fine);
    }

    #[test]
    fn minimal_l1_rejects_out_of_span() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0]);
        let d = Arc::new(DesignMatrix::new(x).unwrap());
        let t = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        assert!(matches!(minimal_l1_representation(&d, &t), Err(Error::Infeasible { .. })));
    }
}
