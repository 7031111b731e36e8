//! Kernel ridge regression on precomputed Gram matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Symmetry tolerance for train-train matrices.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KrrError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("ridge parameter must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
    #[error("positive-definite factorization failed (last jitter {jitter:e})")]
    FactorizationFailed { jitter: f64 },
    #[error("kernel matrix contains non-finite entries")]
    NonFinite,
    #[error("train-train matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("train-train matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    TrainTrain,
    EvalTrain,
}

impl MatrixKind {
    pub fn code(self) -> u8 {
        match self {
            MatrixKind::TrainTrain => 0,
            MatrixKind::EvalTrain => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(MatrixKind::TrainTrain),
            1 => Some(MatrixKind::EvalTrain),
            _ => None,
        }
    }
}

/// Dense Gram matrix tagged with its role and origin.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    kind: MatrixKind,
    /// Kernel and feature that produced the matrix, e.g. `qft/glo`.
    pub source: String,
    values: DMatrix<f64>,
}

impl KernelMatrix {
    pub fn new(
        kind: MatrixKind,
        source: impl Into<String>,
        values: DMatrix<f64>,
    ) -> Result<Self, KrrError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KrrError::NonFinite);
        }
        if kind == MatrixKind::TrainTrain {
            if !values.is_square() {
                return Err(KrrError::NotSquare {
                    rows: values.nrows(),
                    cols: values.ncols(),
                });
            }
            let asym = max_asymmetry(&values);
            if asym > SYMMETRY_TOL {
                return Err(KrrError::NotSymmetric(asym));
            }
        }
        Ok(Self {
            kind,
            source: source.into(),
            values,
        })
    }

    /// Builds from row-major data.
    pub fn from_row_major(
        kind: MatrixKind,
        source: impl Into<String>,
        rows: usize,
        cols: usize,
        data: &[f64],
    ) -> Result<Self, KrrError> {
        if data.len() != rows * cols {
            return Err(KrrError::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Self::new(kind, source, DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            out.extend(self.values.row(i).iter());
        }
        out
    }
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrrModel {
    pub dual_coefficients: Vec<f64>,
    pub ridge_lambda: f64,
    pub training_targets: Vec<f64>,
    /// Extra diagonal added because `K + λI` was not numerically positive
    /// definite. Zero in the normal case.
    pub jitter: f64,
}

const JITTER_STEPS: usize = 8;

/// Solves `(K + λI) α = y` by Cholesky factorization.
///
/// If the factorization fails, a diagonal jitter starting at
/// `1e-12 · max(tr(K)/n, 1)` is added and grown tenfold per attempt.
pub fn krr_fit(k: &KernelMatrix, y: &[f64], lambda: f64) -> Result<KrrModel, KrrError> {
    if k.kind() != MatrixKind::TrainTrain {
        return Err(KrrError::DimensionMismatch(
            "fit requires a train-train matrix".into(),
        ));
    }
    let n = k.rows();
    if y.len() != n {
        return Err(KrrError::DimensionMismatch(format!(
            "{} targets for {n} training windows",
            y.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(KrrError::InvalidLambda(lambda));
    }
    let base_jitter = 1e-12 * (k.values().trace() / n.max(1) as f64).max(1.0);
    let rhs = DVector::from_column_slice(y);
    let mut jitter = 0.0;
    for attempt in 0..=JITTER_STEPS {
        let mut a = k.values().clone();
        for i in 0..n {
            a[(i, i)] += lambda + jitter;
        }
        if let Some(chol) = a.clone().cholesky() {
            let mut alpha = chol.solve(&rhs);
            let residual = &rhs - &a * &alpha;
            alpha += chol.solve(&residual);
            return Ok(KrrModel {
                dual_coefficients: alpha.iter().copied().collect(),
                ridge_lambda: lambda,
                training_targets: y.to_vec(),
                jitter,
            });
        }
        jitter = base_jitter * 10f64.powi(attempt as i32);
    }
    Err(KrrError::FactorizationFailed { jitter })
}

/// `K_hat · α`.
pub fn krr_predict(model: &KrrModel, k_hat: &KernelMatrix) -> Result<Vec<f64>, KrrError> {
    if k_hat.cols() != model.dual_coefficients.len() {
        return Err(KrrError::DimensionMismatch(format!(
            "kernel has {} columns, model has {} coefficients",
            k_hat.cols(),
            model.dual_coefficients.len()
        )));
    }
    let alpha = DVector::from_column_slice(&model.dual_coefficients);
    Ok((k_hat.values() * alpha).iter().copied().collect())
}

/// Evaluation-set predictions along a path of ridge values from a single
/// eigendecomposition `K = QΛQᵀ`: `ŷ(λ) = (K_e Q) diag(1/(Λ+λ)) Qᵀy`.
#[derive(Debug, Clone)]
pub struct RidgePath {
    eigenvalues: DVector<f64>,
    projected_targets: DVector<f64>,
    eval_basis: DMatrix<f64>,
}

impl RidgePath {
    pub fn new(k: &KernelMatrix, y: &[f64], k_eval: &KernelMatrix) -> Result<Self, KrrError> {
        if k.kind() != MatrixKind::TrainTrain || k.rows() != y.len() {
            return Err(KrrError::DimensionMismatch(
                "ridge path needs a train-train matrix matching the targets".into(),
            ));
        }
        if k_eval.cols() != k.rows() {
            return Err(KrrError::DimensionMismatch(format!(
                "eval matrix has {} columns, expected {}",
                k_eval.cols(),
                k.rows()
            )));
        }
        let eig = SymmetricEigen::new(k.values().clone());
        let projected_targets = eig.eigenvectors.transpose() * DVector::from_column_slice(y);
        let eval_basis = k_eval.values() * &eig.eigenvectors;
        Ok(Self {
            eigenvalues: eig.eigenvalues,
            projected_targets,
            eval_basis,
        })
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.min()
    }

    /// `None` when `K + λI` is not positive definite.
    pub fn predict(&self, lambda: f64) -> Option<Vec<f64>> {
        let scale = self.eigenvalues.amax().max(1.0);
        if self.min_eigenvalue() + lambda <= f64::EPSILON * scale {
            return None;
        }
        let coeffs = self
            .projected_targets
            .zip_map(&self.eigenvalues, |t, e| t / (e + lambda));
        Some((&self.eval_basis * coeffs).iter().copied().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn eye(n: usize) -> KernelMatrix {
        KernelMatrix::new(MatrixKind::TrainTrain, "eye", DMatrix::identity(n, n)).unwrap()
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> KernelMatrix {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let mut k = &a * a.transpose() / n as f64;
        for i in 0..n {
            k[(i, i)] += 0.1;
        }
        let k = (&k + k.transpose()) * 0.5;
        KernelMatrix::new(MatrixKind::TrainTrain, "spd", k).unwrap()
    }

    #[test]
    fn identity_closed_forms() {
        let y = [1.5, -2.0, 0.25, 4.0];
        let m = krr_fit(&eye(4), &y, 0.0).unwrap();
        assert_eq!(m.dual_coefficients, y.to_vec());
        let m = krr_fit(&eye(4), &y, 1.0).unwrap();
        let half: Vec<f64> = y.iter().map(|v| v / 2.0).collect();
        assert_eq!(m.dual_coefficients, half);
    }

    #[test]
    fn stationarity_of_ridge_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..10 {
            let k = random_spd(&mut rng, 20);
            let y: Vec<f64> = (0..20).map(|_| rng.random_range(-2.0..2.0)).collect();
            let lambda = 0.3;
            let m = krr_fit(&k, &y, lambda).unwrap();
            let a = DVector::from_column_slice(&m.dual_coefficients);
            let yv = DVector::from_column_slice(&y);
            let kv = k.values();
            let grad = -2.0 * kv * (&yv - kv * &a) + 2.0 * lambda * kv * &a;
            assert!(grad.norm() < 1e-8);
            let residual = &yv - (kv * &a + lambda * &a);
            assert!(residual.norm() < 1e-8 * yv.norm());
        }
    }

    #[test]
    fn predict_examples() {
        let y = [3.0, -1.0, 2.0];
        let m = krr_fit(&eye(3), &y, 0.0).unwrap();
        let khat = KernelMatrix::new(MatrixKind::EvalTrain, "sel", DMatrix::identity(3, 3)).unwrap();
        assert_eq!(krr_predict(&m, &khat).unwrap(), y.to_vec());

        let khat = KernelMatrix::from_row_major(
            MatrixKind::EvalTrain,
            "rows",
            2,
            3,
            &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0],
        )
        .unwrap();
        let p = krr_predict(&m, &khat).unwrap();
        assert_eq!(p[0], 0.0);
        assert_eq!(p[1], 4.0);

        // single training point: alpha = y / (k + lambda)
        let k1 = KernelMatrix::new(MatrixKind::TrainTrain, "one", DMatrix::from_element(1, 1, 1.0)).unwrap();
        let m = krr_fit(&k1, &[2.0], 1.0).unwrap();
        assert_eq!(m.dual_coefficients, vec![1.0]);
        let khat = KernelMatrix::new(MatrixKind::EvalTrain, "one", DMatrix::from_element(1, 1, 0.4)).unwrap();
        assert!((krr_predict(&m, &khat).unwrap()[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn dimension_errors() {
        let m = krr_fit(&eye(2), &[1.0, 2.0], 0.1).unwrap();
        assert!(matches!(krr_fit(&eye(2), &[1.0], 0.1), Err(KrrError::DimensionMismatch(_))));
        let khat = KernelMatrix::new(MatrixKind::EvalTrain, "x", DMatrix::zeros(1, 3)).unwrap();
        assert!(matches!(krr_predict(&m, &khat), Err(KrrError::DimensionMismatch(_))));
        assert!(matches!(krr_fit(&eye(2), &[1.0, 2.0], -1.0), Err(KrrError::InvalidLambda(_))));
    }

    #[test]
    fn matrix_validation() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            KernelMatrix::new(MatrixKind::TrainTrain, "a", asym),
            Err(KrrError::NotSymmetric(_))
        ));
        assert!(matches!(
            KernelMatrix::new(MatrixKind::TrainTrain, "a", DMatrix::zeros(2, 3)),
            Err(KrrError::NotSquare { .. })
        ));
        let nan = DMatrix::from_element(1, 1, f64::NAN);
        assert_eq!(
            KernelMatrix::new(MatrixKind::EvalTrain, "a", nan),
            Err(KrrError::NonFinite)
        );
    }

    #[test]
    fn singular_matrix_gets_jitter() {
        let k = KernelMatrix::new(MatrixKind::TrainTrain, "ones", DMatrix::from_element(3, 3, 1.0)).unwrap();
        let m = krr_fit(&k, &[1.0, 1.0, 1.0], 0.0).unwrap();
        assert!(m.jitter > 0.0);
    }

    #[test]
    fn near_interpolation_with_tiny_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let k = random_spd(&mut rng, 15);
        let y: Vec<f64> = (0..15).map(|_| rng.random_range(1.0..3.0)).collect();
        let m = krr_fit(&k, &y, 1e-12).unwrap();
        let pred = krr_predict(&m, &KernelMatrix::new(MatrixKind::EvalTrain, "in", k.values().clone()).unwrap()).unwrap();
        for (p, t) in pred.iter().zip(&y) {
            assert!(((p - t) / t).abs() < 1e-6);
        }
    }

    #[test]
    fn prediction_is_linear_in_eval_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let k = random_spd(&mut rng, 8);
        let y: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = krr_fit(&k, &y, 0.05).unwrap();
        let a = DMatrix::from_fn(5, 8, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(5, 8, |_, _| rng.random_range(-1.0..1.0));
        let (ca, cb) = (0.7, -1.3);
        let wrap = |m: DMatrix<f64>| KernelMatrix::new(MatrixKind::EvalTrain, "e", m).unwrap();
        let lhs = krr_predict(&m, &wrap(&a * ca + &b * cb)).unwrap();
        let pa = krr_predict(&m, &wrap(a)).unwrap();
        let pb = krr_predict(&m, &wrap(b)).unwrap();
        for i in 0..5 {
            assert!((lhs[i] - (ca * pa[i] + cb * pb[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn ridge_path_matches_cholesky_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let k = random_spd(&mut rng, 30);
        let y: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ke = KernelMatrix::new(
            MatrixKind::EvalTrain,
            "e",
            DMatrix::from_fn(7, 30, |_, _| rng.random_range(0.0..1.0)),
        )
        .unwrap();
        let path = RidgePath::new(&k, &y, &ke).unwrap();
        for lambda in [1e-6, 1e-3, 0.1, 10.0] {
            let direct = krr_predict(&krr_fit(&k, &y, lambda).unwrap(), &ke).unwrap();
            let via_path = path.predict(lambda).unwrap();
            for (a, b) in direct.iter().zip(&via_path) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn ridge_path_rejects_indefinite_shift() {
        let k = KernelMatrix::new(
            MatrixKind::TrainTrain,
            "indef",
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
        )
        .unwrap();
        let ke = KernelMatrix::new(MatrixKind::EvalTrain, "e", DMatrix::identity(2, 2)).unwrap();
        let path = RidgePath::new(&k, &[1.0, 2.0], &ke).unwrap();
        assert!(path.predict(0.5).is_none());
        assert!(path.predict(2.0).is_some());
    }
}
