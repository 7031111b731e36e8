//! Gram matrix assembly for the quantum and classical kernels.
//!
//! Rows are computed in parallel. Every entry is evaluated independently, so
//! the result does not depend on the number of worker threads.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ckernel::{ClassicalKernelError, ClassicalKernelParams, ClassicalKind};
use crate::krr::{KernelMatrix, KrrError, MatrixKind};
use crate::qkernel::{self, KernelCircuit, KernelError};
use crate::qsim::Statevector;

#[derive(Debug, Error)]
pub enum GramError {
    #[error(transparent)]
    Quantum(#[from] KernelError),
    #[error(transparent)]
    Classical(#[from] ClassicalKernelError),
    #[error(transparent)]
    Matrix(#[from] KrrError),
    #[error("window length mismatch: {0} vs {1}")]
    WindowLength(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Qft,
    Rbf,
    Poly,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Qft => "qft",
            KernelFamily::Rbf => "rbf",
            KernelFamily::Poly => "poly",
        }
    }

    pub fn is_quantum(self) -> bool {
        self == KernelFamily::Qft
    }
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub enum KernelFunction {
    Quantum(KernelCircuit),
    Classical(ClassicalKernelParams),
}

impl KernelFunction {
    pub fn family(&self) -> KernelFamily {
        match self {
            KernelFunction::Quantum(_) => KernelFamily::Qft,
            KernelFunction::Classical(p) => match p.kind {
                ClassicalKind::Rbf => KernelFamily::Rbf,
                ClassicalKind::Poly => KernelFamily::Poly,
            },
        }
    }
}

enum Prepared<'a> {
    States(Vec<Statevector>),
    Raw(&'a [Vec<f64>]),
}

fn prepare<'a>(kernel: &KernelFunction, windows: &'a [Vec<f64>]) -> Result<Prepared<'a>, GramError> {
    match kernel {
        KernelFunction::Quantum(circuit) => {
            let states = windows
                .par_iter()
                .map(|w| circuit.embed(w))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Prepared::States(states))
        }
        KernelFunction::Classical(_) => Ok(Prepared::Raw(windows)),
    }
}

fn entry(
    kernel: &KernelFunction,
    a: &Prepared<'_>,
    i: usize,
    b: &Prepared<'_>,
    j: usize,
) -> Result<f64, GramError> {
    match (kernel, a, b) {
        (KernelFunction::Quantum(_), Prepared::States(sa), Prepared::States(sb)) => {
            Ok(qkernel::fidelity(&sa[i], &sb[j]))
        }
        (KernelFunction::Classical(p), Prepared::Raw(ra), Prepared::Raw(rb)) => {
            Ok(p.eval(&ra[i], &rb[j])?)
        }
        _ => unreachable!("inputs prepared with the same kernel"),
    }
}

/// Symmetric train-train matrix `K_uv = k(w_u, w_v)`.
pub fn gram_train(
    kernel: &KernelFunction,
    windows: &[Vec<f64>],
    source: &str,
) -> Result<KernelMatrix, GramError> {
    let n = windows.len();
    let prepared = prepare(kernel, windows)?;
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| entry(kernel, &prepared, i, &prepared, j))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (offset, &v) in row.iter().enumerate() {
            let j = i + offset;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(KernelMatrix::new(MatrixKind::TrainTrain, source, m)?)
}

/// Rectangular matrix `K_hat_ij = k(train_j, eval_i)`.
pub fn gram_eval(
    kernel: &KernelFunction,
    eval: &[Vec<f64>],
    train: &[Vec<f64>],
    source: &str,
) -> Result<KernelMatrix, GramError> {
    if let (Some(a), Some(b)) = (eval.first(), train.first()) {
        if a.len() != b.len() {
            return Err(GramError::WindowLength(a.len(), b.len()));
        }
    }
    let pe = prepare(kernel, eval)?;
    let pt = prepare(kernel, train)?;
    let rows: Vec<Vec<f64>> = (0..eval.len())
        .into_par_iter()
        .map(|i| {
            (0..train.len())
                .map(|j| entry(kernel, &pt, j, &pe, i))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let m = DMatrix::from_fn(eval.len(), train.len(), |i, j| rows[i][j]);
    Ok(KernelMatrix::new(MatrixKind::EvalTrain, source, m)?)
}
