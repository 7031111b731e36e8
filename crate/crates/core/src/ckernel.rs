//! Classical reference kernels evaluated on the same windows as the
//! quantum kernel.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassicalKernelError {
    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid kernel parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassicalKind {
    Rbf,
    Poly,
}

/// Fixed (never tuned) hyperparameters of a classical kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalKernelParams {
    pub kind: ClassicalKind,
    pub gamma: f64,
    pub offset_r: f64,
    pub degree_d: u32,
}

impl ClassicalKernelParams {
    /// Defaults for windows of length `window`: `gamma = 1/window`, `r = 1`, `d = 3`.
    pub fn default_for(kind: ClassicalKind, window: usize) -> Self {
        Self {
            kind,
            gamma: 1.0 / window as f64,
            offset_r: 1.0,
            degree_d: 3,
        }
    }

    pub fn validate(&self) -> Result<(), ClassicalKernelError> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(ClassicalKernelError::InvalidParams(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if self.degree_d < 1 {
            return Err(ClassicalKernelError::InvalidParams(
                "degree must be at least 1".into(),
            ));
        }
        if !self.offset_r.is_finite() {
            return Err(ClassicalKernelError::InvalidParams("offset must be finite".into()));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64, ClassicalKernelError> {
        match self.kind {
            ClassicalKind::Rbf => rbf_kernel(x, y, self),
            ClassicalKind::Poly => poly_kernel(x, y, self),
        }
    }
}

fn same_len(x: &[f64], y: &[f64]) -> Result<(), ClassicalKernelError> {
    if x.len() != y.len() {
        return Err(ClassicalKernelError::LengthMismatch(x.len(), y.len()));
    }
    Ok(())
}

/// `exp(-gamma ||x - y||²)`.
pub fn rbf_kernel(
    x: &[f64],
    y: &[f64],
    params: &ClassicalKernelParams,
) -> Result<f64, ClassicalKernelError> {
    same_len(x, y)?;
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-params.gamma * d2).exp())
}

/// `(gamma <x, y> + r)^d`.
pub fn poly_kernel(
    x: &[f64],
    y: &[f64],
    params: &ClassicalKernelParams,
) -> Result<f64, ClassicalKernelError> {
    same_len(x, y)?;
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    Ok((params.gamma * dot + params.offset_r).powi(params.degree_d as i32))
}
