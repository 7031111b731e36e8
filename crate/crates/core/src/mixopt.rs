//! Convex fusion of per-feature kernels and validation-driven search for
//! the mixture weights and ridge parameter.
//!
//! Each outer call maps a proposal from the unit cube to a weight vector
//! (soft-max of a latent vector in `[-4, 4]^k` for classical kernels, plain
//! renormalization of `[0, 1]^k` for the quantum kernel), mixes the Gram
//! matrices, adds diagonal jitter on the classical branch only, and scans
//! the ridge grid for the best validation R². The surrogate minimizes
//! `-R²`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::krr::{KernelMatrix, KrrError, MatrixKind, RidgePath};
use crate::metrics;
use crate::surrogate::{Minimizer, SurrogateKind};

pub const LATENT_BOUND: f64 = 4.0;
pub const JITTER_SCALE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MixError {
    #[error("value {value} at position {index} is outside the box [{lo}, {hi}]")]
    OutOfBox {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("kernel matrices have different shapes")]
    ShapeMismatch,
    #[error("kernel matrices have different kinds")]
    KindMismatch,
    #[error("{0} weights for {1} kernels")]
    WeightCount(usize, usize),
    #[error("no kernels to mix")]
    NoKernels,
    #[error("invalid ridge grid: {0}")]
    InvalidGrid(String),
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error("every ridge value failed to fit")]
    AllFitsFailed,
    #[error(transparent)]
    Krr(#[from] KrrError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Classical,
    Quantum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureWeights {
    pub weights: Vec<f64>,
    pub branch: Branch,
    /// Set when an all-zero raw proposal was replaced by uniform weights.
    pub degenerate: bool,
}

impl MixtureWeights {
    pub fn uniform(k: usize, branch: Branch) -> Self {
        Self {
            weights: vec![1.0 / k as f64; k],
            branch,
            degenerate: false,
        }
    }
}

fn check_box(values: &[f64], lo: f64, hi: f64) -> Result<(), MixError> {
    for (index, &value) in values.iter().enumerate() {
        if !(lo..=hi).contains(&value) {
            return Err(MixError::OutOfBox { index, value, lo, hi });
        }
    }
    Ok(())
}

/// `w_f = exp(v_f) / Σ exp(v_j)` for `v ∈ [-4, 4]^k`.
pub fn softmax_weights(latent: &[f64]) -> Result<MixtureWeights, MixError> {
    if latent.is_empty() {
        return Err(MixError::NoKernels);
    }
    check_box(latent, -LATENT_BOUND, LATENT_BOUND)?;
    let max = latent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = latent.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(MixtureWeights {
        weights: exps.into_iter().map(|e| e / total).collect(),
        branch: Branch::Classical,
        degenerate: false,
    })
}

/// `w_f = raw_f / Σ raw_j` for `raw ∈ [0, 1]^k`; all zeros give uniform
/// weights with the degenerate flag set.
pub fn renormalize_weights(raw: &[f64]) -> Result<MixtureWeights, MixError> {
    if raw.is_empty() {
        return Err(MixError::NoKernels);
    }
    check_box(raw, 0.0, 1.0)?;
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        let mut w = MixtureWeights::uniform(raw.len(), Branch::Quantum);
        w.degenerate = true;
        return Ok(w);
    }
    Ok(MixtureWeights {
        weights: raw.iter().map(|r| r / total).collect(),
        branch: Branch::Quantum,
        degenerate: false,
    })
}

/// Elementwise `Σ w_f K_f`.
pub fn mix_kernels(mats: &[&KernelMatrix], w: &MixtureWeights) -> Result<KernelMatrix, MixError> {
    let first = mats.first().ok_or(MixError::NoKernels)?;
    if mats.len() != w.weights.len() {
        return Err(MixError::WeightCount(w.weights.len(), mats.len()));
    }
    for m in mats {
        if m.kind() != first.kind() {
            return Err(MixError::KindMismatch);
        }
        if (m.rows(), m.cols()) != (first.rows(), first.cols()) {
            return Err(MixError::ShapeMismatch);
        }
    }
    let mut acc = first.values() * w.weights[0];
    for (m, &wf) in mats.iter().zip(&w.weights).skip(1) {
        acc += m.values() * wf;
    }
    if first.kind() == MatrixKind::TrainTrain {
        // exact symmetry; accumulation order is the same for (i,j) and (j,i)
        // but scaling can differ by an ulp after the caller's own edits
        let t = acc.transpose();
        acc = (&acc + t) * 0.5;
    }
    Ok(KernelMatrix::new(first.kind(), "mixture", acc)?)
}

/// `K + εI` with `ε = 1e-6 · tr(K) / n`.
pub fn add_jitter(k: &KernelMatrix) -> KernelMatrix {
    let n = k.rows().min(k.cols());
    if n == 0 {
        return k.clone();
    }
    let eps = JITTER_SCALE * k.values().trace() / k.rows() as f64;
    let mut v = k.values().clone();
    for i in 0..n {
        v[(i, i)] += eps;
    }
    KernelMatrix::new(k.kind(), k.source.clone(), v).expect("diagonal shift keeps validity")
}

/// `count` points log-spaced on `[min, max]`.
pub fn log_grid(min: f64, max: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![min];
    }
    let (a, b) = (min.ln(), max.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

fn check_grid(grid: &[f64]) -> Result<(), MixError> {
    if grid.is_empty() {
        return Err(MixError::InvalidGrid("empty".into()));
    }
    if grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(MixError::InvalidGrid("values must be positive and finite".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MixError::InvalidGrid("values must be strictly increasing".into()));
    }
    Ok(())
}

/// Validation R² (score form) for every grid value; `-inf` marks a failed fit.
pub fn alpha_scores(
    k_train: &KernelMatrix,
    k_val: &KernelMatrix,
    y_train: &[f64],
    y_val: &[f64],
    grid: &[f64],
) -> Result<Vec<f64>, MixError> {
    check_grid(grid)?;
    if k_val.rows() != y_val.len() {
        return Err(KrrError::DimensionMismatch(format!(
            "{} validation rows for {} targets",
            k_val.rows(),
            y_val.len()
        ))
        .into());
    }
    let path = RidgePath::new(k_train, y_train, k_val)?;
    Ok(grid
        .par_iter()
        .map(|&lambda| {
            path.predict(lambda)
                .and_then(|pred| metrics::r2_score(&pred, y_val).ok())
                .filter(|r| r.is_finite())
                .unwrap_or(f64::NEG_INFINITY)
        })
        .collect())
}

/// Best `(lambda, validation R²)` on the grid, ties going to the larger λ.
pub fn inner_alpha_search(
    k_train: &KernelMatrix,
    k_val: &KernelMatrix,
    y_train: &[f64],
    y_val: &[f64],
    grid: &[f64],
) -> Result<(f64, f64), MixError> {
    let scores = alpha_scores(k_train, k_val, y_train, y_val, grid)?;
    pick_best(grid, &scores)
}

pub(crate) fn pick_best(grid: &[f64], scores: &[f64]) -> Result<(f64, f64), MixError> {
    let mut best: Option<(f64, f64)> = None;
    for (&lambda, &score) in grid.iter().zip(scores) {
        if score == f64::NEG_INFINITY {
            continue;
        }
        if best.is_none_or(|(_, s)| score >= s) {
            best = Some((lambda, score));
        }
    }
    best.ok_or(MixError::AllFitsFailed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationBudget {
    pub outer_calls: usize,
    pub alpha_grid: Vec<f64>,
    pub seed: u64,
    #[serde(default)]
    pub surrogate: SurrogateKind,
}

impl Default for OptimizationBudget {
    fn default() -> Self {
        Self {
            outer_calls: 20,
            alpha_grid: log_grid(1e-6, 1e3, 100),
            seed: 0,
            surrogate: SurrogateKind::GaussianProcess,
        }
    }
}

impl OptimizationBudget {
    pub fn validate(&self) -> Result<(), MixError> {
        if self.outer_calls == 0 {
            return Err(MixError::InvalidBudget("outer_calls must be at least 1".into()));
        }
        check_grid(&self.alpha_grid)
    }
}

/// One outer evaluation, as written to the JSON-lines trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub call_index: usize,
    pub weights: Vec<f64>,
    pub lambda: Option<f64>,
    pub val_r2: Option<f64>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureOutcome {
    pub weights: MixtureWeights,
    pub lambda: f64,
    pub val_r2: f64,
    pub trace: Vec<TraceEntry>,
    pub degenerate_proposals: usize,
}

impl MixtureOutcome {
    /// Best `-R²` seen after each call.
    pub fn incumbent_objective(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.trace
            .iter()
            .map(|e| {
                if let Some(r) = e.val_r2 {
                    best = best.min(-r);
                }
                best
            })
            .collect()
    }
}

/// Maps a unit-cube point to weights for the branch.
pub fn weights_from_unit(u: &[f64], branch: Branch) -> Result<MixtureWeights, MixError> {
    match branch {
        Branch::Classical => {
            let latent: Vec<f64> = u
                .iter()
                .map(|&v| -LATENT_BOUND + 2.0 * LATENT_BOUND * v)
                .collect();
            softmax_weights(&latent)
        }
        Branch::Quantum => renormalize_weights(u),
    }
}

/// Mix, (classical) jitter, and scan the ridge grid for a fixed weight vector.
pub fn evaluate_weights(
    train: &[&KernelMatrix],
    val: &[&KernelMatrix],
    y_train: &[f64],
    y_val: &[f64],
    weights: &MixtureWeights,
    grid: &[f64],
) -> Result<(f64, f64), MixError> {
    let mut k_train = mix_kernels(train, weights)?;
    if weights.branch == Branch::Classical {
        k_train = add_jitter(&k_train);
    }
    let k_val = mix_kernels(val, weights)?;
    inner_alpha_search(&k_train, &k_val, y_train, y_val, grid)
}

/// Searches mixture weights and ridge parameter to maximize validation R².
pub fn optimize_mixture(
    train: &[&KernelMatrix],
    val: &[&KernelMatrix],
    y_train: &[f64],
    y_val: &[f64],
    branch: Branch,
    budget: &OptimizationBudget,
) -> Result<MixtureOutcome, MixError> {
    budget.validate()?;
    let k = train.len();
    if k == 0 {
        return Err(MixError::NoKernels);
    }
    if val.len() != k {
        return Err(MixError::WeightCount(val.len(), k));
    }

    let mut trace = Vec::new();
    let mut best: Option<(MixtureWeights, f64, f64)> = None;
    let mut degenerate = 0;
    let mut last_error = None;

    let mut record = |call_index: usize,
                      weights: MixtureWeights,
                      started: Instant,
                      result: Result<(f64, f64), MixError>,
                      trace: &mut Vec<TraceEntry>|
     -> Option<f64> {
        let (lambda, r2) = match result {
            Ok((l, r)) => (Some(l), Some(r)),
            Err(e @ (MixError::AllFitsFailed | MixError::Krr(_))) => {
                last_error = Some(e);
                (None, None)
            }
            Err(e) => {
                last_error = Some(e);
                (None, None)
            }
        };
        trace.push(TraceEntry {
            call_index,
            weights: weights.weights.clone(),
            lambda,
            val_r2: r2,
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        if let (Some(l), Some(r)) = (lambda, r2) {
            if best.as_ref().is_none_or(|(_, _, br)| r > *br) {
                best = Some((weights, l, r));
            }
        }
        r2.map(|r| -r)
    };

    if k == 1 {
        let weights = MixtureWeights {
            weights: vec![1.0],
            branch,
            degenerate: false,
        };
        let started = Instant::now();
        let result = evaluate_weights(train, val, y_train, y_val, &weights, &budget.alpha_grid);
        record(0, weights, started, result, &mut trace);
    } else {
        let mut minimizer = Minimizer::new(k, budget.outer_calls, budget.surrogate, budget.seed);
        let mut worst_seen = f64::NEG_INFINITY;
        for call in 0..budget.outer_calls {
            let started = Instant::now();
            let u = minimizer.ask();
            let weights = weights_from_unit(&u, branch)?;
            if weights.degenerate {
                degenerate += 1;
            }
            let result = evaluate_weights(train, val, y_train, y_val, &weights, &budget.alpha_grid);
            let objective = match record(call, weights, started, result, &mut trace) {
                Some(obj) => {
                    worst_seen = worst_seen.max(obj);
                    obj
                }
                // failed proposals are reported to the surrogate as worse than
                // anything observed
                None => worst_seen.max(0.0) + 1.0,
            };
            minimizer.tell(u, objective);
        }
    }

    let (weights, lambda, val_r2) = match best {
        Some(b) => b,
        None => return Err(last_error.unwrap_or(MixError::AllFitsFailed)),
    };
    Ok(MixtureOutcome {
        weights,
        lambda,
        val_r2,
        trace,
        degenerate_proposals: degenerate,
    })
}
