//! Per-feature Gram matrices for one station, with an optional on-disk
//! cache keyed by data content, split and kernel parameters.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::hex;
use super::{ExperimentConfig, ExperimentError, CACHE_DIR_ENV};
use crate::cache::{read_kernel_matrix, write_kernel_matrix};
use crate::gram::{gram_eval, gram_train, KernelFamily, KernelFunction};
use crate::krr::KernelMatrix;
use crate::pipeline::{Split, WindowSet, WindowedData};

/// Train-train, val-train and test-train matrices, one per feature.
#[derive(Debug, Clone)]
pub struct KernelSet {
    pub family: KernelFamily,
    pub features: Vec<String>,
    pub train: Vec<KernelMatrix>,
    pub val: Vec<KernelMatrix>,
    pub test: Vec<KernelMatrix>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct KernelStats {
    pub computed: usize,
    pub reused: usize,
    pub elapsed_ms: f64,
}

impl KernelStats {
    pub fn add(&mut self, other: KernelStats) {
        self.computed += other.computed;
        self.reused += other.reused;
        self.elapsed_ms += other.elapsed_ms;
    }
}

/// Cache root: the environment override if set, otherwise
/// `<output_dir>/cache`.
pub fn cache_root(cfg: &ExperimentConfig) -> PathBuf {
    match std::env::var_os(CACHE_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => cfg.output_dir.join("cache"),
    }
}

#[derive(Serialize)]
struct CacheKey<'a> {
    format: u32,
    data_sha256: &'a str,
    split: crate::pipeline::SplitSpec,
    family: KernelFamily,
    params: Option<crate::ckernel::ClassicalKernelParams>,
}

/// Directory for one station and kernel family.
pub fn cache_dir(
    root: &Path,
    cfg: &ExperimentConfig,
    station: &str,
    data_sha256: &str,
    family: KernelFamily,
) -> PathBuf {
    let params = match cfg.kernel_function(family) {
        Ok(KernelFunction::Classical(p)) => Some(p),
        _ => None,
    };
    let key = CacheKey {
        format: crate::cache::VERSION,
        data_sha256,
        split: cfg.split_spec(),
        family,
        params,
    };
    let digest = hex(&Sha256::digest(serde_json::to_vec(&key).expect("key serializes")));
    root.join(station).join(format!("{}-{}", family.name(), &digest[..16]))
}

pub fn file_sha256(path: &Path) -> Result<String, ExperimentError> {
    let bytes = std::fs::read(path).map_err(|e| ExperimentError::io(path, e))?;
    Ok(hex(&Sha256::digest(bytes)))
}

fn pair_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train_train",
        Split::Val => "val_train",
        Split::Test => "test_train",
    }
}

/// Cache file for one feature and split pair.
pub fn cache_file(dir: &Path, feature: &str, split: Split) -> PathBuf {
    dir.join(format!("{feature}_{}.qkrn", pair_name(split)))
}

fn one_matrix(
    kernel: &KernelFunction,
    feature: &str,
    set: &WindowSet,
    train: &WindowSet,
    cache: Option<&Path>,
    stats: &mut KernelStats,
    written: &mut Vec<PathBuf>,
) -> Result<KernelMatrix, ExperimentError> {
    let source = format!("{}/{feature}/{}", kernel.family(), pair_name(set.split));
    let path = cache.map(|d| cache_file(d, feature, set.split));
    if let Some(p) = path.as_deref().filter(|p| p.exists()) {
        match read_kernel_matrix(p, &source) {
            Ok(m) if m.rows() == set.len() && m.cols() == train.len() => {
                stats.reused += 1;
                written.push(p.to_path_buf());
                return Ok(m);
            }
            Ok(_) => log::warn!("{}: cached shape is stale; recomputing", p.display()),
            Err(e) => log::warn!("{}: {e}; recomputing", p.display()),
        }
    }
    let train_windows = train.feature_windows(feature)?;
    let m = if set.split == Split::Train {
        gram_train(kernel, train_windows, &source)?
    } else {
        gram_eval(kernel, set.feature_windows(feature)?, train_windows, &source)?
    };
    stats.computed += 1;
    if let Some(p) = path {
        write_kernel_matrix(&p, &m)?;
        written.push(p);
    }
    Ok(m)
}

/// Builds (or loads) every matrix for `family`. Returns the set, timing
/// statistics and the cache files touched.
pub fn build_kernel_set(
    cfg: &ExperimentConfig,
    family: KernelFamily,
    data: &WindowedData,
    cache: Option<&Path>,
) -> Result<(KernelSet, KernelStats, Vec<PathBuf>), ExperimentError> {
    let started = Instant::now();
    let kernel = cfg.kernel_function(family)?;
    let mut stats = KernelStats::default();
    let mut written = Vec::new();
    let mut set = KernelSet {
        family,
        features: cfg.features.clone(),
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for feature in &cfg.features {
        for split_set in data.sets() {
            let m = one_matrix(&kernel, feature, split_set, &data.train, cache, &mut stats, &mut written)?;
            match split_set.split {
                Split::Train => set.train.push(m),
                Split::Val => set.val.push(m),
                Split::Test => set.test.push(m),
            }
        }
    }
    stats.elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok((set, stats, written))
}
