//! Per-station forecasting jobs and the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernels::{build_kernel_set, cache_dir, cache_root, file_sha256, KernelSet, KernelStats};
use super::{write_file, write_json, ExperimentConfig, ExperimentError};
use crate::gram::KernelFamily;
use crate::krr::{krr_fit, krr_predict};
use crate::metrics::MetricsReport;
use crate::mixopt::{add_jitter, mix_kernels, optimize_mixture, Branch, MixtureOutcome, MixtureWeights};
use crate::pipeline::{ingest_csv, prepare, StationSeries, WindowedData};
use crate::stations;

pub const STATIONS_DIR: &str = "stations";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Fused weights, ridge parameter and dual coefficients of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureKrrModel {
    pub station_code: String,
    pub family: KernelFamily,
    pub features: Vec<String>,
    pub weights: MixtureWeights,
    pub ridge_lambda: f64,
    pub val_r2: f64,
    /// Diagonal jitter added to the fused train matrix (classical only).
    pub mixture_jitter: f64,
    /// Extra diagonal the solver needed; zero in the normal case.
    pub solver_jitter: f64,
    pub target_mean: f64,
    pub target_std: f64,
    pub dual_coefficients: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FamilyResult {
    pub outcome: MixtureOutcome,
    pub model: MixtureKrrModel,
    /// Test predictions in physical units.
    pub predictions: Vec<f64>,
    pub observations: Vec<f64>,
    pub report: MetricsReport,
    pub kernel_stats: KernelStats,
}

pub fn branch_for(family: KernelFamily) -> Branch {
    if family.is_quantum() {
        Branch::Quantum
    } else {
        Branch::Classical
    }
}

/// Optimizes the mixture on validation data, refits on train and scores
/// the test split in physical units.
pub fn forecast_with_kernels(
    cfg: &ExperimentConfig,
    series: &StationSeries,
    data: &WindowedData,
    kernels: &KernelSet,
) -> Result<(MixtureOutcome, MixtureKrrModel, Vec<f64>, MetricsReport), ExperimentError> {
    let family = kernels.family;
    let branch = branch_for(family);
    let train: Vec<_> = kernels.train.iter().collect();
    let val: Vec<_> = kernels.val.iter().collect();
    let test: Vec<_> = kernels.test.iter().collect();
    let outcome = optimize_mixture(
        &train,
        &val,
        &data.train.targets,
        &data.val.targets,
        branch,
        &cfg.budget(),
    )?;

    let mut k_train = mix_kernels(&train, &outcome.weights)?;
    let mut mixture_jitter = 0.0;
    if branch == Branch::Classical {
        let before = k_train.values()[(0, 0)];
        k_train = add_jitter(&k_train);
        mixture_jitter = k_train.values()[(0, 0)] - before;
    }
    let fit = krr_fit(&k_train, &data.train.targets, outcome.lambda)?;
    let k_test = mix_kernels(&test, &outcome.weights)?;
    let scale = data.train.target_scale;
    let predictions: Vec<f64> = krr_predict(&fit, &k_test)?
        .into_iter()
        .map(|z| scale.inverse(z))
        .collect();
    let observations = data.test.targets_physical();

    let mut flags = BTreeMap::new();
    flags.insert("degenerate_windows".to_string(), data.degenerate_windows() as u64);
    flags.insert("dropped_rows".to_string(), series.dropped_rows as u64);
    flags.insert("spacing_violations".to_string(), series.spacing_violations as u64);
    flags.insert("degenerate_proposals".to_string(), outcome.degenerate_proposals as u64);
    flags.insert(
        "failed_proposals".to_string(),
        outcome.trace.iter().filter(|t| t.val_r2.is_none()).count() as u64,
    );
    flags.insert("solver_jitter".to_string(), u64::from(fit.jitter > 0.0));
    let report = MetricsReport::compute(
        &series.station_code,
        family.name(),
        &predictions,
        &observations,
        flags,
    )?;
    let model = MixtureKrrModel {
        station_code: series.station_code.clone(),
        family,
        features: kernels.features.clone(),
        weights: outcome.weights.clone(),
        ridge_lambda: outcome.lambda,
        val_r2: outcome.val_r2,
        mixture_jitter,
        solver_jitter: fit.jitter,
        target_mean: scale.mean,
        target_std: scale.std,
        dual_coefficients: fit.dual_coefficients,
    };
    Ok((outcome, model, predictions, report))
}

/// Kernels plus forecast for one family; `cache` is the family's cache dir.
pub fn forecast_family(
    cfg: &ExperimentConfig,
    series: &StationSeries,
    data: &WindowedData,
    family: KernelFamily,
    cache: Option<&Path>,
) -> Result<FamilyResult, ExperimentError> {
    let (kernels, kernel_stats, _) = build_kernel_set(cfg, family, data, cache)?;
    let (outcome, model, predictions, report) = forecast_with_kernels(cfg, series, data, &kernels)?;
    Ok(FamilyResult {
        outcome,
        model,
        observations: data.test.targets_physical(),
        predictions,
        report,
        kernel_stats,
    })
}

/// Reads a station's CSV and attaches its climate label.
pub fn load_station(cfg: &ExperimentConfig, code: &str) -> Result<StationSeries, ExperimentError> {
    let path = cfg.station_file(code);
    let mut series = ingest_csv(&path, code, &cfg.features, &cfg.target)?;
    series.koppen_class = cfg
        .station_classes
        .get(code)
        .cloned()
        .or_else(|| stations::lookup(code).map(|s| s.koppen))
        .unwrap_or_default();
    Ok(series)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StationTimings {
    pub load_ms: f64,
    pub kernel_ms: f64,
    pub optimize_ms: f64,
    pub total_ms: f64,
    pub kernels_computed: usize,
    pub kernels_reused: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationEntry {
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
    /// Kernel cache files, absolute or relative to the output directory.
    pub kernel_caches: Vec<String>,
    pub timings: StationTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub software_version: String,
    pub stations: BTreeMap<String, StationEntry>,
    pub total_ms: f64,
}

/// Metadata written next to each station's reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMeta {
    pub station_code: String,
    pub koppen_class: String,
    pub n_rows: usize,
    pub dropped_rows: usize,
    pub train_windows: usize,
    pub val_windows: usize,
    pub test_windows: usize,
}

fn relative(path: &Path, base: &Path) -> String {
    path.strip_prefix(base)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

fn trace_jsonl(outcome: &MixtureOutcome) -> Result<Vec<u8>, ExperimentError> {
    let mut out = Vec::new();
    for entry in &outcome.trace {
        serde_json::to_writer(&mut out, entry)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn run_station(cfg: &ExperimentConfig, code: &str) -> Result<StationEntry, ExperimentError> {
    let started = Instant::now();
    let series = load_station(cfg, code)?;
    let data = prepare(&series, &cfg.split_spec(), &cfg.features, &cfg.target)?;
    let mut timings = StationTimings {
        load_ms: started.elapsed().as_secs_f64() * 1e3,
        ..Default::default()
    };
    let data_sha = file_sha256(&cfg.station_file(code))?;
    let root = cache_root(cfg);
    let dir = cfg.output_dir.join(STATIONS_DIR).join(code);
    let mut artifacts = Vec::new();
    let mut caches = Vec::new();

    let meta = StationMeta {
        station_code: code.to_string(),
        koppen_class: series.koppen_class.clone(),
        n_rows: series.len(),
        dropped_rows: series.dropped_rows,
        train_windows: data.train.len(),
        val_windows: data.val.len(),
        test_windows: data.test.len(),
    };
    let meta_path = dir.join("station.json");
    write_json(&meta_path, &meta)?;
    artifacts.push(meta_path);

    for &family in &cfg.kernels {
        let cache = cfg.cache.then(|| cache_dir(&root, cfg, code, &data_sha, family));
        let (kernels, stats, files) = build_kernel_set(cfg, family, &data, cache.as_deref())?;
        timings.kernel_ms += stats.elapsed_ms;
        timings.kernels_computed += stats.computed;
        timings.kernels_reused += stats.reused;
        caches.extend(files);

        let t = Instant::now();
        let (outcome, model, _, report) = forecast_with_kernels(cfg, &series, &data, &kernels)?;
        timings.optimize_ms += t.elapsed().as_secs_f64() * 1e3;
        log::info!(
            "{code}/{family}: nRMSE {:.3} %, R2 {:.4}, weights {:?}, lambda {:.3e}",
            report.nrmse_pct,
            report.r2_score,
            model.weights.weights,
            model.ridge_lambda
        );

        let report_path = dir.join(format!("report_{family}.json"));
        write_json(&report_path, &report)?;
        let model_path = dir.join(format!("model_{family}.json"));
        write_json(&model_path, &model)?;
        let trace_path = dir.join(format!("trace_{family}.jsonl"));
        write_file(&trace_path, &trace_jsonl(&outcome)?)?;
        artifacts.extend([report_path, model_path, trace_path]);
    }
    timings.total_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(StationEntry {
        status: "ok".into(),
        error: None,
        artifacts: artifacts.iter().map(|p| relative(p, &cfg.output_dir)).collect(),
        kernel_caches: caches.iter().map(|p| relative(p, &cfg.output_dir)).collect(),
        timings,
    })
}

/// Runs every station as an independent job on `jobs` worker threads
/// (all cores when `None`) and writes the manifest. Fails only when every
/// station failed.
pub fn cmd_run(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<RunManifest, ExperimentError> {
    cfg.validate()?;
    let started = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| ExperimentError::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<(String, Result<StationEntry, ExperimentError>)> = pool.install(|| {
        cfg.stations
            .par_iter()
            .map(|code| (code.clone(), run_station(cfg, code)))
            .collect()
    });

    let mut stations = BTreeMap::new();
    let mut failures = 0;
    for (code, result) in results {
        let entry = match result {
            Ok(entry) => entry,
            Err(e) => {
                log::error!("station {code} failed: {e}");
                failures += 1;
                StationEntry {
                    status: "failed".into(),
                    error: Some(e.to_string()),
                    artifacts: Vec::new(),
                    kernel_caches: Vec::new(),
                    timings: StationTimings::default(),
                }
            }
        };
        stations.insert(code, entry);
    }
    let manifest = RunManifest {
        config_hash: cfg.hash(),
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        stations,
        total_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    for entry in manifest.stations.values() {
        for a in entry.artifacts.iter().chain(&entry.kernel_caches) {
            let p = cfg.output_dir.join(a);
            if !p.exists() {
                return Err(ExperimentError::io(
                    &p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "artifact missing at manifest time"),
                ));
            }
        }
    }
    write_json(&cfg.output_dir.join(MANIFEST_FILE), &manifest)?;
    if failures == cfg.stations.len() {
        return Err(ExperimentError::AllStationsFailed(failures));
    }
    Ok(manifest)
}

/// Writes every cache file for one station: per feature and kernel family,
/// one train-train and two eval-train matrices. Existing valid files are
/// kept, so reruns leave them byte-identical.
pub fn cmd_kernels(cfg: &ExperimentConfig, station: &str) -> Result<Vec<PathBuf>, ExperimentError> {
    cfg.validate()?;
    if !cfg.stations.iter().any(|s| s == station) {
        return Err(ExperimentError::UnknownStation(station.to_string()));
    }
    let series = load_station(cfg, station)?;
    let data = prepare(&series, &cfg.split_spec(), &cfg.features, &cfg.target)?;
    let data_sha = file_sha256(&cfg.station_file(station))?;
    let root = cache_root(cfg);
    let mut files = Vec::new();
    for &family in &cfg.kernels {
        let dir = cache_dir(&root, cfg, station, &data_sha, family);
        let (_, _, written) = build_kernel_set(cfg, family, &data, Some(&dir))?;
        files.extend(written);
    }
    Ok(files)
}
