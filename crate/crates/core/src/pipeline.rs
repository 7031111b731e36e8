//! Per-station preprocessing: ingest, chronological split, train-only
//! standardization, windowing with one-step-ahead targets, and feature
//! screening.
//!
//! All indices are zero-based positions in the cleaned series. A window
//! starting at `l` covers `l..l+W` and its target sits at `l + W − 1 + H`.
//! Windows and targets never leave the split that contains them.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Windows whose standardized norm falls below this are replaced by the
/// uniform vector.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: cannot parse timestamp `{value}`")]
    InvalidTimestamp { row: usize, value: String },
    #[error("row {row}: cannot parse value `{value}` in column `{column}`")]
    InvalidValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("timestamps not strictly increasing at row {0}")]
    NonMonotonicTime(usize),
    #[error("no rows left after dropping missing values")]
    EmptyAfterCleaning,
    #[error("feature `{0}` has zero variance on the training split")]
    ZeroVariance(String),
    #[error("{0} split is too short for a window and its target")]
    SplitTooShort(Split),
    #[error("invalid split specification: {0}")]
    InvalidSpec(String),
    #[error("feature series `{0}` has a different length from the time axis")]
    RaggedFeatures(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("not enough training points for screening")]
    InsufficientData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// A multivariate series on a shared, strictly increasing time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct StationSeries {
    pub station_code: String,
    pub koppen_class: String,
    /// Minutes.
    pub timestamps: Vec<i64>,
    pub features: BTreeMap<String, Vec<f64>>,
    pub dropped_rows: usize,
    /// Number of consecutive timestamp gaps differing from the smallest step.
    pub spacing_violations: usize,
}

impl StationSeries {
    pub fn new(
        station_code: impl Into<String>,
        timestamps: Vec<i64>,
        features: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self, PipelineError> {
        for (name, values) in &features {
            if values.len() != timestamps.len() {
                return Err(PipelineError::RaggedFeatures(name.clone()));
            }
        }
        if let Some(pos) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(PipelineError::NonMonotonicTime(pos + 1));
        }
        let spacing_violations = spacing_violations(&timestamps);
        Ok(Self {
            station_code: station_code.into(),
            koppen_class: String::new(),
            timestamps,
            features,
            dropped_rows: 0,
            spacing_violations,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn feature(&self, name: &str) -> Result<&[f64], PipelineError> {
        self.features
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| PipelineError::UnknownFeature(name.to_string()))
    }
}

fn spacing_violations(ts: &[i64]) -> usize {
    let Some(step) = ts.windows(2).map(|w| w[1] - w[0]).min() else {
        return 0;
    };
    ts.windows(2).filter(|w| w[1] - w[0] != step).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub window: usize,
    pub stride: usize,
    pub horizon: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.8,
            val_frac: 0.1,
            test_frac: 0.1,
            window: 32,
            stride: 1,
            horizon: 1,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::InvalidSpec(msg));
        for (name, f) in [
            ("train_frac", self.train_frac),
            ("val_frac", self.val_frac),
            ("test_frac", self.test_frac),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {f}"));
            }
        }
        let sum = self.train_frac + self.val_frac + self.test_frac;
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("split fractions sum to {sum}, expected 1"));
        }
        if self.window < 2 || !self.window.is_power_of_two() {
            return bad(format!("window {} is not a power of two", self.window));
        }
        if self.stride == 0 {
            return bad("stride must be at least 1".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.window.trailing_zeros() as usize
    }

    /// Index ranges of the three splits in a series of length `len`.
    pub fn bounds(&self, len: usize) -> [Range<usize>; 3] {
        let train_end = (self.train_frac * len as f64).floor() as usize;
        let val_end = (((self.train_frac + self.val_frac) * len as f64).floor() as usize)
            .clamp(train_end, len);
        [0..train_end, train_end..val_end, val_end..len]
    }

    /// Number of windows with an in-range target in a split of `len` points.
    pub fn window_count(&self, len: usize) -> usize {
        let span = self.window + self.horizon;
        if len < span {
            0
        } else {
            (len - span) / self.stride + 1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub mean: f64,
    pub std: f64,
}

impl FeatureScale {
    pub fn transform(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Per-feature standardization parameters fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub features: BTreeMap<String, FeatureScale>,
}

impl Scaler {
    pub fn get(&self, name: &str) -> Result<FeatureScale, PipelineError> {
        self.features
            .get(name)
            .copied()
            .ok_or_else(|| PipelineError::UnknownFeature(name.to_string()))
    }
}

/// Z-scores every feature with mean and (population) standard deviation
/// taken from the training split only.
pub fn standardize(
    series: &StationSeries,
    spec: &SplitSpec,
) -> Result<(StationSeries, Scaler), PipelineError> {
    spec.validate()?;
    let [train, _, _] = spec.bounds(series.len());
    if train.is_empty() {
        return Err(PipelineError::SplitTooShort(Split::Train));
    }
    let mut scaled = series.clone();
    let mut params = BTreeMap::new();
    for (name, values) in &series.features {
        let slice = &values[train.clone()];
        let n = slice.len() as f64;
        let mean = slice.iter().sum::<f64>() / n;
        let var = slice.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 1e-12 * mean.abs().max(1.0)) {
            return Err(PipelineError::ZeroVariance(name.clone()));
        }
        let scale = FeatureScale { mean, std };
        scaled.features.insert(
            name.clone(),
            values.iter().map(|&v| scale.transform(v)).collect(),
        );
        params.insert(name.clone(), scale);
    }
    Ok((scaled, Scaler { features: params }))
}

/// Windows of one split, aligned across features.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub split: Split,
    pub feature_names: Vec<String>,
    /// `windows[f][i]` is the L2-normalized window `i` of feature `f`.
    pub windows: Vec<Vec<Vec<f64>>>,
    /// One-step-ahead targets in standardized units.
    pub targets: Vec<f64>,
    pub start_indices: Vec<usize>,
    pub target_feature: String,
    pub target_scale: FeatureScale,
    /// Windows replaced by the uniform vector because their norm vanished.
    pub degenerate_windows: usize,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.start_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.start_indices.is_empty()
    }

    pub fn feature_windows(&self, name: &str) -> Result<&[Vec<f64>], PipelineError> {
        self.feature_names
            .iter()
            .position(|f| f == name)
            .map(|i| self.windows[i].as_slice())
            .ok_or_else(|| PipelineError::UnknownFeature(name.to_string()))
    }

    /// Targets in the target feature's original units.
    pub fn targets_physical(&self) -> Vec<f64> {
        self.targets
            .iter()
            .map(|&z| self.target_scale.inverse(z))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedData {
    pub train: WindowSet,
    pub val: WindowSet,
    pub test: WindowSet,
    pub scaler: Scaler,
    pub spec: SplitSpec,
}

impl WindowedData {
    pub fn sets(&self) -> [&WindowSet; 3] {
        [&self.train, &self.val, &self.test]
    }

    pub fn degenerate_windows(&self) -> usize {
        self.sets().iter().map(|s| s.degenerate_windows).sum()
    }
}

/// L2-normalizes in place; returns false when the uniform fallback was used.
pub fn normalize_window(values: &mut [f64]) -> bool {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < DEGENERATE_NORM || !norm.is_finite() {
        let u = 1.0 / (values.len() as f64).sqrt();
        values.iter_mut().for_each(|v| *v = u);
        false
    } else {
        values.iter_mut().for_each(|v| *v /= norm);
        true
    }
}

/// Cuts standardized features into windows inside each split.
pub fn make_windows(
    scaled: &StationSeries,
    scaler: &Scaler,
    spec: &SplitSpec,
    features: &[String],
    target: &str,
) -> Result<WindowedData, PipelineError> {
    spec.validate()?;
    let target_values = scaled.feature(target)?;
    let target_scale = scaler.get(target)?;
    let columns: Vec<&[f64]> = features
        .iter()
        .map(|f| scaled.feature(f))
        .collect::<Result<_, _>>()?;
    let bounds = spec.bounds(scaled.len());
    let mut sets = Vec::with_capacity(3);
    for (split, range) in [Split::Train, Split::Val, Split::Test].into_iter().zip(bounds) {
        let count = spec.window_count(range.len());
        if count == 0 {
            return Err(PipelineError::SplitTooShort(split));
        }
        let starts: Vec<usize> = (0..count).map(|i| range.start + i * spec.stride).collect();
        let mut degenerate = 0;
        let windows = columns
            .iter()
            .map(|col| {
                starts
                    .iter()
                    .map(|&l| {
                        let mut w = col[l..l + spec.window].to_vec();
                        if !normalize_window(&mut w) {
                            degenerate += 1;
                        }
                        w
                    })
                    .collect()
            })
            .collect();
        let targets = starts
            .iter()
            .map(|&l| target_values[l + spec.window - 1 + spec.horizon])
            .collect();
        sets.push(WindowSet {
            split,
            feature_names: features.to_vec(),
            windows,
            targets,
            start_indices: starts,
            target_feature: target.to_string(),
            target_scale,
            degenerate_windows: degenerate,
        });
    }
    let test = sets.pop().unwrap();
    let val = sets.pop().unwrap();
    let train = sets.pop().unwrap();
    Ok(WindowedData {
        train,
        val,
        test,
        scaler: scaler.clone(),
        spec: *spec,
    })
}

/// Standardizes and windows in one step.
pub fn prepare(
    series: &StationSeries,
    spec: &SplitSpec,
    features: &[String],
    target: &str,
) -> Result<WindowedData, PipelineError> {
    let (scaled, scaler) = standardize(series, spec)?;
    make_windows(&scaled, &scaler, spec, features, target)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LeakViolation {
    #[error("{earlier} touches timestep {last_touched}, but {later} starts at {first_start}")]
    Overlap {
        earlier: Split,
        later: Split,
        last_touched: usize,
        first_start: usize,
    },
    #[error("{split} window {index} breaks the stride")]
    Stride { split: Split, index: usize },
    #[error("{split} feature windows are not aligned with its start indices")]
    Misaligned { split: Split },
}

/// Checks that consecutive splits share no timesteps (window or target),
/// that starts advance by exactly the stride, and that every feature has one
/// window per start.
pub fn check_leak_free(sets: [&WindowSet; 3], spec: &SplitSpec) -> Result<(), LeakViolation> {
    for set in sets {
        if set.targets.len() != set.len() || set.windows.iter().any(|w| w.len() != set.len()) {
            return Err(LeakViolation::Misaligned { split: set.split });
        }
        if let Some(i) = set
            .start_indices
            .windows(2)
            .position(|w| w[1] != w[0] + spec.stride)
        {
            return Err(LeakViolation::Stride {
                split: set.split,
                index: i + 1,
            });
        }
    }
    for pair in sets.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (Some(&last), Some(&first)) = (a.start_indices.iter().max(), b.start_indices.iter().min())
        else {
            continue;
        };
        let last_touched = last + spec.window - 1 + spec.horizon;
        if last_touched >= first {
            return Err(LeakViolation::Overlap {
                earlier: a.split,
                later: b.split,
                last_touched,
                first_start: first,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreenResult {
    /// `(feature, correlation)` ordered by descending `|correlation|`.
    pub ranked: Vec<(String, f64)>,
    pub notes: Vec<String>,
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// Correlation of each feature at `t` with the target at `t + 1`, using the
/// training split only.
pub fn lag1_screen(
    series: &StationSeries,
    spec: &SplitSpec,
    target: &str,
    top_k: usize,
) -> Result<ScreenResult, PipelineError> {
    let [train, _, _] = spec.bounds(series.len());
    if train.len() < 3 {
        return Err(PipelineError::InsufficientData);
    }
    let future = &series.feature(target)?[train.start + 1..train.end];
    let mut ranked = Vec::new();
    let mut notes = Vec::new();
    for (name, values) in &series.features {
        let now = &values[train.start..train.end - 1];
        match pearson(now, future) {
            Some(r) => ranked.push((name.clone(), r)),
            None => notes.push(format!("feature `{name}` skipped: zero variance")),
        }
    }
    ranked.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(top_k);
    Ok(ScreenResult { ranked, notes })
}

fn parse_timestamp(raw: &str) -> Option<i64> {
    if let Ok(v) = raw.parse::<i64>() {
        return Some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp().div_euclid(60));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(dt.and_utc().timestamp().div_euclid(60));
        }
    }
    None
}

fn is_missing(raw: &str) -> bool {
    raw.is_empty() || matches!(raw.to_ascii_lowercase().as_str(), "nan" | "na" | "null")
}

/// Reads a station CSV. The first column is the timestamp (integer minutes or
/// ISO-8601); `columns` and `target` must appear in the header. Rows with a
/// missing value in any requested column are dropped and counted.
pub fn ingest_csv(
    path: &Path,
    station_code: &str,
    columns: &[String],
    target: &str,
) -> Result<StationSeries, PipelineError> {
    let file = std::fs::File::open(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = reader.headers()?.clone();
    let mut wanted: Vec<String> = columns.to_vec();
    if !wanted.iter().any(|c| c == target) {
        wanted.push(target.to_string());
    }
    let positions: Vec<usize> = wanted
        .iter()
        .map(|c| {
            header
                .iter()
                .skip(1)
                .position(|h| h == c)
                .map(|p| p + 1)
                .ok_or_else(|| PipelineError::MissingColumn(c.clone()))
        })
        .collect::<Result<_, _>>()?;

    let mut timestamps = Vec::new();
    let mut data: Vec<Vec<f64>> = vec![Vec::new(); wanted.len()];
    let mut dropped = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let raw_ts = record.get(0).unwrap_or("");
        let ts = parse_timestamp(raw_ts).ok_or_else(|| PipelineError::InvalidTimestamp {
            row,
            value: raw_ts.to_string(),
        })?;
        let mut values = Vec::with_capacity(wanted.len());
        let mut missing = false;
        for (name, &pos) in wanted.iter().zip(&positions) {
            let raw = record.get(pos).unwrap_or("");
            if is_missing(raw) {
                missing = true;
                break;
            }
            let v: f64 = raw.parse().map_err(|_| PipelineError::InvalidValue {
                row,
                column: name.clone(),
                value: raw.to_string(),
            })?;
            if !v.is_finite() {
                missing = true;
                break;
            }
            values.push(v);
        }
        if missing {
            dropped += 1;
            continue;
        }
        timestamps.push(ts);
        for (col, v) in data.iter_mut().zip(values) {
            col.push(v);
        }
    }
    if timestamps.is_empty() {
        return Err(PipelineError::EmptyAfterCleaning);
    }
    let features = wanted.into_iter().zip(data).collect();
    let mut series = StationSeries::new(station_code, timestamps, features)?;
    series.dropped_rows = dropped;
    Ok(series)
}
