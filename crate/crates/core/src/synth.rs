//! Seeded synthetic irradiance-like series for tests and demos.
//!
//! The target `glo` is a clipped daily sinusoid with two harmonics, scaled by
//! a slow seasonal factor and damped by an AR(1) cloud process, plus white
//! measurement noise. `clear_sky` is the same profile without clouds or
//! noise and `hour_angle` is the solar hour angle in degrees.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::pipeline::{PipelineError, StationSeries};

pub const TARGET: &str = "glo";
pub const FEATURES: [&str; 3] = ["glo", "clear_sky", "hour_angle"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub steps: usize,
    pub steps_per_day: usize,
    /// Minutes between consecutive samples.
    pub step_minutes: i64,
    pub peak: f64,
    pub cloud_phi: f64,
    pub cloud_sigma: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            steps: 5000,
            steps_per_day: 48,
            step_minutes: 30,
            peak: 1000.0,
            cloud_phi: 0.9,
            cloud_sigma: 0.04,
            noise_sigma: 5.0,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn for_days(days: usize, seed: u64) -> Self {
        let d = Self::default();
        Self {
            steps: days * d.steps_per_day,
            seed,
            ..d
        }
    }
}

/// Columns `glo`, `clear_sky`, `hour_angle` on a regular minute grid.
pub fn generate(params: &SynthParams) -> StationSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let cloud_noise = Normal::new(0.0, params.cloud_sigma).unwrap();
    let meas_noise = Normal::new(0.0, params.noise_sigma).unwrap();
    let spd = params.steps_per_day as f64;
    let mut cloud = 0.0;
    let mut glo = Vec::with_capacity(params.steps);
    let mut clear = Vec::with_capacity(params.steps);
    let mut hour = Vec::with_capacity(params.steps);
    for t in 0..params.steps {
        let phase = 2.0 * PI * (t as f64 / spd);
        let day = t as f64 / spd;
        let season = 1.0 + 0.15 * (2.0 * PI * day / 365.0).sin();
        let base = -phase.cos() + 0.25 * (2.0 * phase).sin() + 0.1 * (3.0 * phase).cos();
        let profile = params.peak * season * base.max(0.0) / 1.35;
        cloud = params.cloud_phi * cloud + cloud_noise.sample(&mut rng);
        let attenuation = (1.0 - cloud.abs()).clamp(0.2, 1.0);
        clear.push(profile);
        glo.push((profile * attenuation + meas_noise.sample(&mut rng)).max(0.0));
        hour.push(((t % params.steps_per_day) as f64 / spd) * 360.0 - 180.0);
    }
    let timestamps = (0..params.steps as i64).map(|t| t * params.step_minutes).collect();
    let features: BTreeMap<String, Vec<f64>> = [
        (FEATURES[0].to_string(), glo),
        (FEATURES[1].to_string(), clear),
        (FEATURES[2].to_string(), hour),
    ]
    .into();
    StationSeries::new("SYN", timestamps, features).expect("generated axis is increasing")
}

/// Writes the series as CSV with a leading `timestamp` column in minutes.
pub fn write_csv(series: &StationSeries, path: &Path) -> Result<(), PipelineError> {
    let io = |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    let names: Vec<&String> = series.features.keys().collect();
    let mut header = vec!["timestamp".to_string()];
    header.extend(names.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for (i, ts) in series.timestamps.iter().enumerate() {
        let mut row = vec![ts.to_string()];
        row.extend(names.iter().map(|n| format!("{}", series.features[*n][i])));
        w.write_record(&row)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}
