use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentError;
use crate::ckernel::{ClassicalKernelParams, ClassicalKind};
use crate::gram::{KernelFamily, KernelFunction};
use crate::mixopt::{log_grid, OptimizationBudget};
use crate::pipeline::SplitSpec;
use crate::qkernel::{build_protective_layout, KernelCircuit};
use crate::surrogate::SurrogateKind;

/// Largest register the simulator accepts from a config.
pub const MAX_QUBITS: usize = 12;

/// Flat, JSON-serialized run description. Relative paths resolve against
/// the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data_dir: PathBuf,
    pub stations: Vec<String>,
    /// Per-station CSV file names; defaults to `<code>.csv`.
    #[serde(default)]
    pub station_files: BTreeMap<String, String>,
    /// Climate labels overriding the bundled station table.
    #[serde(default)]
    pub station_classes: BTreeMap<String, String>,
    pub features: Vec<String>,
    pub target: String,
    #[serde(default = "d_train")]
    pub train_frac: f64,
    #[serde(default = "d_val")]
    pub val_frac: f64,
    #[serde(default = "d_val")]
    pub test_frac: f64,
    #[serde(default = "d_window")]
    pub window: usize,
    #[serde(default = "d_one")]
    pub stride: usize,
    #[serde(default = "d_one")]
    pub horizon: usize,
    pub kernels: Vec<KernelFamily>,
    /// Defaults to `1 / window`.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "d_offset")]
    pub poly_offset: f64,
    #[serde(default = "d_degree")]
    pub poly_degree: u32,
    #[serde(default = "d_calls")]
    pub outer_calls: usize,
    #[serde(default = "d_alpha_min")]
    pub alpha_min: f64,
    #[serde(default = "d_alpha_max")]
    pub alpha_max: f64,
    #[serde(default = "d_alpha_count")]
    pub alpha_count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub surrogate: SurrogateKind,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub cache: bool,
}

fn d_train() -> f64 {
    0.8
}
fn d_val() -> f64 {
    0.1
}
fn d_window() -> usize {
    32
}
fn d_one() -> usize {
    1
}
fn d_offset() -> f64 {
    1.0
}
fn d_degree() -> u32 {
    3
}
fn d_calls() -> usize {
    20
}
fn d_alpha_min() -> f64 {
    1e-6
}
fn d_alpha_max() -> f64 {
    1e3
}
fn d_alpha_count() -> usize {
    100
}

impl ExperimentConfig {
    /// Config with defaults for everything but the required fields.
    pub fn new(
        data_dir: impl Into<PathBuf>,
        stations: Vec<String>,
        features: Vec<String>,
        target: impl Into<String>,
        kernels: Vec<KernelFamily>,
        output_dir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            data_dir: data_dir.into(),
            stations,
            station_files: BTreeMap::new(),
            station_classes: BTreeMap::new(),
            features,
            target: target.into(),
            train_frac: d_train(),
            val_frac: d_val(),
            test_frac: d_val(),
            window: d_window(),
            stride: 1,
            horizon: 1,
            kernels,
            gamma: None,
            poly_offset: d_offset(),
            poly_degree: d_degree(),
            outer_calls: d_calls(),
            alpha_min: d_alpha_min(),
            alpha_max: d_alpha_max(),
            alpha_count: d_alpha_count(),
            seed: 0,
            surrogate: SurrogateKind::GaussianProcess,
            output_dir: output_dir.into(),
            cache: false,
        }
    }

    /// Reads, resolves relative paths and validates.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.data_dir.is_relative() {
            cfg.data_dir = base.join(&cfg.data_dir);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.window < 2 || !self.window.is_power_of_two() {
            return bad(format!("window {} is not a power of two", self.window));
        }
        let n = self.window.trailing_zeros() as usize;
        if n > MAX_QUBITS {
            return bad(format!("window {} needs {n} qubits; the limit is {MAX_QUBITS}", self.window));
        }
        if self.kernels.is_empty() {
            return bad("select at least one kernel".into());
        }
        if self.features.is_empty() {
            return bad("select at least one feature".into());
        }
        if self.stations.is_empty() {
            return bad("no stations listed".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for list in [&self.stations, &self.features] {
            seen.clear();
            for s in list.iter() {
                if !seen.insert(s) {
                    return bad(format!("`{s}` listed twice"));
                }
            }
        }
        for code in &self.stations {
            if code.is_empty() || code.contains(['/', '\\']) || code.starts_with('.') {
                return bad(format!("station code `{code}` cannot be used as a directory name"));
            }
        }
        let mut kinds = self.kernels.clone();
        kinds.sort();
        kinds.dedup();
        if kinds.len() != self.kernels.len() {
            return bad("a kernel is listed twice".into());
        }
        self.split_spec()
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        for kind in [ClassicalKind::Rbf, ClassicalKind::Poly] {
            self.classical_params(kind)
                .validate()
                .map_err(|e| ExperimentError::Config(e.to_string()))?;
        }
        if !(self.alpha_min > 0.0 && self.alpha_max > self.alpha_min && self.alpha_max.is_finite()) {
            return bad("alpha bounds must satisfy 0 < alpha_min < alpha_max".into());
        }
        if self.alpha_count < 2 {
            return bad("alpha_count must be at least 2".into());
        }
        if self.outer_calls == 0 {
            return bad("outer_calls must be at least 1".into());
        }
        Ok(())
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_frac: self.train_frac,
            val_frac: self.val_frac,
            test_frac: self.test_frac,
            window: self.window,
            stride: self.stride,
            horizon: self.horizon,
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.window.trailing_zeros() as usize
    }

    pub fn classical_params(&self, kind: ClassicalKind) -> ClassicalKernelParams {
        let mut p = ClassicalKernelParams::default_for(kind, self.window);
        if let Some(g) = self.gamma {
            p.gamma = g;
        }
        p.offset_r = self.poly_offset;
        p.degree_d = self.poly_degree;
        p
    }

    pub fn kernel_function(&self, family: KernelFamily) -> Result<KernelFunction, ExperimentError> {
        Ok(match family {
            KernelFamily::Qft => {
                let layout = build_protective_layout(self.n_qubits())
                    .map_err(|e| ExperimentError::Config(e.to_string()))?;
                KernelFunction::Quantum(KernelCircuit::new(layout))
            }
            KernelFamily::Rbf => KernelFunction::Classical(self.classical_params(ClassicalKind::Rbf)),
            KernelFamily::Poly => KernelFunction::Classical(self.classical_params(ClassicalKind::Poly)),
        })
    }

    pub fn budget(&self) -> OptimizationBudget {
        OptimizationBudget {
            outer_calls: self.outer_calls,
            alpha_grid: log_grid(self.alpha_min, self.alpha_max, self.alpha_count),
            seed: self.seed,
            surrogate: self.surrogate,
        }
    }

    pub fn station_file(&self, code: &str) -> PathBuf {
        let name = self
            .station_files
            .get(code)
            .cloned()
            .unwrap_or_else(|| format!("{code}.csv"));
        self.data_dir.join(name)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(json))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        ExperimentConfig::new(
            "data",
            vec!["SYN".into()],
            vec!["glo".into()],
            "glo",
            vec![KernelFamily::Qft],
            "out",
        )
    }

    #[test]
    fn defaults_match_the_reference_setup() {
        let c = base();
        assert!(c.validate().is_ok());
        assert_eq!(c.n_qubits(), 5);
        let b = c.budget();
        assert_eq!(b.outer_calls, 20);
        assert_eq!(b.alpha_grid.len(), 100);
        let p = c.classical_params(ClassicalKind::Rbf);
        assert_eq!(p.gamma, 1.0 / 32.0);
    }

    #[test]
    fn rejects_bad_windows_and_empty_selections() {
        let mut c = base();
        c.window = 33;
        assert!(matches!(c.validate(), Err(ExperimentError::Config(m)) if m.contains("power of two")));
        let mut c = base();
        c.window = 1 << 13;
        assert!(c.validate().is_err());
        let mut c = base();
        c.kernels.clear();
        assert!(c.validate().is_err());
        let mut c = base();
        c.features.clear();
        assert!(c.validate().is_err());
        let mut c = base();
        c.stations = vec!["../x".into()];
        assert!(c.validate().is_err());
    }

    #[test]
    fn parses_minimal_json_and_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(
            &path,
            r#"{"data_dir":"d","stations":["A"],"features":["glo"],"target":"glo",
                "kernels":["qft","rbf"],"output_dir":"o"}"#,
        )
        .unwrap();
        let c = ExperimentConfig::load(&path).unwrap();
        assert_eq!(c.data_dir, dir.path().join("d"));
        assert_eq!(c.window, 32);
        assert_eq!(c.station_file("A"), dir.path().join("d").join("A.csv"));

        std::fs::write(&path, r#"{"data_dir":"d","stations":["A"],"features":["glo"],"target":"glo","kernels":["qft"],"output_dir":"o","windw":8}"#).unwrap();
        assert!(matches!(ExperimentConfig::load(&path), Err(ExperimentError::Config(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = base();
        let mut b = base();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
