//! Station-level tables and per-climate-class summaries from a run
//! directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{StationMeta, STATIONS_DIR};
use super::{write_file, write_json, ExperimentError};
use crate::metrics::{aggregate_by_class, FiveNumber, MetricsReport, ERMAX_DEFINITION, METRIC_NAMES};
use crate::stations::climate_group;

pub const REPORT_DIR: &str = "report";
pub const STATIONS_CSV: &str = "stations_long.csv";
pub const WIDE_CSV: &str = "stations_wide.csv";
pub const CLASS_CSV: &str = "class_summary.csv";
pub const SUMMARY_JSON: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub ermax_def: String,
    pub n_stations: usize,
    pub models: Vec<String>,
    /// class → model → metric → summary
    pub classes: BTreeMap<String, BTreeMap<String, BTreeMap<String, FiveNumber>>>,
    pub missing: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ReportOutput {
    pub summary: ReportSummary,
    pub files: Vec<PathBuf>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn metric(r: &MetricsReport, name: &str) -> Option<f64> {
    r.metric_values().into_iter().find(|(n, _)| *n == name).map(|(_, v)| v)
}

/// Loads `stations/<code>/report_*.json` and `station.json` files.
pub fn load_reports(
    dir: &Path,
) -> Result<(Vec<MetricsReport>, BTreeMap<String, String>), ExperimentError> {
    let root = dir.join(STATIONS_DIR);
    let mut reports = Vec::new();
    let mut classes = BTreeMap::new();
    let entries = match std::fs::read_dir(&root) {
        Ok(e) => e,
        Err(_) => return Err(ExperimentError::NoReportsFound(dir.to_path_buf())),
    };
    let mut station_dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    station_dirs.sort();
    for sdir in station_dirs {
        let meta_path = sdir.join("station.json");
        if let Ok(text) = std::fs::read_to_string(&meta_path) {
            let meta: StationMeta = serde_json::from_str(&text)?;
            classes.insert(meta.station_code, meta.koppen_class);
        }
        let mut files: Vec<PathBuf> = std::fs::read_dir(&sdir)
            .map_err(|e| ExperimentError::io(&sdir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("report_") && n.ends_with(".json"))
            })
            .collect();
        files.sort();
        for f in files {
            let text = std::fs::read_to_string(&f).map_err(|e| ExperimentError::io(&f, e))?;
            reports.push(serde_json::from_str(&text)?);
        }
    }
    if reports.is_empty() {
        return Err(ExperimentError::NoReportsFound(dir.to_path_buf()));
    }
    Ok((reports, classes))
}

/// Writes the long station table, the wide station-by-model table, the
/// per-class five-number table and a JSON summary under `<dir>/report`.
pub fn cmd_report(dir: &Path) -> Result<ReportOutput, ExperimentError> {
    let (reports, labels) = load_reports(dir)?;
    let out = dir.join(REPORT_DIR);
    let groups: BTreeMap<String, String> = labels
        .iter()
        .filter(|(_, l)| !l.is_empty())
        .map(|(s, l)| (s.clone(), climate_group(l).to_string()))
        .collect();
    let stations: BTreeSet<&str> = reports.iter().map(|r| r.station_code.as_str()).collect();
    let models: BTreeSet<&str> = reports.iter().map(|r| r.model.as_str()).collect();
    let by_key: BTreeMap<(&str, &str), &MetricsReport> = reports
        .iter()
        .map(|r| ((r.station_code.as_str(), r.model.as_str()), r))
        .collect();

    let mut long = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["station", "class", "model", "n_points"];
    header.extend(METRIC_NAMES);
    long.write_record(&header)?;
    for r in &reports {
        let class = labels.get(&r.station_code).cloned().unwrap_or_default();
        let mut row = vec![r.station_code.clone(), class, r.model.clone(), r.n_points.to_string()];
        row.extend(METRIC_NAMES.iter().map(|m| fmt_opt(metric(r, m))));
        long.write_record(&row)?;
    }

    let mut missing = Vec::new();
    let mut wide = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["station".to_string(), "class".to_string()];
    for m in &models {
        header.extend(METRIC_NAMES.iter().map(|n| format!("{m}_{n}")));
    }
    wide.write_record(&header)?;
    for s in &stations {
        let mut row = vec![s.to_string(), labels.get(*s).cloned().unwrap_or_default()];
        for m in &models {
            match by_key.get(&(*s, *m)) {
                Some(r) => row.extend(METRIC_NAMES.iter().map(|n| fmt_opt(metric(r, n)))),
                None => {
                    missing.push(format!("{s}/{m}"));
                    row.extend(METRIC_NAMES.iter().map(|_| String::new()));
                }
            }
        }
        wide.write_record(&row)?;
    }
    let mut wide_bytes = wide.into_inner().map_err(|e| ExperimentError::io(&out, e.into_error()))?;
    for m in &missing {
        wide_bytes.extend_from_slice(format!("# missing model result: {m}\n").as_bytes());
    }
    wide_bytes.extend_from_slice(format!("# ermax_def={ERMAX_DEFINITION}\n").as_bytes());

    let mut classes: BTreeMap<String, BTreeMap<String, BTreeMap<String, FiveNumber>>> = BTreeMap::new();
    let mut notes = BTreeSet::new();
    let mut class_csv = csv::Writer::from_writer(Vec::new());
    class_csv.write_record(["class", "model", "metric", "n", "min", "q1", "median", "q3", "max"])?;
    for m in &models {
        let subset: Vec<MetricsReport> = reports.iter().filter(|r| r.model == *m).cloned().collect();
        let agg = aggregate_by_class(&subset, &groups);
        notes.extend(agg.notes);
        for (class, metrics) in agg.classes {
            for name in METRIC_NAMES {
                if let Some(f) = metrics.get(name) {
                    class_csv.write_record([
                        class.clone(),
                        m.to_string(),
                        name.to_string(),
                        f.n.to_string(),
                        f.min.to_string(),
                        f.q1.to_string(),
                        f.median.to_string(),
                        f.q3.to_string(),
                        f.max.to_string(),
                    ])?;
                }
            }
            classes.entry(class).or_default().insert(m.to_string(), metrics);
        }
    }

    let summary = ReportSummary {
        ermax_def: ERMAX_DEFINITION.to_string(),
        n_stations: stations.len(),
        models: models.iter().map(|m| m.to_string()).collect(),
        classes,
        missing,
        notes: notes.into_iter().collect(),
    };
    let files = vec![
        out.join(STATIONS_CSV),
        out.join(WIDE_CSV),
        out.join(CLASS_CSV),
        out.join(SUMMARY_JSON),
    ];
    let bytes = |w: csv::Writer<Vec<u8>>| w.into_inner().map_err(|e| ExperimentError::io(&out, e.into_error()));
    write_file(&files[0], &bytes(long)?)?;
    write_file(&files[1], &wide_bytes)?;
    write_file(&files[2], &bytes(class_csv)?)?;
    write_json(&files[3], &summary)?;
    Ok(ReportOutput { summary, files })
}
