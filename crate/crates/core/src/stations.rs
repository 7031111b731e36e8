//! Bundled metadata for the 30 BSRN stations used in the reference study.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

const TABLE: &str = include_str!("../data/stations.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationInfo {
    pub code: String,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub elev_m: f64,
    pub koppen: String,
}

impl StationInfo {
    /// Main climate group (A to E).
    pub fn climate_group(&self) -> &str {
        climate_group(&self.koppen)
    }
}

/// First letter of a Köppen label.
pub fn climate_group(label: &str) -> &str {
    label.get(..1).unwrap_or("")
}

pub fn bundled() -> Vec<StationInfo> {
    csv::Reader::from_reader(TABLE.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .expect("bundled station table parses")
}

pub fn lookup(code: &str) -> Option<StationInfo> {
    bundled().into_iter().find(|s| s.code == code)
}

/// Station code to full Köppen label, bundled entries first and `overrides`
/// on top.
pub fn class_map(overrides: &BTreeMap<String, String>) -> BTreeMap<String, String> {
    let mut map: BTreeMap<String, String> =
        bundled().into_iter().map(|s| (s.code, s.koppen)).collect();
    map.extend(overrides.iter().map(|(k, v)| (k.clone(), v.clone())));
    map
}
