//! Forecast error metrics and climate-class aggregation.
//!
//! `x` denotes predictions and `y` observations throughout. Normalized
//! metrics divide by the mean observation and are expressed in percent, so
//! they must be computed in physical units.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tag written with every report describing how ERMAX is normalized.
pub const ERMAX_DEFINITION: &str = "maxabs_over_meanobs";

const MIN_MEAN: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("prediction and observation lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no points to score")]
    Empty,
    #[error("mean observation is too close to zero ({0:e})")]
    ZeroMeanObservations(f64),
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
}

fn check(x: &[f64], y: &[f64]) -> Result<(), MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch(x.len(), y.len()));
    }
    if y.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn mean_obs(y: &[f64]) -> Result<f64, MetricsError> {
    let m = mean(y);
    if m.abs() <= MIN_MEAN {
        return Err(MetricsError::ZeroMeanObservations(m));
    }
    Ok(m)
}

pub fn nrmse(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    check(x, y)?;
    let ybar = mean_obs(y)?;
    let mse = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64;
    Ok(100.0 * mse.sqrt() / ybar)
}

pub fn nmbe(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    check(x, y)?;
    let ybar = mean_obs(y)?;
    let bias = x.iter().zip(y).map(|(a, b)| a - b).sum::<f64>() / y.len() as f64;
    Ok(100.0 * bias / ybar)
}

/// Squared Pearson correlation between predictions and observations.
pub fn r2_pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    check(x, y)?;
    let (xbar, ybar) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - xbar) * (b - ybar);
        sxx += (a - xbar).powi(2);
        syy += (b - ybar).powi(2);
    }
    if sxx <= 0.0 {
        return Err(MetricsError::ZeroVariance("predictions"));
    }
    if syy <= 0.0 {
        return Err(MetricsError::ZeroVariance("observations"));
    }
    Ok((sxy * sxy / (sxx * syy)).clamp(0.0, 1.0))
}

/// Coefficient of determination `1 − SS_res / SS_tot`; negative when the
/// forecast is worse than the observation mean.
pub fn r2_score(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    check(x, y)?;
    let ybar = mean(y);
    let ss_tot: f64 = y.iter().map(|b| (b - ybar).powi(2)).sum();
    if ss_tot <= 0.0 {
        return Err(MetricsError::ZeroVariance("observations"));
    }
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mae(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    check(x, y)?;
    Ok(x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// Largest absolute error over the mean observation, in percent.
pub fn ermax(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    check(x, y)?;
    let ybar = mean_obs(y)?;
    let worst = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(100.0 * worst / ybar)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub station_code: String,
    pub model: String,
    pub n_points: usize,
    pub nrmse_pct: f64,
    pub nmbe_pct: f64,
    /// `None` when the forecast is constant.
    pub r2_pearson: Option<f64>,
    pub r2_score: f64,
    pub mae: f64,
    pub ermax_pct: f64,
    pub ermax_def: String,
    pub flags: BTreeMap<String, u64>,
}

impl MetricsReport {
    pub fn compute(
        station_code: &str,
        model: &str,
        pred: &[f64],
        obs: &[f64],
        flags: BTreeMap<String, u64>,
    ) -> Result<Self, MetricsError> {
        let r2_pearson = match r2_pearson(pred, obs) {
            Ok(v) => Some(v),
            Err(MetricsError::ZeroVariance("predictions")) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            station_code: station_code.to_string(),
            model: model.to_string(),
            n_points: obs.len(),
            nrmse_pct: nrmse(pred, obs)?,
            nmbe_pct: nmbe(pred, obs)?,
            r2_pearson,
            r2_score: r2_score(pred, obs)?,
            mae: mae(pred, obs)?,
            ermax_pct: ermax(pred, obs)?,
            ermax_def: ERMAX_DEFINITION.to_string(),
            flags,
        })
    }

    /// Metric values by column name; absent metrics are skipped.
    pub fn metric_values(&self) -> Vec<(&'static str, f64)> {
        let mut out = vec![
            ("nrmse_pct", self.nrmse_pct),
            ("nmbe_pct", self.nmbe_pct),
        ];
        if let Some(r) = self.r2_pearson {
            out.push(("r2_pearson", r));
        }
        out.extend([
            ("r2_score", self.r2_score),
            ("mae", self.mae),
            ("ermax_pct", self.ermax_pct),
        ]);
        out
    }
}

pub const METRIC_NAMES: [&str; 6] = [
    "nrmse_pct",
    "nmbe_pct",
    "r2_pearson",
    "r2_score",
    "mae",
    "ermax_pct",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile with linear interpolation between order statistics at
/// position `q · (n − 1)`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn five_number(values: &[f64]) -> Option<FiveNumber> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(FiveNumber {
        n: sorted.len(),
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ClassAggregate {
    /// class → metric → summary
    pub classes: BTreeMap<String, BTreeMap<String, FiveNumber>>,
    pub notes: Vec<String>,
}

/// Five-number summaries per class and metric. Stations without a class
/// are skipped and noted.
pub fn aggregate_by_class(
    reports: &[MetricsReport],
    station_class: &BTreeMap<String, String>,
) -> ClassAggregate {
    let mut grouped: BTreeMap<String, BTreeMap<&'static str, Vec<f64>>> = BTreeMap::new();
    let mut notes = Vec::new();
    for r in reports {
        let Some(class) = station_class.get(&r.station_code) else {
            notes.push(format!("station {} has no climate class; skipped", r.station_code));
            continue;
        };
        let entry = grouped.entry(class.clone()).or_default();
        for (name, v) in r.metric_values() {
            entry.entry(name).or_default().push(v);
        }
    }
    let classes = grouped
        .into_iter()
        .map(|(class, metrics)| {
            let summary = metrics
                .into_iter()
                .filter_map(|(name, vals)| five_number(&vals).map(|f| (name.to_string(), f)))
                .collect();
            (class, summary)
        })
        .collect();
    notes.sort();
    ClassAggregate { classes, notes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const Y: [f64; 3] = [1.0, 2.0, 3.0];

    #[test]
    fn nrmse_examples() {
        assert_eq!(nrmse(&Y, &Y).unwrap(), 0.0);
        let shifted: Vec<f64> = Y.iter().map(|v| v + 0.5).collect();
        assert!((nrmse(&shifted, &Y).unwrap() - 100.0 * 0.5 / 2.0).abs() < 1e-12);
        let v = nrmse(&[2.0, 2.0, 2.0], &Y).unwrap();
        assert!((v - 100.0 * (2.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-12);
        assert!((v - 40.825).abs() < 1e-3);
    }

    #[test]
    fn nmbe_examples() {
        assert_eq!(nmbe(&Y, &Y).unwrap(), 0.0);
        let shifted: Vec<f64> = Y.iter().map(|v| v + 0.5).collect();
        assert!((nmbe(&shifted, &Y).unwrap() - 25.0).abs() < 1e-12);
        assert_eq!(nmbe(&[2.0, 2.0, 2.0], &Y).unwrap(), 0.0);
    }

    #[test]
    fn zero_mean_rejected() {
        let y = [-1.0, 1.0];
        assert!(matches!(nrmse(&y, &y), Err(MetricsError::ZeroMeanObservations(_))));
        assert!(matches!(nmbe(&y, &y), Err(MetricsError::ZeroMeanObservations(_))));
        assert!(matches!(ermax(&y, &y), Err(MetricsError::ZeroMeanObservations(_))));
    }

    #[test]
    fn r2_examples() {
        let affine: Vec<f64> = Y.iter().map(|v| 3.0 * v - 1.0).collect();
        assert!((r2_pearson(&affine, &Y).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(
            r2_pearson(&[2.0, 2.0, 2.0], &Y),
            Err(MetricsError::ZeroVariance("predictions"))
        );
        let x = [1.5, 2.0, 2.5];
        assert!((r2_pearson(&x, &Y).unwrap() - 1.0).abs() < 1e-12);
        assert!((r2_score(&x, &Y).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(r2_score(&Y, &Y).unwrap(), 1.0);
        assert_eq!(r2_score(&[2.0, 2.0, 2.0], &Y).unwrap(), 0.0);
        assert!(r2_score(&[3.0, 2.0, 1.0], &Y).unwrap() < 0.0);
        assert!(r2_score(&Y, &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn r2_forms_agree_on_least_squares_fit() {
        // x is the OLS fit of y on t, so SS_res/SS_tot = 1 - corr².
        let t = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 2.5, 2.0, 4.5, 5.0];
        let (tb, yb) = (mean(&t), mean(&y));
        let slope = t.iter().zip(&y).map(|(a, b)| (a - tb) * (b - yb)).sum::<f64>()
            / t.iter().map(|a| (a - tb).powi(2)).sum::<f64>();
        let x: Vec<f64> = t.iter().map(|a| yb + slope * (a - tb)).collect();
        assert!((r2_score(&x, &y).unwrap() - r2_pearson(&x, &y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&Y, &Y).unwrap(), 0.0);
        assert!((mae(&[2.0, 2.0, 2.0], &Y).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let shifted: Vec<f64> = Y.iter().map(|v| v - 0.7).collect();
        assert!((mae(&shifted, &Y).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn ermax_examples() {
        assert_eq!(ermax(&Y, &Y).unwrap(), 0.0);
        let v = ermax(&[1.0, 3.0, 4.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!((v - 100.0 / (7.0 / 3.0)).abs() < 1e-12);
        assert!((v - 42.857).abs() < 1e-3);
    }

    #[test]
    fn spike_raises_ermax_but_bounds_mae() {
        let y = [10.0, 11.0, 12.0, 13.0];
        let x = [10.5, 11.0, 11.5, 13.0];
        let mut spiked = x;
        spiked[1] += 40.0;
        assert!(ermax(&spiked, &y).unwrap() > ermax(&x, &y).unwrap());
        assert!(mae(&spiked, &y).unwrap() - mae(&x, &y).unwrap() <= 40.0 / 4.0 + 1e-12);
    }

    #[test]
    fn length_errors() {
        assert_eq!(mae(&[1.0], &[1.0, 2.0]), Err(MetricsError::LengthMismatch(1, 2)));
        assert_eq!(mae(&[], &[]), Err(MetricsError::Empty));
    }

    #[test]
    fn quantile_rule() {
        let f = five_number(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((f.min, f.q1, f.median, f.q3, f.max), (1.0, 1.75, 2.5, 3.25, 4.0));
        let single = five_number(&[7.0]).unwrap();
        assert_eq!((single.min, single.q1, single.median, single.q3, single.max), (7.0, 7.0, 7.0, 7.0, 7.0));
        assert!(five_number(&[]).is_none());
    }

    fn report(code: &str, nrmse: f64) -> MetricsReport {
        MetricsReport {
            station_code: code.into(),
            model: "qft".into(),
            n_points: 10,
            nrmse_pct: nrmse,
            nmbe_pct: 0.0,
            r2_pearson: Some(0.9),
            r2_score: 0.8,
            mae: 1.0,
            ermax_pct: 5.0,
            ermax_def: ERMAX_DEFINITION.into(),
            flags: BTreeMap::new(),
        }
    }

    #[test]
    fn aggregation_groups_and_is_order_invariant() {
        let classes: BTreeMap<String, String> = [("A1", "A"), ("A2", "A"), ("B1", "B")]
            .iter()
            .map(|(s, c)| (s.to_string(), c.to_string()))
            .collect();
        let reports = vec![report("A1", 10.0), report("A2", 20.0), report("B1", 30.0), report("Z9", 1.0)];
        let agg = aggregate_by_class(&reports, &classes);
        assert_eq!(agg.classes.len(), 2);
        let b = agg.classes["B"]["nrmse_pct"];
        assert_eq!((b.min, b.median, b.max), (30.0, 30.0, 30.0));
        assert_eq!(agg.classes["A"]["nrmse_pct"].median, 15.0);
        assert_eq!(agg.notes.len(), 1);

        let mut reversed = reports.clone();
        reversed.reverse();
        assert_eq!(aggregate_by_class(&reversed, &classes), agg);
    }

    proptest! {
        #[test]
        fn scale_invariance(
            pairs in prop::collection::vec((1.0f64..100.0, 1.0f64..100.0), 3..40),
            c in 0.1f64..50.0,
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let xs: Vec<f64> = x.iter().map(|v| v * c).collect();
            let ys: Vec<f64> = y.iter().map(|v| v * c).collect();
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs());
            prop_assert!(close(nrmse(&x, &y).unwrap(), nrmse(&xs, &ys).unwrap()));
            prop_assert!(close(nmbe(&x, &y).unwrap(), nmbe(&xs, &ys).unwrap()));
            prop_assert!(close(ermax(&x, &y).unwrap(), ermax(&xs, &ys).unwrap()));
            prop_assert!(close(r2_score(&x, &y).unwrap(), r2_score(&xs, &ys).unwrap()));
            if let (Ok(a), Ok(b)) = (r2_pearson(&x, &y), r2_pearson(&xs, &ys)) {
                prop_assert!(close(a, b));
            }
            prop_assert!(close(mae(&xs, &ys).unwrap(), c * mae(&x, &y).unwrap()));
        }

        #[test]
        fn nrmse_dominates_nmbe(
            pairs in prop::collection::vec((-50.0f64..100.0, 1.0f64..100.0), 1..40),
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            prop_assert!(nrmse(&x, &y).unwrap() + 1e-9 >= nmbe(&x, &y).unwrap().abs());
        }
    }
}
