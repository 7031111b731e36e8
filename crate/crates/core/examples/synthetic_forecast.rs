//! Runs every kernel family on the bundled synthetic generator and prints
//! test metrics.
//!
//! `cargo run --release --example synthetic_forecast -- [stride] [features]`

use std::time::Instant;

use qftk::experiment::run::forecast_family;
use qftk::experiment::ExperimentConfig;
use qftk::gram::KernelFamily;
use qftk::pipeline::prepare;
use qftk::synth::{self, SynthParams};

fn main() {
    let mut args = std::env::args().skip(1);
    let stride: usize = args.next().map(|s| s.parse().expect("stride")).unwrap_or(4);
    let features: Vec<String> = args
        .next()
        .map(|s| s.split(',').map(str::to_string).collect())
        .unwrap_or_else(|| synth::FEATURES.iter().map(|s| s.to_string()).collect());
    let series = synth::generate(&SynthParams::default());
    let mut cfg = ExperimentConfig::new(
        ".",
        vec!["SYN".into()],
        features,
        synth::TARGET,
        vec![KernelFamily::Qft, KernelFamily::Rbf, KernelFamily::Poly],
        "out",
    );
    cfg.stride = stride;
    let data = prepare(&series, &cfg.split_spec(), &cfg.features, &cfg.target).expect("windows");
    println!(
        "windows: train {} val {} test {}",
        data.train.len(),
        data.val.len(),
        data.test.len()
    );
    for family in cfg.kernels.clone() {
        let t = Instant::now();
        let r = forecast_family(&cfg, &series, &data, family, None).expect("forecast");
        println!(
            "{family:>4}: r2_score {:.4} nRMSE {:.3} % nMBE {:.3} % weights {:?} lambda {:.2e} ({:.1} s)",
            r.report.r2_score,
            r.report.nrmse_pct,
            r.report.nmbe_pct,
            r.model.weights.weights,
            r.model.ridge_lambda,
            t.elapsed().as_secs_f64()
        );
    }
}
