//! Self-check suite: circuit against closed forms, unitarity, kernel
//! validity and split leakage.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::gram::{gram_train, KernelFunction};
use crate::pipeline::{check_leak_free, make_windows, standardize, SplitSpec, StationSeries};
use crate::qkernel::{
    build_protective_layout, sigma_from_omega, sigma_matrix, trace_formula_value, GateConvention,
    KernelCircuit,
};
use crate::qsim::{apply_gate, apply_inverse_qft, apply_qft, SingleQubitGate, Statevector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub pairs_per_n: usize,
    pub max_qubits: usize,
    pub leak_trials: usize,
    pub seed: u64,
    /// Gate convention used by the simulated circuit; anything but
    /// `Standard` must make the oracle suite fail.
    pub convention: GateConvention,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            pairs_per_n: 200,
            max_qubits: 5,
            leak_trials: 1000,
            seed: 2024,
            convention: GateConvention::Standard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub checks: usize,
    pub detail: String,
}

pub fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|a| a / n).collect();
        }
    }
}

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> Statevector {
    let mut v: Vec<Complex64> = (0..1usize << n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= norm);
    Statevector::from_amplitudes(v).expect("normalized")
}

fn suite(name: &'static str, checks: usize, worst: f64, tol: f64, failures: usize) -> SuiteResult {
    SuiteResult {
        name,
        passed: failures == 0 && worst <= tol,
        checks,
        detail: format!("max deviation {worst:.2e} (tol {tol:.0e}), {failures} failures"),
    }
}

fn oracle_trace(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> SuiteResult {
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    let mut failures = 0;
    for n in 1..=opts.max_qubits {
        let layout = build_protective_layout(n).expect("valid qubit count");
        let circuit = KernelCircuit::new(layout.clone()).with_convention(opts.convention);
        for _ in 0..opts.pairs_per_n {
            let x = random_unit(rng, 1 << n);
            let y = random_unit(rng, 1 << n);
            match (circuit.value(&x, &y), trace_formula_value(&x, &y, &layout)) {
                (Ok(a), Ok(b)) => worst = worst.max((a - b).abs()),
                _ => failures += 1,
            }
            checks += 1;
        }
    }
    suite("circuit vs trace formula", checks, worst, 1e-9, failures)
}

fn oracle_omega(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> SuiteResult {
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    let mut failures = 0;
    for n in 1..=opts.max_qubits.min(3) {
        for _ in 0..opts.pairs_per_n.min(50) {
            let x = random_unit(rng, 1 << n);
            let y = random_unit(rng, 1 << n);
            let direct = sigma_matrix(&x, &y);
            match sigma_from_omega(&x, &y) {
                Ok(rebuilt) => worst = worst.max((direct - rebuilt).iter().map(|c| c.norm()).fold(0.0, f64::max)),
                Err(_) => failures += 1,
            }
            checks += 1;
        }
    }
    suite("omega expansion of sigma", checks, worst, 1e-10, failures)
}

fn unitarity(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> SuiteResult {
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for n in 1..=opts.max_qubits {
        for _ in 0..20 {
            let s = random_state(rng, n);
            let f = apply_qft(&s);
            worst = worst.max((f.norm_sqr() - 1.0).abs());
            let back = apply_inverse_qft(&f);
            let diff = back
                .amplitudes()
                .iter()
                .zip(s.amplitudes())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            worst = worst.max(diff);
            let angle = rng.random_range(-10.0..10.0);
            let target = rng.random_range(0..n);
            for gate in [SingleQubitGate::rx(angle, target), SingleQubitGate::ry(angle, target)] {
                let g = apply_gate(&s, &gate).expect("target in range");
                worst = worst.max((g.norm_sqr() - 1.0).abs());
            }
            checks += 1;
        }
    }
    suite("unitarity", checks, worst, 1e-10, 0)
}

fn kernel_validity(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> SuiteResult {
    let n = opts.max_qubits;
    let circuit = KernelCircuit::new(build_protective_layout(n).expect("valid")).with_convention(opts.convention);
    let windows: Vec<Vec<f64>> = (0..100).map(|_| random_unit(rng, 1 << n)).collect();
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    for w in windows.iter().take(20) {
        worst = worst.max((circuit.value(w, w).unwrap_or(0.0) - 1.0).abs());
    }
    for pair in windows.chunks(2).take(20) {
        let a = circuit.value(&pair[0], &pair[1]).unwrap_or(f64::NAN);
        let b = circuit.value(&pair[1], &pair[0]).unwrap_or(f64::NAN);
        if !((a - b).abs() <= 1e-12) {
            failures += 1;
        }
    }
    let min_eig = match gram_train(&KernelFunction::Quantum(circuit), &windows, "verify") {
        Ok(k) => SymmetricEigen::new(k.into_values()).eigenvalues.min(),
        Err(_) => f64::NEG_INFINITY,
    };
    if min_eig < -1e-8 {
        failures += 1;
    }
    SuiteResult {
        name: "kernel validity",
        passed: failures == 0 && worst <= 1e-10,
        checks: 41,
        detail: format!("self-similarity dev {worst:.2e}, min eigenvalue {min_eig:.2e}, {failures} failures"),
    }
}

/// Shifts one split boundary backwards into the previous split and checks
/// that the leak detector notices, on randomized series and specs.
fn leakage(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> SuiteResult {
    let mut missed = 0;
    let mut false_alarms = 0;
    let mut trials = 0;
    while trials < opts.leak_trials {
        let window = 1 << rng.random_range(1..=4);
        let spec = SplitSpec {
            window,
            stride: rng.random_range(1..=4),
            horizon: rng.random_range(1..=3),
            ..SplitSpec::default()
        };
        let len = rng.random_range(200..600);
        let values: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let series = StationSeries::new("LEAK", (0..len as i64).collect(), [("x".to_string(), values)].into())
            .expect("valid series");
        let Ok((scaled, scaler)) = standardize(&series, &spec) else { continue };
        let Ok(data) = make_windows(&scaled, &scaler, &spec, &["x".to_string()], "x") else { continue };
        trials += 1;
        if check_leak_free(data.sets(), &spec).is_err() {
            false_alarms += 1;
        }
        // move a later split back far enough that its first window reaches
        // at least one timestep already used by the split before it
        let mut shifted = data.clone();
        let (prev, target) = if rng.random_bool(0.5) {
            (&shifted.train, &mut shifted.val)
        } else {
            (&shifted.val, &mut shifted.test)
        };
        let last_touched = prev.start_indices.last().copied().unwrap_or(0) + spec.window - 1 + spec.horizon;
        let gap = target.start_indices[0] - last_touched;
        let shift = gap + rng.random_range(0..spec.window);
        target.start_indices.iter_mut().for_each(|s| *s -= shift.min(*s));
        if check_leak_free(shifted.sets(), &spec).is_ok() {
            missed += 1;
        }
    }
    SuiteResult {
        name: "split leakage",
        passed: missed == 0 && false_alarms == 0,
        checks: trials,
        detail: format!("{missed} shifted boundaries missed, {false_alarms} false alarms"),
    }
}

pub fn run_suites(opts: &VerifyOptions) -> Vec<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    vec![
        oracle_trace(opts, &mut rng),
        oracle_omega(opts, &mut rng),
        unitarity(opts, &mut rng),
        kernel_validity(opts, &mut rng),
        leakage(opts, &mut rng),
    ]
}

/// Plain-text pass/fail table.
pub fn render_table(results: &[SuiteResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for r in results {
        out.push_str(&format!(
            "{:<width$}  {}  {:>5} checks  {}\n",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.checks,
            r.detail
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(convention: GateConvention) -> VerifyOptions {
        VerifyOptions {
            pairs_per_n: 10,
            max_qubits: 3,
            leak_trials: 50,
            convention,
            ..VerifyOptions::default()
        }
    }

    #[test]
    fn standard_convention_passes() {
        let results = run_suites(&quick(GateConvention::Standard));
        assert!(results.iter().all(|r| r.passed), "{}", render_table(&results));
    }

    #[test]
    fn corrupted_convention_fails_the_oracle() {
        let results = run_suites(&quick(GateConvention::FlippedRx));
        assert!(!results[0].passed);
        assert!(render_table(&results).contains("FAIL"));
    }
}
