use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qftk::experiment::report::cmd_report;
use qftk::experiment::run::{cmd_kernels, cmd_run};
use qftk::experiment::verify::{render_table, run_suites, VerifyOptions};
use qftk::experiment::{ExperimentConfig, ExperimentError};
use qftk::qkernel::GateConvention;
use qftk::synth::{self, SynthParams};

#[derive(Parser)]
#[command(name = "qftk", version, about = "QFT fidelity-kernel forecasting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every station and kernel family listed in a config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Concurrent station jobs (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check the simulator and kernels against their closed forms.
    Verify {
        /// Random window pairs per qubit count.
        #[arg(long, default_value_t = 200)]
        pairs: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Simulate with a sign-flipped RX gate; the oracle suite must fail.
        #[arg(long, hide = true)]
        corrupt_gate: bool,
    },
    /// Write the kernel cache files for one station.
    Kernels {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        station: String,
    },
    /// Aggregate station reports of a finished run.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Write a seeded synthetic station CSV.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 104)]
        days: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 48)]
        steps_per_day: usize,
    },
}

fn fail(e: ExperimentError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, jobs } => {
            let cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            match cmd_run(&cfg, jobs) {
                Ok(manifest) => {
                    for (code, entry) in &manifest.stations {
                        match &entry.error {
                            None => println!(
                                "{code}: ok ({} kernels computed, {} reused, {:.0} ms)",
                                entry.timings.kernels_computed,
                                entry.timings.kernels_reused,
                                entry.timings.total_ms
                            ),
                            Some(err) => println!("{code}: failed: {err}"),
                        }
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Verify {
            pairs,
            seed,
            corrupt_gate,
        } => {
            let opts = VerifyOptions {
                pairs_per_n: pairs,
                seed,
                convention: if corrupt_gate {
                    GateConvention::FlippedRx
                } else {
                    GateConvention::Standard
                },
                ..VerifyOptions::default()
            };
            let results = run_suites(&opts);
            print!("{}", render_table(&results));
            if results.iter().all(|r| r.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::Kernels { config, station } => {
            let result = ExperimentConfig::load(&config).and_then(|cfg| cmd_kernels(&cfg, &station));
            match result {
                Ok(files) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Report { dir } => match cmd_report(&dir) {
            Ok(out) => {
                for f in out.files {
                    println!("{}", f.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Synth {
            out,
            days,
            seed,
            steps_per_day,
        } => {
            if days == 0 || steps_per_day == 0 {
                eprintln!("error: days and steps-per-day must be positive");
                return ExitCode::from(2);
            }
            let params = SynthParams {
                steps: days * steps_per_day,
                steps_per_day,
                step_minutes: (1440 / steps_per_day as i64).max(1),
                seed,
                ..SynthParams::default()
            };
            match synth::write_csv(&synth::generate(&params), &out) {
                Ok(()) => {
                    println!("{}", out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e.into()),
            }
        }
    }
}
