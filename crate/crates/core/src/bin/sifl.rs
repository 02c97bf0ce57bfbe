//! Thin command-line front end. Exit status: 0 pass, 1 validation or
//! equivalence failure, 2 configuration or other error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sifl::coding::{read_key_file_unchecked, validate_keys, write_key_file};
use sifl::dp::{gaussian_check, GaussianTarget, NoiseKind, NormProfile, Sensitivity};
use sifl::harness::{self, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "sifl", version, about = "Immersion-coded federated learning experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train every configured mode and write metrics.jsonl, timing.csv, privacy.txt.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Omit wall-clock timings so output is byte-reproducible.
        #[arg(long)]
        no_timing: bool,
    },
    /// Check the algebraic invariants of a key file.
    ValidateKeys { keyfile: PathBuf },
    /// Print the privacy report for a configuration without training.
    DpReport { config: PathBuf },
    /// Compare two metrics files; select a mode with `file.jsonl#mode`.
    Equivalence {
        a: String,
        b: String,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Generate keys for a configuration and write them to a file.
    GenKeys {
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

enum Outcome {
    Pass,
    Fail,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_trace(arg: &str) -> sifl::Result<Vec<harness::MetricsRecord>> {
    let (path, mode) = match arg.rsplit_once('#') {
        Some((p, m)) => (p, Some(m)),
        None => (arg, None),
    };
    let records = harness::read_jsonl(Path::new(path))?;
    Ok(match mode {
        Some(m) => harness::select_mode(&records, m),
        None => records,
    })
}

fn run(cmd: Cmd) -> sifl::Result<Outcome> {
    match cmd {
        Cmd::Run { config, out, no_timing } => {
            let cfg = ExperimentConfig::load(&config)?;
            let result = harness::run_experiment(&cfg, Some(&out), RunOptions { timing: !no_timing })?;
            for trace in &result.traces {
                let last = trace.records.last().expect("initial record");
                println!(
                    "{:>14}  rounds {:>3}  loss {:.6}  accuracy {:.4}",
                    trace.mode.label(),
                    last.round,
                    last.train_loss,
                    last.accuracy
                );
            }
            println!("wrote {}", out.display());
            Ok(Outcome::Pass)
        }
        Cmd::ValidateKeys { keyfile } => {
            let (server, agg) = read_key_file_unchecked(&keyfile)?;
            let report = validate_keys(&server, &agg);
            println!("{report}");
            Ok(if report.passed() { Outcome::Pass } else { Outcome::Fail })
        }
        Cmd::DpReport { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let (_, report) = harness::prepare(&cfg)?;
            print!("{}", report.to_text());
            let p = &cfg.privacy;
            match (p.noise, p.eps_local, p.eps_global) {
                (NoiseKind::Gaussian, Some(el), Some(eg)) => {
                    let (server, agg) = cfg.keys()?;
                    let profile = NormProfile::from_keys(&server, &agg);
                    let sens = Sensitivity::new(p.clip, report.local_size, report.global_size)?;
                    let target = GaussianTarget {
                        eps_local: el,
                        delta_local: p.delta_local,
                        eps_global: eg,
                        delta_global: p.delta_global,
                    };
                    let check = gaussian_check(&profile, &sens, report.sigma1, report.sigma2, &target, p.variant)?;
                    println!("local_margin={:e}\nglobal_margin={:e}", check.local_margin, check.global_margin);
                    Ok(if check.passed() { Outcome::Pass } else { Outcome::Fail })
                }
                _ => Ok(Outcome::Pass),
            }
        }
        Cmd::Equivalence { a, b, tol } => {
            let report = harness::equivalence_report(&load_trace(&a)?, &load_trace(&b)?, tol)?;
            print!("{report}");
            Ok(if report.passed() { Outcome::Pass } else { Outcome::Fail })
        }
        Cmd::GenKeys { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let (server, agg) = cfg.keys()?;
            write_key_file(&out, &server, &agg)?;
            println!("n={} n_tilde={} p={} -> {}", server.n(), server.n_tilde(), agg.p(), out.display());
            Ok(Outcome::Pass)
        }
    }
}
