//! Run an experiment file through the harness and compare the modes.
//!
//!     cargo run --release --example experiment -- examples/configs/logistic.toml out/

use std::path::PathBuf;

use sifl::harness::{equivalence_report, run_experiment, select_mode, ExperimentConfig, RunOptions};

fn main() -> sifl::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/logistic.toml")));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("sifl-experiment"));

    let cfg = ExperimentConfig::load(&config)?;
    let result = run_experiment(&cfg, Some(&out), RunOptions::default())?;
    println!("{}", result.privacy.to_text().lines().filter(|l| l.starts_with("eps")).collect::<Vec<_>>().join("  "));

    let plain = select_mode(&result.records, "plain");
    for mode in &cfg.modes[1..] {
        let other = select_mode(&result.records, mode.label());
        let report = equivalence_report(&plain, &other, 1e-9)?;
        println!(
            "plain vs {:<14} max param gap {:.2e}  max accuracy gap {:.2e}  {}",
            mode.label(),
            report.max_param_gap,
            report.max_accuracy_gap,
            if report.passed() { "PASS" } else { "FAIL" }
        );
    }
    println!("wrote metrics.jsonl, timing.csv and privacy.txt to {}", out.display());
    Ok(())
}
