//! Experiments: configuration in, metrics out.
//!
//! [`run_experiment`] trains every configured mode on identical data, keys
//! and seeds, and writes
//!
//! - `metrics.jsonl`: one [`MetricsRecord`] per mode per round,
//! - `timing.csv`: per-round phase timings,
//! - `privacy.txt`: the [`PrivacyReport`] as `name=value` lines.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::partition_iid;
use crate::dp::{gaussian_solve_sigma, GaussianTarget, NormProfile, PrivacyParams, PrivacyReport, Sensitivity};
use crate::error::{Error, Result};
use crate::protocol::{run_training_in_process, NoiseConfig, PhaseTimings, TrainingSetup, TrainingTrace};
use crate::seed::{derive_seed, Stream};

pub use config::{DataSource, ExperimentConfig, KeySection, PrivacySection, TrainingSection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub round: u32,
    pub mode: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_tilde: Option<usize>,
    pub train_loss: f64,
    pub test_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<PhaseTimings>,
    pub eps_local: f64,
    pub eps_global: f64,
    pub delta_local: f64,
    pub delta_global: f64,
    /// Decoded global model entering this round.
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Record wall-clock timings; disable for byte-stable output.
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { timing: true }
    }
}

pub struct ExperimentOutput {
    pub traces: Vec<TrainingTrace>,
    pub records: Vec<MetricsRecord>,
    pub privacy: PrivacyReport,
}

/// Resolves the noise levels (solving them when only targets are given)
/// and evaluates the privacy report for these keys and this partition.
pub fn privacy_report(
    cfg: &ExperimentConfig,
    profile: &NormProfile,
    local_size: usize,
    global_size: usize,
) -> Result<PrivacyReport> {
    let p = &cfg.privacy;
    let (sigma1, sigma2) = match (p.sigma1, p.sigma2) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            let sens = Sensitivity::new(p.clip, local_size, global_size)?;
            let target = GaussianTarget {
                eps_local: p.eps_local.expect("validated"),
                delta_local: p.delta_local,
                eps_global: p.eps_global.expect("validated"),
                delta_global: p.delta_global,
            };
            gaussian_solve_sigma(profile, &sens, &target, p.variant)?
        }
    };
    let params = PrivacyParams {
        noise: p.noise,
        sigma1,
        sigma2,
        clip: p.clip,
        delta_local: p.delta_local,
        delta_global: p.delta_global,
        variant: p.variant,
    };
    if sigma1 == 0.0 || sigma2 == 0.0 {
        // A disabled noise channel gives no guarantee from that channel.
        let mut report = PrivacyReport::compute(
            profile,
            (local_size, global_size),
            &PrivacyParams {
                sigma1: sigma1.max(f64::MIN_POSITIVE),
                sigma2: sigma2.max(f64::MIN_POSITIVE),
                ..params
            },
        )?;
        report.sigma1 = sigma1;
        report.sigma2 = sigma2;
        return Ok(report);
    }
    PrivacyReport::compute(profile, (local_size, global_size), &params)
}

/// Splits the data, builds keys and the privacy report: everything but the
/// training itself.
pub fn prepare(cfg: &ExperimentConfig) -> Result<(TrainingSetup, PrivacyReport)> {
    cfg.validate()?;
    let (train, test) = cfg.datasets()?;
    let part = partition_iid(
        train.len(),
        cfg.training.clients,
        derive_seed(cfg.seed, Stream::Partition, 0, 0),
    )?;
    let clients: Vec<_> = part.split(&train)?.into_iter().map(Arc::new).collect();
    let (server, agg) = cfg.keys()?;
    let profile = NormProfile::from_keys(&server, &agg);
    let local_size = part.sizes().into_iter().min().expect("at least one client");
    let report = privacy_report(cfg, &profile, local_size, part.total())?;
    let setup = TrainingSetup {
        mode: cfg.modes[0],
        spec: cfg.model.clone(),
        clients,
        eval: test.map(Arc::new),
        rounds: cfg.training.rounds,
        local: cfg.local_config(),
        optimizer: cfg.optimizer,
        server_keys: Some(server),
        aggregator_keys: Some(agg),
        noise: NoiseConfig {
            kind: cfg.privacy.noise,
            sigma1: report.sigma1,
            sigma2: report.sigma2,
        },
        seed: cfg.seed,
    };
    Ok((setup, report))
}

pub fn records_from_trace(trace: &TrainingTrace, privacy: &PrivacyReport, opts: RunOptions) -> Vec<MetricsRecord> {
    trace
        .records
        .iter()
        .map(|r| MetricsRecord {
            round: r.round,
            mode: trace.mode.label().to_string(),
            n: trace.n,
            n_tilde: trace.n_tilde,
            train_loss: r.train_loss,
            test_accuracy: r.accuracy,
            timing: opts.timing.then_some(r.timing),
            eps_local: privacy.eps_local,
            eps_global: privacy.eps_global,
            delta_local: privacy.delta_local,
            delta_global: privacy.delta_global,
            params: r.model.as_slice().to_vec(),
        })
        .collect()
}

/// Runs every mode and, when `out_dir` is given, writes the three outputs.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>, opts: RunOptions) -> Result<ExperimentOutput> {
    let (base, privacy) = prepare(cfg)?;
    let mut traces = Vec::new();
    let mut records = Vec::new();
    for &mode in &cfg.modes {
        let setup = TrainingSetup { mode, ..base.clone() };
        let trace = run_training_in_process(&setup)?;
        records.extend(records_from_trace(&trace, &privacy, opts));
        traces.push(trace);
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_jsonl(&dir.join("metrics.jsonl"), &records)?;
        if opts.timing {
            let path = dir.join("timing.csv");
            fs::write(&path, timing_csv(&records)).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join("privacy.txt");
        fs::write(&path, privacy.to_text()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(ExperimentOutput {
        traces,
        records,
        privacy,
    })
}

pub fn write_jsonl(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<MetricsRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i as u64 + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// `mode,round,local,client_coding,aggregate,server_coding` in seconds.
pub fn timing_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from("mode,round,n,n_tilde,local,client_coding,aggregate,server_coding\n");
    for r in records {
        let t = r.timing.unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{:.9},{:.9},{:.9},{:.9}",
            r.mode,
            r.round,
            r.n,
            r.n_tilde.map_or(String::new(), |v| v.to_string()),
            t.local,
            t.client_coding,
            t.aggregate,
            t.server_coding
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundGap {
    pub round: u32,
    pub param_gap: f64,
    pub accuracy_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub tol: f64,
    pub rounds: Vec<RoundGap>,
    pub max_param_gap: f64,
    pub max_accuracy_gap: f64,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.max_param_gap <= self.tol && self.max_accuracy_gap <= self.tol
    }
}

impl std::fmt::Display for EquivalenceReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "round,param_gap,accuracy_gap")?;
        for r in &self.rounds {
            writeln!(f, "{},{:e},{:e}", r.round, r.param_gap, r.accuracy_gap)?;
        }
        writeln!(
            f,
            "max param gap {:e}, max accuracy gap {:e}, tol {:e}: {}",
            self.max_param_gap,
            self.max_accuracy_gap,
            self.tol,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Per-round max-abs parameter gap and accuracy gap between two traces.
pub fn equivalence_report(a: &[MetricsRecord], b: &[MetricsRecord], tol: f64) -> Result<EquivalenceReport> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let mut rounds = Vec::with_capacity(a.len());
    for (x, y) in a.iter().zip(b) {
        if x.params.len() != y.params.len() {
            return Err(Error::ShapeMismatch {
                expected: x.params.len(),
                got: y.params.len(),
            });
        }
        if x.round != y.round {
            return Err(Error::ProtocolOrder(format!("round {} paired with round {}", x.round, y.round)));
        }
        let param_gap = x
            .params
            .iter()
            .zip(&y.params)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        rounds.push(RoundGap {
            round: x.round,
            param_gap,
            accuracy_gap: (x.test_accuracy - y.test_accuracy).abs(),
        });
    }
    let max_param_gap = rounds.iter().map(|r| r.param_gap).fold(0.0, f64::max);
    let max_accuracy_gap = rounds.iter().map(|r| r.accuracy_gap).fold(0.0, f64::max);
    Ok(EquivalenceReport {
        tol,
        rounds,
        max_param_gap,
        max_accuracy_gap,
    })
}

/// Records of one mode from a mixed metrics file.
pub fn select_mode(records: &[MetricsRecord], mode: &str) -> Vec<MetricsRecord> {
    records.iter().filter(|r| r.mode == mode).cloned().collect()
}

/// Mean per-round phase times of one run per configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub mode: String,
    pub n: usize,
    pub n_tilde: Option<usize>,
    pub rounds: u32,
    pub mean: PhaseTimings,
}

/// Runs each configuration and averages phase timings over rounds.
/// Informational only: nothing here is asserted.
pub fn timing_report(cfgs: &[ExperimentConfig]) -> Result<Vec<TimingRow>> {
    let mut rows = Vec::new();
    for cfg in cfgs {
        let out = run_experiment(cfg, None, RunOptions { timing: true })?;
        for trace in &out.traces {
            let rounds = trace.records.len().saturating_sub(1) as u32;
            let mut mean = PhaseTimings::default();
            for r in trace.records.iter().skip(1) {
                mean.local += r.timing.local;
                mean.client_coding += r.timing.client_coding;
                mean.aggregate += r.timing.aggregate;
                mean.server_coding += r.timing.server_coding;
            }
            if rounds > 0 {
                let k = rounds as f64;
                mean.local /= k;
                mean.client_coding /= k;
                mean.aggregate /= k;
                mean.server_coding /= k;
            }
            rows.push(TimingRow {
                mode: trace.mode.label().to_string(),
                n: trace.n,
                n_tilde: trace.n_tilde,
                rounds,
                mean,
            });
        }
    }
    Ok(rows)
}

pub fn timing_table_csv(rows: &[TimingRow]) -> String {
    let mut out = String::from("mode,n,n_tilde,rounds,local,client_coding,aggregate,server_coding,coding_overhead\n");
    for r in rows {
        let m = r.mean;
        let overhead = if m.local > 0.0 {
            (m.client_coding + m.server_coding) / m.local
        } else {
            0.0
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{:.9},{:.9},{:.9},{:.9},{:.4}",
            r.mode,
            r.n,
            r.n_tilde.map_or(String::new(), |v| v.to_string()),
            r.rounds,
            m.local,
            m.client_coding,
            m.aggregate,
            m.server_coding,
            overhead
        );
    }
    out
}

