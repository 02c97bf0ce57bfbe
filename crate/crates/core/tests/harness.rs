use std::path::Path;

use sifl::coding::{gen_aggregator_keys, gen_server_keys, write_key_file, KeyGenConfig};
use sifl::data::{synth_dataset, write_csv, SynthKind};
use sifl::harness::{
    equivalence_report, read_jsonl, run_experiment, select_mode, timing_report, timing_table_csv, ExperimentConfig,
    RunOptions,
};
use sifl::Error;

const LOGISTIC: &str = include_str!("../examples/configs/logistic.toml");

fn small(modes: &str, extra: &str) -> ExperimentConfig {
    ExperimentConfig::parse(&format!(
        r#"
seed = 11
{modes}
[model]
kind = "logistic"
inputs = 5
classes = 2

[data]
kind = "synthetic"
samples = 300
dim = 5
test = 100
[data.task]
kind = "blobs"
classes = 2
separation = 2.0

[training]
clients = 4
rounds = 5
local_steps = 2
batch_size = 16

[optimizer]
kind = "momentum"
lr = 0.1
beta = 0.9
{extra}
"#
    ))
    .unwrap()
}

const PLAIN_M1: &str = "[[modes]]\nkind = \"plain\"\n[[modes]]\nkind = \"sifl_m1\"\n";

#[test]
fn config_round_trip_is_identity() {
    let a = ExperimentConfig::parse(LOGISTIC).unwrap();
    let b = ExperimentConfig::parse(&a.to_toml().unwrap()).unwrap();
    assert_eq!(a, b);
    let c = small(
        "[[modes]]\nkind = \"noisy_baseline\"\nsigma = 0.5\n",
        "[privacy]\nnoise = \"laplace\"\nsigma1 = 2.0\nsigma2 = 3.0\n[keys]\nn_tilde = 20\nlayout = \"dense\"\n",
    );
    assert_eq!(c, ExperimentConfig::parse(&c.to_toml().unwrap()).unwrap());
}

#[test]
fn invalid_configs_are_config_errors() {
    let bad = LOGISTIC.replace("dim = 10", "dim = 9");
    assert!(matches!(ExperimentConfig::parse(&bad), Err(Error::Config(_))));
    let bad = LOGISTIC.replace("clients = 10", "clients = 10\nunknown = 1");
    assert!(matches!(ExperimentConfig::parse(&bad), Err(Error::Config(_))));
    let bad = LOGISTIC.replace("extra = 8", "n_tilde = 22");
    assert!(matches!(ExperimentConfig::parse(&bad), Err(Error::Config(_))));
}

#[test]
fn mismatched_key_file_fails_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = KeyGenConfig::new(7, 12, 3, 1);
    write_key_file(dir.path().join("keys.bin"), &gen_server_keys(&cfg).unwrap(), &gen_aggregator_keys(&cfg).unwrap())
        .unwrap();
    let mut exp = small(PLAIN_M1, "[keys]\nfile = \"keys.bin\"\n");
    exp.base_dir = dir.path().to_path_buf();
    let out = dir.path().join("out");
    match run_experiment(&exp, Some(&out), RunOptions::default()) {
        Err(Error::Config(msg)) => assert!(msg.contains("n = 7"), "{msg}"),
        other => panic!("expected a configuration error, got {:?}", other.map(|_| ())),
    }
    assert!(!out.exists());
}

#[test]
fn matching_key_file_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let exp = small(PLAIN_M1, "");
    let (server, agg) = exp.keys().unwrap();
    write_key_file(dir.path().join("k.bin"), &server, &agg).unwrap();
    let mut from_file = small(PLAIN_M1, "[keys]\nfile = \"k.bin\"\n");
    from_file.base_dir = dir.path().to_path_buf();
    let a = run_experiment(&exp, None, RunOptions { timing: false }).unwrap();
    let b = run_experiment(&from_file, None, RunOptions { timing: false }).unwrap();
    assert_eq!(a.records, b.records);
}

#[test]
fn plain_and_m1_records_pair_up() {
    let out = run_experiment(&small(PLAIN_M1, ""), None, RunOptions { timing: false }).unwrap();
    assert_eq!(out.records.len(), 2 * 6);
    let plain = select_mode(&out.records, "plain");
    let m1 = select_mode(&out.records, "sifl_m1");
    let report = equivalence_report(&plain, &m1, 1e-9).unwrap();
    assert!(report.passed(), "{report}");
    assert_eq!(report.rounds.len(), 6);
    assert!(m1.iter().all(|r| r.n == 12 && r.n_tilde == Some(20)));

    let same = equivalence_report(&plain, &plain, 0.0).unwrap();
    assert_eq!(same.max_param_gap, 0.0);
    assert_eq!(same.max_accuracy_gap, 0.0);
    assert!(same.passed());

    assert!(matches!(
        equivalence_report(&plain, &m1[..3], 1e-9),
        Err(Error::ShapeMismatch { expected: 6, got: 3 })
    ));
}

#[test]
fn noisy_baseline_fails_equivalence() {
    let modes = "[[modes]]\nkind = \"plain\"\n[[modes]]\nkind = \"noisy_baseline\"\nsigma = 1.0\n";
    let out = run_experiment(&small(modes, ""), None, RunOptions { timing: false }).unwrap();
    let report = equivalence_report(
        &select_mode(&out.records, "plain"),
        &select_mode(&out.records, "noisy_baseline"),
        1e-9,
    )
    .unwrap();
    assert!(!report.passed());
    assert_eq!(report.rounds[0].param_gap, 0.0);
}

#[test]
fn outputs_are_deterministic_without_timing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("[[modes]]\nkind = \"sifl_m2\"\n", "");
    let read = |p: &Path| std::fs::read(p).unwrap();
    run_experiment(&cfg, Some(&dir.path().join("a")), RunOptions { timing: false }).unwrap();
    run_experiment(&cfg, Some(&dir.path().join("b")), RunOptions { timing: false }).unwrap();
    assert_eq!(read(&dir.path().join("a/metrics.jsonl")), read(&dir.path().join("b/metrics.jsonl")));
    assert_eq!(read(&dir.path().join("a/privacy.txt")), read(&dir.path().join("b/privacy.txt")));

    let records = read_jsonl(&dir.path().join("a/metrics.jsonl")).unwrap();
    let direct = run_experiment(&cfg, None, RunOptions { timing: false }).unwrap().records;
    assert_eq!(records, direct);
    assert!(records.iter().all(|r| r.timing.is_none()));

    run_experiment(&cfg, Some(&dir.path().join("c")), RunOptions { timing: true }).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("c/timing.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);
}

#[test]
fn privacy_report_uses_smallest_client() {
    // 300 training rows over 4 clients: 75 each.
    let out = run_experiment(&small(PLAIN_M1, ""), None, RunOptions { timing: false }).unwrap();
    assert_eq!(out.privacy.local_size, 75);
    assert_eq!(out.privacy.global_size, 300);
    assert!(out.records.iter().all(|r| r.eps_local == out.privacy.eps_local));
}

#[test]
fn eps_targets_solve_for_noise() {
    let cfg = small(
        "[[modes]]\nkind = \"sifl_m2\"\n",
        "[privacy]\neps_local = 2.0\neps_global = 0.5\ndelta_local = 1e-4\ndelta_global = 1e-4\nclip = 10.0\n",
    );
    let out = run_experiment(&cfg, None, RunOptions { timing: false }).unwrap();
    assert!(out.privacy.sigma1 > 0.0);
    assert!(out.privacy.eps_local <= 2.0 && out.privacy.eps_global <= 0.5, "{:?}", out.privacy);
}

#[test]
fn csv_source_resolves_against_config_dir() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_dataset(&SynthKind::Blobs { classes: 2, separation: 2.0 }, 80, 5, 3).unwrap();
    write_csv(dir.path().join("train.csv"), &data).unwrap();
    let text = small(PLAIN_M1, "")
        .to_toml()
        .unwrap()
        .replace("kind = \"synthetic\"\nsamples = 300\ndim = 5\ntest = 100", "kind = \"csv\"\npath = \"train.csv\"\ntest = 20");
    assert!(text.contains("train.csv"), "{text}");
    std::fs::write(dir.path().join("exp.toml"), text).unwrap();
    let cfg = ExperimentConfig::load(dir.path().join("exp.toml")).unwrap();
    let (train, test) = cfg.datasets().unwrap();
    assert_eq!((train.len(), test.unwrap().len()), (60, 20));
    run_experiment(&cfg, None, RunOptions { timing: false }).unwrap();
}

#[test]
fn large_mlp_reports_its_dimensions() {
    let cfg = ExperimentConfig::parse(
        r#"
seed = 1
[[modes]]
kind = "sifl_m1"
[model]
kind = "mlp"
layers = [784, 200, 200, 10]
[data]
kind = "synthetic"
samples = 20
dim = 784
[data.task]
kind = "blobs"
classes = 10
separation = 3.0
[training]
clients = 2
rounds = 1
local_steps = 1
[optimizer]
kind = "sgd"
lr = 0.01
[keys]
n_tilde = 199411
"#,
    )
    .unwrap();
    let out = run_experiment(&cfg, None, RunOptions { timing: false }).unwrap();
    assert_eq!(out.records.len(), 2);
    assert!(out.records.iter().all(|r| r.n == 199_210 && r.n_tilde == Some(199_411)));
}

#[test]
fn plain_mode_spends_nothing_on_coding() {
    let rows = timing_report(&[small("[[modes]]\nkind = \"plain\"\n[[modes]]\nkind = \"sifl_m1\"\n", "")]).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].mean.client_coding, 0.0);
    assert_eq!(rows[0].mean.server_coding, 0.0);
    assert!(rows[1].mean.client_coding > 0.0);
    assert_eq!(timing_table_csv(&rows).lines().count(), 3);
}
