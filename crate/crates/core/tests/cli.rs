use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
seed = 5
[[modes]]
kind = "plain"
[[modes]]
kind = "sifl_m2"
[[modes]]
kind = "noisy_baseline"
sigma = 1.0
[model]
kind = "linear"
inputs = 3
[data]
kind = "synthetic"
samples = 120
dim = 3
[data.task]
kind = "regression"
[training]
clients = 3
rounds = 4
local_steps = 2
[optimizer]
kind = "adam"
lr = 0.01
beta1 = 0.9
beta2 = 0.999
eps = 1e-8
[keys]
extra = 3
"#;

fn sifl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sifl"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn run_is_byte_reproducible_and_equivalence_exits_by_result() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("exp.toml"), CONFIG).unwrap();
    for out in ["a", "b"] {
        let o = sifl(&["run", "exp.toml", "--out", out, "--no-timing"], d);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(d.join("a/metrics.jsonl")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b/metrics.jsonl")).unwrap());
    assert_eq!(a.iter().filter(|&&b| b == b'\n').count(), 3 * 5);
    assert!(!d.join("a/timing.csv").exists());

    let pass = sifl(&["equivalence", "a/metrics.jsonl#plain", "b/metrics.jsonl#sifl_m2", "--tol", "1e-9"], d);
    assert_eq!(code(&pass), 0, "{}", String::from_utf8_lossy(&pass.stdout));
    let fail = sifl(&["equivalence", "a/metrics.jsonl#plain", "a/metrics.jsonl#noisy_baseline"], d);
    assert_eq!(code(&fail), 1);
    assert!(String::from_utf8_lossy(&fail.stdout).contains("FAIL"));
    let misaligned = sifl(&["equivalence", "a/metrics.jsonl", "a/metrics.jsonl#plain"], d);
    assert_eq!(code(&misaligned), 2);

    let timed = sifl(&["run", "exp.toml", "--out", "c"], d);
    assert_eq!(code(&timed), 0);
    assert!(d.join("c/timing.csv").exists());
}

#[test]
fn keys_generate_validate_and_reject_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("exp.toml"), CONFIG).unwrap();
    assert_eq!(code(&sifl(&["gen-keys", "exp.toml", "-o", "keys.bin"], d)), 0);
    let ok = sifl(&["validate-keys", "keys.bin"], d);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));

    // The file ends with N2; breaking its last entry breaks N2·Π2ᴿ = 0.
    let mut bytes = std::fs::read(d.join("keys.bin")).unwrap();
    let at = bytes.len() - 8;
    bytes[at..].copy_from_slice(&7.0f64.to_le_bytes());
    std::fs::write(d.join("bad.bin"), &bytes).unwrap();
    let bad = sifl(&["validate-keys", "bad.bin"], d);
    assert_eq!(code(&bad), 1);
    assert!(String::from_utf8_lossy(&bad.stdout).contains("aggregator_kernel"));

    // A configuration pointing at tampered keys is refused.
    std::fs::write(d.join("uses_bad.toml"), CONFIG.replace("extra = 3", "extra = 3\nfile = \"bad.bin\"")).unwrap();
    assert_eq!(code(&sifl(&["run", "uses_bad.toml", "--out", "x"], d)), 2);
}

#[test]
fn dp_report_and_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("targets.toml"),
        format!("{CONFIG}\n[privacy]\neps_local = 1.0\neps_global = 0.1\nclip = 5.0\n"),
    )
    .unwrap();
    let o = sifl(&["dp-report", "targets.toml"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("sigma1=") && text.contains("global_margin="), "{text}");

    std::fs::write(d.join("broken.toml"), CONFIG.replace("inputs = 3", "inputs = 4")).unwrap();
    assert_eq!(code(&sifl(&["dp-report", "broken.toml"], d)), 2);
    assert_eq!(code(&sifl(&["run", "missing.toml"], d)), 2);
}
