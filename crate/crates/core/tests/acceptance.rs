//! Acceptance checks, one line per criterion. Runs sequentially so the
//! wall-clock limits are measured without contention.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use sifl::coding::{
    encode_model, gen_aggregator_keys, gen_server_keys, validate_keys, KeyGenConfig,
};
use sifl::data::{partition_iid, synth_dataset, SynthKind};
use sifl::dp::{
    gaussian_check, gaussian_eps, gaussian_solve_sigma, laplace_eps, q_function, q_inverse, sample_gaussian,
    GaussianTarget, GlobalVariant, NormProfile, NormSummary, Sensitivity,
};
use sifl::harness::{run_experiment, ExperimentConfig, RunOptions};
use sifl::model::ModelSpec;
use sifl::optim::{plain_local_run, target_local_run, LocalRunConfig, OptimizerKind, OptimizerState};
use sifl::protocol::{
    run_training, Endpoint, InProcess, Message, Mode, NoiseConfig, Tap, Tapped,
    TrainingSetup, TrainingTrace,
};
use sifl::seed::rng_from_seed;

/// Reference value of `Q⁻¹(1e-5)`, from an independent inverse-normal
/// implementation (Python `statistics.NormalDist`).
const QINV_1E5: f64 = 4.2648907939228256;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("key algebra", Some(Duration::from_secs(10)), key_algebra),
        ("immersion invariance", Some(Duration::from_secs(30)), immersion_invariance),
        ("protocol equivalence", Some(Duration::from_secs(60)), protocol_equivalence),
        ("MLP equivalence", Some(Duration::from_secs(300)), mlp_equivalence),
        ("DP numeric reproduction", Some(Duration::from_secs(1)), dp_numbers),
        ("Q machinery", Some(Duration::from_secs(1)), q_machinery),
        ("noise cancellation", Some(Duration::from_secs(30)), noise_cancellation),
        ("empirical DP", Some(Duration::from_secs(120)), empirical_dp),
        ("trust boundary", None, trust_boundary),
        ("golden wire fixtures", None, golden_fixtures),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let out = check();
        let took = start.elapsed();
        let in_time = limit.is_none_or(|l| took <= l);
        let ok = out.passed && in_time;
        if !ok {
            failed += 1;
        }
        let limit = limit.map_or(String::new(), |l| format!(" / {}s", l.as_secs()));
        println!(
            "criterion {:>2} {:<24} {}  {:.2}s{limit}  {}",
            i + 1,
            name,
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            out.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

fn frob(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// 1. Residuals recomputed here from the raw matrices, not via the library's
// validator (which must agree).
fn key_algebra() -> Outcome {
    let mut rng = rng_from_seed(0xA11);
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let n = rng.random_range(1..=64);
        let extra = rng.random_range(1..=16);
        let p = rng.random_range(2..=8);
        let cfg = KeyGenConfig::new(n, n + extra, p, 1000 + trial);
        let (server, agg) = match (gen_server_keys(&cfg), gen_aggregator_keys(&cfg)) {
            (Ok(s), Ok(a)) => (s, a),
            (Err(e), _) | (_, Err(e)) => return outcome(false, format!("trial {trial}: {e}")),
        };
        let imm = server.immersion();
        let (pi1, pi1l, n1) = (imm.pi1().unwrap(), imm.pi1_left().unwrap(), server.n1().unwrap());

        let residuals = [
            frob(&(pi1l * pi1 - DMatrix::identity(n, n))),
            frob(&(pi1l * n1)),
            // Moore–Penrose: the projector Π1Π1ᴸ is symmetric.
            frob(&(pi1 * pi1l - (pi1 * pi1l).transpose())),
            (agg.pi2().dot(&agg.pi2_right().transpose()) - 1.0).abs(),
            (agg.n2() * agg.pi2_right()).norm(),
        ];
        if let Some(r) = residuals.iter().find(|r| !(**r < 1e-10)) {
            return outcome(false, format!("trial {trial} (n={n}, ñ={}, p={p}): residual {r:e}", n + extra));
        }
        worst = residuals.iter().copied().fold(worst, f64::max);

        let sv = pi1.clone().svd(false, false).singular_values;
        let rank = sv.iter().filter(|&&s| s > sv.max() * (n + extra) as f64 * f64::EPSILON).count();
        let min_row = n1.row_iter().map(|r| r.norm()).fold(f64::INFINITY, f64::min);
        let min_col = agg.n2().column_iter().map(|c| c.norm()).fold(f64::INFINITY, f64::min);
        if rank != n || !(min_row > 1e-8) || !(min_col > 1e-8) {
            return outcome(
                false,
                format!("trial {trial}: rank {rank}/{n}, min N1 row {min_row:e}, min N2 column {min_col:e}"),
            );
        }
        if !validate_keys(&server, &agg).passed() {
            return outcome(false, format!("trial {trial}: library validator disagrees"));
        }
    }
    outcome(true, format!("50 key sets, worst residual {worst:.2e} < 1e-10"))
}

// 2. f̃(Π1w + N1r) against Π1·f(w) + N1r, the right side formed from dense
// matrices here.
fn immersion_invariance() -> Outcome {
    let mut rng = rng_from_seed(0xB22);
    let mut worst: f64 = 0.0;
    for trial in 0..200u64 {
        let d = rng.random_range(1..=6);
        let (spec, data) = if rng.random_bool(0.5) {
            (
                ModelSpec::Linear { inputs: d },
                synth_dataset(&SynthKind::Regression, 40, d, trial).unwrap(),
            )
        } else {
            let classes = rng.random_range(2..=3);
            (
                ModelSpec::Logistic { inputs: d, classes },
                synth_dataset(&SynthKind::Blobs { classes, separation: 2.0 }, 40, d, trial).unwrap(),
            )
        };
        let n = spec.n_params();
        let n_tilde = n + rng.random_range(1..=8);
        let server = gen_server_keys(&KeyGenConfig::new(n, n_tilde, 2, trial)).unwrap();
        let optimizer = match trial % 3 {
            0 => OptimizerKind::Sgd { lr: 0.1 },
            1 => OptimizerKind::Momentum { lr: 0.05, beta: 0.9 },
            _ => OptimizerKind::adam_default(),
        };
        let cfg = LocalRunConfig {
            local_steps: rng.random_range(1..=5),
            batch_size: Some(rng.random_range(1..=16)),
            clip: None,
        };
        let w = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let r = DVector::from_fn(n_tilde - n, |_, _| rng.random_range(-3.0..3.0));

        let encoded = encode_model(&server, &w, &r).unwrap();
        let mut state = OptimizerState::new(optimizer, n).unwrap();
        let lhs = target_local_run(
            server.immersion(),
            &spec,
            &mut state,
            &encoded,
            &data,
            &cfg,
            &mut rng_from_seed(trial),
        )
        .unwrap();

        let mut state = OptimizerState::new(optimizer, n).unwrap();
        let f = plain_local_run(&spec, &mut state, &w, &data, &cfg, &mut rng_from_seed(trial)).unwrap();
        let rhs = server.immersion().pi1().unwrap() * f + server.n1().unwrap() * &r;

        let gap = (lhs.values() - &rhs).amax();
        worst = worst.max(gap);
        if !(gap < 1e-9) {
            return outcome(false, format!("trial {trial} ({optimizer:?}): gap {gap:e}"));
        }
    }
    outcome(true, format!("200 trials, worst gap {worst:.2e} < 1e-9"))
}

fn mode_gaps(traces: &[TrainingTrace], tol: f64) -> Outcome {
    let plain = &traces[0];
    let mut worst: f64 = 0.0;
    for trace in &traces[1..] {
        if trace.records.len() != plain.records.len() {
            return outcome(false, "trace lengths differ");
        }
        for (a, b) in plain.records.iter().zip(&trace.records) {
            let gap = (&a.model - &b.model).amax();
            worst = worst.max(gap);
            if !(gap < tol) {
                return outcome(false, format!("{} round {}: gap {gap:e}", trace.mode.label(), a.round));
            }
            if a.accuracy != b.accuracy {
                return outcome(
                    false,
                    format!("{} round {}: accuracy {} vs {}", trace.mode.label(), a.round, b.accuracy, a.accuracy),
                );
            }
        }
    }
    let last = plain.records.last().unwrap();
    outcome(
        true,
        format!(
            "{} rounds, worst gap {worst:.2e} < {tol:e}, accuracies identical (final {:.4})",
            last.round, last.accuracy
        ),
    )
}

fn experiment(toml: &str) -> Result<Vec<TrainingTrace>, String> {
    let cfg = ExperimentConfig::parse(toml).map_err(|e| e.to_string())?;
    let out = run_experiment(&cfg, None, RunOptions { timing: false }).map_err(|e| e.to_string())?;
    Ok(out.traces)
}

const MODES: &str = r#"
[[modes]]
kind = "plain"
[[modes]]
kind = "sifl_m1"
[[modes]]
kind = "sifl_m2"
"#;

// 3.
fn protocol_equivalence() -> Outcome {
    let toml = format!(
        r#"
seed = 3
{MODES}
[model]
kind = "logistic"
inputs = 10
classes = 2

[data]
kind = "synthetic"
samples = 2000
dim = 10
[data.task]
kind = "blobs"
classes = 2
separation = 2.0

[training]
clients = 10
rounds = 20
local_steps = 2
batch_size = 32

[optimizer]
kind = "sgd"
lr = 0.1
"#
    );
    match experiment(&toml) {
        Ok(traces) => mode_gaps(&traces, 1e-9),
        Err(e) => outcome(false, e),
    }
}

// 4. n = 12730 exceeds the dense limit, so the keys are structured. Noise
// stays at the default σ1 = σ2 = 100.
fn mlp_equivalence() -> Outcome {
    let toml = format!(
        r#"
seed = 4
{MODES}
[model]
kind = "mlp"
layers = [784, 16, 10]

[data]
kind = "synthetic"
samples = 1000
dim = 784
[data.task]
kind = "blobs"
classes = 10
separation = 3.0

[training]
clients = 10
rounds = 10
local_steps = 2
batch_size = 32

[optimizer]
kind = "sgd"
lr = 0.5

# Decoding loses about ε_mach·κ(Π1)·σ/‖w‖ relative precision, so the
# blocks are held to a tighter condition bound than the default.
[keys]
max_condition = 100.0
"#
    );
    match experiment(&toml) {
        Ok(traces) => {
            let mut o = mode_gaps(&traces, 1e-8);
            o.detail = format!("n={}, ñ={}: {}", traces[1].n, traces[1].n_tilde.unwrap_or(0), o.detail);
            o
        }
        Err(e) => outcome(false, e),
    }
}

fn section6_profile() -> NormProfile {
    NormProfile::from_summary(&NormSummary {
        max_pi1_l1: 1e-3,
        max_pi1_l2: 1e-3,
        min_n1_l2: 1e3,
        pi1_left_l2: 1e3,
        pi2_right_l2: 1e3,
        max_pi2_abs: 1e-3,
        n2_l2: 2f64.sqrt() * 1e3,
        min_n2_col_l2: 1e3,
    })
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

// 5.
fn dp_numbers() -> Outcome {
    let profile = section6_profile();
    let sens = Sensitivity::new(1000.0, 6000, 60000).unwrap();
    let (s1, s2) = (1e3, 1e3);
    let lap = laplace_eps(&profile, &sens, s1, s2).unwrap();

    // ε̃ = ‖Π1^j‖₁(2C/|Dᵢ|) / (‖N1^j‖σ1‖Π2ᴿ‖) = 1e-3·(1/3)/1e9.
    let local_oracle = 1.0 / 3e12;
    // ε′ = ‖Π1^j‖₁(2C/|D|)|Π2^m| / (‖N1^j‖σ1 + ‖Π1^j‖₂‖Π1ᴸ‖‖N2‖σ2)
    //    = (1/3e7) / (1e6(1 + √2)).
    let global_oracle = 1.0 / (3e13 * (1.0 + 2f64.sqrt()));
    let spot = rel(lap.local, local_oracle).max(rel(lap.global, global_oracle));

    let target = GaussianTarget {
        eps_local: 1e-11,
        delta_local: 1e-5,
        eps_global: 1e-13,
        delta_global: 1e-5,
    };
    let check = gaussian_check(&profile, &sens, s1, s2, &target, GlobalVariant::AsPrinted).unwrap();
    let geps = gaussian_eps(&profile, &sens, s1, s2, 1e-5, 1e-5, GlobalVariant::AsPrinted).unwrap();

    // Smallest ε certified by s² ≥ s·aQ⁻¹(δ)/ε + a²/(2ε), from the reference Q⁻¹.
    let min_eps = |a: f64, cross: f64, square: f64| (a * QINV_1E5 * cross + a * a / 2.0) / (square * square);
    let s_local = 1e3 * s1 * 1e3;
    let g_local = min_eps(1e-3 / 3.0, s_local, s_local);
    let y = 1e3 * s1 + 1e-3 * 1e3 * 2f64.sqrt() * 1e3 * s2;
    let g_global = min_eps(1e-3 / 30.0 * 1e-3, y, 1e3 * s1 + 1e3 * s2);
    let gauss_rel = rel(geps.local, g_local).max(rel(geps.global, g_global));

    let passed = lap.local <= 1e-12
        && lap.global <= 1e-13
        && spot <= 1e-15
        && check.passed()
        && gauss_rel <= 1e-9;
    outcome(
        passed,
        format!(
            "Laplace ε̃={:.3e} ε′={:.3e} (spot rel {spot:.1e} ≤ 1e-15); Gaussian ε̃_min={:.3e} ε′_min={:.3e}, check {}",
            lap.local,
            lap.global,
            geps.local,
            geps.global,
            if check.passed() { "passes" } else { "fails" }
        ),
    )
}

// 6.
fn q_machinery() -> Outcome {
    if q_function(0.0) != 0.5 {
        return outcome(false, format!("Q(0) = {}", q_function(0.0)));
    }
    let mut worst: f64 = 0.0;
    for p in [0.5, 1e-3, 1e-5, 1e-9] {
        let x = q_inverse(p).unwrap();
        let r = (q_function(x) - p).abs() / p;
        worst = worst.max(r);
    }
    let q5 = q_inverse(1e-5).unwrap();
    let gap = (q5 - QINV_1E5).abs();
    outcome(
        worst <= 1e-12 && gap <= 1e-4,
        format!("Q(0)=0.5, worst |Q(Q⁻¹(p))−p|/p {worst:.1e}, Q⁻¹(1e-5)={q5:.6} (ref gap {gap:.1e})"),
    )
}

fn small_setup(mode: Mode, rounds: u32, sigma: f64, seed: u64) -> TrainingSetup {
    let spec = ModelSpec::Logistic { inputs: 4, classes: 2 };
    let data = synth_dataset(&SynthKind::Blobs { classes: 2, separation: 2.0 }, 120, 4, seed).unwrap();
    let part = partition_iid(data.len(), 4, seed).unwrap();
    let n = spec.n_params();
    let cfg = KeyGenConfig::new(n, n + 5, 3, seed);
    TrainingSetup {
        mode,
        spec,
        clients: part.split(&data).unwrap().into_iter().map(Arc::new).collect(),
        eval: None,
        rounds,
        local: LocalRunConfig {
            local_steps: 2,
            batch_size: Some(8),
            clip: None,
        },
        optimizer: OptimizerKind::Sgd { lr: 0.2 },
        server_keys: Some(gen_server_keys(&cfg).unwrap()),
        aggregator_keys: Some(gen_aggregator_keys(&cfg).unwrap()),
        noise: NoiseConfig {
            sigma1: sigma,
            sigma2: sigma,
            ..NoiseConfig::default()
        },
        seed,
    }
}

fn tapped_run(setup: &TrainingSetup) -> (TrainingTrace, Vec<Tapped>) {
    let tap = Tap::new(InProcess::new(setup.clients.len() as u32));
    let trace = run_training(setup, &tap).unwrap();
    (trace, tap.frames())
}

fn payload(msg: &Message) -> DMatrix<f64> {
    match msg {
        Message::BroadcastPlain { model, .. }
        | Message::BroadcastEncoded { model, .. }
        | Message::Done { model, .. } => DMatrix::from_column_slice(model.len(), 1, model.as_slice()),
        Message::LocalUpdate { payload, .. } => DMatrix::from_column_slice(payload.len(), 1, payload.as_slice()),
        Message::BroadcastDoublyEncoded { model, .. } => model.clone(),
        Message::AggregateToServer { payload, .. } => payload.clone(),
    }
}

// 7. Ten seeds × ten SIFL-M2 rounds, each run with noise σ = 100 against the
// same run with noise switched off.
fn noise_cancellation() -> Outcome {
    let sigma = 100.0;
    let mut worst_model: f64 = 0.0;
    let mut weakest_noise = f64::INFINITY;
    let mut rounds = 0;
    for seed in 0..10 {
        let (noisy, noisy_frames) = tapped_run(&small_setup(Mode::SiflM2, 10, sigma, seed));
        let (clean, clean_frames) = tapped_run(&small_setup(Mode::SiflM2, 10, 0.0, seed));
        for (a, b) in noisy.records.iter().zip(&clean.records) {
            worst_model = worst_model.max((&a.model - &b.model).amax());
        }
        rounds += noisy.records.len() - 1;
        let key = |t: &Tapped| {
            let m = Message::decode(&t.frame).unwrap();
            ((m.tag(), m.round(), m.client_id()), m)
        };
        let clean: HashMap<_, _> = clean_frames.iter().map(key).collect();
        for t in &noisy_frames {
            let (k, m) = key(t);
            if matches!(m, Message::Done { .. }) {
                continue;
            }
            let diff = (payload(&m) - payload(&clean[&k])).amax();
            weakest_noise = weakest_noise.min(diff);
        }
    }
    outcome(
        worst_model < 1e-9 && weakest_noise >= sigma / 10.0,
        format!(
            "{rounds} rounds: decoded-model gap {worst_model:.1e} < 1e-9, smallest message difference {weakest_noise:.1} ≥ σ/10"
        ),
    )
}

/// Histogram privacy-loss check: mass of `p` on pooled-quantile bins whose
/// ratio to `q` exceeds `bound`.
fn violation_mass(p: &[f64], q: &[f64], per_bin: usize, bound: f64) -> (f64, f64) {
    let mut pooled: Vec<(f64, bool)> = p.iter().map(|&x| (x, true)).chain(q.iter().map(|&x| (x, false))).collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (np, nq) = (p.len() as f64, q.len() as f64);
    let (mut vp, mut vq) = (0.0, 0.0);
    for bin in pooled.chunks(per_bin) {
        let cp = bin.iter().filter(|s| s.1).count() as f64 / np;
        let cq = bin.iter().filter(|s| !s.1).count() as f64 / nq;
        if cp > bound * cq {
            vp += cp;
        }
        if cq > bound * cp {
            vq += cq;
        }
    }
    (vp, vq)
}

// 8. One-parameter model, ñ = 2. The released value is one coordinate of the
// encoded clipped mean; D holds 100 records at −C, D′ flips one to +C.
fn empirical_dp() -> Outcome {
    let (eps, delta, clip, size) = (1.0, 1e-3, 1.0, 100usize);
    let server = gen_server_keys(&KeyGenConfig::new(1, 2, 2, 8)).unwrap();
    let agg = gen_aggregator_keys(&KeyGenConfig::new(1, 2, 2, 8)).unwrap();
    let mut profile = NormProfile::from_keys(&server, &agg);
    // The released coordinate is not widened by π2.
    profile.pi2_right_l2 = 1.0;
    let sens = Sensitivity::new(clip, size, size).unwrap();
    let target = GaussianTarget {
        eps_local: eps,
        delta_local: delta,
        eps_global: 1e3,
        delta_global: delta,
    };
    let (sigma, _) = gaussian_solve_sigma(&profile, &sens, &target, GlobalVariant::AsPrinted).unwrap();
    // The coordinate with the largest signal-to-noise ratio is the binding one.
    let j = (0..2)
        .max_by(|&a, &b| (profile.pi1_l2[a] / profile.n1_l2[a]).total_cmp(&(profile.pi1_l2[b] / profile.n1_l2[b])))
        .unwrap();

    let query = |records: &[f64]| records.iter().map(|x| x.clamp(-clip, clip)).sum::<f64>() / records.len() as f64;
    let d = vec![-clip; size];
    let mut d_prime = d.clone();
    d_prime[0] = clip;

    let samples = 100_000;
    let release = |records: &[f64], sigma: f64, seed: u64| -> Vec<f64> {
        let w = DVector::from_element(1, query(records));
        let mut rng = rng_from_seed(seed);
        (0..samples)
            .map(|_| {
                let r = sample_gaussian(1, 1, sigma, &mut rng).unwrap().column(0).into_owned();
                encode_model(&server, &w, &r).unwrap().values()[j]
            })
            .collect()
    };
    let bound = eps.exp() * 1.1;
    let limit = 1.5 * delta;

    let (a, b) = violation_mass(&release(&d, sigma, 1), &release(&d_prime, sigma, 2), 2000, bound);
    // The detector must notice a mechanism with a quarter of the noise.
    let (c, e) = violation_mass(&release(&d, sigma / 4.0, 3), &release(&d_prime, sigma / 4.0, 4), 2000, bound);
    let calibrated = a.max(b);
    let under = c.max(e);
    outcome(
        calibrated <= limit && under > limit,
        format!(
            "σ1={sigma:.4}, violation mass {calibrated:.2e} ≤ {limit:.1e}; with σ1/4 {under:.2e} (detected)"
        ),
    )
}

// 9.
fn trust_boundary() -> Outcome {
    let rounds = 5;
    for mode in [Mode::SiflM1, Mode::SiflM2] {
        let setup = small_setup(mode, rounds, 100.0, 9);
        let n = setup.spec.n_params();
        let n_tilde = setup.server_keys.as_ref().unwrap().n_tilde();
        let p = setup.aggregator_keys.as_ref().unwrap().p();
        let (trace, frames) = tapped_run(&setup);
        let plaintexts: Vec<&DVector<f64>> = trace.records.iter().map(|r| &r.model).collect();
        let leaks = |m: &DMatrix<f64>| {
            plaintexts
                .iter()
                .any(|w| m.column_iter().any(|c| c.len() >= n && (c.rows(0, n) - *w).amax() < 1e-6))
        };

        let at_server: Vec<Message> = frames
            .iter()
            .filter(|t| t.to == Endpoint::Server)
            .map(|t| Message::decode(&t.frame).unwrap())
            .collect();
        let at_agg: Vec<Message> = frames
            .iter()
            .filter(|t| t.to == Endpoint::Aggregator)
            .map(|t| Message::decode(&t.frame).unwrap())
            .collect();
        if at_server.len() != rounds as usize || at_agg.is_empty() {
            return outcome(false, format!("{}: unexpected frame counts", mode.label()));
        }
        for m in &at_server {
            let expected = if mode == Mode::SiflM2 && m.round() + 1 < rounds {
                (n_tilde, p)
            } else {
                (n_tilde, 1)
            };
            if !matches!(m, Message::AggregateToServer { .. }) || m.payload_shape() != expected {
                return outcome(
                    false,
                    format!("{}: server saw {} {:?} in round {}", mode.label(), m.name(), m.payload_shape(), m.round()),
                );
            }
            if mode == Mode::SiflM2 && m.round() + 1 < rounds && leaks(&payload(m)) {
                return outcome(false, format!("sifl_m2: plaintext visible to the server in round {}", m.round()));
            }
        }
        for m in &at_agg {
            if !matches!(m, Message::LocalUpdate { .. }) || m.payload_shape() != (n_tilde, 1) || leaks(&payload(m)) {
                return outcome(false, format!("{}: aggregator saw {} {:?}", mode.label(), m.name(), m.payload_shape()));
            }
        }
    }
    outcome(true, "every server- and aggregator-bound frame over T=5 matches the allowed set")
}

fn fixture(name: &str) -> Vec<u8> {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "fixtures", "wire", &format!("{name}.bin")]
        .iter()
        .collect();
    std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

// 10. Fixtures are written by tests/fixtures/wire/generate.py.
fn golden_fixtures() -> Outcome {
    let vector = |v: &[f64]| DVector::from_column_slice(v);
    let cases = [
        ("broadcast_plain", Message::BroadcastPlain { round: 0, model: vector(&[1.5, -2.0, 0.25]) }),
        (
            "broadcast_encoded",
            Message::BroadcastEncoded { round: 3, model: vector(&[0.1, 1e300, -0.0, 7.0]) },
        ),
        (
            "broadcast_doubly_encoded",
            Message::BroadcastDoublyEncoded {
                round: 5,
                model: DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            },
        ),
        (
            "local_update",
            Message::LocalUpdate { round: 2, client_id: 7, dataset_size: 6000, payload: vector(&[0.5, 0.5]) },
        ),
        (
            "aggregate_vector",
            Message::AggregateToServer { round: 9, payload: DMatrix::from_column_slice(3, 1, &[-1.0, 5e-324, 2.5]) },
        ),
        (
            "aggregate_matrix",
            Message::AggregateToServer {
                round: 9,
                payload: DMatrix::from_row_slice(3, 2, &[1.0, -1.0, 0.5, -0.5, 0.125, 1e-3]),
            },
        ),
        ("done", Message::Done { round: 20, model: vector(&[3.0, 1.0]) }),
    ];
    let mut tags = std::collections::BTreeSet::new();
    for (name, msg) in &cases {
        let golden = fixture(name);
        if msg.encode() != golden {
            return outcome(false, format!("{name}: encoding differs from fixture"));
        }
        match Message::decode(&golden) {
            Ok(back) if back.encode() == golden && back == *msg => {}
            Ok(_) => return outcome(false, format!("{name}: decode does not round-trip")),
            Err(e) => return outcome(false, format!("{name}: {e}")),
        }
        tags.insert(msg.tag());
    }
    outcome(
        tags.len() == 6,
        format!("{} fixtures covering tags {:?} round-trip byte-identically", cases.len(), tags),
    )
}

