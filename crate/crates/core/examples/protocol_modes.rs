//! Plain federated averaging, SIFL-M1 and SIFL-M2 on the same data, keys and
//! seeds. The decoded global models agree round by round.

use std::sync::Arc;

use sifl::coding::{gen_aggregator_keys, gen_server_keys, KeyGenConfig};
use sifl::data::{partition_iid, synth_dataset, SynthKind};
use sifl::model::ModelSpec;
use sifl::optim::{LocalRunConfig, OptimizerKind};
use sifl::protocol::{max_abs_gap, run_training_in_process, Mode, NoiseConfig, TrainingSetup};

fn main() -> sifl::Result<()> {
    let spec = ModelSpec::Logistic { inputs: 10, classes: 2 };
    let all = synth_dataset(&SynthKind::Blobs { classes: 2, separation: 2.0 }, 2500, 10, 1)?;
    let (train, test) = all.train_test_split(500, 1)?;
    let part = partition_iid(train.len(), 10, 2)?;
    let n = spec.n_params();
    let keys = KeyGenConfig::new(n, n + 8, 3, 3);

    let base = TrainingSetup {
        mode: Mode::Plain,
        spec,
        clients: part.split(&train)?.into_iter().map(Arc::new).collect(),
        eval: Some(Arc::new(test)),
        rounds: 20,
        local: LocalRunConfig {
            local_steps: 2,
            batch_size: Some(32),
            clip: None,
        },
        optimizer: OptimizerKind::Sgd { lr: 0.1 },
        server_keys: Some(gen_server_keys(&keys)?),
        aggregator_keys: Some(gen_aggregator_keys(&keys)?),
        noise: NoiseConfig::default(),
        seed: 42,
    };

    let plain = run_training_in_process(&base)?;
    println!("{:>14}  final accuracy {:.4}", "plain", plain.records.last().unwrap().accuracy);
    for mode in [Mode::SiflM1, Mode::SiflM2, Mode::NoisyBaseline { sigma: 0.5 }] {
        let trace = run_training_in_process(&TrainingSetup { mode, ..base.clone() })?;
        let gap = plain
            .records
            .iter()
            .zip(&trace.records)
            .map(|(a, b)| max_abs_gap(&a.model, &b.model))
            .fold(0.0, f64::max);
        println!(
            "{:>14}  final accuracy {:.4}  worst gap to plain {gap:.2e}",
            mode.label(),
            trace.records.last().unwrap().accuracy
        );
    }
    Ok(())
}
