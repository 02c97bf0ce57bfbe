//! SIFL-M2 over loopback TCP, with a tap listing what each role received.

use std::collections::BTreeMap;
use std::sync::Arc;

use sifl::coding::{gen_aggregator_keys, gen_server_keys, KeyGenConfig};
use sifl::data::{partition_iid, synth_dataset, SynthKind};
use sifl::model::ModelSpec;
use sifl::optim::{LocalRunConfig, OptimizerKind};
use sifl::protocol::{run_training, Message, Mode, NoiseConfig, Tap, Tcp, TrainingSetup};

fn main() -> sifl::Result<()> {
    let spec = ModelSpec::Linear { inputs: 5 };
    let data = synth_dataset(&SynthKind::Regression, 400, 5, 7)?;
    let part = partition_iid(data.len(), 4, 7)?;
    let n = spec.n_params();
    let keys = KeyGenConfig::new(n, n + 4, 3, 7);
    let setup = TrainingSetup {
        mode: Mode::SiflM2,
        spec,
        clients: part.split(&data)?.into_iter().map(Arc::new).collect(),
        eval: None,
        rounds: 3,
        local: LocalRunConfig::new(2),
        optimizer: OptimizerKind::momentum_default(),
        server_keys: Some(gen_server_keys(&keys)?),
        aggregator_keys: Some(gen_aggregator_keys(&keys)?),
        noise: NoiseConfig::default(),
        seed: 1,
    };

    let tap = Tap::new(Tcp::new(4)?);
    let trace = run_training(&setup, &tap)?;

    let mut seen: BTreeMap<(String, String, (usize, usize)), usize> = BTreeMap::new();
    for t in tap.frames() {
        let m = Message::decode(&t.frame)?;
        *seen.entry((t.to.to_string(), m.name().to_string(), m.payload_shape())).or_default() += 1;
    }
    for ((to, name, shape), count) in seen {
        println!("{to:<12} {name:<24} {:>2}x{:<2} ×{count}", shape.0, shape.1);
    }
    println!("final training loss {:.5}", trace.records.last().unwrap().train_loss);
    Ok(())
}
