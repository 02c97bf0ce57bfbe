//! The immersed optimizer stays on the manifold: K Adam steps on the lifted
//! model equal the lift of K Adam steps on the plain model.

use nalgebra::DVector;
use sifl::coding::{encode_model, gen_server_keys, KeyGenConfig};
use sifl::data::{synth_dataset, SynthKind};
use sifl::model::ModelSpec;
use sifl::optim::{plain_local_run, target_local_run, LocalRunConfig, OptimizerKind, OptimizerState};
use sifl::seed::rng_from_seed;

fn main() -> sifl::Result<()> {
    let spec = ModelSpec::Logistic { inputs: 6, classes: 3 };
    let data = synth_dataset(&SynthKind::Blobs { classes: 3, separation: 2.5 }, 300, 6, 4)?;
    let n = spec.n_params();
    let server = gen_server_keys(&KeyGenConfig::new(n, n + 6, 2, 3))?;
    let cfg = LocalRunConfig {
        local_steps: 25,
        batch_size: Some(32),
        clip: None,
    };
    let opt = OptimizerKind::adam_default();

    let w0 = DVector::from_element(n, 0.01);
    let r = DVector::from_fn(6, |i, _| 50.0 * (i as f64 - 2.5));
    let lifted = encode_model(&server, &w0, &r)?;

    let mut plain_state = OptimizerState::new(opt, n)?;
    let w = plain_local_run(&spec, &mut plain_state, &w0, &data, &cfg, &mut rng_from_seed(1))?;
    let mut target_state = OptimizerState::new(opt, n)?;
    let wt = target_local_run(server.immersion(), &spec, &mut target_state, &lifted, &data, &cfg, &mut rng_from_seed(1))?;

    let expected = server.immersion().lift(&w)? + server.kernel_apply(&r)?;
    println!("loss before {:.4}, after {:.4}", spec.loss(w0.as_slice(), &data)?, spec.loss(w.as_slice(), &data)?);
    println!("accuracy after {:.3}", spec.accuracy(w.as_slice(), &data)?);
    println!("‖f̃(Π1w+N1r) − (Π1f(w)+N1r)‖∞ = {:.2e}", (wt.values() - expected).amax());
    Ok(())
}
