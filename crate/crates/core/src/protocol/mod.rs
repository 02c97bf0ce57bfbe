//! Federated rounds: roles, wire format, transports and the driver.
//!
//! Round `t` of every mode is: broadcast → `N_c` local updates → one
//! aggregate → server output. All traffic crosses a [`Transport`] as
//! encoded frames, including in-process runs.
//!
//! The trace is recorded by an observer that holds every key and decodes
//! each server output; no role ever reports the plaintext model in the
//! SIFL-M2 mode.

pub mod roles;
pub mod transport;
pub mod wire;

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::coding::{decode_aggregate, decode_model, AggregatorKeys, EncodedMatrix, EncodedVector, ServerKeys};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::optim::{LocalRunConfig, OptimizerKind};
use crate::ModelVector;

pub use roles::{initial_model, AggregatorRole, ClientRole, ClientTiming, Mode, NoiseConfig, ServerRole};
pub use transport::{Endpoint, InProcess, Tap, Tapped, Tcp, Transport};
pub use wire::Message;

/// Everything one training run needs.
#[derive(Clone)]
pub struct TrainingSetup {
    pub mode: Mode,
    pub spec: ModelSpec,
    /// One local dataset per client.
    pub clients: Vec<Arc<Dataset>>,
    /// Held-out data for accuracy; the union of client data when absent.
    pub eval: Option<Arc<Dataset>>,
    pub rounds: u32,
    pub local: LocalRunConfig,
    pub optimizer: OptimizerKind,
    pub server_keys: Option<ServerKeys>,
    pub aggregator_keys: Option<AggregatorKeys>,
    pub noise: NoiseConfig,
    pub seed: u64,
}

/// Wall-clock per phase, summed over the parties involved, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub local: f64,
    pub client_coding: f64,
    pub aggregate: f64,
    pub server_coding: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// Global iteration; record `t` holds the model entering round `t`.
    pub round: u32,
    pub model: ModelVector,
    pub train_loss: f64,
    pub accuracy: f64,
    /// Timings of the round that produced this model (zero for `t = 0`).
    pub timing: PhaseTimings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub mode: Mode,
    pub n: usize,
    pub n_tilde: Option<usize>,
    pub records: Vec<RoundRecord>,
}

impl TrainingTrace {
    pub fn final_model(&self) -> &ModelVector {
        &self.records.last().expect("trace holds the initial model").model
    }
}

/// Decodes a server output with full key knowledge.
pub fn observe(msg: &Message, server: Option<&ServerKeys>, agg: Option<&AggregatorKeys>) -> Result<ModelVector> {
    let need_server = || server.ok_or_else(|| Error::KeyMismatch("observer needs server keys".into()));
    match msg {
        Message::BroadcastPlain { model, .. } | Message::Done { model, .. } => Ok(model.clone()),
        Message::BroadcastEncoded { model, .. } => {
            decode_model(need_server()?.immersion(), &EncodedVector::new(model.clone()))
        }
        Message::BroadcastDoublyEncoded { model, .. } => {
            let agg = agg.ok_or_else(|| Error::KeyMismatch("observer needs aggregator keys".into()))?;
            let lifted = decode_aggregate(agg.pi2_right(), &EncodedMatrix::new(model.clone()))?;
            decode_model(need_server()?.immersion(), &lifted)
        }
        other => Err(Error::ProtocolOrder(format!("{} is not a server output", other.name()))),
    }
}

fn evaluate(setup: &TrainingSetup, w: &ModelVector) -> Result<(f64, f64)> {
    let total: usize = setup.clients.iter().map(|d| d.len()).sum();
    let mut loss = 0.0;
    for d in &setup.clients {
        loss += setup.spec.loss(w.as_slice(), d)? * d.len() as f64;
    }
    let accuracy = match &setup.eval {
        Some(eval) => setup.spec.accuracy(w.as_slice(), eval)?,
        None => {
            let mut acc = 0.0;
            for d in &setup.clients {
                acc += setup.spec.accuracy(w.as_slice(), d)? * d.len() as f64;
            }
            acc / total as f64
        }
    };
    Ok((loss / total as f64, accuracy))
}

/// In-process run.
pub fn run_training_in_process(setup: &TrainingSetup) -> Result<TrainingTrace> {
    let transport = InProcess::new(setup.clients.len() as u32);
    run_training(setup, &transport)
}

/// Drives `setup.rounds` rounds over `transport`.
pub fn run_training(setup: &TrainingSetup, transport: &dyn Transport) -> Result<TrainingTrace> {
    let clients = u32::try_from(setup.clients.len())
        .ok()
        .filter(|&c| c > 0)
        .ok_or_else(|| Error::InvalidArgs("need at least one client".into()))?;
    setup.spec.validate()?;
    let p = setup.aggregator_keys.as_ref().map_or(0, |k| k.p());

    let (mut server, first) = ServerRole::init(
        setup.mode,
        &setup.spec,
        setup.server_keys.clone(),
        p,
        setup.rounds,
        setup.noise,
        setup.seed,
    )?;
    let mut aggregator = AggregatorRole::new(
        setup.mode,
        setup.aggregator_keys.clone(),
        clients,
        setup.rounds,
        setup.noise,
        setup.seed,
    )?;
    let immersion = setup.server_keys.as_ref().map(|k| Arc::clone(k.immersion()));
    let pi2_right = setup.aggregator_keys.as_ref().map(|k| k.pi2_right().clone());
    let mut roles = setup
        .clients
        .iter()
        .enumerate()
        .map(|(i, data)| {
            ClientRole::new(
                i as u32,
                setup.mode,
                setup.spec.clone(),
                Arc::clone(data),
                setup.optimizer,
                setup.local,
                immersion.clone(),
                pi2_right.clone(),
                setup.seed,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let observe_keys = |msg: &Message| observe(msg, setup.server_keys.as_ref(), setup.aggregator_keys.as_ref());
    let mut records = Vec::with_capacity(setup.rounds as usize + 1);
    let w0 = observe_keys(&first)?;
    let (loss, accuracy) = evaluate(setup, &w0)?;
    records.push(RoundRecord {
        round: 0,
        model: w0,
        train_loss: loss,
        accuracy,
        timing: PhaseTimings::default(),
    });
    transport.send(Endpoint::Server, Endpoint::AllClients, first.encode())?;

    for t in 0..setup.rounds {
        // Clients: independent local runs.
        let outcomes: Vec<Result<ClientTiming>> = std::thread::scope(|scope| {
            let handles: Vec<_> = roles
                .iter_mut()
                .map(|role| {
                    scope.spawn(move || -> Result<ClientTiming> {
                        let me = Endpoint::Client(role.id());
                        let msg = Message::decode(&transport.recv(me)?)?;
                        let (update, timing) = role
                            .handle(&msg)?
                            .ok_or_else(|| Error::ProtocolOrder(format!("{me} got Done mid-training")))?;
                        transport.send(me, Endpoint::Aggregator, update.encode())?;
                        Ok(timing)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Transport("client thread panicked".into()))))
                .collect()
        });
        let mut timing = PhaseTimings::default();
        for o in outcomes {
            let o = o?;
            timing.local += o.compute.as_secs_f64();
            timing.client_coding += o.coding.as_secs_f64();
        }

        let updates = (0..clients)
            .map(|_| Message::decode(&transport.recv(Endpoint::Aggregator)?))
            .collect::<Result<Vec<_>>>()?;
        let t0 = Instant::now();
        let aggregate = aggregator.handle(&updates)?;
        timing.aggregate = t0.elapsed().as_secs_f64();
        transport.send(Endpoint::Aggregator, Endpoint::Server, aggregate.encode())?;

        let before = server.coding_time();
        let msg = Message::decode(&transport.recv(Endpoint::Server)?)?;
        let output = server.handle(&msg)?;
        timing.server_coding = (server.coding_time().saturating_sub(before)).as_secs_f64();
        transport.send(Endpoint::Server, Endpoint::AllClients, output.encode())?;

        let w = observe_keys(&output)?;
        let (loss, accuracy) = evaluate(setup, &w)?;
        records.push(RoundRecord {
            round: t + 1,
            model: w,
            train_loss: loss,
            accuracy,
            timing,
        });
    }

    if setup.rounds > 0 {
        // Deliver Done to every client.
        for role in roles.iter_mut() {
            let msg = Message::decode(&transport.recv(Endpoint::Client(role.id()))?)?;
            role.handle(&msg)?;
        }
    } else {
        // Nothing to train; drain the initial broadcast.
        for i in 0..clients {
            transport.recv(Endpoint::Client(i))?;
        }
    }

    Ok(TrainingTrace {
        mode: setup.mode,
        n: setup.spec.n_params(),
        n_tilde: setup
            .server_keys
            .as_ref()
            .filter(|_| setup.mode.is_sifl())
            .map(|k| k.n_tilde()),
        records,
    })
}

/// Max-abs gap between two parameter vectors.
pub fn max_abs_gap(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}

