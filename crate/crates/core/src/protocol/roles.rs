//! Server, aggregator and client state machines.
//!
//! Each role holds only the key material its trust position allows:
//! the server `Π1, Π1ᴸ, N1`; the aggregator `Π2, Π2ᴿ, N2`; clients the
//! immersion (`Π1, Π1ᴸ`) and `Π2ᴿ`. Clients can therefore decode the
//! broadcast global model themselves.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coding::{
    decode_aggregate, decode_model, decode_model_matrix, encode_aggregate, encode_model, encode_model_matrix,
    AggregatorKeys, EncodedMatrix, EncodedVector, Immersion, ServerKeys,
};
use crate::data::Dataset;
use crate::dp::{sample_gaussian, NoiseKind};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::optim::{plain_local_run, target_local_run_timed, LocalRunConfig, OptimizerKind, OptimizerState};
use crate::seed::{derive_rng, Stream};
use crate::ModelVector;

use super::wire::Message;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    Plain,
    SiflM1,
    SiflM2,
    /// Plain FL where each client clips its model (when a threshold is set)
    /// and adds Gaussian noise with standard deviation `sigma` before upload.
    NoisyBaseline { sigma: f64 },
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Plain => "plain",
            Mode::SiflM1 => "sifl_m1",
            Mode::SiflM2 => "sifl_m2",
            Mode::NoisyBaseline { .. } => "noisy_baseline",
        }
    }

    pub fn is_sifl(&self) -> bool {
        matches!(self, Mode::SiflM1 | Mode::SiflM2)
    }
}

/// Kernel-noise distribution and levels. A level of `0` disables that
/// party's noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            kind: NoiseKind::Gaussian,
            sigma1: 100.0,
            sigma2: 100.0,
        }
    }
}

fn draw(kind: NoiseKind, rows: usize, cols: usize, sigma: f64, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    if sigma == 0.0 {
        Ok(DMatrix::zeros(rows, cols))
    } else {
        kind.sample(rows, cols, sigma, rng)
    }
}

fn order_error(role: &str, expected: impl std::fmt::Display, got: &Message) -> Error {
    Error::ProtocolOrder(format!(
        "{role} expected {expected}, got {} for round {}",
        got.name(),
        got.round()
    ))
}

/// Draws the initial model uniformly from `[−0.05, 0.05]`.
pub fn initial_model(spec: &ModelSpec, seed: u64) -> ModelVector {
    let mut rng = derive_rng(seed, Stream::ModelInit, 0, 0);
    DVector::from_fn(spec.n_params(), |_, _| rng.random_range(-0.05..=0.05))
}

pub struct ServerRole {
    mode: Mode,
    keys: Option<ServerKeys>,
    /// Number of aggregator columns `p`, needed to shape `R1` in SIFL-M2.
    p: usize,
    rounds: u32,
    round: u32,
    noise: NoiseConfig,
    seed: u64,
    last_projected: Option<DMatrix<f64>>,
    last_plain: Option<ModelVector>,
    coding_time: Duration,
}

impl ServerRole {
    /// Creates the server and its first broadcast.
    pub fn init(
        mode: Mode,
        spec: &ModelSpec,
        keys: Option<ServerKeys>,
        p: usize,
        rounds: u32,
        noise: NoiseConfig,
        seed: u64,
    ) -> Result<(ServerRole, Message)> {
        let w0 = initial_model(spec, seed);
        if mode.is_sifl() {
            let k = keys
                .as_ref()
                .ok_or_else(|| Error::KeyMismatch(format!("{} needs server keys", mode.label())))?;
            if k.n() != w0.len() {
                return Err(Error::KeyMismatch(format!(
                    "keys lift n = {}, model has {} parameters",
                    k.n(),
                    w0.len()
                )));
            }
            if mode == Mode::SiflM2 && p < 2 {
                return Err(Error::KeyMismatch(format!("aggregator width p = {p} must be at least 2")));
            }
        }
        let mut role = ServerRole {
            mode,
            keys: if mode.is_sifl() { keys } else { None },
            p,
            rounds,
            round: 0,
            noise,
            seed,
            last_projected: None,
            last_plain: Some(w0.clone()),
            coding_time: Duration::ZERO,
        };
        let msg = match mode {
            Mode::Plain | Mode::NoisyBaseline { .. } => Message::BroadcastPlain { round: 0, model: w0 },
            Mode::SiflM1 | Mode::SiflM2 => Message::BroadcastEncoded {
                round: 0,
                model: role.lift_with_noise(&w0, 0)?.into_inner(),
            },
        };
        Ok((role, msg))
    }

    fn keys(&self) -> &ServerKeys {
        self.keys.as_ref().expect("SIFL modes hold keys")
    }

    fn lift_with_noise(&mut self, w: &ModelVector, round: u32) -> Result<EncodedVector> {
        let t0 = Instant::now();
        let keys = self.keys();
        let mut rng = derive_rng(self.seed, Stream::ServerNoise, 0, round as u64);
        let r1 = draw(self.noise.kind, keys.kernel_dim(), 1, self.noise.sigma1, &mut rng)?;
        let out = encode_model(keys, w, &r1.column(0).into_owned())?;
        self.coding_time += t0.elapsed();
        Ok(out)
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    /// Plaintext global model, in modes where the server legitimately has it.
    pub fn last_plain(&self) -> Option<&ModelVector> {
        self.last_plain.as_ref()
    }

    /// `W̄ = Π1ᴸ·W'` from the most recent SIFL-M2 round: `w·Π2 + Π1ᴸ·B2`.
    pub fn last_projected(&self) -> Option<&DMatrix<f64>> {
        self.last_projected.as_ref()
    }

    /// Cumulative time spent in encode/decode.
    pub fn coding_time(&self) -> Duration {
        self.coding_time
    }

    /// Consumes the aggregate of round `t` and returns the broadcast for
    /// `t + 1`, or `Done` after the last round.
    pub fn handle(&mut self, msg: &Message) -> Result<Message> {
        let Message::AggregateToServer { round, payload } = msg else {
            return Err(order_error("server", "AggregateToServer", msg));
        };
        if *round != self.round || self.round >= self.rounds {
            return Err(order_error("server", format!("round {}", self.round), msg));
        }
        let next = self.round + 1;
        let last = next == self.rounds;
        let out = match self.mode {
            Mode::Plain | Mode::NoisyBaseline { .. } => {
                let w = single_column(payload)?;
                self.last_plain = Some(w.clone());
                if last {
                    Message::Done { round: next, model: w }
                } else {
                    Message::BroadcastPlain { round: next, model: w }
                }
            }
            Mode::SiflM1 => {
                let t0 = Instant::now();
                let w = decode_model(self.keys().immersion(), &EncodedVector::new(single_column(payload)?))?;
                self.coding_time += t0.elapsed();
                self.last_plain = Some(w.clone());
                if last {
                    Message::Done { round: next, model: w }
                } else {
                    Message::BroadcastEncoded {
                        round: next,
                        model: self.lift_with_noise(&w, next)?.into_inner(),
                    }
                }
            }
            Mode::SiflM2 => {
                if last {
                    // The aggregator skips its widening on the final round.
                    let t0 = Instant::now();
                    let w = decode_model(self.keys().immersion(), &EncodedVector::new(single_column(payload)?))?;
                    self.coding_time += t0.elapsed();
                    self.last_plain = Some(w.clone());
                    Message::Done { round: next, model: w }
                } else {
                    if payload.ncols() != self.p {
                        return Err(Error::dim("widened aggregate columns", self.p, payload.ncols()));
                    }
                    let t0 = Instant::now();
                    let keys = self.keys.as_ref().expect("SIFL modes hold keys");
                    let projected = decode_model_matrix(keys.immersion(), &EncodedMatrix::new(payload.clone()))?;
                    let mut rng = derive_rng(self.seed, Stream::ServerNoise, 0, next as u64);
                    let r1 = draw(self.noise.kind, keys.kernel_dim(), self.p, self.noise.sigma1, &mut rng)?;
                    let out = encode_model_matrix(keys, &projected, &r1)?;
                    self.coding_time += t0.elapsed();
                    self.last_projected = Some(projected);
                    self.last_plain = None;
                    Message::BroadcastDoublyEncoded {
                        round: next,
                        model: out.into_inner(),
                    }
                }
            }
        };
        self.round = next;
        Ok(out)
    }
}

fn single_column(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    if m.ncols() != 1 {
        return Err(Error::dim("aggregate columns", 1, m.ncols()));
    }
    Ok(m.column(0).into_owned())
}

pub struct AggregatorRole {
    mode: Mode,
    keys: Option<AggregatorKeys>,
    clients: u32,
    rounds: u32,
    round: u32,
    noise: NoiseConfig,
    seed: u64,
}

impl AggregatorRole {
    pub fn new(
        mode: Mode,
        keys: Option<AggregatorKeys>,
        clients: u32,
        rounds: u32,
        noise: NoiseConfig,
        seed: u64,
    ) -> Result<Self> {
        if mode == Mode::SiflM2 && keys.is_none() {
            return Err(Error::KeyMismatch("SIFL-M2 needs aggregator keys".into()));
        }
        Ok(AggregatorRole {
            mode,
            keys: if mode == Mode::SiflM2 { keys } else { None },
            clients,
            rounds,
            round: 0,
            noise,
            seed,
        })
    }

    /// Weighted average `Σ (|Dᵢ|/|D|)·xᵢ` of one update per client (in
    /// client-id order), widened by `Π2` with fresh `R2·N2` in SIFL-M2
    /// except on the final round.
    pub fn handle(&mut self, updates: &[Message]) -> Result<Message> {
        let mut by_id: BTreeMap<u32, (u64, &DVector<f64>)> = BTreeMap::new();
        for u in updates {
            let Message::LocalUpdate {
                round,
                client_id,
                dataset_size,
                payload,
            } = u
            else {
                return Err(order_error("aggregator", "LocalUpdate", u));
            };
            if *round != self.round {
                return Err(order_error("aggregator", format!("round {}", self.round), u));
            }
            if *client_id >= self.clients {
                return Err(Error::ProtocolOrder(format!("unregistered client {client_id}")));
            }
            if by_id.insert(*client_id, (*dataset_size, payload)).is_some() {
                return Err(Error::DuplicateClient(*client_id));
            }
        }
        if let Some(missing) = (0..self.clients).find(|i| !by_id.contains_key(i)) {
            return Err(Error::MissingClient(missing));
        }
        let len = by_id[&0].1.len();
        let total: u64 = by_id.values().map(|(s, _)| s).sum();
        if total == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut avg = DVector::zeros(len);
        for (id, (size, x)) in &by_id {
            if x.len() != len {
                return Err(Error::dim("local update length", len, format!("{} from client {id}", x.len())));
            }
            avg.axpy(*size as f64 / total as f64, x, 1.0);
        }

        let last = self.round + 1 == self.rounds;
        let payload = match (&self.mode, &self.keys) {
            (Mode::SiflM2, Some(keys)) if !last => {
                let mut rng = derive_rng(self.seed, Stream::AggregatorNoise, 0, self.round as u64);
                let r2 = draw(self.noise.kind, len, keys.p() - 1, self.noise.sigma2, &mut rng)?;
                encode_aggregate(keys, &EncodedVector::new(avg), &r2)?.into_inner()
            }
            _ => DMatrix::from_column_slice(len, 1, avg.as_slice()),
        };
        let msg = Message::AggregateToServer {
            round: self.round,
            payload,
        };
        self.round += 1;
        Ok(msg)
    }
}

/// What a client did in one round.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClientTiming {
    pub compute: Duration,
    pub coding: Duration,
}

pub struct ClientRole {
    id: u32,
    mode: Mode,
    spec: ModelSpec,
    data: Arc<Dataset>,
    state: OptimizerState,
    local: LocalRunConfig,
    immersion: Option<Arc<Immersion>>,
    pi2_right: Option<DVector<f64>>,
    round: u32,
    seed: u64,
    finished: Option<ModelVector>,
}

impl ClientRole {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: u32,
        mode: Mode,
        spec: ModelSpec,
        data: Arc<Dataset>,
        optimizer: OptimizerKind,
        local: LocalRunConfig,
        immersion: Option<Arc<Immersion>>,
        pi2_right: Option<DVector<f64>>,
        seed: u64,
    ) -> Result<Self> {
        local.validate()?;
        if mode.is_sifl() && immersion.is_none() {
            return Err(Error::KeyMismatch(format!("{} clients need the immersion", mode.label())));
        }
        if mode == Mode::SiflM2 && pi2_right.is_none() {
            return Err(Error::KeyMismatch("SIFL-M2 clients need Π2ᴿ".into()));
        }
        let n = spec.n_params();
        Ok(ClientRole {
            id,
            mode,
            state: OptimizerState::new(optimizer, n)?,
            spec,
            data,
            local,
            immersion: if mode.is_sifl() { immersion } else { None },
            pi2_right: if mode == Mode::SiflM2 { pi2_right } else { None },
            round: 0,
            seed,
            finished: None,
        })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn final_model(&self) -> Option<&ModelVector> {
        self.finished.as_ref()
    }

    /// Runs the local iterations for a broadcast and returns the upload;
    /// `Done` returns `None`.
    pub fn handle(&mut self, msg: &Message) -> Result<Option<(Message, ClientTiming)>> {
        if msg.round() != self.round {
            return Err(order_error(&format!("client {}", self.id), format!("round {}", self.round), msg));
        }
        if let Message::Done { model, .. } = msg {
            self.finished = Some(model.clone());
            return Ok(None);
        }
        let mut rng = derive_rng(self.seed, Stream::ClientBatches, self.id as u64, self.round as u64);
        let mut timing = ClientTiming::default();
        let payload = match (self.mode, msg) {
            (Mode::Plain, Message::BroadcastPlain { model, .. }) => {
                let t0 = Instant::now();
                let w = plain_local_run(&self.spec, &mut self.state, model, &self.data, &self.local, &mut rng)?;
                timing.compute = t0.elapsed();
                w
            }
            (Mode::NoisyBaseline { sigma }, Message::BroadcastPlain { model, .. }) => {
                let t0 = Instant::now();
                let w = plain_local_run(&self.spec, &mut self.state, model, &self.data, &self.local, &mut rng)?;
                let mut noise_rng = derive_rng(self.seed, Stream::ClientDpNoise, self.id as u64, self.round as u64);
                let noise = sample_gaussian(w.len(), 1, sigma, &mut noise_rng)?;
                timing.compute = t0.elapsed();
                w + noise.column(0)
            }
            (Mode::SiflM1, Message::BroadcastEncoded { model, .. })
            | (Mode::SiflM2, Message::BroadcastEncoded { model, .. }) => {
                if self.mode == Mode::SiflM2 && self.round != 0 {
                    return Err(order_error("SIFL-M2 client", "BroadcastDoublyEncoded after round 0", msg));
                }
                self.immersed_run(&EncodedVector::new(model.clone()), &mut rng, &mut timing)?
            }
            (Mode::SiflM2, Message::BroadcastDoublyEncoded { model, .. }) => {
                if self.round == 0 {
                    return Err(order_error("SIFL-M2 client", "BroadcastEncoded at round 0", msg));
                }
                let t0 = Instant::now();
                let pi2_right = self.pi2_right.as_ref().expect("checked at construction");
                let w = decode_aggregate(pi2_right, &EncodedMatrix::new(model.clone()))?;
                timing.coding += t0.elapsed();
                self.immersed_run(&w, &mut rng, &mut timing)?
            }
            _ => return Err(order_error(&format!("{} client", self.mode.label()), "a broadcast for this mode", msg)),
        };
        let update = Message::LocalUpdate {
            round: self.round,
            client_id: self.id,
            dataset_size: self.data.len() as u64,
            payload,
        };
        self.round += 1;
        Ok(Some((update, timing)))
    }

    fn immersed_run(
        &mut self,
        w: &EncodedVector,
        rng: &mut impl Rng,
        timing: &mut ClientTiming,
    ) -> Result<DVector<f64>> {
        let immersion = self.immersion.as_ref().expect("checked at construction");
        let (out, t) = target_local_run_timed(immersion, &self.spec, &mut self.state, w, &self.data, &self.local, rng)?;
        timing.compute += t.compute;
        timing.coding += t.coding;
        Ok(out.into_inner())
    }
}
