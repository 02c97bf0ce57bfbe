//! Gradient steps and local training runs, plaintext and immersed.
//!
//! A step function returns the vector `g` such that the plaintext update is
//! `w ← w − g`. The immersed run applies the same `g`, computed at the
//! decoded point, through the lift: `w̃ ← w̃ − Π1·g(Π1ᴸ·w̃)`. Optimizer state
//! always lives in plaintext coordinates, which is what keeps stateful
//! optimizers on the immersion manifold.

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coding::{EncodedVector, Immersion};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::ModelVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd { lr: f64 },
    Momentum { lr: f64, beta: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn validate(&self) -> Result<()> {
        let beta_ok = |b: f64| (0.0..1.0).contains(&b);
        let ok = match *self {
            OptimizerKind::Sgd { lr } => lr > 0.0,
            OptimizerKind::Momentum { lr, beta } => lr > 0.0 && beta_ok(beta),
            OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                lr > 0.0 && beta_ok(beta1) && beta_ok(beta2) && eps > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgs(format!("invalid optimizer {self:?}")))
        }
    }

    /// The learning rates used in the experiments: 0.01, 0.01 (β = 0.9) and
    /// 0.001 (standard Adam constants).
    pub fn sgd_default() -> Self {
        OptimizerKind::Sgd { lr: 0.01 }
    }

    pub fn momentum_default() -> Self {
        OptimizerKind::Momentum { lr: 0.01, beta: 0.9 }
    }

    pub fn adam_default() -> Self {
        OptimizerKind::Adam {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-client optimizer internals, in plaintext coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    /// Momentum velocity, or Adam's first moment.
    first: DVector<f64>,
    /// Adam's second moment (empty otherwise).
    second: DVector<f64>,
    steps: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, n: usize) -> Result<Self> {
        kind.validate()?;
        let (first, second) = match kind {
            OptimizerKind::Sgd { .. } => (0, 0),
            OptimizerKind::Momentum { .. } => (n, 0),
            OptimizerKind::Adam { .. } => (n, n),
        };
        Ok(OptimizerState {
            kind,
            first: DVector::zeros(first),
            second: DVector::zeros(second),
            steps: 0,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step_count(&self) -> u64 {
        self.steps
    }

    /// Consumes one gradient and returns the step `g`.
    pub fn step(&mut self, grad: &DVector<f64>) -> Result<DVector<f64>> {
        let n = match self.kind {
            OptimizerKind::Sgd { .. } => grad.len(),
            _ => self.first.len(),
        };
        if grad.len() != n {
            return Err(Error::dim("gradient", n, grad.len()));
        }
        self.steps += 1;
        Ok(match self.kind {
            OptimizerKind::Sgd { lr } => grad * lr,
            OptimizerKind::Momentum { lr, beta } => {
                self.first = &self.first * beta + grad;
                &self.first * lr
            }
            OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                self.first = &self.first * beta1 + grad * (1.0 - beta1);
                self.second = &self.second * beta2 + grad.component_mul(grad) * (1.0 - beta2);
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                DVector::from_fn(n, |i, _| {
                    lr * (self.first[i] / c1) / ((self.second[i] / c2).sqrt() + eps)
                })
            }
        })
    }
}

/// `K` local iterations, minibatch size (full batch when `None`) and an
/// optional clipping threshold `C` on the final local model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalRunConfig {
    pub local_steps: usize,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub clip: Option<f64>,
}

impl LocalRunConfig {
    pub fn new(local_steps: usize) -> Self {
        LocalRunConfig {
            local_steps,
            batch_size: None,
            clip: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.local_steps == 0 {
            return Err(Error::InvalidArgs("local_steps must be at least 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidArgs("batch_size must be at least 1".into()));
        }
        if let Some(c) = self.clip {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::InvalidArgs(format!("clip threshold {c} must be positive")));
            }
        }
        Ok(())
    }
}

/// Epoch-based sampling without replacement. A new epoch (fresh shuffle)
/// starts when fewer than `batch` unseen rows remain.
pub struct MinibatchSampler {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
}

impl MinibatchSampler {
    pub fn new(m: usize, batch: Option<usize>) -> Result<Self> {
        if m == 0 {
            return Err(Error::EmptyDataset);
        }
        let batch = batch.unwrap_or(m).min(m);
        Ok(MinibatchSampler {
            order: (0..m).collect(),
            pos: m,
            batch,
        })
    }

    pub fn next_batch(&mut self, rng: &mut impl Rng) -> &[usize] {
        if self.batch == self.order.len() {
            // Full batch: order is irrelevant to the mean, skip the shuffle.
            return &self.order;
        }
        if self.pos + self.batch > self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        let start = self.pos;
        self.pos += self.batch;
        &self.order[start..self.pos]
    }
}

/// Projects `w` onto the ℓ2 ball of radius `c`.
pub fn clip_norm(w: &ModelVector, c: f64) -> ModelVector {
    let norm = w.norm();
    if norm > c {
        w * (c / norm)
    } else {
        w.clone()
    }
}

/// `K` plaintext iterations `w ← w − g(w, batch)` from `w0`.
pub fn plain_local_run(
    spec: &ModelSpec,
    state: &mut OptimizerState,
    w0: &ModelVector,
    data: &Dataset,
    cfg: &LocalRunConfig,
    rng: &mut impl Rng,
) -> Result<ModelVector> {
    cfg.validate()?;
    let mut sampler = MinibatchSampler::new(data.len(), cfg.batch_size)?;
    let mut w = w0.clone();
    for _ in 0..cfg.local_steps {
        let batch = sampler.next_batch(rng);
        let (_, grad) = spec.loss_and_grad(w.as_slice(), data, batch)?;
        w -= state.step(&grad)?;
    }
    Ok(match cfg.clip {
        Some(c) => clip_norm(&w, c),
        None => w,
    })
}

/// Wall-clock split of an immersed local run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LocalTiming {
    /// Gradient and optimizer arithmetic.
    pub compute: Duration,
    /// `Π1ᴸ` projections and `Π1` lifts.
    pub coding: Duration,
}

/// `K` immersed iterations `w̃ ← w̃ − Π1·g(Π1ᴸ·w̃, batch)` from `w̃0`.
///
/// Clipping, when enabled, is applied to the decoded model and pushed back
/// through the lift (`w̃ += Π1·(clip(u) − u)`), so the kernel component of
/// `w̃0` is carried through untouched.
pub fn target_local_run(
    immersion: &Immersion,
    spec: &ModelSpec,
    state: &mut OptimizerState,
    w0: &EncodedVector,
    data: &Dataset,
    cfg: &LocalRunConfig,
    rng: &mut impl Rng,
) -> Result<EncodedVector> {
    target_local_run_timed(immersion, spec, state, w0, data, cfg, rng).map(|(w, _)| w)
}

pub fn target_local_run_timed(
    immersion: &Immersion,
    spec: &ModelSpec,
    state: &mut OptimizerState,
    w0: &EncodedVector,
    data: &Dataset,
    cfg: &LocalRunConfig,
    rng: &mut impl Rng,
) -> Result<(EncodedVector, LocalTiming)> {
    cfg.validate()?;
    if w0.len() != immersion.n_tilde() {
        return Err(Error::dim("encoded model", immersion.n_tilde(), w0.len()));
    }
    let mut timing = LocalTiming::default();
    let mut sampler = MinibatchSampler::new(data.len(), cfg.batch_size)?;
    let mut w = w0.values().clone();
    for _ in 0..cfg.local_steps {
        let t0 = Instant::now();
        let u = immersion.project(&w)?;
        let t1 = Instant::now();
        let batch = sampler.next_batch(rng);
        let (_, grad) = spec.loss_and_grad(u.as_slice(), data, batch)?;
        let g = state.step(&grad)?;
        let t2 = Instant::now();
        w -= immersion.lift(&g)?;
        timing.coding += (t1 - t0) + t2.elapsed();
        timing.compute += t2 - t1;
    }
    if let Some(c) = cfg.clip {
        let t0 = Instant::now();
        let u = immersion.project(&w)?;
        let correction = clip_norm(&u, c) - &u;
        if correction.iter().any(|&x| x != 0.0) {
            w += immersion.lift(&correction)?;
        }
        timing.coding += t0.elapsed();
    }
    Ok((EncodedVector::new(w), timing))
}
