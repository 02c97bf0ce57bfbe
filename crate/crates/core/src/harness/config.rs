//! One TOML file describes one experiment.
//!
//! ```toml
//! seed = 7
//!
//! [[modes]]
//! kind = "plain"
//! [[modes]]
//! kind = "sifl_m1"
//!
//! [model]
//! kind = "logistic"
//! inputs = 10
//! classes = 2
//!
//! [data]
//! kind = "synthetic"
//! samples = 2000
//! dim = 10
//! test = 500
//! [data.task]
//! kind = "blobs"
//! classes = 2
//! separation = 3.0
//!
//! [training]
//! clients = 10
//! rounds = 20
//! local_steps = 2
//! batch_size = 32
//!
//! [optimizer]
//! kind = "sgd"
//! lr = 0.01
//!
//! [keys]
//! extra = 8
//! p = 3
//!
//! [privacy]
//! noise = "gaussian"
//! sigma1 = 100.0
//! sigma2 = 100.0
//! clip = 1000.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coding::{
    gen_aggregator_keys, gen_server_keys, read_key_file, AggregatorKeys, KeyGenConfig, KeyLayout, ServerKeys,
};
use crate::data::{load_csv, synth_dataset, CsvSchema, Dataset, SynthKind};
use crate::dp::{GlobalVariant, NoiseKind};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::optim::{LocalRunConfig, OptimizerKind};
use crate::protocol::Mode;
use crate::seed::{derive_seed, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Synthetic {
        samples: usize,
        dim: usize,
        task: SynthKind,
        /// Held-out rows; `0` evaluates on the training data.
        #[serde(default)]
        test: usize,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        has_header: bool,
        #[serde(default)]
        label_column: usize,
        /// Optional separate test file; otherwise `test` rows are split off.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_path: Option<PathBuf>,
        #[serde(default)]
        test: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub clients: usize,
    pub rounds: u32,
    pub local_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<f64>,
}

fn default_p() -> usize {
    3
}

fn one() -> f64 {
    1.0
}

fn default_condition() -> f64 {
    1e4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeySection {
    /// Lifted dimension `ñ`; alternatively give `extra = ñ − n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_tilde: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<usize>,
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default = "one")]
    pub pi2_scale: f64,
    #[serde(default = "default_condition")]
    pub max_condition: f64,
    #[serde(default)]
    pub layout: KeyLayout,
    /// Load keys from this file instead of generating them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl Default for KeySection {
    fn default() -> Self {
        KeySection {
            n_tilde: None,
            extra: None,
            p: default_p(),
            scale: 1.0,
            pi2_scale: 1.0,
            max_condition: default_condition(),
            layout: KeyLayout::Auto,
            file: None,
        }
    }
}

fn default_delta() -> f64 {
    1e-5
}

/// Noise distribution and levels. Either give `sigma1`/`sigma2` directly or
/// (Gaussian only) give `eps_local`/`eps_global` and let the levels be
/// solved from the keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacySection {
    #[serde(default)]
    pub noise: NoiseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_local: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_global: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta_local: f64,
    #[serde(default = "default_delta")]
    pub delta_global: f64,
    /// Clipping threshold `C` for the sensitivity.
    #[serde(default = "default_clip")]
    pub clip: f64,
    #[serde(default)]
    pub variant: GlobalVariant,
}

fn default_clip() -> f64 {
    1000.0
}

impl Default for PrivacySection {
    fn default() -> Self {
        PrivacySection {
            noise: NoiseKind::Gaussian,
            sigma1: Some(100.0),
            sigma2: Some(100.0),
            eps_local: None,
            eps_global: None,
            delta_local: default_delta(),
            delta_global: default_delta(),
            clip: default_clip(),
            variant: GlobalVariant::AsPrinted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub modes: Vec<Mode>,
    pub model: ModelSpec,
    pub data: DataSource,
    pub training: TrainingSection,
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub keys: KeySection,
    #[serde(default)]
    pub privacy: PrivacySection,
    /// Directory relative paths are resolved against; set by [`Self::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(config_err)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Cross-field checks that need no I/O.
    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(config_err("at least one mode is required"));
        }
        self.model.validate().map_err(config_err)?;
        self.optimizer.validate().map_err(config_err)?;
        self.local_config().validate().map_err(config_err)?;
        if self.training.clients == 0 {
            return Err(config_err("training.clients must be at least 1"));
        }
        let n = self.model.n_params();
        if let (Some(nt), Some(extra)) = (self.keys.n_tilde, self.keys.extra) {
            if nt != n + extra {
                return Err(config_err(format!("keys.n_tilde = {nt} but n + extra = {}", n + extra)));
            }
        }
        if self.n_tilde() <= n {
            return Err(config_err(format!("keys.n_tilde = {} must exceed n = {n}", self.n_tilde())));
        }
        if self.keys.p < 2 {
            return Err(config_err("keys.p must be at least 2"));
        }
        let dim = match &self.data {
            DataSource::Synthetic { dim, .. } => Some(*dim),
            DataSource::Csv { .. } => None,
        };
        if let Some(d) = dim {
            if d != self.model.inputs() {
                return Err(config_err(format!(
                    "data.dim = {d} but the model takes {} inputs",
                    self.model.inputs()
                )));
            }
        }
        let p = &self.privacy;
        let has_sigma = p.sigma1.is_some() && p.sigma2.is_some();
        let has_eps = p.eps_local.is_some() && p.eps_global.is_some();
        if !has_sigma && !has_eps {
            return Err(config_err("privacy needs sigma1 and sigma2, or eps_local and eps_global"));
        }
        if !has_sigma && p.noise == NoiseKind::Laplace {
            return Err(config_err("Laplace noise levels must be given explicitly"));
        }
        for (name, v) in [("sigma1", p.sigma1), ("sigma2", p.sigma2)] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(config_err(format!("privacy.{name} = {v} must be non-negative")));
                }
            }
        }
        Ok(())
    }

    pub fn n_tilde(&self) -> usize {
        let n = self.model.n_params();
        self.keys
            .n_tilde
            .unwrap_or_else(|| n + self.keys.extra.unwrap_or_else(|| (n / 100).max(8)))
    }

    pub fn local_config(&self) -> LocalRunConfig {
        LocalRunConfig {
            local_steps: self.training.local_steps,
            batch_size: self.training.batch_size,
            clip: self.training.clip,
        }
    }

    pub fn keygen_config(&self) -> KeyGenConfig {
        KeyGenConfig {
            n: self.model.n_params(),
            n_tilde: self.n_tilde(),
            p: self.keys.p,
            scale: self.keys.scale,
            pi2_scale: self.keys.pi2_scale,
            max_condition: self.keys.max_condition,
            seed: derive_seed(self.seed, Stream::Keys, 0, 0),
            layout: self.keys.layout,
        }
    }

    /// Generates keys, or loads and checks them against the model.
    pub fn keys(&self) -> Result<(ServerKeys, AggregatorKeys)> {
        match &self.keys.file {
            Some(file) => {
                let (server, agg) = read_key_file(self.resolve(file))?;
                let n = self.model.n_params();
                if server.n() != n {
                    return Err(config_err(format!(
                        "key file lifts n = {}, model has {n} parameters",
                        server.n()
                    )));
                }
                if self.keys.n_tilde.is_some_and(|nt| nt != server.n_tilde())
                    || self.keys.extra.is_some_and(|e| n + e != server.n_tilde())
                {
                    return Err(config_err(format!(
                        "key file has ñ = {}, configuration asks for {}",
                        server.n_tilde(),
                        self.n_tilde()
                    )));
                }
                Ok((server, agg))
            }
            None => {
                let cfg = self.keygen_config();
                Ok((gen_server_keys(&cfg)?, gen_aggregator_keys(&cfg)?))
            }
        }
    }

    /// Training and (optional) held-out data.
    pub fn datasets(&self) -> Result<(Dataset, Option<Dataset>)> {
        let data_seed = derive_seed(self.seed, Stream::Data, 0, 0);
        let (full, test, external_test) = match &self.data {
            DataSource::Synthetic { samples, dim, task, test } => {
                (synth_dataset(task, samples + test, *dim, data_seed)?, *test, None)
            }
            DataSource::Csv {
                path,
                has_header,
                label_column,
                test_path,
                test,
            } => {
                let schema = CsvSchema {
                    has_header: *has_header,
                    label_column: *label_column,
                };
                let ext = test_path
                    .as_ref()
                    .map(|p| load_csv(self.resolve(p), schema))
                    .transpose()?;
                (load_csv(self.resolve(path), schema)?, *test, ext)
            }
        };
        if full.dim() != self.model.inputs() {
            return Err(config_err(format!(
                "data has {} features, the model takes {}",
                full.dim(),
                self.model.inputs()
            )));
        }
        if let Some(t) = external_test {
            return Ok((full, Some(t)));
        }
        if test == 0 {
            return Ok((full, None));
        }
        let (train, test) = full.train_test_split(test, data_seed)?;
        Ok((train, Some(test)))
    }
}
