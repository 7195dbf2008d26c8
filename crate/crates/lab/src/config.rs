//! Plain-text `key=value` configuration.
//!
//! Lines are trimmed, `#` starts a comment and a later key overrides an
//! earlier one. Every key has a default, so an empty file is a valid config.
//! [`LabConfig::canonical`] renders the complete resolved config, which is
//! what the caches hash.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};
use smcd_core::arm::{DatasetSpec, InputEncoding};
use smcd_core::baselines::{AdaptStrategy, OracleConfig};
use smcd_core::control::{ControlConfig, Gains};
use smcd_core::filter::{FilterConfig, FlipMode, ResampleScheme};
use smcd_core::interpret::BankConfig;
use smcd_core::net::{MaskScope, Optimizer, TrainConfig};

use crate::error::{LabError, Result};

/// Parses `key=value` lines into an ordered map (later keys win).
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(LabError::Config(format!("line {}: expected key=value, got {raw:?}", n + 1)));
        };
        let k = k.trim();
        if k.is_empty() {
            return Err(LabError::Config(format!("line {}: empty key", n + 1)));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    None,
    Smcd,
    Gradient,
    Oracle,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::None => "none",
            StrategyKind::Smcd => "smcd",
            StrategyKind::Gradient => "gradient",
            StrategyKind::Oracle => "oracle_pf",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "none" | "M+N" => StrategyKind::None,
            "smcd" | "M+S" => StrategyKind::Smcd,
            "gradient" | "M+G" => StrategyKind::Gradient,
            "oracle_pf" | "oracle" | "O+P" => StrategyKind::Oracle,
            other => return Err(LabError::Config(format!("unknown strategy {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabConfig {
    pub seed: u64,
    // data
    pub tasks: usize,
    pub episodes: usize,
    pub steps: usize,
    pub link_mean: f64,
    pub link_std: f64,
    // model and training
    pub hidden: usize,
    pub depth: usize,
    pub dropout_p: f64,
    /// Hidden layer carrying the dropout mask; `None` masks all of them.
    pub mask_layer: Option<usize>,
    pub encoding: InputEncoding,
    pub optimizer: Optimizer,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    // mask filter
    pub particles: usize,
    pub flip_rate: f64,
    pub sigma: f64,
    pub resample_threshold: f64,
    pub resample: ResampleScheme,
    pub flip_mode: FlipMode,
    // baselines
    pub grad_lr: f64,
    pub oracle_particles: usize,
    pub oracle_jitter: f64,
    pub oracle_sigma: f64,
    // look-ahead benchmark
    pub eval_tasks: usize,
    pub burn_in: Vec<usize>,
    pub horizon: Vec<usize>,
    pub strategies: Vec<StrategyKind>,
    // control
    pub control_episodes: usize,
    pub control_horizon: usize,
    pub k1: f64,
    pub k2: f64,
    pub control_dt: f64,
    pub telescoping: bool,
    // interpretability
    pub bank_tasks: usize,
    pub bank_burn_in: usize,
    pub bank_k: Vec<usize>,
    pub bank_crn: bool,
    pub permutations: usize,
}

impl Default for LabConfig {
    fn default() -> Self {
        let filter = FilterConfig::default();
        let oracle = OracleConfig::default();
        let control = ControlConfig::default();
        Self {
            seed: 0,
            tasks: 1000,
            episodes: 20,
            steps: 10,
            link_mean: 1.0,
            link_std: 0.3,
            hidden: 256,
            depth: 3,
            dropout_p: 0.5,
            mask_layer: None,
            encoding: InputEncoding::Raw,
            optimizer: Optimizer::adam(),
            lr: 1e-3,
            epochs: 20,
            batch: 64,
            particles: filter.n_particles,
            flip_rate: filter.flip_rate,
            sigma: filter.meas_noise_sigma,
            resample_threshold: filter.resample_threshold,
            resample: filter.scheme,
            flip_mode: filter.flip_mode,
            grad_lr: 1e-2,
            oracle_particles: oracle.n_particles,
            oracle_jitter: oracle.jitter,
            oracle_sigma: oracle.sigma,
            eval_tasks: 200,
            burn_in: vec![1, 5, 10, 20],
            horizon: vec![1, 5, 10, 20],
            strategies: vec![StrategyKind::None, StrategyKind::Smcd, StrategyKind::Gradient, StrategyKind::Oracle],
            control_episodes: 200,
            control_horizon: control.horizon,
            k1: control.gains.k1,
            k2: control.gains.k2,
            control_dt: control.dt,
            telescoping: control.telescoping,
            bank_tasks: 200,
            bank_burn_in: 20,
            bank_k: vec![1, 5, 10, 20],
            bank_crn: true,
            permutations: 100,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| LabError::Config(format!("{key}: cannot parse {v:?}")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    let items: Vec<T> = v.split(',').map(|s| num(key, s.trim())).collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(LabError::Config(format!("{key}: empty list")));
    }
    Ok(items)
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(LabError::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl LabConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in parse_kv(text)? {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = num(key, v)?,
            "tasks" => self.tasks = num(key, v)?,
            "episodes" => self.episodes = num(key, v)?,
            "steps" => self.steps = num(key, v)?,
            "link_mean" => self.link_mean = num(key, v)?,
            "link_std" => self.link_std = num(key, v)?,
            "hidden" => self.hidden = num(key, v)?,
            "depth" => self.depth = num(key, v)?,
            "dropout_p" => self.dropout_p = num(key, v)?,
            "mask_layer" => self.mask_layer = if v == "all" { None } else { Some(num(key, v)?) },
            "encoding" => {
                self.encoding = match v {
                    "raw" => InputEncoding::Raw,
                    "sincos" => InputEncoding::SinCos,
                    _ => return Err(LabError::Config(format!("encoding: expected raw or sincos, got {v:?}"))),
                }
            }
            "optimizer" => {
                self.optimizer = match v {
                    "sgd" => Optimizer::Sgd,
                    "adam" => Optimizer::adam(),
                    _ => return Err(LabError::Config(format!("optimizer: expected sgd or adam, got {v:?}"))),
                }
            }
            "lr" => self.lr = num(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "batch" => self.batch = num(key, v)?,
            "particles" => self.particles = num(key, v)?,
            "flip_rate" => self.flip_rate = num(key, v)?,
            "sigma" => self.sigma = num(key, v)?,
            "resample_threshold" => self.resample_threshold = num(key, v)?,
            "resample" => {
                self.resample = match v {
                    "systematic" => ResampleScheme::Systematic,
                    "multinomial" => ResampleScheme::Multinomial,
                    _ => return Err(LabError::Config(format!("resample: expected systematic or multinomial, got {v:?}"))),
                }
            }
            "flip_mode" => {
                self.flip_mode = match v {
                    "bernoulli" => FlipMode::Bernoulli,
                    "exact" => FlipMode::ExactCount,
                    _ => return Err(LabError::Config(format!("flip_mode: expected bernoulli or exact, got {v:?}"))),
                }
            }
            "grad_lr" => self.grad_lr = num(key, v)?,
            "oracle_particles" => self.oracle_particles = num(key, v)?,
            "oracle_jitter" => self.oracle_jitter = num(key, v)?,
            "oracle_sigma" => self.oracle_sigma = num(key, v)?,
            "eval_tasks" => self.eval_tasks = num(key, v)?,
            "burn_in" => self.burn_in = list(key, v)?,
            "horizon" => self.horizon = list(key, v)?,
            "strategies" => {
                self.strategies = v.split(',').map(|s| StrategyKind::parse(s.trim())).collect::<Result<_>>()?;
            }
            "control_episodes" => self.control_episodes = num(key, v)?,
            "control_horizon" => self.control_horizon = num(key, v)?,
            "k1" => self.k1 = num(key, v)?,
            "k2" => self.k2 = num(key, v)?,
            "control_dt" => self.control_dt = num(key, v)?,
            "telescoping" => self.telescoping = boolean(key, v)?,
            "bank_tasks" => self.bank_tasks = num(key, v)?,
            "bank_burn_in" => self.bank_burn_in = num(key, v)?,
            "bank_k" => self.bank_k = list(key, v)?,
            "bank_crn" => self.bank_crn = boolean(key, v)?,
            "permutations" => self.permutations = num(key, v)?,
            _ => return Err(LabError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset_spec().validate()?;
        self.train_config().validate()?;
        self.filter_config().validate()?;
        self.control_config().validate()?;
        if self.hidden == 0 || self.depth == 0 {
            return Err(LabError::Config("hidden and depth must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(LabError::Config("dropout_p must be in [0, 1)".into()));
        }
        if self.mask_layer.is_some_and(|l| l >= self.depth) {
            return Err(LabError::Config(format!("mask_layer must be below depth {}", self.depth)));
        }
        if self.burn_in.is_empty() || self.horizon.is_empty() || self.strategies.is_empty() {
            return Err(LabError::Config("burn_in, horizon and strategies must be nonempty".into()));
        }
        if self.horizon.contains(&0) {
            return Err(LabError::Config("horizons must be at least 1".into()));
        }
        if self.bank_k.contains(&0) {
            return Err(LabError::Config("bank_k entries must be at least 1".into()));
        }
        Ok(())
    }

    /// Every key with its resolved value, one per line, in a fixed order.
    pub fn canonical(&self) -> String {
        let enc = match self.encoding {
            InputEncoding::Raw => "raw",
            InputEncoding::SinCos => "sincos",
        };
        let opt = match self.optimizer {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam { .. } => "adam",
        };
        let resample = match self.resample {
            ResampleScheme::Systematic => "systematic",
            ResampleScheme::Multinomial => "multinomial",
        };
        let flip = match self.flip_mode {
            FlipMode::Bernoulli => "bernoulli",
            FlipMode::ExactCount => "exact",
        };
        let strategies: Vec<&str> = self.strategies.iter().map(|s| s.name()).collect();
        let pairs: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("tasks", self.tasks.to_string()),
            ("episodes", self.episodes.to_string()),
            ("steps", self.steps.to_string()),
            ("link_mean", self.link_mean.to_string()),
            ("link_std", self.link_std.to_string()),
            ("hidden", self.hidden.to_string()),
            ("depth", self.depth.to_string()),
            ("dropout_p", self.dropout_p.to_string()),
            ("mask_layer", self.mask_layer.map_or("all".into(), |l| l.to_string())),
            ("encoding", enc.into()),
            ("optimizer", opt.into()),
            ("lr", self.lr.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch", self.batch.to_string()),
            ("particles", self.particles.to_string()),
            ("flip_rate", self.flip_rate.to_string()),
            ("sigma", self.sigma.to_string()),
            ("resample_threshold", self.resample_threshold.to_string()),
            ("resample", resample.into()),
            ("flip_mode", flip.into()),
            ("grad_lr", self.grad_lr.to_string()),
            ("oracle_particles", self.oracle_particles.to_string()),
            ("oracle_jitter", self.oracle_jitter.to_string()),
            ("oracle_sigma", self.oracle_sigma.to_string()),
            ("eval_tasks", self.eval_tasks.to_string()),
            ("burn_in", join(&self.burn_in)),
            ("horizon", join(&self.horizon)),
            ("strategies", strategies.join(",")),
            ("control_episodes", self.control_episodes.to_string()),
            ("control_horizon", self.control_horizon.to_string()),
            ("k1", self.k1.to_string()),
            ("k2", self.k2.to_string()),
            ("control_dt", self.control_dt.to_string()),
            ("telescoping", self.telescoping.to_string()),
            ("bank_tasks", self.bank_tasks.to_string()),
            ("bank_burn_in", self.bank_burn_in.to_string()),
            ("bank_k", join(&self.bank_k)),
            ("bank_crn", self.bank_crn.to_string()),
            ("permutations", self.permutations.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Hash of the keys that determine the trained model.
    pub fn model_hash(&self) -> String {
        const MODEL_KEYS: &[&str] = &[
            "seed", "tasks", "episodes", "steps", "link_mean", "link_std", "hidden", "depth", "dropout_p", "mask_layer",
            "encoding", "optimizer", "lr", "epochs", "batch",
        ];
        let canonical = self.canonical();
        let text: String =
            canonical.lines().filter(|l| MODEL_KEYS.contains(&l.split('=').next().unwrap_or(""))).collect::<Vec<_>>().join("\n");
        sha256_hex(text.as_bytes())
    }

    pub fn full_hash(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            n_tasks: self.tasks,
            episodes_per_task: self.episodes,
            steps_per_episode: self.steps,
            link_mean: self.link_mean,
            link_std: self.link_std,
            seed: self.seed,
        }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.encoding.dim()];
        s.extend(std::iter::repeat_n(self.hidden, self.depth));
        s.push(2);
        s
    }

    pub fn mask_scope(&self) -> MaskScope {
        self.mask_layer.map_or(MaskScope::AllHidden, MaskScope::Layer)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch,
            seed: self.seed,
            optimizer: self.optimizer,
        }
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            n_particles: self.particles,
            flip_rate: self.flip_rate,
            meas_noise_sigma: self.sigma,
            resample_threshold: self.resample_threshold,
            seed: self.seed,
            scheme: self.resample,
            flip_mode: self.flip_mode,
        }
    }

    pub fn oracle_config(&self) -> OracleConfig {
        OracleConfig {
            n_particles: self.oracle_particles,
            jitter: self.oracle_jitter,
            sigma: self.oracle_sigma,
            link_mean: self.link_mean,
            link_std: self.link_std,
            seed: self.seed,
        }
    }

    pub fn strategy(&self, kind: StrategyKind) -> AdaptStrategy {
        match kind {
            StrategyKind::None => AdaptStrategy::None,
            StrategyKind::Smcd => AdaptStrategy::Smcd(self.filter_config()),
            StrategyKind::Gradient => AdaptStrategy::Gradient { learning_rate: self.grad_lr },
            StrategyKind::Oracle => AdaptStrategy::OraclePf(self.oracle_config()),
        }
    }

    pub fn control_config(&self) -> ControlConfig {
        ControlConfig {
            gains: Gains { k1: self.k1, k2: self.k2 },
            horizon: self.control_horizon,
            dt: self.control_dt,
            telescoping: self.telescoping,
            ..ControlConfig::default()
        }
    }

    pub fn bank_config(&self) -> BankConfig {
        BankConfig {
            filter: self.filter_config(),
            burn_in: self.bank_burn_in,
            seed: self.seed,
            common_random_numbers: self.bank_crn,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
