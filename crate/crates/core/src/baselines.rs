//! Adaptation strategies compared against each other: no adaptation, the
//! mask filter, online gradient descent on a private copy of the network,
//! and a particle filter over the physical link lengths of the exact
//! kinematics (the oracle).

use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::arm::{self, InputEncoding, LinkLengths};
use crate::filter::{self, FilterConfig, Observation, ResampleScheme, SmcdFilter, StepReport};
use crate::linalg::{Mat2, Matrix};
use crate::net::{DropoutNet, Gate};
use crate::rng::{self, SmcdRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub n_particles: usize,
    /// Standard deviation of the random walk on each link length per step.
    pub jitter: f64,
    pub sigma: f64,
    pub link_mean: f64,
    pub link_std: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { n_particles: 500, jitter: 0.005, sigma: 0.01, link_mean: 1.0, link_std: 0.3, seed: 0 }
    }
}

/// Particle filter over `(l₁, l₂)` with the closed-form kinematics as the
/// measurement model.
#[derive(Debug, Clone)]
pub struct OraclePf {
    cfg: OracleConfig,
    particles: Vec<LinkLengths>,
    weights: Vec<f64>,
    observed: usize,
    rng: SmcdRng,
}

impl OraclePf {
    pub fn init(cfg: OracleConfig) -> Result<Self> {
        if cfg.n_particles == 0 || !(cfg.sigma > 0.0) || !(cfg.jitter >= 0.0) {
            return Err(Error::config("oracle filter needs particles, positive sigma and non-negative jitter"));
        }
        let mut rng = rng::stream(cfg.seed, &[rng::tag::ORACLE]);
        let particles = (0..cfg.n_particles)
            .map(|_| arm::draw_links(cfg.link_mean, cfg.link_std, &mut rng))
            .collect();
        let w = 1.0 / cfg.n_particles as f64;
        Ok(Self { cfg, particles, weights: vec![w; cfg.n_particles], observed: 0, rng })
    }

    pub fn particles(&self) -> &[LinkLengths] {
        &self.particles
    }

    /// Random-walk transition, kinematic likelihood and systematic resampling.
    pub fn observe(&mut self, q: [f64; 2], z: [f64; 2]) -> StepReport {
        let jitter = self.cfg.jitter;
        let mut log_w = Vec::with_capacity(self.particles.len());
        for p in self.particles.iter_mut() {
            if jitter > 0.0 {
                let d1: f64 = StandardNormal.sample(&mut self.rng);
                let d2: f64 = StandardNormal.sample(&mut self.rng);
                // Reflect at zero to keep lengths positive.
                p.l1 = libm::fabs(p.l1 + jitter * d1);
                p.l2 = libm::fabs(p.l2 + jitter * d2);
            }
            let pred = arm::forward_kinematics(q, *p);
            log_w.push(filter::gaussian_log_likelihood(&pred, &z, self.cfg.sigma));
        }
        let degenerate = !filter::normalize_log_weights(&mut log_w);
        if degenerate {
            let n = log_w.len() as f64;
            log_w.iter_mut().for_each(|w| *w = 1.0 / n);
        }
        let n_eff = filter::effective_sample_size(&log_w);
        let idx = filter::resample_indices(&log_w, self.particles.len(), ResampleScheme::Systematic, &mut self.rng);
        self.particles = idx.into_iter().map(|i| self.particles[i]).collect();
        let n = self.particles.len();
        self.weights = vec![1.0 / n as f64; n];
        self.observed += 1;
        StepReport { n_eff, resampled: true, degenerate, killed: 0 }
    }

    /// Posterior-mean link lengths; the prior mean before any observation.
    pub fn posterior_mean(&self) -> LinkLengths {
        if self.observed == 0 {
            return LinkLengths::new(self.cfg.link_mean, self.cfg.link_mean);
        }
        let n = self.particles.len() as f64;
        let (s1, s2) = self.particles.iter().fold((0.0, 0.0), |(a, b), p| (a + p.l1, b + p.l2));
        LinkLengths::new(s1 / n, s2 / n)
    }

    pub fn predict(&self, q: [f64; 2]) -> [f64; 2] {
        arm::forward_kinematics(q, self.posterior_mean())
    }

    pub fn jacobian(&self, q: [f64; 2]) -> Mat2 {
        arm::analytic_jacobian(q, self.posterior_mean())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdaptStrategy {
    None,
    Smcd(FilterConfig),
    Gradient { learning_rate: f64 },
    OraclePf(OracleConfig),
}

impl AdaptStrategy {
    /// Short name used in result tables.
    pub fn name(&self) -> &'static str {
        match self {
            AdaptStrategy::None => "none",
            AdaptStrategy::Smcd(_) => "smcd",
            AdaptStrategy::Gradient { .. } => "gradient",
            AdaptStrategy::OraclePf(_) => "oracle_pf",
        }
    }

    /// Model + adaptation label: M+N, M+S, M+G or O+P.
    pub fn label(&self) -> &'static str {
        match self {
            AdaptStrategy::None => "M+N",
            AdaptStrategy::Smcd(_) => "M+S",
            AdaptStrategy::Gradient { .. } => "M+G",
            AdaptStrategy::OraclePf(_) => "O+P",
        }
    }

    /// Same strategy with every random stream reseeded.
    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            AdaptStrategy::Smcd(c) => AdaptStrategy::Smcd(FilterConfig { seed, ..c }),
            AdaptStrategy::OraclePf(c) => AdaptStrategy::OraclePf(OracleConfig { seed, ..c }),
            other => other,
        }
    }
}

/// A kinematics network together with the encoding of its joint-angle input.
#[derive(Debug, Clone, Copy)]
pub struct KinematicsNet<'a> {
    pub net: &'a DropoutNet,
    pub encoding: InputEncoding,
}

impl<'a> KinematicsNet<'a> {
    pub fn new(net: &'a DropoutNet, encoding: InputEncoding) -> Result<Self> {
        Error::check_len("network input", encoding.dim(), net.input_dim())?;
        Error::check_len("network output", 2, net.output_dim())?;
        Ok(Self { net, encoding })
    }

    fn input(&self, q: [f64; 2]) -> Vec<f64> {
        self.encoding.encode([arm::wrap_angle(q[0]), arm::wrap_angle(q[1])])
    }

    pub fn observation(&self, q: [f64; 2], z: [f64; 2]) -> Observation {
        Observation::new(self.input(q), z.to_vec())
    }

    pub fn predict(&self, net: &DropoutNet, q: [f64; 2], gate: Gate<'_>) -> Result<[f64; 2]> {
        let y = net.forward(&self.input(q), gate)?;
        Ok([y[0], y[1]])
    }

    /// `∂f/∂q` through the input encoding.
    pub fn jacobian(&self, net: &DropoutNet, q: [f64; 2], gate: Gate<'_>) -> Result<Mat2> {
        let wrapped = [arm::wrap_angle(q[0]), arm::wrap_angle(q[1])];
        let jn: Matrix = net.input_jacobian(&self.encoding.encode(wrapped), gate)?;
        let je = self.encoding.jacobian(wrapped);
        let k = self.encoding.dim();
        let mut out = [[0.0; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] = (0..k).map(|t| jn[(r, t)] * je[t * 2 + c]).sum();
            }
        }
        Ok(out)
    }
}

/// Live state of one strategy during an episode.
#[derive(Debug, Clone)]
pub enum Adapter<'a> {
    None { model: KinematicsNet<'a> },
    Smcd { model: KinematicsNet<'a>, filter: SmcdFilter, mmse: Option<Vec<f64>> },
    Gradient { model: KinematicsNet<'a>, net: DropoutNet, learning_rate: f64 },
    OraclePf(OraclePf),
}

impl<'a> Adapter<'a> {
    pub fn new(strategy: AdaptStrategy, model: KinematicsNet<'a>) -> Result<Self> {
        Ok(match strategy {
            AdaptStrategy::None => Adapter::None { model },
            AdaptStrategy::Smcd(cfg) => Adapter::Smcd { model, filter: SmcdFilter::init(cfg, model.net)?, mmse: None },
            AdaptStrategy::Gradient { learning_rate } => {
                if !(learning_rate >= 0.0) {
                    return Err(Error::config("gradient learning rate must be non-negative"));
                }
                Adapter::Gradient { model, net: model.net.clone(), learning_rate }
            }
            AdaptStrategy::OraclePf(cfg) => Adapter::OraclePf(OraclePf::init(cfg)?),
        })
    }

    /// Feeds one measured end-effector position `z` taken at joint angles `q`.
    pub fn observe(&mut self, q: [f64; 2], z: [f64; 2]) -> Result<Option<StepReport>> {
        match self {
            Adapter::None { .. } => Ok(None),
            Adapter::Smcd { model, filter, mmse } => {
                let report = filter.step(model.net, &model.observation(q, z))?;
                *mmse = Some(filter.mmse_mask());
                Ok(Some(report))
            }
            Adapter::Gradient { model, net, learning_rate } => {
                let obs = model.observation(q, z);
                *net = net.gradient_step_online(&obs.prev_input, &obs.measured_output, *learning_rate)?;
                Ok(None)
            }
            Adapter::OraclePf(pf) => Ok(Some(pf.observe(q, z))),
        }
    }

    pub fn predict(&self, q: [f64; 2]) -> Result<[f64; 2]> {
        match self {
            Adapter::None { model } => model.predict(model.net, q, Gate::Mean),
            Adapter::Smcd { model, mmse, .. } => model.predict(model.net, q, smcd_gate(mmse)),
            Adapter::Gradient { model, net, .. } => model.predict(net, q, Gate::Mean),
            Adapter::OraclePf(pf) => Ok(pf.predict(q)),
        }
    }

    /// Model Jacobian `∂(x, y)/∂q` under the strategy's current conditioning.
    pub fn jacobian(&self, q: [f64; 2]) -> Result<Mat2> {
        match self {
            Adapter::None { model } => model.jacobian(model.net, q, Gate::Mean),
            Adapter::Smcd { model, mmse, .. } => model.jacobian(model.net, q, smcd_gate(mmse)),
            Adapter::Gradient { model, net, .. } => model.jacobian(net, q, Gate::Mean),
            Adapter::OraclePf(pf) => Ok(pf.jacobian(q)),
        }
    }

    /// Current MMSE mask of the mask filter, if this is one and it has
    /// observed anything.
    pub fn mmse_mask(&self) -> Option<&[f64]> {
        match self {
            Adapter::Smcd { mmse, .. } => mmse.as_deref(),
            _ => None,
        }
    }

    pub fn smcd_filter(&self) -> Option<&SmcdFilter> {
        match self {
            Adapter::Smcd { filter, .. } => Some(filter),
            _ => None,
        }
    }
}

/// Mean network until the filter has seen an observation, then the MMSE mask.
fn smcd_gate(mmse: &Option<Vec<f64>>) -> Gate<'_> {
    match mmse {
        Some(m) => Gate::Fractional(m),
        None => Gate::Mean,
    }
}
