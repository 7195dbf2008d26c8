//! Bootstrap particle filter over dropout masks.
//!
//! Each step flips every mask bit with a small probability, scores each
//! particle by a Gaussian likelihood of its prediction error, normalizes the
//! weights in log space and resamples. The particle mean is the
//! minimum-mean-squared-error mask used to condition the network.
//!
//! The network is only ever borrowed immutably.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::index;
use rand::Rng;

use crate::linalg::Matrix;
use crate::net::{DropoutNet, MaskParticle};
use crate::rng::{self, SmcdRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResampleScheme {
    #[default]
    Systematic,
    Multinomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlipMode {
    /// Every bit flips independently with probability `d`.
    #[default]
    Bernoulli,
    /// Exactly `round(d · D)` distinct bits flip.
    ExactCount,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub n_particles: usize,
    pub flip_rate: f64,
    /// Standard deviation of the isotropic measurement noise.
    pub meas_noise_sigma: f64,
    /// Resample when `N_eff < resample_threshold · N`; 1.0 resamples every step.
    pub resample_threshold: f64,
    pub seed: u64,
    pub scheme: ResampleScheme,
    pub flip_mode: FlipMode,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            n_particles: 500,
            flip_rate: 0.02,
            meas_noise_sigma: 0.05,
            resample_threshold: 1.0,
            seed: 0,
            scheme: ResampleScheme::Systematic,
            flip_mode: FlipMode::Bernoulli,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::config("n_particles must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.flip_rate) {
            return Err(Error::config(format!("flip rate {} outside [0, 1]", self.flip_rate)));
        }
        if !(self.meas_noise_sigma > 0.0) {
            return Err(Error::config(format!("measurement sigma must be positive, got {}", self.meas_noise_sigma)));
        }
        if !(self.resample_threshold > 0.0 && self.resample_threshold <= 1.0) {
            return Err(Error::config("resample threshold must be in (0, 1]"));
        }
        Ok(())
    }
}

/// One supervised observation: the network input that produced the state
/// and the measured output.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub prev_input: Vec<f64>,
    pub measured_output: Vec<f64>,
}

impl Observation {
    pub fn new(prev_input: Vec<f64>, measured_output: Vec<f64>) -> Self {
        Self { prev_input, measured_output }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub particles: Vec<MaskParticle>,
    pub weights: Vec<f64>,
    pub step_count: usize,
    pub n_eff: f64,
    /// True when the weights are exactly uniform (after init or resampling).
    pub uniform: bool,
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Effective sample size of the freshly computed weights, before resampling.
    pub n_eff: f64,
    pub resampled: bool,
    /// Every likelihood was zero or non-finite; weights were reset to uniform.
    pub degenerate: bool,
    /// Particles whose prediction was not finite and were given zero weight.
    pub killed: usize,
}

/// `−‖z − ŷ‖² / (2σ²) − (dim/2) log(2πσ²)`, or `−∞` for a non-finite
/// prediction.
pub fn gaussian_log_likelihood(predicted: &[f64], measured: &[f64], sigma: f64) -> f64 {
    debug_assert_eq!(predicted.len(), measured.len());
    let sq: f64 = predicted.iter().zip(measured).map(|(p, z)| (z - p) * (z - p)).sum();
    if !sq.is_finite() {
        return f64::NEG_INFINITY;
    }
    let var = sigma * sigma;
    -sq / (2.0 * var) - 0.5 * measured.len() as f64 * libm::log(2.0 * PI * var)
}

pub fn log_likelihood(net: &DropoutNet, mask: &MaskParticle, obs: &Observation, sigma: f64) -> Result<f64> {
    Error::check_len("measured output", net.output_dim(), obs.measured_output.len())?;
    let pred = net.forward_masked(&obs.prev_input, mask)?;
    Ok(gaussian_log_likelihood(&pred, &obs.measured_output, sigma))
}

/// Flips each bit independently with probability `d` by xor with a sparse
/// flip vector whose set positions are found by geometric skipping.
pub fn transition(mask: &MaskParticle, d: f64, rng: &mut SmcdRng) -> MaskParticle {
    let mut out = mask.clone();
    transition_in_place(&mut out, d, rng);
    out
}

fn transition_in_place(mask: &mut MaskParticle, d: f64, rng: &mut SmcdRng) {
    let len = mask.len();
    if d <= 0.0 || len == 0 {
        return;
    }
    if d >= 1.0 {
        let ones = MaskParticle::ones(len);
        mask.xor_assign(&ones);
        return;
    }
    let mut flips = MaskParticle::zeros(len);
    let log_stay = libm::log1p(-d);
    let mut pos = 0usize;
    loop {
        // Number of untouched bits before the next flip ~ Geometric(d).
        let u: f64 = 1.0 - rng.gen::<f64>();
        let skip = libm::floor(libm::log(u) / log_stay);
        if !(skip < (len - pos) as f64) {
            break;
        }
        pos += skip as usize;
        flips.set(pos, true);
        pos += 1;
        if pos >= len {
            break;
        }
    }
    mask.xor_assign(&flips);
}

fn transition_exact(mask: &mut MaskParticle, d: f64, rng: &mut SmcdRng) {
    let len = mask.len();
    let count = libm::round(d * len as f64) as usize;
    for i in index::sample(rng, len, count.min(len)) {
        mask.flip(i);
    }
}

/// `1 / Σ wᵢ²`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().map(|w| w * w).sum();
    1.0 / s
}

/// Normalizes log-weights in place into probabilities with the log-sum-exp
/// shift. Returns `false` when no weight is finite, leaving them untouched.
pub fn normalize_log_weights(log_w: &mut [f64]) -> bool {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return false;
    }
    let mut total = 0.0;
    for w in log_w.iter_mut() {
        *w = libm::exp(*w - max);
        total += *w;
    }
    for w in log_w.iter_mut() {
        *w /= total;
    }
    true
}

/// Ancestor indices for `n` draws from normalized `weights`.
pub fn resample_indices(weights: &[f64], n: usize, scheme: ResampleScheme, rng: &mut SmcdRng) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    if weights.is_empty() || n == 0 {
        return out;
    }
    let last = weights.len() - 1;
    match scheme {
        ResampleScheme::Systematic => {
            let step = 1.0 / n as f64;
            let start = rng.gen::<f64>() * step;
            let mut i = 0;
            let mut cum = weights[0];
            for k in 0..n {
                let target = start + k as f64 * step;
                while cum < target && i < last {
                    i += 1;
                    cum += weights[i];
                }
                out.push(i);
            }
        }
        ResampleScheme::Multinomial => {
            let mut cdf = Vec::with_capacity(weights.len());
            let mut acc = 0.0;
            for w in weights {
                acc += w;
                cdf.push(acc);
            }
            for _ in 0..n {
                let u = rng.gen::<f64>() * acc;
                let i = cdf.partition_point(|&c| c <= u).min(last);
                out.push(i);
            }
        }
    }
    out
}

pub fn resample(
    particles: &[MaskParticle],
    weights: &[f64],
    scheme: ResampleScheme,
    rng: &mut SmcdRng,
) -> Vec<MaskParticle> {
    resample_indices(weights, particles.len(), scheme, rng)
        .into_iter()
        .map(|i| particles[i].clone())
        .collect()
}

/// Weighted particle mean; the plain average when the weights are uniform.
pub fn mmse_mask(state: &FilterState) -> Vec<f64> {
    let d = state.particles.first().map_or(0, MaskParticle::len);
    let mut acc = vec![0.0; d];
    if state.uniform {
        for p in &state.particles {
            for (a, b) in acc.iter_mut().zip(p.iter()) {
                if b {
                    *a += 1.0;
                }
            }
        }
        let n = state.particles.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
    } else {
        for (p, &w) in state.particles.iter().zip(&state.weights) {
            for (a, b) in acc.iter_mut().zip(p.iter()) {
                if b {
                    *a += w;
                }
            }
        }
    }
    acc
}

/// Outputs of every particle for one input, with their weighted mean and
/// per-dimension variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub outputs: Matrix,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

pub fn posterior_predict(state: &FilterState, net: &DropoutNet, input: &[f64]) -> Result<Ensemble> {
    let outputs = net.forward_particles(input, &state.particles)?;
    let dim = outputs.cols();
    let mut mean = vec![0.0; dim];
    let mut variance = vec![0.0; dim];
    let n = state.particles.len() as f64;
    let weight = |i: usize| if state.uniform { 1.0 / n } else { state.weights[i] };
    if state.uniform {
        for r in 0..outputs.rows() {
            for (m, v) in mean.iter_mut().zip(outputs.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
    } else {
        for r in 0..outputs.rows() {
            for (m, v) in mean.iter_mut().zip(outputs.row(r)) {
                *m += weight(r) * v;
            }
        }
    }
    for r in 0..outputs.rows() {
        for ((s, v), m) in variance.iter_mut().zip(outputs.row(r)).zip(&mean) {
            *s += weight(r) * (v - m) * (v - m);
        }
    }
    Ok(Ensemble { outputs, mean, variance })
}

/// The filter: configuration, particle state and its private random stream.
#[derive(Debug, Clone)]
pub struct SmcdFilter {
    cfg: FilterConfig,
    state: FilterState,
    rng: SmcdRng,
}

impl SmcdFilter {
    /// Draws `N` masks from the network's dropout distribution with uniform
    /// weights.
    pub fn init(cfg: FilterConfig, net: &DropoutNet) -> Result<Self> {
        cfg.validate()?;
        if net.dropout_p() == 0.0 {
            log::warn!("mask filter on a network trained without dropout: every particle is the all-ones mask");
        }
        let mut rng = rng::stream(cfg.seed, &[rng::tag::FILTER]);
        let particles: Vec<_> = (0..cfg.n_particles).map(|_| net.sample_mask(&mut rng)).collect();
        let n = cfg.n_particles;
        let state = FilterState {
            particles,
            weights: vec![1.0 / n as f64; n],
            step_count: 0,
            n_eff: n as f64,
            uniform: true,
        };
        Ok(Self { cfg, state, rng })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.cfg
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    pub fn mmse_mask(&self) -> Vec<f64> {
        mmse_mask(&self.state)
    }

    pub fn posterior_predict(&self, net: &DropoutNet, input: &[f64]) -> Result<Ensemble> {
        posterior_predict(&self.state, net, input)
    }

    /// Transition, weight and (optionally) resample.
    pub fn step(&mut self, net: &DropoutNet, obs: &Observation) -> Result<StepReport> {
        Error::check_len("measured output", net.output_dim(), obs.measured_output.len())?;
        Error::check_len("observation input", net.input_dim(), obs.prev_input.len())?;
        let cfg = self.cfg;
        for p in self.state.particles.iter_mut() {
            match cfg.flip_mode {
                FlipMode::Bernoulli => transition_in_place(p, cfg.flip_rate, &mut self.rng),
                FlipMode::ExactCount => transition_exact(p, cfg.flip_rate, &mut self.rng),
            }
        }
        let preds = net.forward_particles(&obs.prev_input, &self.state.particles)?;
        let mut killed = 0;
        let mut log_w: Vec<f64> = (0..preds.rows())
            .map(|i| {
                let ll = gaussian_log_likelihood(preds.row(i), &obs.measured_output, cfg.meas_noise_sigma);
                let prior = libm::log(self.state.weights[i]);
                if ll == f64::NEG_INFINITY {
                    killed += 1;
                }
                ll + prior
            })
            .collect();
        if killed > 0 {
            log::warn!("{killed} particles produced non-finite predictions and were given zero weight");
        }
        let degenerate = !normalize_log_weights(&mut log_w);
        if degenerate {
            log::warn!("all particle likelihoods vanished at step {}; resetting to uniform weights", self.state.step_count);
            let n = log_w.len() as f64;
            log_w.iter_mut().for_each(|w| *w = 1.0 / n);
        }
        self.state.weights = log_w;
        self.state.uniform = degenerate;
        let n_eff = effective_sample_size(&self.state.weights);
        self.state.n_eff = n_eff;
        let n = self.state.particles.len();
        let resampled = cfg.resample_threshold >= 1.0 || n_eff < cfg.resample_threshold * n as f64;
        if resampled {
            self.state.particles = resample(&self.state.particles, &self.state.weights, cfg.scheme, &mut self.rng);
            self.state.weights = vec![1.0 / n as f64; n];
            self.state.uniform = true;
            self.state.n_eff = effective_sample_size(&self.state.weights);
        }
        self.state.step_count += 1;
        Ok(StepReport { n_eff, resampled, degenerate, killed })
    }
}
