//! Closed-loop tracking of a target moving on a circle with the PD law
//! `u = −K₁ J⁺ (x − x_g) − K₂ q̇`, where `J` comes from the (adapted) model
//! and the plant is the exact arm.
//!
//! The plant is velocity controlled (`q̇ = u`), so the damping term feeds
//! back the action being computed. The loop solves that implicit equation in
//! closed form: `u = −K₁/(1 + K₂) · J⁺ (x − x_g)`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

use crate::arm::{self, LinkLengths};
use crate::baselines::Adapter;
use crate::linalg::{self, Mat2};
use crate::rng::{self, SmcdRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub k1: f64,
    pub k2: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self { k1: 20.0, k2: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlConfig {
    pub gains: Gains,
    pub horizon: usize,
    /// Integration step of the plant per control step.
    pub dt: f64,
    /// Target angular advance per step (one revolution per 100 steps by default).
    pub target_rate: f64,
    pub telescoping: bool,
    pub pinv_cutoff: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            gains: Gains::default(),
            horizon: 100,
            dt: 0.1,
            target_rate: 2.0 * PI / 100.0,
            telescoping: true,
            pinv_cutoff: 1e-6,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gains.k1 >= 0.0 && self.gains.k2 >= 0.0) {
            return Err(Error::config("control gains must be non-negative"));
        }
        if self.horizon == 0 {
            return Err(Error::config("control horizon must be at least 1"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::config("control dt must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlTask {
    pub radius: f64,
    pub phi0: f64,
    /// Plant links; `l2` is replaced by the telescoping length when enabled.
    pub links: LinkLengths,
    pub q0: [f64; 2],
    pub cfg: ControlConfig,
}

impl ControlTask {
    /// `r ~ U(0.3, 1.5)`, `φ ~ U(−π, π)`, `l₁ ~ N(1, 0.3)`, `q₀ ~ U(−π, π)²`.
    pub fn sample(seed: u64, cfg: ControlConfig) -> Self {
        let mut rng = rng::stream(seed, &[rng::tag::CONTROL]);
        Self::sample_with(&mut rng, cfg)
    }

    fn sample_with(rng: &mut SmcdRng, cfg: ControlConfig) -> Self {
        let radius = rng.gen_range(0.3..1.5);
        let phi0 = rng.gen_range(-PI..PI);
        let mut links = arm::draw_links(1.0, 0.3, rng);
        if cfg.telescoping {
            links.l2 = arm::telescoping_length(0);
        }
        let q0 = [rng.gen_range(-PI..PI), rng.gen_range(-PI..PI)];
        Self { radius, phi0, links, q0, cfg }
    }

    pub fn links_at(&self, k: usize) -> LinkLengths {
        if self.cfg.telescoping {
            LinkLengths::new(self.links.l1, arm::telescoping_length(k))
        } else {
            self.links
        }
    }

    pub fn target_at(&self, k: usize) -> [f64; 2] {
        let phi = self.phi0 + self.cfg.target_rate * k as f64;
        [self.radius * libm::cos(phi), self.radius * libm::sin(phi)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdAction {
    pub u: [f64; 2],
    /// The Jacobian was not finite and a zero action was returned.
    pub fallback: bool,
}

/// `u = −K₁ J⁺ (x − x_g) − K₂ q̇` with an SVD pseudo-inverse that drops
/// singular values at or below `cutoff`.
pub fn pd_control(x: [f64; 2], target: [f64; 2], qdot: [f64; 2], jac: &Mat2, gains: Gains, cutoff: f64) -> PdAction {
    if !jac.iter().flatten().all(|v| v.is_finite()) {
        return PdAction { u: [0.0; 2], fallback: true };
    }
    let pinv = linalg::pinv2(jac, cutoff);
    let e = [x[0] - target[0], x[1] - target[1]];
    let pe = linalg::mat2_vec(&pinv, e);
    PdAction {
        u: [
            -gains.k1 * pe[0] - gains.k2 * qdot[0],
            -gains.k1 * pe[1] - gains.k2 * qdot[1],
        ],
        fallback: false,
    }
}

/// The PD law with `q̇ = u`, i.e. the fixed point of `u = pd_control(x, x_g, u, J)`.
pub fn pd_control_velocity_plant(x: [f64; 2], target: [f64; 2], jac: &Mat2, gains: Gains, cutoff: f64) -> PdAction {
    let a = pd_control(x, target, [0.0; 2], jac, gains, cutoff);
    let s = 1.0 / (1.0 + gains.k2);
    PdAction { u: [a.u[0] * s, a.u[1] * s], fallback: a.fallback }
}

/// A model that supplies Jacobians to the controller and may learn from
/// each measurement.
pub trait ControlModel {
    fn observe(&mut self, q: [f64; 2], x: [f64; 2]) -> Result<()>;
    fn jacobian(&self, q: [f64; 2]) -> Result<Mat2>;
}

impl ControlModel for Adapter<'_> {
    fn observe(&mut self, q: [f64; 2], x: [f64; 2]) -> Result<()> {
        Adapter::observe(self, q, x).map(|_| ())
    }

    fn jacobian(&self, q: [f64; 2]) -> Result<Mat2> {
        Adapter::jacobian(self, q)
    }
}

/// Exact kinematics with known, fixed link lengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticModel(pub LinkLengths);

impl ControlModel for AnalyticModel {
    fn observe(&mut self, _q: [f64; 2], _x: [f64; 2]) -> Result<()> {
        Ok(())
    }

    fn jacobian(&self, q: [f64; 2]) -> Result<Mat2> {
        Ok(arm::analytic_jacobian(q, self.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlRecord {
    pub step: usize,
    pub q: [f64; 2],
    pub qdot: [f64; 2],
    pub u: [f64; 2],
    pub x: [f64; 2],
    pub target: [f64; 2],
    pub error: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControlTrace {
    pub records: Vec<ControlRecord>,
    /// The state went non-finite and the episode stopped early.
    pub aborted: bool,
    /// Steps where the Jacobian was unusable and a zero action was applied.
    pub fallbacks: usize,
}

impl ControlTrace {
    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.error).collect()
    }

    /// Mean tracking error over steps `from..to` (clamped to the trace).
    pub fn mean_error(&self, from: usize, to: usize) -> f64 {
        let to = to.min(self.records.len());
        if from >= to {
            return f64::NAN;
        }
        self.records[from..to].iter().map(|r| r.error).sum::<f64>() / (to - from) as f64
    }

    pub fn final_error(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.error)
    }
}

/// Runs one episode. Each step measures the true end-effector, lets the
/// model observe it, then applies the PD action through the model's
/// Jacobian and integrates the exact plant.
pub fn run_control_episode<M: ControlModel + ?Sized>(model: &mut M, task: &ControlTask) -> Result<ControlTrace> {
    task.cfg.validate()?;
    let cfg = task.cfg;
    let mut q = task.q0;
    let mut qdot = [0.0; 2];
    let mut trace = ControlTrace { records: Vec::with_capacity(cfg.horizon), ..Default::default() };
    for k in 0..cfg.horizon {
        let links = task.links_at(k);
        let x = arm::forward_kinematics(q, links);
        if !(x[0].is_finite() && x[1].is_finite()) {
            log::warn!("control episode went non-finite at step {k}");
            trace.aborted = true;
            break;
        }
        model.observe(q, x)?;
        let target = task.target_at(k);
        let jac = model.jacobian(q)?;
        let action = pd_control_velocity_plant(x, target, &jac, cfg.gains, cfg.pinv_cutoff);
        if action.fallback {
            trace.fallbacks += 1;
        }
        let error = libm::hypot(x[0] - target[0], x[1] - target[1]);
        trace.records.push(ControlRecord { step: k, q, qdot, u: action.u, x, target, error, l2: links.l2 });
        q = arm::step_dynamics(q, action.u, cfg.dt);
        qdot = action.u;
    }
    Ok(trace)
}
