//! Two-link planar arm: velocity-controlled joints and closed-form forward
//! kinematics, plus the multi-task motor-babbling data generator.
//!
//! ```text
//! q̇₁ = u₁, q̇₂ = u₂
//! x = l₁ cos q₁ + l₂ cos(q₁ + q₂)
//! y = l₁ sin q₁ + l₂ sin(q₁ + q₂)
//! ```

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::linalg::Mat2;
use crate::net::Samples;
use crate::rng::{self, SmcdRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkLengths {
    pub l1: f64,
    pub l2: f64,
}

impl LinkLengths {
    pub const fn new(l1: f64, l2: f64) -> Self {
        Self { l1, l2 }
    }
}

/// Arm state for one task: fixed link lengths, joint angles and velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmTask {
    pub links: LinkLengths,
    pub q: [f64; 2],
    pub qdot: [f64; 2],
}

pub fn forward_kinematics(q: [f64; 2], l: LinkLengths) -> [f64; 2] {
    let s = q[0] + q[1];
    [
        l.l1 * libm::cos(q[0]) + l.l2 * libm::cos(s),
        l.l1 * libm::sin(q[0]) + l.l2 * libm::sin(s),
    ]
}

/// Euler step of the joint integrator, `q' = q + u·dt`.
pub fn step_dynamics(q: [f64; 2], u: [f64; 2], dt: f64) -> [f64; 2] {
    [q[0] + u[0] * dt, q[1] + u[1] * dt]
}

/// `∂(x, y) / ∂(q₁, q₂)`, rows are outputs.
pub fn analytic_jacobian(q: [f64; 2], l: LinkLengths) -> Mat2 {
    let s = q[0] + q[1];
    let (s1, c1) = (libm::sin(q[0]), libm::cos(q[0]));
    let (s12, c12) = (libm::sin(s), libm::cos(s));
    [
        [-l.l1 * s1 - l.l2 * s12, -l.l2 * s12],
        [l.l1 * c1 + l.l2 * c12, l.l2 * c12],
    ]
}

/// Length of the telescoping second link at control step `k`.
pub fn telescoping_length(k: usize) -> f64 {
    1.0 + 0.25 * libm::sin(PI * k as f64 / 20.0)
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let two_pi = 2.0 * PI;
    let mut w = a - two_pi * libm::floor(a / two_pi);
    // w ∈ [0, 2π)
    if w > PI {
        w -= two_pi;
    }
    w
}

/// One stored step of a babbling episode. `(x, y)` is the kinematics of the
/// stored (wrapped) joint angles after applying `(u1, u2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub task_id: u32,
    pub episode_id: u32,
    pub step: u32,
    pub q1: f64,
    pub q2: f64,
    pub u1: f64,
    pub u2: f64,
    pub x: f64,
    pub y: f64,
    pub l1: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSpec {
    pub n_tasks: usize,
    pub episodes_per_task: usize,
    pub steps_per_episode: usize,
    pub link_mean: f64,
    pub link_std: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_tasks: 1000,
            episodes_per_task: 150,
            steps_per_episode: 10,
            link_mean: 1.0,
            link_std: 0.3,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_tasks == 0 || self.episodes_per_task == 0 || self.steps_per_episode == 0 {
            return Err(Error::config("dataset counts must all be at least 1"));
        }
        if !(self.link_std >= 0.0) || !self.link_mean.is_finite() {
            return Err(Error::config("link length distribution must be finite with non-negative spread"));
        }
        Ok(())
    }

    pub fn record_count(&self) -> usize {
        self.n_tasks * self.episodes_per_task * self.steps_per_episode
    }
}

/// Draws a positive link length from `N(mean, std)`, redrawing non-positive
/// values.
pub fn draw_link_length(mean: f64, std: f64, rng: &mut SmcdRng) -> f64 {
    let normal = Normal::new(mean, std).expect("validated std");
    loop {
        let l = normal.sample(rng);
        if l > 0.0 {
            return l;
        }
    }
}

pub fn draw_links(mean: f64, std: f64, rng: &mut SmcdRng) -> LinkLengths {
    let l1 = draw_link_length(mean, std, rng);
    let l2 = draw_link_length(mean, std, rng);
    LinkLengths { l1, l2 }
}

fn draw_angles(rng: &mut SmcdRng) -> [f64; 2] {
    [rng.gen_range(-PI..PI), rng.gen_range(-PI..PI)]
}

fn draw_action(rng: &mut SmcdRng) -> [f64; 2] {
    [StandardNormal.sample(rng), StandardNormal.sample(rng)]
}

/// Records for one task. Each task owns an RNG stream derived from
/// `(seed, task_id)`, so tasks can be generated independently.
pub fn generate_task(spec: &DatasetSpec, task_id: usize) -> Vec<TrajectoryRecord> {
    let mut rng = rng::stream(spec.seed, &[rng::tag::DATASET, task_id as u64]);
    let links = draw_links(spec.link_mean, spec.link_std, &mut rng);
    let mut out = Vec::with_capacity(spec.episodes_per_task * spec.steps_per_episode);
    for episode in 0..spec.episodes_per_task {
        let mut q = draw_angles(&mut rng);
        for step in 0..spec.steps_per_episode {
            let u = draw_action(&mut rng);
            let next = step_dynamics(q, u, 1.0);
            q = [wrap_angle(next[0]), wrap_angle(next[1])];
            let [x, y] = forward_kinematics(q, links);
            out.push(TrajectoryRecord {
                task_id: task_id as u32,
                episode_id: episode as u32,
                step: step as u32,
                q1: q[0],
                q2: q[1],
                u1: u[0],
                u2: u[1],
                x,
                y,
                l1: links.l1,
                l2: links.l2,
            });
        }
    }
    out
}

pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<TrajectoryRecord>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.record_count());
    for task in 0..spec.n_tasks {
        out.extend(generate_task(spec, task));
    }
    Ok(out)
}

/// Input encoding for the kinematics network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputEncoding {
    /// `(q₁, q₂)`
    #[default]
    Raw,
    /// `(sin q₁, cos q₁, sin q₂, cos q₂)`
    SinCos,
}

impl InputEncoding {
    pub fn dim(self) -> usize {
        match self {
            InputEncoding::Raw => 2,
            InputEncoding::SinCos => 4,
        }
    }

    pub fn encode(self, q: [f64; 2]) -> Vec<f64> {
        match self {
            InputEncoding::Raw => q.to_vec(),
            InputEncoding::SinCos => {
                alloc::vec![libm::sin(q[0]), libm::cos(q[0]), libm::sin(q[1]), libm::cos(q[1])]
            }
        }
    }

    /// `∂ encode(q) / ∂q`, `dim × 2` row-major.
    pub fn jacobian(self, q: [f64; 2]) -> Vec<f64> {
        match self {
            InputEncoding::Raw => alloc::vec![1.0, 0.0, 0.0, 1.0],
            InputEncoding::SinCos => alloc::vec![
                libm::cos(q[0]), 0.0,
                -libm::sin(q[0]), 0.0,
                0.0, libm::cos(q[1]),
                0.0, -libm::sin(q[1]),
            ],
        }
    }
}

/// Training pairs `q ↦ (x, y)` from trajectory records.
pub fn to_samples(records: &[TrajectoryRecord], encoding: InputEncoding) -> Samples {
    let mut s = Samples::new(encoding.dim(), 2);
    s.inputs.reserve(records.len() * encoding.dim());
    s.targets.reserve(records.len() * 2);
    for r in records {
        s.push(&encoding.encode([r.q1, r.q2]), &[r.x, r.y]);
    }
    s
}

/// Held-out babbling episode: unknown links, a start pose and an action
/// sequence of `burn_in + horizon` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalEpisode {
    pub links: LinkLengths,
    pub q0: [f64; 2],
    pub actions: Vec<[f64; 2]>,
}

impl EvalEpisode {
    /// Joint angles after each action (wrapped), one per action.
    pub fn joint_path(&self) -> Vec<[f64; 2]> {
        let mut q = self.q0;
        self.actions
            .iter()
            .map(|&u| {
                let n = step_dynamics(q, u, 1.0);
                q = [wrap_angle(n[0]), wrap_angle(n[1])];
                q
            })
            .collect()
    }

    /// True end-effector positions along [`Self::joint_path`].
    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.joint_path().into_iter().map(|q| forward_kinematics(q, self.links)).collect()
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Draws an evaluation episode from a seed, using the same distributions as
/// the training data. `link_mean`/`link_std` default to `N(1, 0.3)`.
pub fn make_eval_episode(seed: u64, len: usize) -> EvalEpisode {
    make_eval_episode_with(seed, len, 1.0, 0.3)
}

pub fn make_eval_episode_with(seed: u64, len: usize, link_mean: f64, link_std: f64) -> EvalEpisode {
    let mut rng = rng::stream(seed, &[rng::tag::EVAL]);
    let links = draw_links(link_mean, link_std, &mut rng);
    let q0 = draw_angles(&mut rng);
    let actions = (0..len).map(|_| draw_action(&mut rng)).collect();
    EvalEpisode { links, q0, actions }
}

/// Babbling episode for known link lengths (used to probe a given task).
pub fn babbling_episode(links: LinkLengths, seed: u64, len: usize) -> EvalEpisode {
    let mut rng = rng::stream(seed, &[rng::tag::EVAL, 1]);
    let q0 = draw_angles(&mut rng);
    let actions = (0..len).map(|_| draw_action(&mut rng)).collect();
    EvalEpisode { links, q0, actions }
}
