//! Closed-loop tracking runs for every strategy on shared seeded tasks.

use rayon::prelude::*;
use smcd_core::baselines::{Adapter, KinematicsNet};
use smcd_core::control::{self, AnalyticModel, ControlTask, ControlTrace};
use smcd_core::net::DropoutNet;
use smcd_core::rng;

use crate::config::{LabConfig, StrategyKind};
use crate::error::Result;
use crate::formats::real;

pub fn episode_seed(cfg: &LabConfig, episode: usize) -> u64 {
    rng::derive_seed(cfg.seed, &[rng::tag::CONTROL, episode as u64])
}

pub fn control_task(cfg: &LabConfig, episode: usize) -> ControlTask {
    ControlTask::sample(episode_seed(cfg, episode), cfg.control_config())
}

#[derive(Debug, Clone)]
pub struct StrategyTraces {
    pub label: &'static str,
    pub traces: Vec<(u64, ControlTrace)>,
}

pub fn run_strategy(net: &DropoutNet, cfg: &LabConfig, kind: StrategyKind) -> Result<StrategyTraces> {
    let model = KinematicsNet::new(net, cfg.encoding)?;
    let traces = (0..cfg.control_episodes)
        .into_par_iter()
        .map(|e| {
            let task = control_task(cfg, e);
            let seed = episode_seed(cfg, e);
            let mut adapter = Adapter::new(cfg.strategy(kind).with_seed(seed), model)?;
            Ok((seed, control::run_control_episode(&mut adapter, &task)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StrategyTraces { label: cfg.strategy(kind).label(), traces })
}

/// Exact Jacobian with the task's initial link lengths. With telescoping on,
/// the plant's second link still varies, so this is only exact without it.
pub fn run_analytic(cfg: &LabConfig) -> Result<StrategyTraces> {
    let traces = (0..cfg.control_episodes)
        .into_par_iter()
        .map(|e| {
            let task = control_task(cfg, e);
            Ok((episode_seed(cfg, e), control::run_control_episode(&mut AnalyticModel(task.links), &task)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StrategyTraces { label: "analytic", traces })
}

pub const SUMMARY_HEADER: [&str; 6] = ["strategy", "episodes", "mean_err_50_100", "std_err_50_100", "final_err", "aborted"];

/// Mean tracking error over steps 50..100 per episode.
pub fn late_errors(s: &StrategyTraces) -> Vec<f64> {
    s.traces.iter().map(|(_, t)| t.mean_error(50, 100)).collect()
}

pub fn summary_fields(s: &StrategyTraces) -> Vec<String> {
    let late = late_errors(s);
    let (mean, std) = crate::bench::mean_std(&late);
    let fin = s.traces.iter().map(|(_, t)| t.final_error()).sum::<f64>() / s.traces.len() as f64;
    let aborted = s.traces.iter().filter(|(_, t)| t.aborted).count();
    vec![s.label.to_string(), s.traces.len().to_string(), real(mean), real(std), real(fin), aborted.to_string()]
}
