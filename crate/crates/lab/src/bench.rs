//! Look-ahead benchmark: adapt on the first `burn_in` steps of a held-out
//! babbling episode, then predict the next `horizon` end-effector positions
//! open loop from the known joint path.
//!
//! Every strategy sees the same episode for a task. One adaptation run per
//! (task, strategy) is snapshotted at each burn-in of the grid.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use smcd_core::arm::{self, EvalEpisode};
use smcd_core::baselines::{Adapter, KinematicsNet};
use smcd_core::net::DropoutNet;
use smcd_core::rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::{LabConfig, StrategyKind};
use crate::error::{LabError, Result};
use crate::formats::real;

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub strategy: &'static str,
    pub burn_in: usize,
    pub horizon: usize,
    pub task_id: usize,
    pub rmse: f64,
    pub wall_time_ms: f64,
}

impl ResultRow {
    /// CSV fields. Wall time is written only when requested, because it is
    /// the one value that differs between otherwise identical runs.
    pub fn fields(&self, timing: bool) -> Vec<String> {
        vec![
            self.strategy.to_string(),
            self.burn_in.to_string(),
            self.horizon.to_string(),
            self.task_id.to_string(),
            real(self.rmse),
            if timing { format!("{:.3}", self.wall_time_ms) } else { "0".into() },
        ]
    }
}

pub fn eval_episode(cfg: &LabConfig, task: usize, len: usize) -> EvalEpisode {
    let seed = rng::derive_seed(cfg.seed, &[rng::tag::EVAL, task as u64]);
    arm::make_eval_episode_with(seed, len, cfg.link_mean, cfg.link_std)
}

/// Root mean square over horizon steps and both coordinates.
pub fn horizon_rmse(pred: &[[f64; 2]], truth: &[[f64; 2]]) -> f64 {
    let se: f64 = pred.iter().zip(truth).map(|(p, t)| (p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2)).sum();
    (se / (2 * pred.len()) as f64).sqrt()
}

fn run_task(net: &DropoutNet, cfg: &LabConfig, kind: StrategyKind, task: usize) -> Result<Vec<ResultRow>> {
    let mut burn: Vec<usize> = cfg.burn_in.clone();
    burn.sort_unstable();
    burn.dedup();
    let max_h = *cfg.horizon.iter().max().expect("validated nonempty");
    let ep = eval_episode(cfg, task, burn[burn.len() - 1] + max_h);
    let path = ep.joint_path();
    let pos = ep.positions();
    let model = KinematicsNet::new(net, cfg.encoding)?;
    let strategy = cfg.strategy(kind).with_seed(rng::derive_seed(cfg.seed, &[rng::tag::FILTER, task as u64]));
    let mut adapter = Adapter::new(strategy, model)?;
    let mut rows = Vec::new();
    let mut seen = 0;
    let mut adapt_ms = 0.0;
    for &b in &burn {
        let t = Instant::now();
        while seen < b {
            adapter.observe(path[seen], pos[seen])?;
            seen += 1;
        }
        adapt_ms += t.elapsed().as_secs_f64() * 1e3;
        let t = Instant::now();
        let pred: Vec<[f64; 2]> = path[b..b + max_h].iter().map(|&q| adapter.predict(q)).collect::<smcd_core::Result<_>>()?;
        let predict_ms = t.elapsed().as_secs_f64() * 1e3;
        for &h in &cfg.horizon {
            rows.push(ResultRow {
                strategy: cfg.strategy(kind).label(),
                burn_in: b,
                horizon: h,
                task_id: task,
                rmse: horizon_rmse(&pred[..h], &pos[b..b + h]),
                wall_time_ms: adapt_ms + predict_ms * h as f64 / max_h as f64,
            });
        }
    }
    Ok(rows)
}

/// Rows ordered by strategy (config order), task, burn-in, horizon.
pub fn lookahead_benchmark(net: &DropoutNet, cfg: &LabConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for &kind in &cfg.strategies {
        let per_task: Vec<Vec<ResultRow>> =
            (0..cfg.eval_tasks).into_par_iter().map(|t| run_task(net, cfg, kind, t)).collect::<Result<_>>()?;
        out.extend(per_task.into_iter().flatten());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: &'static str,
    pub burn_in: usize,
    pub horizon: usize,
    pub mean_rmse: f64,
    pub std_rmse: f64,
    pub tasks: usize,
}

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, usize, usize), (&'static str, Vec<f64>)> = BTreeMap::new();
    let mut order: Vec<&'static str> = Vec::new();
    for r in rows {
        if !order.contains(&r.strategy) {
            order.push(r.strategy);
        }
        let si = order.iter().position(|s| *s == r.strategy).unwrap();
        groups.entry((si, r.burn_in, r.horizon)).or_insert((r.strategy, Vec::new())).1.push(r.rmse);
    }
    groups
        .into_iter()
        .map(|((_, b, h), (s, v))| {
            let (mean, std) = mean_std(&v);
            SummaryRow { strategy: s, burn_in: b, horizon: h, mean_rmse: mean, std_rmse: std, tasks: v.len() }
        })
        .collect()
}

pub fn summary_fields(s: &SummaryRow) -> Vec<String> {
    vec![
        s.strategy.to_string(),
        s.burn_in.to_string(),
        s.horizon.to_string(),
        real(s.mean_rmse),
        real(s.std_rmse),
        s.tasks.to_string(),
    ]
}

pub const SUMMARY_HEADER: [&str; 6] = ["strategy", "burn_in", "horizon", "mean_rmse", "std_rmse", "tasks"];

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Per-task RMSE for one (strategy, burn-in, horizon) cell, by task id.
pub fn cell(rows: &[ResultRow], strategy: &str, burn_in: usize, horizon: usize) -> Vec<f64> {
    let mut v: Vec<(usize, f64)> = rows
        .iter()
        .filter(|r| r.strategy == strategy && r.burn_in == burn_in && r.horizon == horizon)
        .map(|r| (r.task_id, r.rmse))
        .collect();
    v.sort_by_key(|x| x.0);
    v.into_iter().map(|x| x.1).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTest {
    pub mean_diff: f64,
    pub t: f64,
    /// One-sided p-value for `mean(a − b) < 0`.
    pub p_less: f64,
}

/// Paired t-test on `a − b`.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<PairedTest> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(LabError::Config("paired test needs two equal samples of size >= 2".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, std) = mean_std(&d);
    let n = d.len() as f64;
    let t = if std > 0.0 { mean / (std / n.sqrt()) } else if mean < 0.0 { f64::NEG_INFINITY } else { f64::INFINITY };
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).map_err(|e| LabError::Config(e.to_string()))?;
    Ok(PairedTest { mean_diff: mean, t, p_less: dist.cdf(t) })
}

/// Mean wall time per filter step for each particle count, on one episode.
pub fn filter_step_timing(net: &DropoutNet, cfg: &LabConfig, particle_counts: &[usize], steps: usize) -> Result<Vec<(usize, f64)>> {
    let model = KinematicsNet::new(net, cfg.encoding)?;
    let ep = eval_episode(cfg, 0, steps);
    let (path, pos) = (ep.joint_path(), ep.positions());
    particle_counts
        .iter()
        .map(|&n| {
            let mut f = smcd_core::filter::SmcdFilter::init(smcd_core::filter::FilterConfig { n_particles: n, ..cfg.filter_config() }, net)?;
            let t = Instant::now();
            for (q, z) in path.iter().zip(&pos) {
                f.step(net, &model.observation(*q, *z))?;
            }
            Ok((n, t.elapsed().as_secs_f64() * 1e3 / steps as f64))
        })
        .collect()
}
