//! Data generation, training and model caching.

use std::path::{Path, PathBuf};

use smcd_core::arm::{self, TrajectoryRecord};
use smcd_core::net::{DropoutNet, TrainReport};
use smcd_core::rng;

use crate::config::LabConfig;
use crate::error::Result;
use crate::formats;

/// Tasks are generated independently, so this parallelizes over them.
pub fn generate_data(cfg: &LabConfig) -> Result<Vec<TrajectoryRecord>> {
    use rayon::prelude::*;
    let spec = cfg.dataset_spec();
    spec.validate()?;
    let per_task: Vec<Vec<TrajectoryRecord>> =
        (0..spec.n_tasks).into_par_iter().map(|t| arm::generate_task(&spec, t)).collect();
    Ok(per_task.into_iter().flatten().collect())
}

pub fn train_on(cfg: &LabConfig, records: &[TrajectoryRecord]) -> Result<(DropoutNet, TrainReport)> {
    let samples = arm::to_samples(records, cfg.encoding);
    let mut init = rng::stream(cfg.seed, &[rng::tag::INIT]);
    let net = DropoutNet::new(&cfg.layer_sizes(), cfg.dropout_p, &mut init)?.with_mask_scope(cfg.mask_scope())?;
    Ok(net.train(&samples, &cfg.train_config())?)
}

pub fn train(cfg: &LabConfig) -> Result<(DropoutNet, TrainReport)> {
    train_on(cfg, &generate_data(cfg)?)
}

pub fn model_cache_path(dir: &Path, cfg: &LabConfig) -> PathBuf {
    dir.join(format!("model-{}.ckpt", &cfg.model_hash()[..16]))
}

/// Loads the model for `cfg` from `dir`, training and storing it on a miss.
pub fn load_or_train(dir: &Path, cfg: &LabConfig) -> Result<DropoutNet> {
    let path = model_cache_path(dir, cfg);
    if path.exists() {
        log::info!("model cache hit {}", path.display());
        return formats::load_checkpoint(&path);
    }
    let (net, report) = train(cfg)?;
    log::info!("trained {:?}: loss {:.4} -> {:.4}", cfg.layer_sizes(), report.initial_loss, report.final_loss());
    // write then rename so an interrupted run never leaves a partial file
    let tmp = path.with_extension("tmp");
    formats::save_checkpoint(&tmp, &net)?;
    std::fs::rename(&tmp, &path).map_err(|e| crate::LabError::io(&path, e))?;
    Ok(net)
}

/// Runs `f` on a rayon pool capped by `SMCD_THREADS` when set.
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let threads = std::env::var("SMCD_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0);
    match threads.and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}
