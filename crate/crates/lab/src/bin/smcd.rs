use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use smcd_lab::config::LabConfig;
use smcd_lab::formats::{self, real};
use smcd_lab::{bench, control_run, interp, pipeline, sweep};

/// Dropout-mask particle filtering lab: data, training, look-ahead
/// benchmark, closed-loop control, mask interpretability and sweeps.
///
/// Every subcommand reads an optional key=value config file; `--set` and
/// dedicated flags override it. `SMCD_THREADS` caps the worker pool.
#[derive(Parser)]
#[command(name = "smcd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// key=value config file
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one config key (repeatable), e.g. --set sigma=0.1
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a multi-task babbling dataset (CSV, or binary for .bin)
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tasks: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a dropout network and write a checkpoint
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset to train on; generated from the config when omitted
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss CSV
        #[arg(long)]
        loss_out: Option<PathBuf>,
    },
    /// Look-ahead prediction benchmark over the burn-in and horizon grids
    EvalLookahead {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        eval_tasks: Option<usize>,
        #[arg(long)]
        particles: Option<usize>,
        /// Per-task result rows
        #[arg(long)]
        out: PathBuf,
        /// Mean RMSE per strategy, burn-in and horizon
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Record wall times (makes the output differ between runs)
        #[arg(long)]
        timing: bool,
    },
    /// Track a moving target with the PD controller for each strategy
    Control {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        /// Late-window tracking error per strategy
        #[arg(long)]
        out: PathBuf,
        /// Directory for per-strategy traces (control-<label>.csv)
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Build a mask bank and score link-length retrieval
    Interpret {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        bank_tasks: Option<usize>,
        /// Mask bank CSV
        #[arg(long)]
        out: PathBuf,
        /// Top-k accuracy against permutation chance
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Per-step mask trace of the first bank task
        #[arg(long)]
        mask_trace: Option<PathBuf>,
    },
    /// Cross-product sweep with per-cell caching
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Axis as key=v1,v2 (repeatable)
        #[arg(long = "grid", value_name = "KEY=V1,V2", required = true)]
        grid: Vec<String>,
        /// Cache directory for models and finished cells
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(common: &Common, flags: &[(&str, Option<String>)]) -> anyhow::Result<LabConfig> {
    let mut cfg = match &common.config {
        Some(p) => LabConfig::from_file(p)?,
        None => LabConfig::default(),
    };
    for kv in &common.overrides {
        let Some((k, v)) = kv.split_once('=') else {
            bail!("--set expects KEY=VALUE, got {kv:?}");
        };
        cfg.set(k.trim(), v.trim())?;
    }
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn opt<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(T::to_string)
}

fn load_model(path: &Path, cfg: &LabConfig) -> anyhow::Result<smcd_core::net::DropoutNet> {
    let net = formats::load_checkpoint(path).with_context(|| format!("loading model {}", path.display()))?;
    if net.input_dim() != cfg.encoding.dim() || net.output_dim() != 2 {
        bail!("model {} has shape {:?}, which does not match the configured encoding", path.display(), net.layer_sizes());
    }
    Ok(net)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData { common, tasks, episodes, steps, out } => {
            let cfg = load_config(&common, &[("tasks", opt(&tasks)), ("episodes", opt(&episodes)), ("steps", opt(&steps))])?;
            let records = pipeline::with_pool(|| pipeline::generate_data(&cfg))?;
            if out.extension().is_some_and(|e| e == "bin") {
                formats::write_dataset_bin(&out, &records)?;
            } else {
                formats::write_dataset_csv(&out, &records)?;
            }
            log::info!("wrote {} records to {}", records.len(), out.display());
        }
        Command::Train { common, data, hidden, epochs, out, loss_out } => {
            let cfg = load_config(&common, &[("hidden", opt(&hidden)), ("epochs", opt(&epochs))])?;
            let records = match &data {
                Some(p) => formats::read_dataset(p)?,
                None => pipeline::with_pool(|| pipeline::generate_data(&cfg))?,
            };
            let (net, report) = pipeline::train_on(&cfg, &records)?;
            formats::save_checkpoint(&out, &net)?;
            if let Some(p) = loss_out {
                let mut rows = vec![vec!["0".to_string(), real(report.initial_loss)]];
                rows.extend(report.epoch_losses.iter().enumerate().map(|(i, l)| vec![(i + 1).to_string(), real(*l)]));
                formats::write_table(&p, &["epoch", "loss"], &rows)?;
            }
            log::info!("loss {:.5} -> {:.5}", report.initial_loss, report.final_loss());
        }
        Command::EvalLookahead { common, model, eval_tasks, particles, out, summary, timing } => {
            let cfg = load_config(&common, &[("eval_tasks", opt(&eval_tasks)), ("particles", opt(&particles))])?;
            let net = load_model(&model, &cfg)?;
            let rows = pipeline::with_pool(|| bench::lookahead_benchmark(&net, &cfg))?;
            let fields: Vec<Vec<String>> = rows.iter().map(|r| r.fields(timing)).collect();
            formats::write_table(&out, &formats::RESULT_HEADER, &fields)?;
            if let Some(p) = summary {
                let s: Vec<Vec<String>> = bench::summarize(&rows).iter().map(bench::summary_fields).collect();
                formats::write_table(&p, &bench::SUMMARY_HEADER, &s)?;
            }
        }
        Command::Control { common, model, episodes, out, traces } => {
            let cfg = load_config(&common, &[("control_episodes", opt(&episodes))])?;
            let net = load_model(&model, &cfg)?;
            let mut all = Vec::new();
            for &kind in &cfg.strategies {
                all.push(pipeline::with_pool(|| control_run::run_strategy(&net, &cfg, kind))?);
            }
            all.push(pipeline::with_pool(|| control_run::run_analytic(&cfg))?);
            let mut rows = Vec::new();
            if let Some(dir) = &traces {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            for s in &all {
                if let Some(dir) = &traces {
                    let path = dir.join(format!("control-{}.csv", s.label.replace('+', "")));
                    let refs: Vec<(u64, &smcd_core::control::ControlTrace)> = s.traces.iter().map(|(k, t)| (*k, t)).collect();
                    formats::write_control_traces(&path, &refs)?;
                }
                rows.push(control_run::summary_fields(s));
            }
            formats::write_table(&out, &control_run::SUMMARY_HEADER, &rows)?;
        }
        Command::Interpret { common, model, bank_tasks, out, summary, mask_trace } => {
            let cfg = load_config(&common, &[("bank_tasks", opt(&bank_tasks))])?;
            let net = load_model(&model, &cfg)?;
            let bank = pipeline::with_pool(|| interp::build_bank(&net, &cfg))?;
            formats::write_bank(&out, &bank)?;
            if let Some(p) = summary {
                let rows: Vec<Vec<String>> = interp::topk_table(&bank, &cfg)?.iter().map(interp::topk_fields).collect();
                formats::write_table(&p, &interp::TOPK_HEADER, &rows)?;
            }
            if let Some(p) = mask_trace {
                formats::write_mask_trace(&p, &interp::mask_trace(&net, &cfg, 0)?)?;
            }
        }
        Command::Sweep { common, grid, dir, out } => {
            let cfg = load_config(&common, &[])?;
            let axes: Vec<sweep::Axis> = grid.iter().map(|g| sweep::Axis::parse(g)).collect::<Result<_, _>>()?;
            let outcomes = pipeline::with_pool(|| sweep::run(&dir, &cfg, &axes))?;
            let (header, rows) = sweep::table(&axes, &outcomes);
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            formats::write_table(&out, &header, &rows)?;
            let failed = outcomes.iter().filter(|o| o.result.is_err()).count();
            if failed > 0 {
                log::warn!("{failed} of {} sweep cells failed", outcomes.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help and version exit 0, usage errors exit 2
            e.exit();
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
