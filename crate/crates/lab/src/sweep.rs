//! Cross-product sweeps over scalar config keys.
//!
//! Each cell is a full config; its summary is cached under
//! `<dir>/cells/<hash>.csv` and its model under `<dir>/models`, so a rerun
//! skips finished cells. A failing cell is recorded and the sweep continues.

use std::path::Path;

use crate::bench::{self, SUMMARY_HEADER};
use crate::config::LabConfig;
use crate::error::{LabError, Result};
use crate::{formats, pipeline};

/// List-valued keys; every other key of [`LabConfig`] can be swept.
const LIST_KEYS: &[&str] = &["burn_in", "horizon", "strategies", "bank_k"];

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<String>,
}

impl Axis {
    /// `key=v1,v2,...`
    pub fn parse(spec: &str) -> Result<Self> {
        let (k, v) = spec.split_once('=').ok_or_else(|| LabError::Config(format!("grid axis {spec:?}: expected key=v1,v2")))?;
        let key = k.trim().to_string();
        if LIST_KEYS.contains(&key.as_str()) {
            return Err(LabError::Config(format!("{key} is list-valued and cannot be swept")));
        }
        let values: Vec<String> = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        if values.is_empty() {
            return Err(LabError::Config(format!("grid axis {key} has no values")));
        }
        Ok(Self { key, values })
    }
}

/// All cells of the grid in row-major order (last axis fastest).
pub fn cells(base: &LabConfig, axes: &[Axis]) -> Result<Vec<(Vec<String>, LabConfig)>> {
    let mut out = vec![(Vec::new(), base.clone())];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.values.len());
        for (labels, cfg) in &out {
            for v in &axis.values {
                let mut c = cfg.clone();
                c.set(&axis.key, v)?;
                c.validate()?;
                let mut l = labels.clone();
                l.push(v.clone());
                next.push((l, c));
            }
        }
        out = next;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub labels: Vec<String>,
    pub hash: String,
    pub cached: bool,
    /// Summary rows, or the error message of a failed cell.
    pub result: std::result::Result<Vec<Vec<String>>, String>,
}

fn read_cell(path: &Path) -> Result<Vec<Vec<String>>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records().map(|rec| Ok(rec?.iter().map(str::to_string).collect())).collect()
}

fn run_cell(dir: &Path, cfg: &LabConfig) -> Result<Vec<Vec<String>>> {
    let net = pipeline::load_or_train(&dir.join("models"), cfg)?;
    let rows = bench::lookahead_benchmark(&net, cfg)?;
    Ok(bench::summarize(&rows).iter().map(bench::summary_fields).collect())
}

pub fn run(dir: &Path, base: &LabConfig, axes: &[Axis]) -> Result<Vec<CellOutcome>> {
    std::fs::create_dir_all(dir.join("cells")).map_err(|e| LabError::io(dir, e))?;
    std::fs::create_dir_all(dir.join("models")).map_err(|e| LabError::io(dir, e))?;
    let mut out = Vec::new();
    for (labels, cfg) in cells(base, axes)? {
        let hash = cfg.full_hash()[..16].to_string();
        let path = dir.join("cells").join(format!("{hash}.csv"));
        if path.exists() {
            out.push(CellOutcome { labels, hash, cached: true, result: Ok(read_cell(&path)?) });
            continue;
        }
        match run_cell(dir, &cfg) {
            Ok(rows) => {
                let tmp = path.with_extension("tmp");
                formats::write_table(&tmp, &SUMMARY_HEADER, &rows)?;
                std::fs::rename(&tmp, &path).map_err(|e| LabError::io(&path, e))?;
                out.push(CellOutcome { labels, hash, cached: false, result: Ok(rows) });
            }
            Err(e) => {
                log::warn!("sweep cell {labels:?} failed: {e}");
                out.push(CellOutcome { labels, hash, cached: false, result: Err(e.to_string()) });
            }
        }
    }
    Ok(out)
}

/// One row per summary row of every cell, prefixed by the axis values.
pub fn table(axes: &[Axis], outcomes: &[CellOutcome]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header: Vec<String> = axes.iter().map(|a| a.key.clone()).collect();
    header.push("cell".into());
    header.extend(SUMMARY_HEADER.iter().map(|s| s.to_string()));
    header.push("error".into());
    let mut rows = Vec::new();
    for o in outcomes {
        let mut prefix = o.labels.clone();
        prefix.push(o.hash.clone());
        match &o.result {
            Ok(summary) => {
                for s in summary {
                    let mut r = prefix.clone();
                    r.extend(s.iter().cloned());
                    r.push(String::new());
                    rows.push(r);
                }
            }
            Err(msg) => {
                let mut r = prefix;
                r.extend(std::iter::repeat_n(String::new(), SUMMARY_HEADER.len()));
                r.push(msg.clone());
                rows.push(r);
            }
        }
    }
    (header, rows)
}
