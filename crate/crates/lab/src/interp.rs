//! Mask bank construction and the link-length retrieval study.

use rayon::prelude::*;
use smcd_core::arm::{self, LinkLengths};
use smcd_core::interpret::{self, MaskBankEntry};
use smcd_core::net::DropoutNet;
use smcd_core::rng;

use crate::config::LabConfig;
use crate::error::Result;
use crate::formats::real;

pub fn bank_links(cfg: &LabConfig) -> Vec<LinkLengths> {
    (0..cfg.bank_tasks)
        .map(|i| {
            let mut r = rng::stream(cfg.seed, &[rng::tag::BANK, i as u64, 1]);
            arm::draw_links(cfg.link_mean, cfg.link_std, &mut r)
        })
        .collect()
}

pub fn build_bank(net: &DropoutNet, cfg: &LabConfig) -> Result<Vec<MaskBankEntry>> {
    let bank_cfg = cfg.bank_config();
    bank_links(cfg)
        .into_par_iter()
        .enumerate()
        .map(|(i, l)| Ok(interpret::bank_entry(net, cfg.encoding, i, l, &bank_cfg)?))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopKRow {
    pub k: usize,
    pub accuracy: f64,
    pub chance: f64,
}

pub const TOPK_HEADER: [&str; 4] = ["k", "accuracy", "chance", "ratio"];

pub fn topk_table(bank: &[MaskBankEntry], cfg: &LabConfig) -> Result<Vec<TopKRow>> {
    cfg.bank_k
        .iter()
        .map(|&k| {
            let mut r = rng::stream(cfg.seed, &[rng::tag::BANK, k as u64, 2]);
            Ok(TopKRow {
                k,
                accuracy: interpret::topk_link_accuracy(bank, k)?,
                chance: interpret::permutation_chance(bank, k, cfg.permutations, &mut r)?,
            })
        })
        .collect()
}

pub fn topk_fields(r: &TopKRow) -> Vec<String> {
    vec![r.k.to_string(), real(r.accuracy), real(r.chance), real(r.accuracy / r.chance)]
}

/// Leave-one-out confidence for the true regime label of every entry.
pub fn mean_confidence(bank: &[MaskBankEntry], k: usize) -> Result<f64> {
    let mut total = 0.0;
    for (i, e) in bank.iter().enumerate() {
        let rest: Vec<MaskBankEntry> = bank.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| x.clone()).collect();
        total += interpret::confidence_score(&e.mask, &rest, k, e.label)?;
    }
    Ok(total / bank.len() as f64)
}

/// Per-step `(step, N_eff, MMSE mask)` of the bank run for one task.
pub fn mask_trace(net: &DropoutNet, cfg: &LabConfig, task: usize) -> Result<Vec<(usize, f64, Vec<f64>)>> {
    let links = bank_links(cfg)[task];
    let mut out = Vec::new();
    interpret::bank_entry_with(net, cfg.encoding, task, links, &cfg.bank_config(), |k, report, filter| {
        out.push((k, report.n_eff, filter.mmse_mask()));
    })?;
    Ok(out)
}
