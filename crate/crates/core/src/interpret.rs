//! Mask interpretability: nearest-mask retrieval, the distance-weighted
//! confidence score and top-k link-length retrieval accuracy.
//!
//! Masks are compared as fractional MMSE estimates under the Euclidean norm.
//! Equal distances are ordered by bank index.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::arm::{self, InputEncoding, LinkLengths};
use crate::baselines::KinematicsNet;
use crate::filter::{FilterConfig, SmcdFilter, StepReport};
use crate::net::DropoutNet;
use crate::rng::{self, SmcdRng};
use crate::{Error, Result};

/// Regime label for a link configuration: 0 for `l₂ < 1`, 1 otherwise.
pub fn link_bucket(links: LinkLengths) -> u32 {
    u32::from(links.l2 >= 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskBankEntry {
    pub task_id: usize,
    pub links: LinkLengths,
    pub label: u32,
    pub burn_in: usize,
    pub seed: u64,
    pub mask: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BankConfig {
    pub filter: FilterConfig,
    pub burn_in: usize,
    pub seed: u64,
    /// Every task sees the same babbling actions and the same filter random
    /// stream, so masks differ only through the link lengths.
    pub common_random_numbers: bool,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self { filter: FilterConfig::default(), burn_in: 20, seed: 0, common_random_numbers: true }
    }
}

impl BankConfig {
    pub fn task_seed(&self, task_id: usize) -> u64 {
        if self.common_random_numbers {
            self.seed
        } else {
            rng::derive_seed(self.seed, &[rng::tag::BANK, task_id as u64])
        }
    }
}

/// Runs the mask filter for `burn_in` babbling observations of one task and
/// returns its final MMSE mask.
pub fn bank_entry(
    net: &DropoutNet,
    encoding: InputEncoding,
    task_id: usize,
    links: LinkLengths,
    cfg: &BankConfig,
) -> Result<MaskBankEntry> {
    bank_entry_with(net, encoding, task_id, links, cfg, |_, _, _| {})
}

/// [`bank_entry`] with a callback after every filter step.
pub fn bank_entry_with<F: FnMut(usize, &StepReport, &SmcdFilter)>(
    net: &DropoutNet,
    encoding: InputEncoding,
    task_id: usize,
    links: LinkLengths,
    cfg: &BankConfig,
    mut on_step: F,
) -> Result<MaskBankEntry> {
    let model = KinematicsNet::new(net, encoding)?;
    let seed = cfg.task_seed(task_id);
    let mut filter = SmcdFilter::init(FilterConfig { seed, ..cfg.filter }, net)?;
    let episode = arm::babbling_episode(links, seed, cfg.burn_in);
    for (k, (q, z)) in episode.joint_path().into_iter().zip(episode.positions()).enumerate() {
        let report = filter.step(net, &model.observation(q, z))?;
        on_step(k, &report, &filter);
    }
    Ok(MaskBankEntry {
        task_id,
        links,
        label: link_bucket(links),
        burn_in: cfg.burn_in,
        seed,
        mask: filter.mmse_mask(),
    })
}

pub fn build_mask_bank(
    net: &DropoutNet,
    encoding: InputEncoding,
    tasks: &[LinkLengths],
    cfg: &BankConfig,
) -> Result<Vec<MaskBankEntry>> {
    tasks.iter().enumerate().map(|(i, &l)| bank_entry(net, encoding, i, l, cfg)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

pub fn mask_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn sort_neighbors(v: &mut [Neighbor]) {
    v.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index)));
}

fn nearest_by<F: Fn(usize) -> f64>(n: usize, k: usize, skip: Option<usize>, dist: F) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> =
        (0..n).filter(|&j| Some(j) != skip).map(|j| Neighbor { index: j, distance: dist(j) }).collect();
    if k < all.len() {
        all.select_nth_unstable_by(k, |a, b| a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index)));
        all.truncate(k);
    }
    sort_neighbors(&mut all);
    all
}

fn check_query(query: &[f64], bank: &[MaskBankEntry]) -> Result<()> {
    if bank.is_empty() {
        return Err(Error::EmptyInput("mask bank"));
    }
    for e in bank {
        Error::check_len("bank mask", query.len(), e.mask.len())?;
    }
    Ok(())
}

/// The `k` bank entries nearest to `query`, ascending by distance.
pub fn knn_masks(query: &[f64], bank: &[MaskBankEntry], k: usize) -> Result<Vec<Neighbor>> {
    check_query(query, bank)?;
    if k > bank.len() {
        return Err(Error::config("k exceeds the mask bank size"));
    }
    Ok(nearest_by(bank.len(), k, None, |j| mask_distance(query, &bank[j].mask)))
}

/// `Σ_{cʲ=ĉ} e^{−dⱼ} / Σ e^{−dⱼ}` over neighbors with distances `dⱼ` and
/// labels `cʲ`.
pub fn score_neighbors(neighbors: &[(f64, u32)], label: u32) -> f64 {
    let Some(dmin) = neighbors.iter().map(|n| n.0).min_by(f64::total_cmp) else {
        return 0.0;
    };
    let (mut hit, mut total) = (0.0, 0.0);
    for &(d, c) in neighbors {
        // shifting by the smallest distance cancels in the ratio
        let w = libm::exp(-(d - dmin));
        total += w;
        if c == label {
            hit += w;
        }
    }
    hit / total
}

/// Confidence that `query` carries `label`, from its `k` nearest masks.
/// `k` is capped at the bank size.
pub fn confidence_score(query: &[f64], bank: &[MaskBankEntry], k: usize, label: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::config("k must be at least 1"));
    }
    let nn = knn_masks(query, bank, k.min(bank.len()))?;
    let pairs: Vec<(f64, u32)> = nn.iter().map(|n| (n.distance, bank[n.index].label)).collect();
    Ok(score_neighbors(&pairs, label))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceResult {
    pub label: u32,
    pub score: f64,
    pub neighbors: Vec<Neighbor>,
    pub neighbor_labels: Vec<u32>,
}

/// Assigns the label with the highest confidence among the `k` nearest
/// masks; ties go to the smaller label.
pub fn classify(query: &[f64], bank: &[MaskBankEntry], k: usize) -> Result<ConfidenceResult> {
    if k == 0 {
        return Err(Error::config("k must be at least 1"));
    }
    let neighbors = knn_masks(query, bank, k.min(bank.len()))?;
    let neighbor_labels: Vec<u32> = neighbors.iter().map(|n| bank[n.index].label).collect();
    let pairs: Vec<(f64, u32)> = neighbors.iter().zip(&neighbor_labels).map(|(n, &c)| (n.distance, c)).collect();
    let mut candidates = neighbor_labels.clone();
    candidates.sort_unstable();
    candidates.dedup();
    let (mut label, mut score) = (candidates[0], f64::NEG_INFINITY);
    for c in candidates {
        let s = score_neighbors(&pairs, c);
        if s > score {
            (label, score) = (c, s);
        }
    }
    Ok(ConfidenceResult { label, score, neighbors, neighbor_labels })
}

fn link_distance(a: LinkLengths, b: LinkLengths) -> f64 {
    libm::hypot(a.l1 - b.l1, a.l2 - b.l2)
}

/// Leave-one-out frequency with which an entry's nearest neighbor in link
/// space is among its `k` nearest neighbors in mask space.
pub fn topk_link_accuracy(bank: &[MaskBankEntry], k: usize) -> Result<f64> {
    let links: Vec<LinkLengths> = bank.iter().map(|e| e.links).collect();
    topk_with_links(bank, &links, k)
}

fn topk_with_links(bank: &[MaskBankEntry], links: &[LinkLengths], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::config("k must be at least 1"));
    }
    if bank.len() < k + 1 {
        return Err(Error::config("mask bank must hold at least k + 1 entries"));
    }
    check_query(&bank[0].mask, bank)?;
    let n = bank.len();
    let mut hits = 0usize;
    for i in 0..n {
        let target = nearest_by(n, 1, Some(i), |j| link_distance(links[i], links[j]))[0].index;
        let nn = nearest_by(n, k, Some(i), |j| mask_distance(&bank[i].mask, &bank[j].mask));
        if nn.iter().any(|m| m.index == target) {
            hits += 1;
        }
    }
    Ok(hits as f64 / n as f64)
}

/// Mean top-k accuracy after randomly reassigning link lengths to masks,
/// over `permutations` shuffles. Near `k / (B − 1)` for a bank of size `B`.
pub fn permutation_chance(bank: &[MaskBankEntry], k: usize, permutations: usize, rng: &mut SmcdRng) -> Result<f64> {
    if permutations == 0 {
        return Err(Error::config("need at least one permutation"));
    }
    let mut links: Vec<LinkLengths> = bank.iter().map(|e| e.links).collect();
    let mut acc = 0.0;
    for _ in 0..permutations {
        links.shuffle(rng);
        acc += topk_with_links(bank, &links, k)?;
    }
    Ok(acc / permutations as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};

    fn entry(i: usize, mask: Vec<f64>, links: LinkLengths, label: u32) -> MaskBankEntry {
        MaskBankEntry { task_id: i, links, label, burn_in: 0, seed: 0, mask }
    }

    fn line_bank(n: usize) -> Vec<MaskBankEntry> {
        // link configurations on a line with mask distance proportional to link distance
        (0..n)
            .map(|i| {
                let t = (i * i) as f64 * 0.01;
                entry(i, vec![t, 2.0 * t], LinkLengths::new(1.0 + t, 1.0), (i % 2) as u32)
            })
            .collect()
    }

    #[test]
    fn confidence_examples() {
        let bank = vec![
            entry(0, vec![0.0, 0.0], LinkLengths::new(1.0, 1.0), 1),
            entry(1, vec![core::f64::consts::LN_2, 0.0], LinkLengths::new(1.0, 1.0), 0),
        ];
        assert_eq!(confidence_score(&[0.0, 0.0], &bank[..1], 1, 1).unwrap(), 1.0);
        assert_eq!(confidence_score(&[0.0, 0.0], &bank[..1], 1, 0).unwrap(), 0.0);
        assert_eq!(confidence_score(&[0.0, 0.0], &bank, 2, 1).unwrap(), 2.0 / 3.0);
        assert_eq!(score_neighbors(&[(0.0, 7), (core::f64::consts::LN_2, 3)], 7), 2.0 / 3.0);
    }

    #[test]
    fn scores_over_present_labels_sum_to_one() {
        let pairs = [(0.3, 0), (0.9, 1), (1.4, 2), (0.5, 1)];
        let s: f64 = (0..3).map(|c| score_neighbors(&pairs, c)).sum();
        assert!((s - 1.0).abs() < 1e-15);
        // far-away neighbors do not underflow to 0/0
        assert_eq!(score_neighbors(&[(1e4, 0), (1e4, 1)], 0), 0.5);
    }

    #[test]
    fn classify_picks_weighted_majority() {
        let l = LinkLengths::new(1.0, 1.0);
        let bank = vec![entry(0, vec![0.0], l, 4), entry(1, vec![0.5], l, 2), entry(2, vec![0.6], l, 2)];
        let r = classify(&[0.0], &bank, 3).unwrap();
        // e⁰ = 1 vs e^{-0.5} + e^{-0.6} ≈ 1.155
        assert_eq!(r.label, 2);
        assert_eq!(r.neighbor_labels, vec![4, 2, 2]);
        assert!(r.score > 0.5 && r.score < 1.0);
    }

    #[test]
    fn knn_self_first_and_full_sort() {
        let bank = line_bank(6);
        let nn = knn_masks(&bank[3].mask, &bank, 6).unwrap();
        assert_eq!(nn[0], Neighbor { index: 3, distance: 0.0 });
        assert!(nn.windows(2).all(|w| w[0].distance <= w[1].distance));
        assert_eq!(nn.len(), 6);
    }

    #[test]
    fn knn_ties_by_index() {
        let l = LinkLengths::new(1.0, 1.0);
        let bank: Vec<_> = (0..5).map(|i| entry(i, vec![if i % 2 == 0 { 1.0 } else { -1.0 }], l, 0)).collect();
        let idx: Vec<usize> = knn_masks(&[0.0], &bank, 4).unwrap().iter().map(|n| n.index).collect();
        assert_eq!(idx, vec![0, 1, 2, 3]);
    }

    #[test]
    fn knn_errors() {
        assert!(matches!(knn_masks(&[0.0], &[], 1), Err(Error::EmptyInput(_))));
        let bank = line_bank(3);
        assert!(knn_masks(&[0.0, 0.0], &bank, 4).is_err());
        assert!(knn_masks(&[0.0], &bank, 1).is_err());
    }

    #[test]
    fn consistent_ordering_gives_perfect_accuracy() {
        let bank = line_bank(30);
        for k in 1..10 {
            assert_eq!(topk_link_accuracy(&bank, k).unwrap(), 1.0);
        }
        assert!(topk_link_accuracy(&bank, 30).is_err());
    }

    #[test]
    fn chance_level_matches_k_over_b_minus_one() {
        let mut rng = SmcdRng::seed_from_u64(8);
        let bank: Vec<_> = (0..60)
            .map(|i| {
                let m = (0..4).map(|_| rng.gen::<f64>()).collect();
                entry(i, m, LinkLengths::new(rng.gen_range(0.5..1.5), rng.gen_range(0.5..1.5)), 0)
            })
            .collect();
        let chance = permutation_chance(&bank, 10, 200, &mut rng).unwrap();
        assert!((chance - 10.0 / 59.0).abs() < 0.02, "{chance}");
    }

    #[test]
    fn accuracy_nondecreasing_in_k() {
        let mut rng = SmcdRng::seed_from_u64(2);
        let bank: Vec<_> = (0..40)
            .map(|i| {
                let m = (0..3).map(|_| rng.gen::<f64>()).collect();
                entry(i, m, LinkLengths::new(rng.gen(), rng.gen()), 0)
            })
            .collect();
        let acc: Vec<f64> = (1..20).map(|k| topk_link_accuracy(&bank, k).unwrap()).collect();
        assert!(acc.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn bank_is_reproducible_and_in_range() {
        let mut rng = SmcdRng::seed_from_u64(1);
        let net = DropoutNet::new(&[2, 16, 2], 0.5, &mut rng).unwrap();
        let tasks = [LinkLengths::new(1.0, 0.8), LinkLengths::new(1.3, 1.1)];
        let cfg = BankConfig {
            filter: FilterConfig { n_particles: 32, ..Default::default() },
            burn_in: 5,
            ..Default::default()
        };
        let a = build_mask_bank(&net, InputEncoding::Raw, &tasks, &cfg).unwrap();
        let b = build_mask_bank(&net, InputEncoding::Raw, &tasks, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].label, 0);
        assert_eq!(a[1].label, 1);
        assert!(a.iter().flat_map(|e| &e.mask).all(|&m| (0.0..=1.0).contains(&m)));
        assert!(build_mask_bank(&net, InputEncoding::Raw, &[], &cfg).unwrap().is_empty());
    }
}
