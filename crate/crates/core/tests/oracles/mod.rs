//! Independent reference computations used by the integration tests and the
//! acceptance suite. Nothing here calls the code under test except to read
//! network parameters.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use smcd_core::filter::{FilterConfig, Observation, SmcdFilter};
use smcd_core::linalg::Matrix;
use smcd_core::net::{Dense, DropoutNet, MaskParticle};
use smcd_core::rng::SmcdRng;

/// Plain forward pass with explicit per-hidden-unit multipliers (`None` for
/// the mean network). Returns the output and every hidden pre-activation.
pub fn reference_forward(net: &DropoutNet, x: &[f64], gates: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
    let layers = net.layers();
    let mut a = x.to_vec();
    let mut pre = Vec::new();
    let mut offset = 0;
    for (li, layer) in layers.iter().enumerate() {
        let z: Vec<f64> = (0..layer.out_dim())
            .map(|r| layer.bias[r] + (0..layer.in_dim()).map(|c| layer.weights[(r, c)] * a[c]).sum::<f64>())
            .collect();
        if li + 1 == layers.len() {
            return (z, pre);
        }
        pre.extend_from_slice(&z);
        a = z
            .iter()
            .enumerate()
            .map(|(j, &v)| v.max(0.0) * gates.map_or(1.0, |g| g[offset + j]))
            .collect();
        offset += layer.out_dim();
    }
    unreachable!()
}

pub fn gates_of(net: &DropoutNet, mask: &MaskParticle) -> Vec<f64> {
    mask.iter().map(|b| if b { 1.0 / net.keep_prob() } else { 0.0 }).collect()
}

pub fn random_net(sizes: &[usize], p: f64, rng: &mut SmcdRng) -> DropoutNet {
    let layers = sizes
        .windows(2)
        .map(|w| {
            let data = (0..w[0] * w[1]).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Dense { weights: Matrix::from_vec(w[1], w[0], data), bias: (0..w[1]).map(|_| rng.gen_range(-0.5..0.5)).collect() }
        })
        .collect();
    DropoutNet::from_layers(layers, p).unwrap()
}

/// `(1 / (B · out)) Σ (f(x) − t)²` with per-row gates.
pub fn reference_loss(net: &DropoutNet, inputs: &[f64], targets: &[f64], batch: usize, gates: Option<&[f64]>) -> f64 {
    let (ni, no, d) = (net.input_dim(), net.output_dim(), net.mask_len());
    let mut s = 0.0;
    for b in 0..batch {
        let g = gates.map(|g| &g[b * d..(b + 1) * d]);
        let (y, _) = reference_forward(net, &inputs[b * ni..(b + 1) * ni], g);
        s += y.iter().zip(&targets[b * no..(b + 1) * no]).map(|(y, t)| (y - t) * (y - t)).sum::<f64>();
    }
    s / (batch * no) as f64
}

/// Smallest |pre-activation| over a batch: the distance to a ReLU kink.
pub fn kink_margin(net: &DropoutNet, inputs: &[f64], batch: usize) -> f64 {
    let ni = net.input_dim();
    (0..batch)
        .flat_map(|b| reference_forward(net, &inputs[b * ni..(b + 1) * ni], None).1)
        .fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Weights of layer `li` in row-major order, then its biases.
fn param_mut(net: &mut DropoutNet, li: usize, i: usize) -> &mut f64 {
    let l = &mut net.layers_mut()[li];
    let nw = l.weights.as_slice().len();
    if i < nw {
        &mut l.weights.as_mut_slice()[i]
    } else {
        &mut l.bias[i - nw]
    }
}

/// Worst relative error between the analytic parameter gradient and
/// central differences of [`reference_loss`].
pub fn gradient_fd_error(net: &DropoutNet, inputs: &[f64], targets: &[f64], batch: usize, gates: Option<&[f64]>, h: f64) -> f64 {
    let (_, grads) = net.loss_and_gradient(inputs, targets, batch, gates).unwrap();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for li in 0..net.layers().len() {
        let nw = net.layers()[li].weights.as_slice().len();
        for i in 0..nw + net.layers()[li].bias.len() {
            let orig = *param_mut(&mut probe, li, i);
            *param_mut(&mut probe, li, i) = orig + h;
            let up = reference_loss(&probe, inputs, targets, batch, gates);
            *param_mut(&mut probe, li, i) = orig - h;
            let down = reference_loss(&probe, inputs, targets, batch, gates);
            *param_mut(&mut probe, li, i) = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = if i < nw { grads.weights[li].as_slice()[i] } else { grads.biases[li][i - nw] };
            worst = worst.max(rel_err(analytic, numeric, 1e-6));
        }
    }
    worst
}

/// Worst absolute and relative error of the input Jacobian against central
/// differences of [`reference_forward`].
pub fn jacobian_fd_error(net: &DropoutNet, x: &[f64], mask: Option<&MaskParticle>, h: f64) -> (f64, f64) {
    let gate = match mask {
        Some(m) => smcd_core::net::Gate::Binary(m),
        None => smcd_core::net::Gate::Mean,
    };
    let gates = mask.map(|m| gates_of(net, m));
    let jac = net.input_jacobian(x, gate).unwrap();
    let (mut abs, mut rel): (f64, f64) = (0.0, 0.0);
    for c in 0..x.len() {
        let mut xp = x.to_vec();
        xp[c] += h;
        let up = reference_forward(net, &xp, gates.as_deref()).0;
        xp[c] -= 2.0 * h;
        let down = reference_forward(net, &xp, gates.as_deref()).0;
        for r in 0..up.len() {
            let numeric = (up[r] - down[r]) / (2.0 * h);
            abs = abs.max((jac[(r, c)] - numeric).abs());
            rel = rel.max(rel_err(jac[(r, c)], numeric, 1e-6));
        }
    }
    (abs, rel)
}

/// Exact Bayes filter over all `2^D` masks with a Bernoulli(keep) prior,
/// independent bit flips with probability `d` and an isotropic Gaussian
/// likelihood. Transition first, then reweight, as in a bootstrap filter.
pub struct ExactMaskPosterior {
    pub d_bits: usize,
    pub probs: Vec<f64>,
    flip: f64,
}

impl ExactMaskPosterior {
    pub fn new(d_bits: usize, keep: f64, flip: f64) -> Self {
        assert!(d_bits <= 12);
        let probs = (0..1usize << d_bits)
            .map(|m| {
                let ones = m.count_ones() as i32;
                keep.powi(ones) * (1.0 - keep).powi(d_bits as i32 - ones)
            })
            .collect();
        Self { d_bits, probs, flip }
    }

    pub fn mask(&self, m: usize) -> MaskParticle {
        MaskParticle::from_bits(&(0..self.d_bits).map(|i| m >> i & 1 == 1).collect::<Vec<_>>())
    }

    pub fn update(&mut self, net: &DropoutNet, x: &[f64], z: &[f64], sigma: f64) {
        let n = self.probs.len();
        let d = self.d_bits as i32;
        let mut pred = vec![0.0; n];
        for (to, p) in pred.iter_mut().enumerate() {
            *p = (0..n)
                .map(|from| {
                    let h = (from ^ to).count_ones() as i32;
                    self.probs[from] * self.flip.powi(h) * (1.0 - self.flip).powi(d - h)
                })
                .sum();
        }
        let log_l: Vec<f64> = (0..n)
            .map(|m| {
                let g = gates_of(net, &self.mask(m));
                let (y, _) = reference_forward(net, x, Some(&g));
                -y.iter().zip(z).map(|(y, z)| (y - z) * (y - z)).sum::<f64>() / (2.0 * sigma * sigma)
            })
            .collect();
        let max = log_l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for m in 0..n {
            pred[m] *= (log_l[m] - max).exp();
            total += pred[m];
        }
        self.probs = pred.into_iter().map(|p| p / total).collect();
    }

    pub fn bit_marginals(&self) -> Vec<f64> {
        (0..self.d_bits)
            .map(|i| self.probs.iter().enumerate().filter(|(m, _)| m >> i & 1 == 1).map(|(_, p)| p).sum())
            .collect()
    }
}

/// Mean over bits of `|p − q|`, the total-variation distance between each
/// pair of Bernoulli marginals.
pub fn marginal_tv(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64
}

/// Total-variation distance between the particle histogram and the exact
/// joint posterior.
pub fn joint_tv(particles: &[MaskParticle], weights: &[f64], exact: &ExactMaskPosterior) -> f64 {
    let mut hist = vec![0.0; exact.probs.len()];
    for (p, w) in particles.iter().zip(weights) {
        let idx = p.iter().enumerate().fold(0usize, |acc, (i, b)| acc | (usize::from(b) << i));
        hist[idx] += w;
    }
    0.5 * hist.iter().zip(&exact.probs).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Indices of the `k` nearest rows by full sort on (distance, index).
pub fn brute_force_knn(query: &[f64], bank: &[Vec<f64>], k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = bank
        .iter()
        .enumerate()
        .map(|(i, m)| (i, m.iter().zip(query).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()))
        .collect();
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// A 1-8-2 net whose hidden units have distinct slopes and offsets, so every
/// bit leaves a different signature in the output.
pub fn toy_mask_net() -> DropoutNet {
    let w1: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 0.4 + 0.2 * i as f64 } else { -0.3 - 0.15 * i as f64 }).collect();
    let b1: Vec<f64> = (0..8).map(|i| 0.5 + 0.1 * i as f64).collect();
    let w2: Vec<f64> = (0..16).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.12).collect();
    DropoutNet::from_layers(
        vec![
            Dense { weights: Matrix::from_vec(8, 1, w1), bias: b1 },
            Dense { weights: Matrix::from_vec(2, 8, w2), bias: vec![0.0, 0.0] },
        ],
        0.5,
    )
    .unwrap()
}

/// Simulates the generative model from a random initial mask and runs the
/// filter and the exact recursion side by side. Returns the marginal TV after
/// every step and the final joint TV.
pub fn exact_bayes_run(net: &DropoutNet, n: usize, seed: u64, steps: usize, flip: f64, sigma: f64) -> (Vec<f64>, f64) {
    let mut rng = SmcdRng::seed_from_u64(1000 + seed);
    let mut truth = net.sample_mask(&mut rng);
    let cfg = FilterConfig { n_particles: n, flip_rate: flip, meas_noise_sigma: sigma, seed, ..Default::default() };
    let mut filter = SmcdFilter::init(cfg, net).unwrap();
    let mut exact = ExactMaskPosterior::new(net.mask_len(), net.keep_prob(), flip);
    let mut tv = Vec::new();
    for _ in 0..steps {
        for i in 0..truth.len() {
            if rng.gen::<f64>() < flip {
                truth.flip(i);
            }
        }
        let x = vec![rng.gen_range(-2.0..2.0)];
        let mut z = reference_forward(net, &x, Some(&gates_of(net, &truth))).0;
        for v in z.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * e;
        }
        filter.step(net, &Observation::new(x.clone(), z.clone())).unwrap();
        exact.update(net, &x, &z, sigma);
        tv.push(marginal_tv(&filter.mmse_mask(), &exact.bit_marginals()));
    }
    let s = filter.state();
    (tv, joint_tv(&s.particles, &s.weights, &exact))
}

fn mean_tv(n: usize, seeds: u64) -> f64 {
    let net = toy_mask_net();
    (0..seeds).map(|s| *exact_bayes_run(&net, n, s, 20, 0.05, 0.2).0.last().unwrap()).sum::<f64>() / seeds as f64
}

/// Final marginal TV averaged over seeds, with the toy settings
/// (flip 0.05, σ 0.2, 20 steps).
pub fn exact_bayes_mean_tv(n: usize, seeds: u64) -> f64 {
    let net = toy_mask_net();
    (0..seeds).map(|s| *exact_bayes_run(&net, n, s, 20, 0.05, 0.2).0.last().unwrap()).sum::<f64>() / seeds as f64
}
