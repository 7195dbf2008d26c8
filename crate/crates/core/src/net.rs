//! Dense ReLU network with explicit dropout gates.
//!
//! Hidden activations are multiplied by a per-unit gate before they feed the
//! next layer. A binary mask bit `b` gives the gate `b / (1 - p)` (inverted
//! dropout), a fractional mask entry `m` gives `m / (1 - p)`, and the mean
//! network uses gate 1 everywhere. The same code path serves training,
//! filtering and Jacobian evaluation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::linalg::{matmul, matmul_transa_acc, matmul_transb, Matrix};
use crate::rng::{self, SmcdRng};
use crate::{Error, Result};

/// One fully connected layer; `weights` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// Which hidden layers carry dropout gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskScope {
    #[default]
    AllHidden,
    /// Only the given hidden layer (0-based) is masked.
    Layer(usize),
}

/// Maps mask bit ranges onto hidden layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskLayout {
    /// `(offset, width)` per hidden layer, `None` when the layer is unmasked.
    segments: Vec<Option<(usize, usize)>>,
    len: usize,
    scope: MaskScope,
}

impl MaskLayout {
    fn new(hidden_widths: &[usize], scope: MaskScope) -> Self {
        let mut offset = 0;
        let segments = hidden_widths
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let masked = match scope {
                    MaskScope::AllHidden => true,
                    MaskScope::Layer(l) => l == i,
                };
                masked.then(|| {
                    let seg = (offset, w);
                    offset += w;
                    seg
                })
            })
            .collect();
        Self { segments, len: offset, scope }
    }

    pub fn scope(&self) -> MaskScope {
        self.scope
    }

    /// Total number of mask bits.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn segment(&self, hidden_layer: usize) -> Option<(usize, usize)> {
        self.segments.get(hidden_layer).copied().flatten()
    }
}

/// A binary dropout mask, packed 64 bits per word.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MaskParticle {
    words: Vec<u64>,
    len: usize,
}

impl MaskParticle {
    pub fn zeros(len: usize) -> Self {
        Self { words: vec![0; len.div_ceil(64)], len }
    }

    pub fn ones(len: usize) -> Self {
        let mut m = Self { words: vec![u64::MAX; len.div_ceil(64)], len };
        m.clear_tail();
        m
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut m = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            m.set(i, b);
        }
        m
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "mask index {i} out of range {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "mask index {i} out of range {}", self.len);
        let bit = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= bit;
        } else {
            self.words[i / 64] &= !bit;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "mask index {i} out of range {}", self.len);
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn xor_assign(&mut self, other: &MaskParticle) {
        assert_eq!(self.len, other.len, "xor of masks with different lengths");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn hamming(&self, other: &MaskParticle) -> usize {
        assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn to_fractional(&self) -> Vec<f64> {
        self.iter().map(|b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Packs a mask from its low `len` bits, word by word.
    pub fn from_words(words: Vec<u64>, len: usize) -> Self {
        assert_eq!(words.len(), len.div_ceil(64));
        let mut m = Self { words, len };
        m.clear_tail();
        m
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }
}

/// Draws a mask whose bits are independently 1 with probability `1 - p`.
pub fn sample_mask(p: f64, len: usize, rng: &mut SmcdRng) -> MaskParticle {
    assert!((0.0..1.0).contains(&p), "dropout probability {p} outside [0, 1)");
    let keep = 1.0 - p;
    let mut m = MaskParticle::zeros(len);
    for i in 0..len {
        if rng.gen::<f64>() < keep {
            m.set(i, true);
        }
    }
    m
}

/// How hidden units are gated for one forward pass.
#[derive(Debug, Clone, Copy)]
pub enum Gate<'a> {
    /// Expected-value network: every gate is 1.
    Mean,
    Binary(&'a MaskParticle),
    /// Mask entries in `[0, 1]`, e.g. a particle average.
    Fractional(&'a [f64]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            epochs: 100,
            batch_size: 64,
            seed: 0,
            optimizer: Optimizer::Sgd,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        Ok(())
    }
}

/// Supervised pairs stored as two flat row-major blocks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Samples {
    pub in_dim: usize,
    pub out_dim: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Samples {
    pub fn new(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, inputs: Vec::new(), targets: Vec::new() }
    }

    pub fn push(&mut self, input: &[f64], target: &[f64]) {
        assert_eq!(input.len(), self.in_dim);
        assert_eq!(target.len(), self.out_dim);
        self.inputs.extend_from_slice(input);
        self.targets.extend_from_slice(target);
    }

    pub fn len(&self) -> usize {
        self.inputs.len().checked_div(self.in_dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-epoch mean of the minibatch losses, plus the loss of the untrained
/// network measured the same way.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub epoch_losses: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(self.initial_loss)
    }
}

/// Loss gradient with the same shapes as the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(net: &DropoutNet) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Matrix::zeros(l.out_dim(), l.in_dim())).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.out_dim()]).collect(),
        }
    }

    fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.as_slice().iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropoutNet {
    layer_sizes: Vec<usize>,
    layers: Vec<Dense>,
    dropout_p: f64,
    layout: MaskLayout,
}

/// Activations kept from a batched forward pass for backpropagation.
struct Trace {
    /// Input to every layer, `batch × in_dim(l)`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Vec<f64>>,
}

impl DropoutNet {
    /// Builds a network with uniform He initialization and zero biases.
    pub fn new(layer_sizes: &[usize], dropout_p: f64, rng: &mut SmcdRng) -> Result<Self> {
        validate_shape(layer_sizes, dropout_p)?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = libm::sqrt(6.0 / fan_in as f64);
                let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
                Dense { weights: Matrix::from_vec(fan_out, fan_in, data), bias: vec![0.0; fan_out] }
            })
            .collect();
        Ok(Self::assemble(layer_sizes, layers, dropout_p))
    }

    /// Assembles a network from explicit layers, checking every shape.
    pub fn from_layers(layers: Vec<Dense>, dropout_p: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        let mut sizes = vec![layers[0].in_dim()];
        for (i, l) in layers.iter().enumerate() {
            Error::check_len("layer input width", sizes[i], l.in_dim())?;
            Error::check_len("bias length", l.out_dim(), l.bias.len())?;
            sizes.push(l.out_dim());
        }
        validate_shape(&sizes, dropout_p)?;
        Ok(Self::assemble(&sizes, layers, dropout_p))
    }

    fn assemble(layer_sizes: &[usize], layers: Vec<Dense>, dropout_p: f64) -> Self {
        let hidden = &layer_sizes[1..layer_sizes.len() - 1];
        Self {
            layer_sizes: layer_sizes.to_vec(),
            layers,
            dropout_p,
            layout: MaskLayout::new(hidden, MaskScope::AllHidden),
        }
    }

    /// Restricts dropout (and therefore the mask) to part of the hidden stack.
    pub fn with_mask_scope(mut self, scope: MaskScope) -> Result<Self> {
        let hidden = &self.layer_sizes[1..self.layer_sizes.len() - 1];
        if let MaskScope::Layer(l) = scope {
            if l >= hidden.len() {
                return Err(Error::config(format!("mask layer {l} out of range ({} hidden layers)", hidden.len())));
            }
        }
        self.layout = MaskLayout::new(hidden, scope);
        Ok(self)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn dropout_p(&self) -> f64 {
        self.dropout_p
    }

    pub fn keep_prob(&self) -> f64 {
        1.0 - self.dropout_p
    }

    pub fn layout(&self) -> &MaskLayout {
        &self.layout
    }

    pub fn mask_len(&self) -> usize {
        self.layout.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.as_slice().len() + l.bias.len()).sum()
    }

    pub fn sample_mask(&self, rng: &mut SmcdRng) -> MaskParticle {
        sample_mask(self.dropout_p, self.mask_len(), rng)
    }

    /// Converts a gate description to per-unit multipliers, or `None` for the
    /// mean network.
    fn gate_values(&self, gate: Gate<'_>) -> Result<Option<Vec<f64>>> {
        let keep = self.keep_prob();
        match gate {
            Gate::Mean => Ok(None),
            Gate::Binary(m) => {
                Error::check_len("mask", self.mask_len(), m.len())?;
                Ok(Some(m.iter().map(|b| if b { 1.0 / keep } else { 0.0 }).collect()))
            }
            Gate::Fractional(m) => {
                Error::check_len("mask", self.mask_len(), m.len())?;
                Ok(Some(m.iter().map(|v| v / keep).collect()))
            }
        }
    }

    pub fn forward(&self, input: &[f64], gate: Gate<'_>) -> Result<Vec<f64>> {
        Error::check_len("network input", self.input_dim(), input.len())?;
        let gates = self.gate_values(gate)?;
        Ok(self.forward_batch_raw(input, 1, gates.as_deref(), None))
    }

    pub fn forward_masked(&self, input: &[f64], mask: &MaskParticle) -> Result<Vec<f64>> {
        self.forward(input, Gate::Binary(mask))
    }

    pub fn forward_fractional(&self, input: &[f64], mask: &[f64]) -> Result<Vec<f64>> {
        self.forward(input, Gate::Fractional(mask))
    }

    pub fn forward_mean(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward(input, Gate::Mean)
    }

    /// Evaluates one input under many binary masks; row `i` of the result is
    /// the output under `masks[i]`.
    pub fn forward_particles(&self, input: &[f64], masks: &[MaskParticle]) -> Result<Matrix> {
        Error::check_len("network input", self.input_dim(), input.len())?;
        let d = self.mask_len();
        let keep_inv = 1.0 / self.keep_prob();
        let mut gates = vec![0.0; masks.len() * d];
        for (row, m) in gates.chunks_exact_mut(d.max(1)).zip(masks) {
            Error::check_len("mask", d, m.len())?;
            if d == 0 {
                continue;
            }
            for (g, b) in row.iter_mut().zip(m.iter()) {
                *g = if b { keep_inv } else { 0.0 };
            }
        }
        let batch = masks.len();
        let mut inputs = Vec::with_capacity(batch * input.len());
        for _ in 0..batch {
            inputs.extend_from_slice(input);
        }
        let out = self.forward_batch_raw(&inputs, batch, Some(&gates), None);
        Ok(Matrix::from_vec(batch, self.output_dim(), out))
    }

    /// Batched forward pass over `batch` rows of `x`. `gates`, when present,
    /// holds either one shared row of `mask_len` multipliers or one row per
    /// batch element.
    fn forward_batch_raw(
        &self,
        x: &[f64],
        batch: usize,
        gates: Option<&[f64]>,
        mut trace: Option<&mut Trace>,
    ) -> Vec<f64> {
        let d = self.mask_len();
        let shared_gates = gates.is_some_and(|g| g.len() == d && batch != 1);
        let mut current = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let (n_in, n_out) = (layer.in_dim(), layer.out_dim());
            let mut z = vec![0.0; batch * n_out];
            matmul_transb(&current, layer.weights.as_slice(), &mut z, batch, n_in, n_out);
            for row in z.chunks_exact_mut(n_out) {
                for (v, b) in row.iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.inputs.push(core::mem::take(&mut current));
            }
            if li == last {
                return z;
            }
            let mut a = z.clone();
            for v in a.iter_mut() {
                if *v <= 0.0 {
                    *v = 0.0;
                }
            }
            if let (Some(g), Some((off, w))) = (gates, self.layout.segment(li)) {
                for (r, row) in a.chunks_exact_mut(n_out).enumerate() {
                    let base = if shared_gates { off } else { r * d + off };
                    for (v, gv) in row.iter_mut().zip(&g[base..base + w]) {
                        *v *= gv;
                    }
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.pre.push(z);
            }
            current = a;
        }
        unreachable!("network has at least one layer")
    }

    /// Mean squared error `(1 / (batch · out_dim)) Σ (f(x) − t)²` and its
    /// gradient with respect to every weight and bias, under fixed gates.
    /// `gates` is `None` (mean network) or `batch × mask_len` multipliers.
    pub fn loss_and_gradient(
        &self,
        inputs: &[f64],
        targets: &[f64],
        batch: usize,
        gates: Option<&[f64]>,
    ) -> Result<(f64, Gradients)> {
        let scale = 1.0 / (batch * self.output_dim()) as f64;
        self.loss_and_gradient_scaled(inputs, targets, batch, gates, scale)
    }

    fn loss_and_gradient_scaled(
        &self,
        inputs: &[f64],
        targets: &[f64],
        batch: usize,
        gates: Option<&[f64]>,
        scale: f64,
    ) -> Result<(f64, Gradients)> {
        Error::check_len("batch inputs", batch * self.input_dim(), inputs.len())?;
        Error::check_len("batch targets", batch * self.output_dim(), targets.len())?;
        if let Some(g) = gates {
            Error::check_len("batch gates", batch * self.mask_len(), g.len())?;
        }
        let mut grads = Gradients::zeros_like(self);
        let loss = self.backprop(inputs, targets, batch, gates, scale, &mut grads);
        Ok((loss, grads))
    }

    /// Accumulates `scale`-weighted squared-error gradients into `grads` and
    /// returns the scaled loss.
    fn backprop(
        &self,
        inputs: &[f64],
        targets: &[f64],
        batch: usize,
        gates: Option<&[f64]>,
        scale: f64,
        grads: &mut Gradients,
    ) -> f64 {
        let mut trace = Trace { inputs: Vec::new(), pre: Vec::new() };
        let out = self.forward_batch_raw(inputs, batch, gates, Some(&mut trace));
        let mut loss = 0.0;
        let mut delta: Vec<f64> = out
            .iter()
            .zip(targets)
            .map(|(y, t)| {
                let r = y - t;
                loss += r * r;
                2.0 * r * scale
            })
            .collect();
        let d = self.mask_len();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let (n_in, n_out) = (layer.in_dim(), layer.out_dim());
            let a_in = &trace.inputs[li];
            matmul_transa_acc(&delta, a_in, grads.weights[li].as_mut_slice(), batch, n_out, n_in);
            for row in delta.chunks_exact(n_out) {
                for (gb, dv) in grads.biases[li].iter_mut().zip(row) {
                    *gb += dv;
                }
            }
            if li == 0 {
                break;
            }
            let mut d_prev = vec![0.0; batch * n_in];
            matmul(&delta, layer.weights.as_slice(), &mut d_prev, batch, n_out, n_in);
            let hidden = li - 1;
            let pre = &trace.pre[hidden];
            let seg = self.layout.segment(hidden);
            for r in 0..batch {
                let row = &mut d_prev[r * n_in..(r + 1) * n_in];
                let z = &pre[r * n_in..(r + 1) * n_in];
                for (j, v) in row.iter_mut().enumerate() {
                    let mut f = if z[j] > 0.0 { 1.0 } else { 0.0 };
                    if let (Some(g), Some((off, _))) = (gates, seg) {
                        f *= g[r * d + off + j];
                    }
                    *v *= f;
                }
            }
            delta = d_prev;
        }
        loss * scale
    }

    /// Jacobian of the gated network output with respect to its input
    /// (`output_dim × input_dim`). The ReLU derivative at 0 is taken as 0.
    pub fn input_jacobian(&self, input: &[f64], gate: Gate<'_>) -> Result<Matrix> {
        Error::check_len("network input", self.input_dim(), input.len())?;
        let gates = self.gate_values(gate)?;
        let n0 = self.input_dim();
        let mut act = input.to_vec();
        let mut jac = Matrix::identity(n0);
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let (n_in, n_out) = (layer.in_dim(), layer.out_dim());
            let mut z = vec![0.0; n_out];
            matmul_transb(&act, layer.weights.as_slice(), &mut z, 1, n_in, n_out);
            for (v, b) in z.iter_mut().zip(&layer.bias) {
                *v += b;
            }
            let mut next_jac = Matrix::zeros(n_out, n0);
            matmul(layer.weights.as_slice(), jac.as_slice(), next_jac.as_mut_slice(), n_out, n_in, n0);
            if li == last {
                return Ok(next_jac);
            }
            let seg = self.layout.segment(li);
            for j in 0..n_out {
                let mut f = if z[j] > 0.0 { 1.0 } else { 0.0 };
                if let (Some(g), Some((off, _))) = (gates.as_deref(), seg) {
                    f *= g[off + j];
                }
                z[j] = if z[j] > 0.0 { z[j] * f } else { 0.0 };
                for v in next_jac.row_mut(j) {
                    *v *= f;
                }
            }
            act = z;
            jac = next_jac;
        }
        unreachable!("network has at least one layer")
    }

    /// Applies a gradient of the given step size in place.
    pub fn apply_gradient(&mut self, grads: &Gradients, lr: f64) {
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(grads.weights.iter().zip(&grads.biases)) {
            for (w, g) in layer.weights.as_mut_slice().iter_mut().zip(gw.as_slice()) {
                *w -= lr * g;
            }
            for (b, g) in layer.bias.iter_mut().zip(gb) {
                *b -= lr * g;
            }
        }
    }

    /// One step of gradient descent on `‖f(input) − target‖²` of the mean
    /// network. Returns the updated copy; `self` is untouched.
    pub fn gradient_step_online(&self, input: &[f64], target: &[f64], lr: f64) -> Result<DropoutNet> {
        Error::check_len("network input", self.input_dim(), input.len())?;
        Error::check_len("target", self.output_dim(), target.len())?;
        let (_, grads) = self.loss_and_gradient_scaled(input, target, 1, None, 1.0)?;
        if !grads.all_finite() {
            return Err(Error::NonFinite(format!("online gradient (lr {lr})")));
        }
        let mut next = self.clone();
        next.apply_gradient(&grads, lr);
        Ok(next)
    }

    /// Fills `gates` (`batch × mask_len`) with freshly sampled inverted
    /// dropout multipliers.
    fn sample_gates(&self, gates: &mut [f64], rng: &mut SmcdRng) {
        let keep = self.keep_prob();
        let inv = 1.0 / keep;
        for g in gates.iter_mut() {
            *g = if rng.gen::<f64>() < keep { inv } else { 0.0 };
        }
    }

    /// Minibatch training on mean squared error with a fresh dropout mask per
    /// sample and per pass. Returns the trained copy and its loss history.
    pub fn train(&self, data: &Samples, cfg: &TrainConfig) -> Result<(DropoutNet, TrainReport)> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::EmptyInput("training set"));
        }
        Error::check_len("sample input width", self.input_dim(), data.in_dim)?;
        Error::check_len("sample target width", self.output_dim(), data.out_dim)?;

        let mut net = self.clone();
        let mut rng = rng::stream(cfg.seed, &[rng::tag::TRAIN]);
        let n = data.len();
        let (n_in, n_out, d) = (net.input_dim(), net.output_dim(), net.mask_len());
        let mut order: Vec<usize> = (0..n).collect();
        let mut bx = Vec::with_capacity(cfg.batch_size * n_in);
        let mut by = Vec::with_capacity(cfg.batch_size * n_out);
        let mut gates = vec![0.0; cfg.batch_size * d];
        let mut adam = match cfg.optimizer {
            Optimizer::Adam { .. } => Some((Gradients::zeros_like(&net), Gradients::zeros_like(&net))),
            Optimizer::Sgd => None,
        };
        let mut adam_t = 0i32;

        let mut initial = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            gather(data, chunk, &mut bx, &mut by);
            let g = &mut gates[..chunk.len() * d];
            net.sample_gates(g, &mut rng);
            let out = net.forward_batch_raw(&bx, chunk.len(), Some(g), None);
            initial += out.iter().zip(&by).map(|(y, t)| (y - t) * (y - t)).sum::<f64>();
        }
        let initial_loss = initial / (n * n_out) as f64;

        let mut epoch_losses = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
                gather(data, chunk, &mut bx, &mut by);
                let b = chunk.len();
                let g = &mut gates[..b * d];
                net.sample_gates(g, &mut rng);
                let mut grads = Gradients::zeros_like(&net);
                let scale = 1.0 / (b * n_out) as f64;
                let loss = net.backprop(&bx, &by, b, Some(g), scale, &mut grads);
                if !loss.is_finite() || !grads.all_finite() {
                    return Err(Error::NonFinite(format!(
                        "training loss diverged at epoch {epoch}, batch {bi} (learning rate {})",
                        cfg.learning_rate
                    )));
                }
                total += loss * b as f64;
                match (&mut adam, cfg.optimizer) {
                    (Some((m, v)), Optimizer::Adam { beta1, beta2, eps }) => {
                        adam_t += 1;
                        let c1 = 1.0 - libm::pow(beta1, adam_t as f64);
                        let c2 = 1.0 - libm::pow(beta2, adam_t as f64);
                        let step = cfg.learning_rate * libm::sqrt(c2) / c1;
                        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                            for i in 0..p.len() {
                                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                                p[i] -= step * m[i] / (libm::sqrt(v[i]) + eps);
                            }
                        };
                        for (li, layer) in net.layers.iter_mut().enumerate() {
                            update(
                                layer.weights.as_mut_slice(),
                                grads.weights[li].as_slice(),
                                m.weights[li].as_mut_slice(),
                                v.weights[li].as_mut_slice(),
                            );
                            update(&mut layer.bias, &grads.biases[li], &mut m.biases[li], &mut v.biases[li]);
                        }
                    }
                    _ => net.apply_gradient(&grads, cfg.learning_rate),
                }
            }
            epoch_losses.push(total / n as f64);
        }
        Ok((net, TrainReport { initial_loss, epoch_losses }))
    }
}

fn gather(data: &Samples, idx: &[usize], bx: &mut Vec<f64>, by: &mut Vec<f64>) {
    bx.clear();
    by.clear();
    for &i in idx {
        bx.extend_from_slice(&data.inputs[i * data.in_dim..(i + 1) * data.in_dim]);
        by.extend_from_slice(&data.targets[i * data.out_dim..(i + 1) * data.out_dim]);
    }
}

fn validate_shape(layer_sizes: &[usize], dropout_p: f64) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::config("need at least input and output sizes"));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::config("layer sizes must be positive"));
    }
    if !(0.0..1.0).contains(&dropout_p) {
        return Err(Error::config(format!("dropout probability {dropout_p} outside [0, 1)")));
    }
    Ok(())
}
