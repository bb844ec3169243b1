//! The composition head: a 1x1 convolution that mixes the `n` visible and
//! `n` occluded branch channels into `n` amodal channels,
//!
//! ```text
//! amodal[T] = sum_i VW[T][i] * visible[i] + OW[T][i] * occluded[i] + bias[T]
//! ```
//!
//! together with its analytic gradient, a plain mini-batch SGD trainer and
//! the two reference compositions (channel addition and amodal-minus-visible
//! subtraction).

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heads::{corrupt_in_scene, MaskStack, NoiseModel};
use crate::loss::{bce_loss_with_grad, bce_term, sigmoid};
use crate::mask::{subtract, BinaryMask};
use crate::rng;
use crate::scene::Scene;

#[derive(Debug, Clone, PartialEq)]
pub struct CompositionWeights {
    n: usize,
    /// `vw[T][i]`: visible channel `i` into amodal channel `T`.
    pub vw: Vec<Vec<f64>>,
    /// `ow[T][i]`: occluded channel `i` into amodal channel `T`.
    pub ow: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl CompositionWeights {
    pub fn new(vw: Vec<Vec<f64>>, ow: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        let n = bias.len();
        let square = |m: &Vec<Vec<f64>>| m.len() == n && m.iter().all(|row| row.len() == n);
        if n == 0 || !square(&vw) || !square(&ow) {
            return Err(Error::Shape(format!("weights must be {n}x{n} matrices with {n} biases")));
        }
        let w = Self { n, vw, ow, bias };
        if !w.is_finite() {
            return Err(Error::Numeric("non-finite composition weight".into()));
        }
        Ok(w)
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, vw: vec![vec![0.0; n]; n], ow: vec![vec![0.0; n]; n], bias: vec![0.0; n] }
    }

    /// `VW = OW = I`, zero bias: plain channel addition.
    pub fn identity(n: usize) -> Self {
        let mut w = Self::zeros(n);
        for t in 0..n {
            w.vw[t][t] = 1.0;
            w.ow[t][t] = 1.0;
        }
        w
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_finite(&self) -> bool {
        self.vw.iter().chain(&self.ow).flatten().chain(&self.bias).all(|v| v.is_finite())
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.vw.iter().flatten().chain(self.ow.iter().flatten()).chain(&self.bias)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.vw.iter_mut().flatten().chain(self.ow.iter_mut().flatten()).chain(self.bias.iter_mut())
    }

    /// Flattened parameters: VW row-major, then OW, then bias.
    pub fn to_vec(&self) -> Vec<f64> {
        self.params().copied().collect()
    }

    pub fn from_vec(n: usize, values: &[f64]) -> Result<Self> {
        if values.len() != 2 * n * n + n {
            return Err(Error::Shape(format!("expected {} parameters, got {}", 2 * n * n + n, values.len())));
        }
        let mut w = Self::zeros(n);
        w.params_mut().zip(values).for_each(|(dst, &v)| *dst = v);
        Ok(w)
    }

    pub fn norm(&self) -> f64 {
        self.params().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn add_scaled(&mut self, step: f64, other: &CompositionWeights) {
        self.params_mut().zip(other.params()).for_each(|(w, g)| *w += step * g);
    }
}

fn check_stacks(w: &CompositionWeights, vm: &MaskStack, om: &MaskStack) -> Result<()> {
    if !vm.same_shape(om) {
        return Err(Error::Shape("visible and occluded stacks differ in shape".into()));
    }
    if vm.channels() != w.n {
        return Err(Error::Shape(format!("stacks carry {} channels, head expects {}", vm.channels(), w.n)));
    }
    Ok(())
}

/// Amodal logits for output channel `target` only, as a one-channel stack.
pub fn forward_channel(w: &CompositionWeights, vm: &MaskStack, om: &MaskStack, target: usize) -> Result<MaskStack> {
    check_stacks(w, vm, om)?;
    if target >= w.n {
        return Err(Error::Argument(format!("category {target} out of range for {} channels", w.n)));
    }
    let mut out = vec![w.bias[target]; vm.window().pixels()];
    let mut background = w.bias[target];
    for i in 0..w.n {
        let (a, b) = (w.vw[target][i], w.ow[target][i]);
        for ((o, v), c) in out.iter_mut().zip(vm.channel(i)).zip(om.channel(i)) {
            *o += a * v;
            *o += b * c;
        }
        background += a * vm.background(i);
        background += b * om.background(i);
    }
    MaskStack::windowed(1, vm.width(), vm.height(), vm.window(), out, vec![background])
}

/// Raw amodal logits for every category channel.
pub fn forward(w: &CompositionWeights, vm: &MaskStack, om: &MaskStack) -> Result<MaskStack> {
    check_stacks(w, vm, om)?;
    let mut values = Vec::with_capacity(vm.values().len());
    let mut background = Vec::with_capacity(w.n);
    for t in 0..w.n {
        let out = forward_channel(w, vm, om, t)?;
        values.extend_from_slice(out.values());
        background.push(out.background(0));
    }
    MaskStack::windowed(w.n, vm.width(), vm.height(), vm.window(), values, background)
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Argument(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    Ok(())
}

/// Amodal mask of `category`: pixels whose composed probability reaches `threshold`.
pub fn predict_amodal(
    w: &CompositionWeights,
    vm: &MaskStack,
    om: &MaskStack,
    category: usize,
    threshold: f64,
) -> Result<BinaryMask> {
    check_threshold(threshold)?;
    Ok(forward_channel(w, vm, om, category)?.threshold_channel(0, threshold))
}

/// Logits of the add composition, `visible[c] + occluded[c]`, as a
/// one-channel stack.
pub fn add_logits(vm: &MaskStack, om: &MaskStack, category: usize) -> Result<MaskStack> {
    if !vm.same_shape(om) {
        return Err(Error::Shape("visible and occluded stacks differ in shape".into()));
    }
    if category >= vm.channels() {
        return Err(Error::Argument(format!("category {category} out of range for {} channels", vm.channels())));
    }
    let values = vm.channel(category).iter().zip(om.channel(category)).map(|(v, o)| v + o).collect();
    let background = vm.background(category) + om.background(category);
    MaskStack::windowed(1, vm.width(), vm.height(), vm.window(), values, vec![background])
}

/// Amodal mask from directly adding the two branch outputs.
pub fn add_baseline(vm: &MaskStack, om: &MaskStack, category: usize, threshold: f64) -> Result<BinaryMask> {
    check_threshold(threshold)?;
    Ok(add_logits(vm, om, category)?.threshold_channel(0, threshold))
}

/// Occluded mask derived as predicted amodal minus predicted visible.
pub fn orcnn_occluded_baseline(amodal_pred: &BinaryMask, visible_pred: &BinaryMask) -> Result<BinaryMask> {
    subtract(amodal_pred, visible_pred)
}

/// One supervised example: branch outputs and the amodal target of
/// `category`.
#[derive(Debug, Clone)]
pub struct Sample {
    pub vm: MaskStack,
    pub om: MaskStack,
    pub category: usize,
    pub target: BinaryMask,
}

/// Mean over the batch of the per-pixel mean BCE on each sample's own
/// category channel, taken over the whole canvas.
pub fn batch_loss(w: &CompositionWeights, batch: &[Sample]) -> Result<f64> {
    Ok(loss_and_grad(w, batch)?.0)
}

pub fn grad(w: &CompositionWeights, batch: &[Sample]) -> Result<CompositionWeights> {
    Ok(loss_and_grad(w, batch)?.1)
}

/// Batch loss and its analytic gradient. Only row `T = sample.category`
/// of each matrix (and `bias[T]`) receives signal from a sample.
pub fn loss_and_grad(w: &CompositionWeights, batch: &[Sample]) -> Result<(f64, CompositionWeights)> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut g = CompositionWeights::zeros(w.n);
    let mut total = 0.0;
    // fixed summation order over samples keeps the result bitwise reproducible
    for s in batch {
        let t = s.category;
        let logits = forward_channel(w, &s.vm, &s.om, t)?;
        let inside = s.vm.crop(&s.target)?;
        let pixels = s.vm.pixels() as f64;
        let window = s.vm.window().pixels() as f64;
        // window pixels as a dense block, the rest through the shared background logit
        let (loss_in, mut dlogits) = bce_loss_with_grad(logits.channel(0), &inside)?;
        for d in &mut dlogits {
            *d *= window / pixels;
        }
        let on = (s.target.area() - inside.area()) as f64;
        let off = pixels - window - on;
        let bg = logits.background(0);
        let loss_out = off * bce_term(bg, false) + on * bce_term(bg, true);
        let d_out = (off * sigmoid(bg) + on * (sigmoid(bg) - 1.0)) / pixels;
        total += scale * (loss_in * window + loss_out) / pixels;
        g.bias[t] += scale * (dlogits.iter().sum::<f64>() + d_out);
        for i in 0..w.n {
            let dv: f64 = dlogits.iter().zip(s.vm.channel(i)).map(|(d, v)| d * v).sum();
            let dow: f64 = dlogits.iter().zip(s.om.channel(i)).map(|(d, v)| d * v).sum();
            g.vw[t][i] += scale * (dv + d_out * s.vm.background(i));
            g.ow[t][i] += scale * (dow + d_out * s.om.background(i));
        }
    }
    if !total.is_finite() || !g.is_finite() {
        return Err(Error::Numeric("non-finite loss or gradient".into()));
    }
    Ok((total, g))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    #[default]
    Identity,
    Zero,
    SmallRandom { std: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub init: Init,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.1, iterations: 2000, batch_size: 16, seed: 0, init: Init::Identity }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // zero is accepted: it freezes the head at its initialization
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Argument(format!("train.learning_rate: must be >= 0, got {}", self.learning_rate)));
        }
        if self.iterations == 0 {
            return Err(Error::Argument("train.iterations: must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Argument("train.batch_size: must be >= 1".into()));
        }
        if let Init::SmallRandom { std } = self.init {
            if !(std.is_finite() && std >= 0.0) {
                return Err(Error::Argument(format!("train.init.small_random.std: must be >= 0, got {std}")));
            }
        }
        Ok(())
    }

    pub fn initial_weights(&self, n: usize) -> Result<CompositionWeights> {
        Ok(match self.init {
            Init::Identity => CompositionWeights::identity(n),
            Init::Zero => CompositionWeights::zeros(n),
            Init::SmallRandom { std } => {
                let normal = Normal::new(0.0, std).map_err(|e| Error::Argument(e.to_string()))?;
                let mut rng = rng::stream(self.seed, rng::TRAIN_SALT, u64::MAX);
                let mut w = CompositionWeights::zeros(n);
                w.vw.iter_mut().chain(w.ow.iter_mut()).flatten().for_each(|v| *v = normal.sample(&mut rng));
                w
            }
        })
    }
}

/// Draw index of an instance's simulated branch outputs; stable across
/// dataset composition.
pub fn draw_index(scene_index: u64, instance: usize) -> u64 {
    (scene_index << 16) | instance as u64
}

/// Branch outputs and target for one instance of a scene.
pub fn make_sample(scene: &Scene, instance: usize, noise: &NoiseModel, n: usize) -> Result<Sample> {
    let (vm, om) = corrupt_in_scene(scene, instance, noise, n, draw_index(scene.index, instance))?;
    let rec = &scene.instances[instance];
    Ok(Sample { vm, om, category: rec.category(), target: rec.amodal().clone() })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: CompositionWeights,
    /// Mean batch loss before each update.
    pub losses: Vec<f64>,
}

/// Mini-batch SGD on the head alone. Batches are drawn from a per-epoch
/// shuffle; a batch at least as large as the dataset means full-batch
/// gradient descent in dataset order.
pub fn train(scenes: &[Scene], n: usize, noise: &NoiseModel, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    noise.validate()?;
    let index: Vec<(usize, usize)> = scenes
        .iter()
        .enumerate()
        .flat_map(|(s, scene)| (0..scene.instances.len()).map(move |k| (s, k)))
        .collect();
    if index.is_empty() {
        return Err(Error::Argument("training set has no instances".into()));
    }

    let build = |&(s, k): &(usize, usize)| make_sample(&scenes[s], k, noise, n);
    let full_batch = cfg.batch_size >= index.len();
    let cached: Option<Vec<Sample>> = if full_batch { Some(index.iter().map(build).collect::<Result<_>>()?) } else { None };

    let mut rng = rng::stream(cfg.seed, rng::TRAIN_SALT, 0);
    let mut order: Vec<usize> = (0..index.len()).collect();
    let mut cursor = order.len();

    let mut weights = cfg.initial_weights(n)?;
    let mut losses = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let fresh;
        let batch: &[Sample] = match &cached {
            Some(all) => all,
            None => {
                let mut picked = Vec::with_capacity(cfg.batch_size);
                while picked.len() < cfg.batch_size {
                    if cursor == order.len() {
                        order.shuffle(&mut rng);
                        cursor = 0;
                    }
                    picked.push(build(&index[order[cursor]])?);
                    cursor += 1;
                }
                fresh = picked;
                &fresh
            }
        };
        let (loss, g) = match loss_and_grad(&weights, batch) {
            Ok(v) => v,
            Err(Error::Numeric(_)) => return Err(Error::Diverged { iteration, loss: f64::NAN }),
            Err(e) => return Err(e),
        };
        losses.push(loss);
        weights.add_scaled(-cfg.learning_rate, &g);
        if !weights.is_finite() {
            return Err(Error::Diverged { iteration, loss });
        }
    }
    Ok(TrainOutcome { weights, losses })
}
