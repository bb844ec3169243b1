//! Simulated visible/occluded mask branches.
//!
//! Ground-truth masks are perturbed (boundary jitter, pixel flips) and
//! mapped to logits of magnitude `logit_scale` plus Gaussian noise, one
//! channel per category, mimicking class-specific mask heads evaluated on
//! an instance's region of interest.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::sigmoid;
use crate::mask::{union, BinaryMask, InstanceRecord};
use crate::rng;
use crate::scene::Scene;

/// Rectangle of a canvas, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub row: usize,
    pub col: usize,
    pub width: usize,
    pub height: usize,
}

impl Window {
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        r >= self.row && r < self.row + self.height && c >= self.col && c < self.col + self.width
    }
}

/// `n` channels of `height`x`width` logits.
///
/// Values are stored densely for a window of the canvas, channel-major then
/// row-major; every pixel outside the window reads its channel's background
/// logit. [`MaskStack::new`] stores the whole canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskStack {
    n: usize,
    width: usize,
    height: usize,
    window: Window,
    values: Vec<f64>,
    background: Vec<f64>,
}

impl MaskStack {
    pub fn new(n: usize, width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let window = Window { row: 0, col: 0, width, height };
        Self::windowed(n, width, height, window, values, vec![0.0; n])
    }

    pub fn windowed(
        n: usize,
        width: usize,
        height: usize,
        window: Window,
        values: Vec<f64>,
        background: Vec<f64>,
    ) -> Result<Self> {
        if n == 0 || width == 0 || height == 0 || window.width == 0 || window.height == 0 {
            return Err(Error::Shape(format!("stack dimensions must be positive, got {n}x{height}x{width}")));
        }
        if window.row + window.height > height || window.col + window.width > width {
            return Err(Error::Shape(format!("window {window:?} exceeds a {width}x{height} canvas")));
        }
        if values.len() != n * window.pixels() {
            return Err(Error::Shape(format!("expected {} values, got {}", n * window.pixels(), values.len())));
        }
        if background.len() != n {
            return Err(Error::Shape(format!("expected {n} background logits, got {}", background.len())));
        }
        if values.iter().chain(&background).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("mask stack contains non-finite values".into()));
        }
        Ok(Self { n, width, height, window, values, background })
    }

    pub fn filled(n: usize, width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(n, width, height, vec![value; n * width * height])
    }

    pub fn channels(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// Stored logits of every channel's window.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Window logits of channel `c`.
    pub fn channel(&self, c: usize) -> &[f64] {
        let p = self.window.pixels();
        &self.values[c * p..(c + 1) * p]
    }

    /// Logit of channel `c` outside the window.
    pub fn background(&self, c: usize) -> f64 {
        self.background[c]
    }

    pub fn get(&self, c: usize, r: usize, col: usize) -> f64 {
        let w = self.window;
        if w.contains(r, col) {
            self.channel(c)[(r - w.row) * w.width + (col - w.col)]
        } else {
            self.background[c]
        }
    }

    /// Channel `c` over the whole canvas, row-major.
    pub fn dense_channel(&self, c: usize) -> Vec<f64> {
        (0..self.height).flat_map(|r| (0..self.width).map(move |col| (r, col))).map(|(r, col)| self.get(c, r, col)).collect()
    }

    /// Same channel count, canvas and window.
    pub fn same_shape(&self, other: &MaskStack) -> bool {
        self.n == other.n && self.width == other.width && self.height == other.height && self.window == other.window
    }

    /// The window's part of a canvas-sized mask.
    pub fn crop(&self, mask: &BinaryMask) -> Result<BinaryMask> {
        if (mask.width(), mask.height()) != (self.width, self.height) {
            return Err(Error::Shape(format!(
                "{}x{} mask for a {}x{} stack",
                mask.width(),
                mask.height(),
                self.width,
                self.height
            )));
        }
        let w = self.window;
        BinaryMask::from_fn(w.width, w.height, |r, c| mask.get(w.row + r, w.col + c))
    }

    /// Pixels whose sigmoid probability reaches `threshold`.
    pub fn threshold_channel(&self, c: usize, threshold: f64) -> BinaryMask {
        let outside = sigmoid(self.background[c]) >= threshold;
        let w = self.window;
        let window = self.channel(c);
        BinaryMask::from_fn(self.width, self.height, |r, col| {
            if w.contains(r, col) {
                sigmoid(window[(r - w.row) * w.width + (col - w.col)]) >= threshold
            } else {
                outside
            }
        })
        .expect("stack dimensions are positive")
    }
}

/// What the non-true category channels see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ContextMode {
    /// Other instances in the scene show up in their own category channel.
    #[default]
    Scene,
    /// Every non-true channel is driven by an empty ground truth.
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub flip_prob: f64,
    pub boundary_jitter: u32,
    pub logit_scale: f64,
    /// Additive N(0, (logit_scale/4)^2) noise; off gives the exact mode.
    #[serde(default = "default_true")]
    pub logit_noise: bool,
    #[serde(default)]
    pub context: ContextMode,
    /// Branch outputs are confined to the amodal box grown by this many
    /// pixels; outside it every channel reads `-logit_scale`. `None` applies
    /// noise over the whole canvas.
    #[serde(default = "default_roi_margin")]
    pub roi_margin: Option<usize>,
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

fn default_roi_margin() -> Option<usize> {
    Some(2)
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            flip_prob: 0.1,
            boundary_jitter: 1,
            logit_scale: 4.0,
            logit_noise: true,
            context: ContextMode::Scene,
            roi_margin: Some(2),
            seed: 0,
        }
    }
}

impl NoiseModel {
    /// Lossless branches: no flips, no jitter, no logit noise.
    pub fn exact(logit_scale: f64) -> Self {
        Self { flip_prob: 0.0, boundary_jitter: 0, logit_scale, logit_noise: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.flip_prob) {
            return Err(Error::Argument(format!("noise.flip_prob: must lie in [0, 1), got {}", self.flip_prob)));
        }
        if !(self.logit_scale.is_finite() && self.logit_scale > 0.0) {
            return Err(Error::Argument(format!("noise.logit_scale: must be > 0, got {}", self.logit_scale)));
        }
        Ok(())
    }
}

/// Noisy branch outputs for a standalone instance; every non-true channel
/// is driven by an empty ground truth.
pub fn corrupt(record: &InstanceRecord, noise: &NoiseModel, n: usize, draw_index: u64) -> Result<(MaskStack, MaskStack)> {
    corrupt_with_context(record, &[], noise, n, draw_index)
}

/// Noisy branch outputs for `scene.instances[instance]`. Under
/// [`ContextMode::Scene`] the other instances' visible and occluded masks
/// feed their categories' channels.
pub fn corrupt_in_scene(
    scene: &Scene,
    instance: usize,
    noise: &NoiseModel,
    n: usize,
    draw_index: u64,
) -> Result<(MaskStack, MaskStack)> {
    let record = scene
        .instances
        .get(instance)
        .ok_or_else(|| Error::Argument(format!("scene {} has no instance {instance}", scene.index)))?;
    let others: Vec<&InstanceRecord> = match noise.context {
        ContextMode::Scene => scene.instances.iter().enumerate().filter(|&(k, _)| k != instance).map(|(_, r)| r).collect(),
        ContextMode::Empty => Vec::new(),
    };
    corrupt_with_context(record, &others, noise, n, draw_index)
}

fn corrupt_with_context(
    record: &InstanceRecord,
    others: &[&InstanceRecord],
    noise: &NoiseModel,
    n: usize,
    draw_index: u64,
) -> Result<(MaskStack, MaskStack)> {
    noise.validate()?;
    if record.category() >= n {
        return Err(Error::Argument(format!("category {} out of range for {n} channels", record.category())));
    }
    let (w, h) = (record.width(), record.height());
    let roi = region_of_interest(record, noise.roi_margin);
    let normal = Normal::new(0.0, noise.logit_scale / 4.0).map_err(|e| Error::Numeric(e.to_string()))?;
    let mut rng = rng::stream(noise.seed, rng::NOISE_SALT, draw_index);

    // truths are built on the RoI grown by the jitter radius, which is all
    // the morphology needs to be exact inside the RoI
    let jitter = noise.boundary_jitter as usize;
    let row = roi.row.saturating_sub(jitter);
    let col = roi.col.saturating_sub(jitter);
    let area = Window {
        row,
        col,
        width: (roi.col + roi.width + jitter).min(w) - col,
        height: (roi.row + roi.height + jitter).min(h) - row,
    };
    let local = Window { row: roi.row - row, col: roi.col - col, ..roi };
    let cut = |m: &BinaryMask| m.crop(area.row, area.col, area.width, area.height);
    let mut stacks = Vec::with_capacity(2);
    for branch in [Branch::Visible, Branch::Occluded] {
        let mut values = Vec::with_capacity(n * roi.pixels());
        for c in 0..n {
            let truth = if c == record.category() {
                cut(branch.of(record))?
            } else {
                let mut acc = BinaryMask::empty(area.width, area.height)?;
                for other in others.iter().filter(|o| o.category() == c) {
                    acc = union(&acc, &cut(branch.of(other))?)?;
                }
                acc
            };
            let radius = if jitter > 0 { rng.random_range(-(jitter as i32)..=jitter as i32) } else { 0 };
            let truth = truth.morph(radius);
            fill_channel(&mut values, &truth, local, noise, &normal, &mut rng);
        }
        stacks.push(MaskStack::windowed(n, w, h, roi, values, vec![-noise.logit_scale; n])?);
    }
    let om = stacks.pop().expect("two branches");
    let vm = stacks.pop().expect("two branches");
    Ok((vm, om))
}

#[derive(Clone, Copy)]
enum Branch {
    Visible,
    Occluded,
}

impl Branch {
    fn of(self, r: &InstanceRecord) -> &BinaryMask {
        match self {
            Branch::Visible => r.visible(),
            Branch::Occluded => r.occluded(),
        }
    }
}

/// Inclusive `(row0, col0, row1, col1)`.
fn region_of_interest(record: &InstanceRecord, margin: Option<usize>) -> Window {
    let (w, h) = (record.width(), record.height());
    match (margin, record.amodal().bbox()) {
        (Some(m), Some((r0, c0, r1, c1))) => {
            let (row, col) = (r0.saturating_sub(m), c0.saturating_sub(m));
            Window { row, col, width: (c1 + m).min(w - 1) + 1 - col, height: (r1 + m).min(h - 1) + 1 - row }
        }
        _ => Window { row: 0, col: 0, width: w, height: h },
    }
}

fn fill_channel(out: &mut Vec<f64>, truth: &BinaryMask, roi: Window, noise: &NoiseModel, normal: &Normal<f64>, rng: &mut ChaCha8Rng) {
    for r in roi.row..roi.row + roi.height {
        for c in roi.col..roi.col + roi.width {
            let mut label = truth.get(r, c);
            if noise.flip_prob > 0.0 && rng.random_bool(noise.flip_prob) {
                label = !label;
            }
            let mut logit = if label { noise.logit_scale } else { -noise.logit_scale };
            if noise.logit_noise {
                logit += normal.sample(rng);
            }
            out.push(logit);
        }
    }
}
