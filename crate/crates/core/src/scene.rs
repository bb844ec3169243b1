//! Seeded generator of layered 2-D scenes whose occlusion order follows
//! per-category depth tendencies.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{union, BinaryMask, InstanceRecord};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Rectangle,
    Disk,
    Triangle,
}

impl Shape {
    /// Rasterizes the shape into a `w`x`h` box at `(top, left)` on a canvas.
    fn rasterize(self, canvas_w: usize, canvas_h: usize, top: usize, left: usize, w: usize, h: usize) -> Result<BinaryMask> {
        let (wf, hf) = (w as f64, h as f64);
        BinaryMask::from_fn(canvas_w, canvas_h, |r, c| {
            if r < top || r >= top + h || c < left || c >= left + w {
                return false;
            }
            let y = (r - top) as f64 + 0.5;
            let x = (c - left) as f64 + 0.5;
            match self {
                Shape::Rectangle => true,
                Shape::Disk => {
                    let (dy, dx) = (y - hf / 2.0, x - wf / 2.0);
                    dy * dy + dx * dx <= (wf / 2.0) * (wf / 2.0)
                }
                // apex at the top centre, base along the bottom row
                Shape::Triangle => (x - wf / 2.0).abs() <= y / hf * wf / 2.0,
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategorySpec {
    pub id: usize,
    pub name: String,
    pub shape: Shape,
    /// Inclusive `[min, max]` extent in pixels.
    pub size_range: [usize; 2],
    /// Larger values tend to be drawn in front.
    pub depth_score: f64,
}

/// The generator's occlusion context: per-category depth scores plus
/// uniform jitter of half-width `depth_noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcclusionPriorSpec {
    pub categories: Vec<CategorySpec>,
    pub depth_noise: f64,
}

impl OcclusionPriorSpec {
    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.categories.iter().map(|c| c.name.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories.len() < 2 {
            return Err(Error::Argument("prior.categories: at least two categories are required".into()));
        }
        for (k, cat) in self.categories.iter().enumerate() {
            if cat.id != k {
                return Err(Error::Argument(format!(
                    "prior.categories[{k}].id: expected {k}, got {} (ids must be 0..n-1 in order)",
                    cat.id
                )));
            }
            let [lo, hi] = cat.size_range;
            if lo < 1 || lo > hi {
                return Err(Error::Argument(format!(
                    "prior.categories[{k}].size_range: need 1 <= min <= max, got [{lo}, {hi}]"
                )));
            }
            if !cat.depth_score.is_finite() {
                return Err(Error::Argument(format!("prior.categories[{k}].depth_score: must be finite")));
            }
        }
        if !(self.depth_noise.is_finite() && self.depth_noise >= 0.0) {
            return Err(Error::Argument("prior.depth_noise: must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub instances_per_scene: [usize; 2],
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self { width: 64, height: 64, instances_per_scene: [2, 5], seed: 0 }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::Argument(format!(
                "scene.width/height: both must be >= 8, got {}x{}",
                self.width, self.height
            )));
        }
        let [lo, hi] = self.instances_per_scene;
        if lo < 2 || lo > hi {
            return Err(Error::Argument(format!(
                "scene.instances_per_scene: need 2 <= min <= max, got [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// Instances are ordered front to back.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub config: SceneConfig,
    pub index: u64,
    pub instances: Vec<InstanceRecord>,
}

impl Scene {
    pub fn width(&self) -> usize {
        self.config.width
    }

    pub fn height(&self) -> usize {
        self.config.height
    }
}

pub fn sample_scene(prior: &OcclusionPriorSpec, cfg: &SceneConfig, scene_index: u64) -> Result<Scene> {
    prior.validate()?;
    cfg.validate()?;
    let limit = cfg.width.min(cfg.height);
    for (k, cat) in prior.categories.iter().enumerate() {
        if cat.size_range[1] > limit {
            return Err(Error::Generation(format!(
                "prior.categories[{k}].size_range: category '{}' can reach {} px, which does not fit a {}x{} canvas",
                cat.name, cat.size_range[1], cfg.width, cfg.height
            )));
        }
    }

    let mut rng = rng::stream(cfg.seed, rng::SCENE_SALT, scene_index);
    let [lo, hi] = cfg.instances_per_scene;
    let count = rng.random_range(lo..=hi);
    let sigma = prior.depth_noise;

    let mut placed = Vec::with_capacity(count);
    for _ in 0..count {
        let cat = &prior.categories[rng.random_range(0..prior.len())];
        let [smin, smax] = cat.size_range;
        let (w, h) = match cat.shape {
            Shape::Rectangle => (rng.random_range(smin..=smax), rng.random_range(smin..=smax)),
            Shape::Disk | Shape::Triangle => {
                let s = rng.random_range(smin..=smax);
                (s, s)
            }
        };
        let top = rng.random_range(0..=cfg.height - h);
        let left = rng.random_range(0..=cfg.width - w);
        let amodal = cat.shape.rasterize(cfg.width, cfg.height, top, left, w, h)?;
        let jitter = if sigma > 0.0 { sigma * (2.0 * rng.random::<f64>() - 1.0) } else { 0.0 };
        placed.push((cat.id, amodal, cat.depth_score + jitter));
    }

    // Front to back; on equal depth the later insertion is nearer.
    let mut order: Vec<usize> = (0..placed.len()).collect();
    order.sort_by(|&a, &b| placed[b].2.total_cmp(&placed[a].2).then(b.cmp(&a)));

    let mut occluders = BinaryMask::empty(cfg.width, cfg.height)?;
    let mut instances = Vec::with_capacity(count);
    for k in order {
        let (category, amodal, depth) = &placed[k];
        let record = InstanceRecord::from_occluders(*category, amodal.clone(), &occluders, *depth)?;
        occluders = union(&occluders, amodal)?;
        instances.push(record);
    }
    Ok(Scene { config: cfg.clone(), index: scene_index, instances })
}

/// Generates `count` consecutive scenes starting at `first_index`.
pub fn sample_scenes(prior: &OcclusionPriorSpec, cfg: &SceneConfig, first_index: u64, count: usize) -> Result<Vec<Scene>> {
    (0..count as u64).map(|k| sample_scene(prior, cfg, first_index + k)).collect()
}

const INTEGRATION_POINTS: usize = 10_000;

/// Probability that an instance of category `i` is drawn in front of one of
/// category `j`, by trapezoidal integration over the two uniform depth jitters.
pub fn pairwise_occlusion_probability(prior: &OcclusionPriorSpec, i: usize, j: usize) -> Result<f64> {
    if i == j {
        return Err(Error::Argument(format!("pairwise probability needs distinct categories, got {i} twice")));
    }
    let n = prior.len();
    if i >= n || j >= n {
        return Err(Error::Argument(format!("category out of range: ({i}, {j}) with n = {n}")));
    }
    let gap = prior.categories[i].depth_score - prior.categories[j].depth_score;
    let sigma = prior.depth_noise;
    if sigma == 0.0 {
        return Ok(match gap.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => 1.0,
            Some(std::cmp::Ordering::Less) => 0.0,
            _ => 0.5,
        });
    }
    // P(U_j < gap + u) for u ~ U(-sigma, sigma), integrated against its density.
    let cdf = |u: f64| ((gap + u + sigma) / (2.0 * sigma)).clamp(0.0, 1.0);
    let step = 2.0 * sigma / (INTEGRATION_POINTS - 1) as f64;
    let mut acc = 0.0;
    for k in 0..INTEGRATION_POINTS {
        let u = -sigma + k as f64 * step;
        let weight = if k == 0 || k == INTEGRATION_POINTS - 1 { 0.5 } else { 1.0 };
        acc += weight * cdf(u);
    }
    Ok((acc * step / (2.0 * sigma)).clamp(0.0, 1.0))
}
