//! Config-driven glue: generate splits, train the head, evaluate it against
//! the reference compositions and read relations out of the weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate_with, score_of, Detection, EvalParams, EvalReport, MaskTarget};
use crate::heads::{MaskStack, NoiseModel};
use crate::jigsaw::{add_logits, forward_channel, make_sample, orcnn_occluded_baseline, train, CompositionWeights, TrainConfig, TrainOutcome};
use crate::mask::BinaryMask;
use crate::relation::{analyze, RelationFinding, DEFAULT_EPSILON};
use crate::scene::{sample_scenes, OcclusionPriorSpec, Scene, SceneConfig};

/// Validation scenes are drawn from this scene-index offset so they never
/// coincide with training scenes.
pub const VAL_INDEX_OFFSET: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: usize,
    pub val: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOptions {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_occlusion_filter")]
    pub occlusion_filter: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_threshold() -> f64 {
    0.5
}

fn default_occlusion_filter() -> f64 {
    crate::eval::OCCLUDED_RATE
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { threshold: default_threshold(), occlusion_filter: default_occlusion_filter(), epsilon: default_epsilon() }
    }
}

/// Everything needed to reproduce a run from one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub prior: OcclusionPriorSpec,
    pub scene: SceneConfig,
    pub splits: Splits,
    pub noise: NoiseModel,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalOptions,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
}

fn default_out_dir() -> String {
    "out".into()
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.scene.validate()?;
        self.noise.validate()?;
        self.train.validate()?;
        if self.splits.train == 0 {
            return Err(Error::Argument("splits.train: must be >= 1".into()));
        }
        if self.splits.val == 0 {
            return Err(Error::Argument("splits.val: must be >= 1".into()));
        }
        if !(self.eval.threshold > 0.0 && self.eval.threshold < 1.0) {
            return Err(Error::Argument(format!("eval.threshold: must lie in (0, 1), got {}", self.eval.threshold)));
        }
        if !(0.0..1.0).contains(&self.eval.occlusion_filter) {
            return Err(Error::Argument(format!("eval.occlusion_filter: must lie in [0, 1), got {}", self.eval.occlusion_filter)));
        }
        if !(self.eval.epsilon > 0.0 && self.eval.epsilon.is_finite()) {
            return Err(Error::Argument(format!("eval.epsilon: must be > 0, got {}", self.eval.epsilon)));
        }
        Ok(())
    }

    /// Points every seed at `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.scene.seed = seed;
        self.noise.seed = seed;
        self.train.seed = seed;
    }

    pub fn n(&self) -> usize {
        self.prior.len()
    }
}

pub fn generate_splits(cfg: &RunConfig) -> Result<(Vec<Scene>, Vec<Scene>)> {
    let train = sample_scenes(&cfg.prior, &cfg.scene, 0, cfg.splits.train)?;
    let val = sample_scenes(&cfg.prior, &cfg.scene, VAL_INDEX_OFFSET, cfg.splits.val)?;
    Ok((train, val))
}

pub fn train_head(cfg: &RunConfig, scenes: &[Scene]) -> Result<TrainOutcome> {
    train(scenes, cfg.n(), &cfg.noise, &cfg.train)
}

/// Amodal, visible and occluded-mask reports for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub amodal: EvalReport,
    pub visible: EvalReport,
    pub occluded_mask: EvalReport,
}

/// Side-by-side evaluation of the trained head, channel addition and
/// amodal-minus-visible subtraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub arcnn: MethodReport,
    pub arcnn_add: MethodReport,
    pub orcnn_subtract: MethodReport,
}

#[derive(Default)]
struct DetectionSets {
    head_amodal: Vec<Detection>,
    add_amodal: Vec<Detection>,
    visible: Vec<Detection>,
    occluded: Vec<Detection>,
    subtract_occluded: Vec<Detection>,
}

fn detection(scene: &Scene, category: usize, logits: &MaskStack, threshold: f64) -> Result<Detection> {
    detection_with_mask(scene, category, logits.threshold_channel(0, threshold), logits)
}

fn detection_with_mask(scene: &Scene, category: usize, mask: BinaryMask, logits: &MaskStack) -> Result<Detection> {
    let score = score_of(&logits.dense_channel(0), &mask)?;
    Ok(Detection { scene_index: scene.index, category, mask, score })
}

fn collect_detections(w: &CompositionWeights, cfg: &RunConfig, scenes: &[Scene]) -> Result<DetectionSets> {
    let thr = cfg.eval.threshold;
    let n = cfg.n();
    let mut sets = DetectionSets::default();
    for scene in scenes {
        for k in 0..scene.instances.len() {
            let s = make_sample(scene, k, &cfg.noise, n)?;
            let t = s.category;
            let head = forward_channel(w, &s.vm, &s.om, t)?;
            let add = add_logits(&s.vm, &s.om, t)?;
            let visible = single_channel(&s.vm, t)?;
            let occluded = single_channel(&s.om, t)?;
            let subtracted = orcnn_occluded_baseline(&head.threshold_channel(0, thr), &visible.threshold_channel(0, thr))?;
            sets.subtract_occluded.push(detection_with_mask(scene, t, subtracted, &head)?);
            sets.head_amodal.push(detection(scene, t, &head, thr)?);
            sets.add_amodal.push(detection(scene, t, &add, thr)?);
            sets.visible.push(detection(scene, t, &visible, thr)?);
            sets.occluded.push(detection(scene, t, &occluded, thr)?);
        }
    }
    Ok(sets)
}

fn single_channel(stack: &MaskStack, c: usize) -> Result<MaskStack> {
    MaskStack::windowed(1, stack.width(), stack.height(), stack.window(), stack.channel(c).to_vec(), vec![stack.background(c)])
}

pub fn compare_methods(w: &CompositionWeights, cfg: &RunConfig, scenes: &[Scene]) -> Result<Comparison> {
    if w.n() != cfg.n() {
        return Err(Error::Input(format!("weights have {} categories, config has {}", w.n(), cfg.n())));
    }
    let sets = collect_detections(w, cfg, scenes)?;
    let params = |target| EvalParams { occluded_rate: cfg.eval.occlusion_filter, ..EvalParams::new(target) };
    let eval = |dets: &[Detection], target| evaluate_with(dets, scenes, &params(target));
    let visible = eval(&sets.visible, MaskTarget::Visible)?;
    let occluded = eval(&sets.occluded, MaskTarget::Occluded)?;
    let head_amodal = eval(&sets.head_amodal, MaskTarget::Amodal)?;
    Ok(Comparison {
        arcnn: MethodReport { amodal: head_amodal.clone(), visible: visible.clone(), occluded_mask: occluded.clone() },
        arcnn_add: MethodReport { amodal: eval(&sets.add_amodal, MaskTarget::Amodal)?, visible: visible.clone(), occluded_mask: occluded },
        orcnn_subtract: MethodReport { amodal: head_amodal, visible, occluded_mask: eval(&sets.subtract_occluded, MaskTarget::Occluded)? },
    })
}

fn pct(x: f64) -> String {
    if x < 0.0 {
        "   n/a".into()
    } else {
        format!("{:6.2}", 100.0 * x)
    }
}

/// Plain-text grid: amodal AP/AR, visible AP/AR, occluded-mask AP and the
/// amodal AP of occluded instances.
pub fn comparison_table(c: &Comparison, occluded_rate: f64) -> String {
    let mut out = format!(
        "{:<16} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}\n",
        "method", "am.AP", "am.AR", "vis.AP", "vis.AR", "occ.AP", "oAP>"
    );
    for (name, m) in [("ARCNN", &c.arcnn), ("ARCNN-add", &c.arcnn_add), ("ORCNN-subtract", &c.orcnn_subtract)] {
        out.push_str(&format!(
            "{:<16} {} {} {} {} {} {}\n",
            name,
            pct(m.amodal.ap),
            pct(m.amodal.ar),
            pct(m.visible.ap),
            pct(m.visible.ar),
            pct(m.occluded_mask.ap),
            pct(m.amodal.occluded_ap)
        ));
    }
    out.push_str(&format!(
        "occ.AP: occluded-mask AP; oAP>: amodal AP of instances with occlusion rate > {occluded_rate}\n"
    ));
    out
}

/// Findings for the requested categories (all when `targets` is empty).
pub fn relation_findings(w: &CompositionWeights, targets: &[usize], epsilon: f64) -> Result<Vec<RelationFinding>> {
    let all: Vec<usize> = (0..w.n()).collect();
    let targets = if targets.is_empty() { &all[..] } else { targets };
    let mut out = Vec::new();
    for &t in targets {
        out.extend(analyze(w, t, epsilon)?);
    }
    Ok(out)
}
