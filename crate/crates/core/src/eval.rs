//! COCO-style mask AP/AR.
//!
//! Per category and IoU threshold in 0.50:0.05:0.95, detections are ranked
//! by score and greedily matched to the unmatched ground truth with the
//! highest IoU; AP is the 101-point interpolated precision, AR the final
//! recall. Ground truth can be restricted to instances whose occlusion rate
//! exceeds a threshold; detections whose best-overlapping ground truth was
//! excluded are dropped rather than counted as false positives.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{iou, BinaryMask, InstanceRecord};
use crate::scene::Scene;

pub const MAX_DETECTIONS: usize = 100;
pub const RECALL_POINTS: usize = 101;
/// Occlusion rate above which an instance counts toward occluded AP.
pub const OCCLUDED_RATE: f64 = 0.15;

/// `0.50, 0.55, ..., 0.95`.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|k| (50 + 5 * k) as f64 / 100.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub scene_index: u64,
    pub category: usize,
    pub mask: BinaryMask,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskTarget {
    Amodal,
    Visible,
    Occluded,
}

impl MaskTarget {
    pub fn of(self, r: &InstanceRecord) -> &BinaryMask {
        match self {
            MaskTarget::Amodal => r.amodal(),
            MaskTarget::Visible => r.visible(),
            MaskTarget::Occluded => r.occluded(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryAp {
    pub category: usize,
    pub ap: f64,
}

/// Means exclude categories without ground truth, which report `-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap: f64,
    pub ar: f64,
    pub per_category: Vec<CategoryAp>,
    /// Amodal AP over instances with occlusion rate above the occluded-AP
    /// threshold; `-1` unless the target is amodal.
    pub occluded_ap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalParams {
    pub target: MaskTarget,
    /// Keep only ground truth with occlusion rate strictly above this.
    pub occlusion_filter: Option<f64>,
    /// Threshold used for the `occluded_ap` field.
    pub occluded_rate: f64,
}

impl EvalParams {
    pub fn new(target: MaskTarget) -> Self {
        Self { target, occlusion_filter: None, occluded_rate: OCCLUDED_RATE }
    }
}

pub fn evaluate(
    detections: &[Detection],
    ground_truth: &[Scene],
    target: MaskTarget,
    occlusion_filter: Option<f64>,
) -> Result<EvalReport> {
    evaluate_with(detections, ground_truth, &EvalParams { occlusion_filter, ..EvalParams::new(target) })
}

pub fn evaluate_with(detections: &[Detection], ground_truth: &[Scene], params: &EvalParams) -> Result<EvalReport> {
    let n = validate(detections, ground_truth)?;
    let (ap, ar, per_category) = summarize(detections, ground_truth, n, params.target, params.occlusion_filter);
    let occluded_ap = match params.target {
        MaskTarget::Amodal if params.occlusion_filter == Some(params.occluded_rate) => ap,
        MaskTarget::Amodal => summarize(detections, ground_truth, n, MaskTarget::Amodal, Some(params.occluded_rate)).0,
        _ => -1.0,
    };
    Ok(EvalReport { ap, ar, per_category, occluded_ap })
}

/// Returns the category count implied by the ground truth and detections.
fn validate(detections: &[Detection], ground_truth: &[Scene]) -> Result<usize> {
    let scenes: HashMap<u64, &Scene> = ground_truth.iter().map(|s| (s.index, s)).collect();
    let mut n = ground_truth.iter().flat_map(|s| &s.instances).map(|r| r.category() + 1).max().unwrap_or(0);
    for (k, d) in detections.iter().enumerate() {
        let scene = scenes
            .get(&d.scene_index)
            .ok_or_else(|| Error::Input(format!("detection {k} references unknown scene {}", d.scene_index)))?;
        if d.mask.width() != scene.width() || d.mask.height() != scene.height() {
            return Err(Error::Input(format!("detection {k} mask does not match the scene canvas")));
        }
        if !d.score.is_finite() {
            return Err(Error::Input(format!("detection {k} has a non-finite score")));
        }
        n = n.max(d.category + 1);
    }
    Ok(n)
}

/// Per-threshold outcome of one retained detection.
struct Ranked {
    score: f64,
    order: usize,
    tp: [bool; 10],
}

fn summarize(
    detections: &[Detection],
    ground_truth: &[Scene],
    n: usize,
    target: MaskTarget,
    filter: Option<f64>,
) -> (f64, f64, Vec<CategoryAp>) {
    let thresholds = iou_thresholds();
    let mut by_key: HashMap<(u64, usize), Vec<usize>> = HashMap::new();
    for (k, d) in detections.iter().enumerate() {
        if !d.mask.is_empty() {
            by_key.entry((d.scene_index, d.category)).or_default().push(k);
        }
    }

    let mut per_category = Vec::with_capacity(n);
    let (mut ap_sum, mut ar_sum, mut valid) = (0.0, 0.0, 0usize);
    for cat in 0..n {
        let mut ranked: Vec<Ranked> = Vec::new();
        let mut gt_count = 0usize;
        for scene in ground_truth {
            let gts: Vec<(&BinaryMask, bool)> = scene
                .instances
                .iter()
                .filter(|r| r.category() == cat)
                .map(|r| {
                    let mask = target.of(r);
                    let kept = !mask.is_empty() && filter.is_none_or(|f| r.occlusion_rate() > f);
                    (mask, kept)
                })
                .collect();
            gt_count += gts.iter().filter(|g| g.1).count();

            let mut dets = by_key.get(&(scene.index, cat)).cloned().unwrap_or_default();
            dets.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score));
            dets.truncate(MAX_DETECTIONS);

            let mut matched = vec![[false; 10]; gts.len()];
            for &d in &dets {
                let ious: Vec<f64> = gts.iter().map(|g| iou(&detections[d].mask, g.0).expect("validated shape")).collect();
                let best = ious
                    .iter()
                    .enumerate()
                    .fold(None, |acc: Option<(usize, f64)>, (g, &v)| match acc {
                        Some((_, bv)) if bv >= v => acc,
                        _ => Some((g, v)),
                    });
                if let Some((g, v)) = best {
                    if v > 0.0 && !gts[g].1 {
                        continue;
                    }
                }
                let mut tp = [false; 10];
                for (t, &thr) in thresholds.iter().enumerate() {
                    let mut pick: Option<(usize, f64)> = None;
                    for (g, &v) in ious.iter().enumerate() {
                        if gts[g].1 && !matched[g][t] && v >= thr && pick.is_none_or(|(_, pv)| v > pv) {
                            pick = Some((g, v));
                        }
                    }
                    if let Some((g, _)) = pick {
                        matched[g][t] = true;
                        tp[t] = true;
                    }
                }
                ranked.push(Ranked { score: detections[d].score, order: d, tp });
            }
        }
        if gt_count == 0 {
            per_category.push(CategoryAp { category: cat, ap: -1.0 });
            continue;
        }
        ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.order.cmp(&b.order)));
        let (mut cat_ap, mut cat_ar) = (0.0, 0.0);
        for t in 0..thresholds.len() {
            let (ap, recall) = interpolated_ap(ranked.iter().map(|r| r.tp[t]), gt_count);
            cat_ap += ap;
            cat_ar += recall;
        }
        cat_ap /= thresholds.len() as f64;
        cat_ar /= thresholds.len() as f64;
        per_category.push(CategoryAp { category: cat, ap: cat_ap });
        ap_sum += cat_ap;
        ar_sum += cat_ar;
        valid += 1;
    }
    if valid == 0 {
        return (-1.0, -1.0, per_category);
    }
    (ap_sum / valid as f64, ar_sum / valid as f64, per_category)
}

/// 101-point interpolated AP and final recall of a ranked TP/FP sequence.
fn interpolated_ap(hits: impl Iterator<Item = bool>, gt_count: usize) -> (f64, f64) {
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut recall = Vec::new();
    let mut precision = Vec::new();
    for hit in hits {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / gt_count as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for k in (1..precision.len()).rev() {
        precision[k - 1] = precision[k - 1].max(precision[k]);
    }
    let mut sum = 0.0;
    let mut k = 0;
    for r in 0..RECALL_POINTS {
        let level = r as f64 / (RECALL_POINTS - 1) as f64;
        while k < recall.len() && recall[k] < level {
            k += 1;
        }
        if k < recall.len() {
            sum += precision[k];
        }
    }
    (sum / RECALL_POINTS as f64, recall.last().copied().unwrap_or(0.0))
}

/// Mean sigmoid probability over the mask's pixels; 0 for an empty mask.
pub fn score_of(logits: &[f64], mask: &BinaryMask) -> Result<f64> {
    if logits.len() != mask.bits().len() {
        return Err(Error::Shape(format!("{} logits for a {}-pixel mask", logits.len(), mask.bits().len())));
    }
    let (sum, count) = logits
        .iter()
        .zip(mask.bits())
        .filter(|(_, &b)| b)
        .fold((0.0, 0usize), |(s, c), (&x, _)| (s + crate::loss::sigmoid(x), c + 1));
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}
