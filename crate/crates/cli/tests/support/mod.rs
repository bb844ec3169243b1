//! Brute-force reference evaluator. Shares no code with the library
//! evaluator: masks become pixel sets, every threshold is matched from
//! scratch, and interpolated precision is taken straight from its definition.

use std::collections::HashSet;

use jigsaw_core::eval::{Detection, MaskTarget};
use jigsaw_core::{BinaryMask, Scene};

const THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

type Pixels = HashSet<(usize, usize)>;

fn pixels(m: &BinaryMask) -> Pixels {
    let mut out = HashSet::new();
    for r in 0..m.height() {
        for c in 0..m.width() {
            if m.get(r, c) {
                out.insert((r, c));
            }
        }
    }
    out
}

fn overlap(a: &Pixels, b: &Pixels) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

pub struct Reference {
    pub ap: f64,
    pub ar: f64,
    pub per_category: Vec<f64>,
}

struct Gt {
    pixels: Pixels,
    counted: bool,
}

/// Outcome of one detection at one threshold.
#[derive(Clone, Copy, PartialEq)]
enum Hit {
    Tp,
    Fp,
}

pub fn evaluate(detections: &[Detection], scenes: &[Scene], target: MaskTarget, filter: Option<f64>) -> Reference {
    let mut n = 0;
    for s in scenes {
        for r in &s.instances {
            n = n.max(r.category() + 1);
        }
    }
    for d in detections {
        n = n.max(d.category + 1);
    }

    let mut per_category = Vec::new();
    let mut aps = Vec::new();
    let mut ars = Vec::new();
    for cat in 0..n {
        let mut total_gt = 0;
        // (score, original index, per-threshold outcome)
        let mut pooled: Vec<(f64, usize, Vec<Hit>)> = Vec::new();
        for scene in scenes {
            let gts: Vec<Gt> = scene
                .instances
                .iter()
                .filter(|r| r.category() == cat)
                .map(|r| {
                    let p = pixels(target.of(r));
                    let counted = !p.is_empty()
                        && match filter {
                            Some(f) => r.occlusion_rate() > f,
                            None => true,
                        };
                    Gt { pixels: p, counted }
                })
                .collect();
            total_gt += gts.iter().filter(|g| g.counted).count();

            let mut mine: Vec<(usize, &Detection)> = detections
                .iter()
                .enumerate()
                .filter(|(_, d)| d.scene_index == scene.index && d.category == cat && d.mask.area() > 0)
                .collect();
            // stable selection sort by descending score keeps insertion order on ties
            let mut ordered = Vec::new();
            while !mine.is_empty() {
                let mut best = 0;
                for k in 1..mine.len() {
                    if mine[k].1.score > mine[best].1.score {
                        best = k;
                    }
                }
                ordered.push(mine.remove(best));
            }
            ordered.truncate(100);

            let det_pixels: Vec<Pixels> = ordered.iter().map(|(_, d)| pixels(&d.mask)).collect();
            let mut ignored = vec![false; ordered.len()];
            for (k, dp) in det_pixels.iter().enumerate() {
                let mut best: Option<(usize, f64)> = None;
                for (g, gt) in gts.iter().enumerate() {
                    let v = overlap(dp, &gt.pixels);
                    if best.map_or(true, |(_, b)| v > b) {
                        best = Some((g, v));
                    }
                }
                if let Some((g, v)) = best {
                    ignored[k] = v > 0.0 && !gts[g].counted;
                }
            }

            let mut outcomes: Vec<Vec<Hit>> = vec![Vec::new(); ordered.len()];
            for &thr in &THRESHOLDS {
                let mut taken = vec![false; gts.len()];
                for (k, dp) in det_pixels.iter().enumerate() {
                    if ignored[k] {
                        continue;
                    }
                    let mut choice: Option<(usize, f64)> = None;
                    for (g, gt) in gts.iter().enumerate() {
                        if !gt.counted || taken[g] {
                            continue;
                        }
                        let v = overlap(dp, &gt.pixels);
                        if v >= thr && choice.map_or(true, |(_, c)| v > c) {
                            choice = Some((g, v));
                        }
                    }
                    match choice {
                        Some((g, _)) => {
                            taken[g] = true;
                            outcomes[k].push(Hit::Tp);
                        }
                        None => outcomes[k].push(Hit::Fp),
                    }
                }
            }
            for (k, (index, d)) in ordered.iter().enumerate() {
                if !ignored[k] {
                    pooled.push((d.score, *index, outcomes[k].clone()));
                }
            }
        }
        if total_gt == 0 {
            per_category.push(-1.0);
            continue;
        }
        pooled.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));

        let mut ap_sum = 0.0;
        let mut ar_sum = 0.0;
        for t in 0..THRESHOLDS.len() {
            let mut curve = Vec::new();
            let mut tp = 0;
            for (k, entry) in pooled.iter().enumerate() {
                if entry.2[t] == Hit::Tp {
                    tp += 1;
                }
                curve.push((tp as f64 / total_gt as f64, tp as f64 / (k + 1) as f64));
            }
            let mut sum = 0.0;
            for r in 0..=100 {
                let level = r as f64 / 100.0;
                let mut best = 0.0f64;
                for &(recall, precision) in &curve {
                    if recall >= level && precision > best {
                        best = precision;
                    }
                }
                sum += best;
            }
            ap_sum += sum / 101.0;
            ar_sum += curve.last().map_or(0.0, |c| c.0);
        }
        let ap = ap_sum / 10.0;
        per_category.push(ap);
        aps.push(ap);
        ars.push(ar_sum / 10.0);
    }
    let mean = |v: &[f64]| if v.is_empty() { -1.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    Reference { ap: mean(&aps), ar: mean(&ars), per_category }
}
