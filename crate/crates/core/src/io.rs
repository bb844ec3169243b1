//! On-disk formats: dataset manifests, weights files, loss traces and PGM
//! mask dumps. Floats are written with at most nine significant digits so
//! that artifacts are byte-stable.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heads::MaskStack;
use crate::jigsaw::CompositionWeights;
use crate::loss::sigmoid;
use crate::mask::{rle_decode, rle_encode, BinaryMask, InstanceRecord, RleMask};
use crate::scene::{CategorySpec, OcclusionPriorSpec, Scene, SceneConfig};

/// Rounds to nine significant digits.
pub fn round9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceJson {
    pub category: usize,
    pub depth: f64,
    pub amodal: RleMask,
    pub visible: RleMask,
    pub occluded: RleMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneJson {
    pub index: u64,
    pub instances: Vec<InstanceJson>,
}

/// One dataset split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub config: SceneConfig,
    pub categories: Vec<CategorySpec>,
    pub depth_noise: f64,
    pub scenes: Vec<SceneJson>,
}

impl Manifest {
    pub fn from_scenes(prior: &OcclusionPriorSpec, config: &SceneConfig, scenes: &[Scene]) -> Self {
        let mut categories = prior.categories.clone();
        categories.iter_mut().for_each(|c| c.depth_score = round9(c.depth_score));
        Manifest {
            config: config.clone(),
            categories,
            depth_noise: round9(prior.depth_noise),
            scenes: scenes
                .iter()
                .map(|s| SceneJson {
                    index: s.index,
                    instances: s
                        .instances
                        .iter()
                        .map(|r| InstanceJson {
                            category: r.category(),
                            depth: round9(r.depth()),
                            amodal: rle_encode(r.amodal()),
                            visible: rle_encode(r.visible()),
                            occluded: rle_encode(r.occluded()),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn prior(&self) -> OcclusionPriorSpec {
        OcclusionPriorSpec { categories: self.categories.clone(), depth_noise: self.depth_noise }
    }

    /// Decodes and re-validates every instance.
    pub fn scenes(&self) -> Result<Vec<Scene>> {
        let n = self.categories.len();
        self.scenes
            .iter()
            .map(|s| {
                let instances = s
                    .instances
                    .iter()
                    .enumerate()
                    .map(|(k, inst)| {
                        if inst.category >= n {
                            return Err(Error::Format(format!("scene {} instance {k}: unknown category {}", s.index, inst.category)));
                        }
                        let masks = [&inst.amodal, &inst.visible, &inst.occluded];
                        if masks.iter().any(|m| m.width != self.config.width || m.height != self.config.height) {
                            return Err(Error::Format(format!("scene {} instance {k}: mask size differs from canvas", s.index)));
                        }
                        InstanceRecord::new(
                            inst.category,
                            rle_decode(&inst.amodal)?,
                            rle_decode(&inst.visible)?,
                            rle_decode(&inst.occluded)?,
                            inst.depth,
                        )
                        .map_err(|e| Error::Format(format!("scene {} instance {k}: {e}", s.index)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Scene { config: self.config.clone(), index: s.index, instances })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsJson {
    pub n: usize,
    pub categories: Vec<String>,
    #[serde(rename = "VW")]
    pub vw: Vec<Vec<f64>>,
    #[serde(rename = "OW")]
    pub ow: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl WeightsJson {
    pub fn new(w: &CompositionWeights, categories: Vec<String>) -> Self {
        let r = |m: &Vec<Vec<f64>>| m.iter().map(|row| row.iter().map(|&v| round9(v)).collect()).collect();
        WeightsJson {
            n: w.n(),
            categories,
            vw: r(&w.vw),
            ow: r(&w.ow),
            bias: w.bias.iter().map(|&v| round9(v)).collect(),
        }
    }

    pub fn weights(&self) -> Result<CompositionWeights> {
        if self.categories.len() != self.n {
            return Err(Error::Format(format!("weights list {} category names for n = {}", self.categories.len(), self.n)));
        }
        let w = CompositionWeights::new(self.vw.clone(), self.ow.clone(), self.bias.clone())?;
        if w.n() != self.n {
            return Err(Error::Format(format!("weights declare n = {} but carry {} channels", self.n, w.n())));
        }
        Ok(w)
    }
}

/// `iteration,loss` rows, one per training step.
pub fn loss_csv(losses: &[f64]) -> String {
    let mut out = String::from("iteration,loss\n");
    for (k, l) in losses.iter().enumerate() {
        let _ = writeln!(out, "{k},{}", round9(*l));
    }
    out
}

/// Binary 8-bit PGM of a mask (foreground white).
pub fn mask_pgm(mask: &BinaryMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.bits().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

/// Binary 8-bit PGM of one stack channel's sigmoid probabilities.
pub fn channel_pgm(stack: &MaskStack, channel: usize) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", stack.width(), stack.height()).into_bytes();
    out.extend(stack.dense_channel(channel).iter().map(|&x| (sigmoid(x) * 255.0).round() as u8));
    out
}

/// Pretty JSON with every non-integer number rounded by [`round9`].
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut tree = serde_json::to_value(value).map_err(|e| Error::Format(e.to_string()))?;
    round_numbers(&mut tree);
    let mut s = serde_json::to_string_pretty(&tree).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn round_numbers(v: &mut serde_json::Value) {
    use serde_json::Value;
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64().and_then(|x| serde_json::Number::from_f64(round9(x))) {
                *n = x;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_numbers),
        Value::Object(map) => map.values_mut().for_each(round_numbers),
        _ => {}
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
