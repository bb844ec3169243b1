//! Reads dataset-level occlusion order out of trained composition weights.
//!
//! For output category `T` and another category `i`, `VW[T][i]` weighs
//! `i`'s visible channel and `OW[T][i]` its occluded channel. A negative
//! visible weight with a positive occluded weight reads as "T occludes i";
//! two positive weights read as a two-way relation dominated by the larger
//! one (visible larger: mostly `i` in front, occluded larger: mostly `T` in
//! front). Every other sign combination is reported as mixed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jigsaw::CompositionWeights;
use crate::scene::{pairwise_occlusion_probability, OcclusionPriorSpec};

pub const DEFAULT_EPSILON: f64 = 0.05;
/// Pairs whose occlusion probability lies within this distance of 0.5 are
/// not decisive when scoring agreement with a prior.
pub const DEFAULT_MARGIN: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correlation {
    Positive,
    Negative,
    None,
}

impl Correlation {
    fn classify(value: f64, epsilon: f64) -> Self {
        if value > epsilon {
            Correlation::Positive
        } else if value < -epsilon {
            Correlation::Negative
        } else {
            Correlation::None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    TargetOccludesOther,
    OtherOccludesTarget,
    Mixed,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationFinding {
    pub target: usize,
    pub other: usize,
    pub vw: f64,
    pub ow: f64,
    pub vw_correlation: Correlation,
    pub ow_correlation: Correlation,
    pub direction: Direction,
}

/// Direction implied by one `(VW[T][i], OW[T][i])` pair.
///
/// A negligible `vw` next to a positive `ow` reads as the target occluding
/// the other category, the direction on both sides of the dead zone.
pub fn classify(vw: f64, ow: f64, epsilon: f64) -> Direction {
    use Correlation::*;
    match (Correlation::classify(vw, epsilon), Correlation::classify(ow, epsilon)) {
        (None, None) => Direction::None,
        (Negative | None, Positive) => Direction::TargetOccludesOther,
        (Positive, Positive) if vw > ow => Direction::OtherOccludesTarget,
        (Positive, Positive) if ow > vw => Direction::TargetOccludesOther,
        _ => Direction::Mixed,
    }
}

/// One finding for every category other than `target`.
pub fn analyze(w: &CompositionWeights, target: usize, epsilon: f64) -> Result<Vec<RelationFinding>> {
    if target >= w.n() {
        return Err(Error::Argument(format!("category {target} out of range for {} categories", w.n())));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Argument(format!("epsilon must be > 0, got {epsilon}")));
    }
    Ok((0..w.n())
        .filter(|&i| i != target)
        .map(|i| {
            let (vw, ow) = (w.vw[target][i], w.ow[target][i]);
            RelationFinding {
                target,
                other: i,
                vw,
                ow,
                vw_correlation: Correlation::classify(vw, epsilon),
                ow_correlation: Correlation::classify(ow, epsilon),
                direction: classify(vw, ow, epsilon),
            }
        })
        .collect())
}

/// Findings for every target category.
pub fn analyze_all(w: &CompositionWeights, epsilon: f64) -> Result<Vec<RelationFinding>> {
    let mut all = Vec::new();
    for t in 0..w.n() {
        all.extend(analyze(w, t, epsilon)?);
    }
    Ok(all)
}

/// Fraction of decisive ordered pairs `(T, i)` whose finding matches the
/// generator's dominant order. A pair is decisive when the probability of
/// `T` being in front of `i` is at least `0.5 + margin` or at most
/// `0.5 - margin`. Missing, mixed and none findings count as misses; with no
/// decisive pairs the agreement is vacuously 1.
pub fn prior_agreement(findings: &[RelationFinding], prior: &OcclusionPriorSpec, margin: f64) -> Result<f64> {
    let n = prior.len();
    if let Some(f) = findings.iter().find(|f| f.target >= n || f.other >= n || f.target == f.other) {
        return Err(Error::Argument(format!(
            "finding ({}, {}) does not fit a prior with {n} categories",
            f.target, f.other
        )));
    }
    let (mut decisive, mut agree) = (0usize, 0usize);
    for t in 0..n {
        for i in (0..n).filter(|&i| i != t) {
            let p = pairwise_occlusion_probability(prior, t, i)?;
            let expected = if p >= 0.5 + margin {
                Direction::TargetOccludesOther
            } else if p <= 0.5 - margin {
                Direction::OtherOccludesTarget
            } else {
                continue;
            };
            decisive += 1;
            if findings.iter().any(|f| f.target == t && f.other == i && f.direction == expected) {
                agree += 1;
            }
        }
    }
    Ok(if decisive == 0 { 1.0 } else { agree as f64 / decisive as f64 })
}
