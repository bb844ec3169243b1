//! Loss primitives for the five-term objective: binary cross entropy on
//! logits for the three mask terms, smooth L1 for boxes, softmax cross
//! entropy for classes. The terms are summed with equal weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-[t ln s(x) + (1 - t) ln(1 - s(x))]` in the overflow-free form
/// `max(x, 0) - x t + ln(1 + e^-|x|)`.
pub fn bce_term(x: f64, t: bool) -> f64 {
    x.max(0.0) - if t { x } else { 0.0 } + (-x.abs()).exp().ln_1p()
}

fn check_logits(logits: &[f64], target: &BinaryMask) -> Result<()> {
    if logits.len() != target.bits().len() {
        return Err(Error::Shape(format!(
            "{} logits for a {}x{} target",
            logits.len(),
            target.width(),
            target.height()
        )));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite logit".into()));
    }
    Ok(())
}

/// Mean binary cross entropy of a logit map against a binary target.
pub fn bce_loss(logits: &[f64], target: &BinaryMask) -> Result<f64> {
    check_logits(logits, target)?;
    let sum: f64 = logits.iter().zip(target.bits()).map(|(&x, &t)| bce_term(x, t)).sum();
    Ok(sum / logits.len() as f64)
}

/// Mean BCE together with its gradient with respect to each logit.
pub fn bce_loss_with_grad(logits: &[f64], target: &BinaryMask) -> Result<(f64, Vec<f64>)> {
    check_logits(logits, target)?;
    let scale = 1.0 / logits.len() as f64;
    let mut sum = 0.0;
    let grad = logits
        .iter()
        .zip(target.bits())
        .map(|(&x, &t)| {
            sum += bce_term(x, t);
            (sigmoid(x) - if t { 1.0 } else { 0.0 }) * scale
        })
        .collect();
    Ok((sum * scale, grad))
}

/// Mean elementwise Huber loss with unit transition point.
pub fn smooth_l1(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!("smooth_l1 lengths {} and {}", pred.len(), target.len())));
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = (p - t).abs();
            if d < 1.0 {
                0.5 * d * d
            } else {
                d - 0.5
            }
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

/// `-ln softmax(logits)[class]`.
pub fn cross_entropy(logits: &[f64], class: usize) -> Result<f64> {
    if class >= logits.len() {
        return Err(Error::Argument(format!("class {class} out of range for {} logits", logits.len())));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[class])
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub l_am: f64,
    pub l_vm: f64,
    pub l_om: f64,
    pub l_box: f64,
    pub l_cls: f64,
}

/// Unweighted sum of the five terms.
pub fn total_loss(t: &LossTerms) -> f64 {
    t.l_box + t.l_cls + t.l_am + t.l_vm + t.l_om
}
