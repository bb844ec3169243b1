//! Binary masks, per-instance amodal/visible/occluded records and the
//! column-major RLE interchange format.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major boolean grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, false)
    }

    pub fn full(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, true)
    }

    fn filled(width: usize, height: usize, value: bool) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("mask dimensions must be positive, got {width}x{height}")));
        }
        Ok(Self { width, height, bits: vec![value; width * height] })
    }

    /// Builds a mask from row-major bits.
    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("mask dimensions must be positive, got {width}x{height}")));
        }
        if bits.len() != width * height {
            return Err(Error::Shape(format!(
                "expected {} bits for a {width}x{height} mask, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    /// Builds a mask by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut mask = Self::empty(width, height)?;
        for r in 0..height {
            for c in 0..width {
                mask.bits[r * width + c] = f(r, c);
            }
        }
        Ok(mask)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn same_shape(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Tight bounding box as `(row0, col0, row1, col1)`, inclusive. `None` for an empty mask.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(r, c) {
                    bbox = Some(match bbox {
                        None => (r, c, r, c),
                        Some((r0, c0, r1, c1)) => (r0.min(r), c0.min(c), r1.max(r), c1.max(c)),
                    });
                }
            }
        }
        bbox
    }

    fn zip_with(&self, other: &BinaryMask, op: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        check_shape(self, other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| op(a, b)).collect();
        Ok(BinaryMask { width: self.width, height: self.height, bits })
    }

    /// Grows (`radius > 0`) or shrinks (`radius < 0`) the mask with a square
    /// structuring element of half-width `|radius|`. Pixels past the border
    /// count as background.
    /// The `width`x`height` block whose top-left pixel is `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, width: usize, height: usize) -> Result<BinaryMask> {
        if row + height > self.height || col + width > self.width {
            return Err(Error::Shape(format!(
                "{width}x{height} block at ({row}, {col}) exceeds a {}x{} mask",
                self.width, self.height
            )));
        }
        BinaryMask::from_fn(width, height, |r, c| self.get(row + r, col + c))
    }

    pub fn morph(&self, radius: i32) -> BinaryMask {
        if radius == 0 {
            return self.clone();
        }
        let r = radius.unsigned_abs() as usize;
        let grow = radius > 0;
        let mut out = self.clone();
        for row in 0..self.height {
            for col in 0..self.width {
                let r0 = row.checked_sub(r);
                let c0 = col.checked_sub(r);
                let r1 = row + r;
                let c1 = col + r;
                let value = if grow {
                    let (lo_r, lo_c) = (r0.unwrap_or(0), c0.unwrap_or(0));
                    (lo_r..=r1.min(self.height - 1))
                        .any(|y| (lo_c..=c1.min(self.width - 1)).any(|x| self.get(y, x)))
                } else {
                    match (r0, c0) {
                        (Some(lo_r), Some(lo_c)) if r1 < self.height && c1 < self.width => {
                            (lo_r..=r1).all(|y| (lo_c..=c1).all(|x| self.get(y, x)))
                        }
                        _ => false,
                    }
                };
                out.set(row, col, value);
            }
        }
        out
    }
}

fn check_shape(a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "mask dimensions differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )))
    }
}

pub fn union(a: &BinaryMask, b: &BinaryMask) -> Result<BinaryMask> {
    a.zip_with(b, |x, y| x || y)
}

pub fn intersect(a: &BinaryMask, b: &BinaryMask) -> Result<BinaryMask> {
    a.zip_with(b, |x, y| x && y)
}

/// Pixels of `a` that are not in `b`.
pub fn subtract(a: &BinaryMask, b: &BinaryMask) -> Result<BinaryMask> {
    a.zip_with(b, |x, y| x && !y)
}

/// Intersection over union. Two empty masks have IoU 1.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    check_shape(a, b)?;
    let (inter, uni) = a.bits.iter().zip(&b.bits).fold((0usize, 0usize), |(i, u), (&x, &y)| {
        (i + (x && y) as usize, u + (x || y) as usize)
    });
    Ok(if uni == 0 { 1.0 } else { inter as f64 / uni as f64 })
}

/// One object's ground truth: the amodal extent split into its visible and
/// occluded parts.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    category: usize,
    amodal: BinaryMask,
    visible: BinaryMask,
    occluded: BinaryMask,
    depth: f64,
}

impl InstanceRecord {
    /// Validates the decomposition: visible and occluded are disjoint and
    /// together make up a non-empty amodal mask.
    pub fn new(
        category: usize,
        amodal: BinaryMask,
        visible: BinaryMask,
        occluded: BinaryMask,
        depth: f64,
    ) -> Result<Self> {
        check_shape(&amodal, &visible)?;
        check_shape(&amodal, &occluded)?;
        if amodal.is_empty() {
            return Err(Error::Input("amodal mask must cover at least one pixel".into()));
        }
        for ((&a, &v), &o) in amodal.bits.iter().zip(&visible.bits).zip(&occluded.bits) {
            if v && o {
                return Err(Error::Input("visible and occluded masks overlap".into()));
            }
            if (v || o) != a {
                return Err(Error::Input("visible and occluded masks do not compose the amodal mask".into()));
            }
        }
        Ok(Self { category, amodal, visible, occluded, depth })
    }

    /// Splits `amodal` against the union of nearer objects.
    pub fn from_occluders(category: usize, amodal: BinaryMask, occluders: &BinaryMask, depth: f64) -> Result<Self> {
        let visible = subtract(&amodal, occluders)?;
        let occluded = intersect(&amodal, occluders)?;
        Self::new(category, amodal, visible, occluded, depth)
    }

    pub fn category(&self) -> usize {
        self.category
    }

    pub fn amodal(&self) -> &BinaryMask {
        &self.amodal
    }

    pub fn visible(&self) -> &BinaryMask {
        &self.visible
    }

    pub fn occluded(&self) -> &BinaryMask {
        &self.occluded
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    pub fn width(&self) -> usize {
        self.amodal.width
    }

    pub fn height(&self) -> usize {
        self.amodal.height
    }

    /// Occluded area over amodal area.
    pub fn occlusion_rate(&self) -> f64 {
        self.occluded.area() as f64 / self.amodal.area() as f64
    }
}

/// Uncompressed COCO-style run-length encoding: column-major traversal,
/// alternating background and foreground runs, starting with background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RleJson", into = "RleJson")]
pub struct RleMask {
    pub width: usize,
    pub height: usize,
    pub counts: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RleJson {
    size: [usize; 2],
    counts: Vec<u64>,
}

impl TryFrom<RleJson> for RleMask {
    type Error = Error;

    fn try_from(json: RleJson) -> Result<Self> {
        let rle = RleMask { height: json.size[0], width: json.size[1], counts: json.counts };
        rle.validate()?;
        Ok(rle)
    }
}

impl From<RleMask> for RleJson {
    fn from(rle: RleMask) -> Self {
        RleJson { size: [rle.height, rle.width], counts: rle.counts }
    }
}

impl RleMask {
    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Format(format!("RLE size must be positive, got {}x{}", self.width, self.height)));
        }
        let total: u64 = self.counts.iter().sum();
        if total != (self.width * self.height) as u64 {
            return Err(Error::Format(format!(
                "RLE counts sum to {total}, expected {}",
                self.width * self.height
            )));
        }
        Ok(())
    }
}

pub fn rle_encode(mask: &BinaryMask) -> RleMask {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u64;
    for c in 0..mask.width {
        for r in 0..mask.height {
            let bit = mask.get(r, c);
            if bit != current {
                counts.push(run);
                run = 0;
                current = bit;
            }
            run += 1;
        }
    }
    counts.push(run);
    RleMask { width: mask.width, height: mask.height, counts }
}

pub fn rle_decode(rle: &RleMask) -> Result<BinaryMask> {
    rle.validate()?;
    let mut mask = BinaryMask::empty(rle.width, rle.height)?;
    let mut pos = 0usize;
    for (k, &count) in rle.counts.iter().enumerate() {
        let fg = k % 2 == 1;
        for p in pos..pos + count as usize {
            if fg {
                mask.set(p % rle.height, p / rle.height, true);
            }
        }
        pos += count as usize;
    }
    Ok(mask)
}
