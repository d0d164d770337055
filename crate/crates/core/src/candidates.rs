//! Candidate feature construction: entity spans are mean-pooled over their
//! subwords and joined with the trigger; object boxes are pooled over the
//! patches they touch and joined with the image CLS vector.

use std::ops::Range;

use ndarray::{concatenate, Array1, Axis};
use serde::{Deserialize, Serialize};

use crate::encoding::{ImageContext, Modality, PatchGrid, TextContext};
use crate::error::{Error, Result};

/// Half-open word range `[start, end)` within a sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct WordSpan {
    pub start: usize,
    pub end: usize,
}

impl WordSpan {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

impl From<[usize; 2]> for WordSpan {
    fn from([start, end]: [usize; 2]) -> Self {
        Self { start, end }
    }
}

impl From<WordSpan> for [usize; 2] {
    fn from(s: WordSpan) -> Self {
        [s.start, s.end]
    }
}

/// Pixel box `(x_min, y_min, x_max, y_max)` in original image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self { x_min, y_min, x_max, y_max }
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0) * (self.y_max - self.y_min).max(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.y_min, self.x_max, self.y_max].iter().all(|v| v.is_finite());
        if !finite || self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(Error::Validation(format!("bounding box {self:?} has zero area")));
        }
        Ok(())
    }

    /// Intersection over union; 0 when either box is empty.
    pub fn iou(&self, other: &BBox) -> f64 {
        let iw = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let ih = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

impl From<[f64; 4]> for BBox {
    fn from([a, b, c, d]: [f64; 4]) -> Self {
        Self::new(a, b, c, d)
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

/// The event anchor a candidate is paired with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerRef {
    pub modality: Modality,
    /// Trigger words for text events; image events are anchored by the CLS
    /// embedding and carry no span.
    pub span: Option<WordSpan>,
    pub event_type: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityCandidate {
    pub word_span: WordSpan,
    pub subword_range: Range<usize>,
    pub raw_feature: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectCandidate {
    pub bbox: BBox,
    pub patch_index_set: Vec<usize>,
    pub raw_feature: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectPooling {
    #[default]
    Max,
    Mean,
    /// Patch average weighted by overlap area with the box.
    Roi,
}

impl std::str::FromStr for ObjectPooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Self::Max),
            "mean" => Ok(Self::Mean),
            "roi" => Ok(Self::Roi),
            other => Err(Error::Config(format!("unknown pooling mode '{other}'"))),
        }
    }
}

/// Piece range covered by a word span.
pub fn subword_range(alignment: &[Range<usize>], span: WordSpan) -> Result<Range<usize>> {
    if span.is_empty() || span.end > alignment.len() {
        return Err(Error::Bounds(format!(
            "word span [{}, {}) outside sentence of {} words",
            span.start,
            span.end,
            alignment.len()
        )));
    }
    Ok(alignment[span.start].start..alignment[span.end - 1].end)
}

fn mean_of(ctx: &TextContext, range: Range<usize>) -> Array1<f64> {
    ctx.token_embeddings
        .slice(ndarray::s![range, ..])
        .mean_axis(Axis(0))
        .expect("non-empty range")
}

/// `mean(entity pieces) ⊕ mean(trigger pieces)`.
pub fn pool_entity(ctx: &TextContext, entity: WordSpan, trigger: WordSpan) -> Result<Array1<f64>> {
    let e = subword_range(&ctx.subword_alignment, entity)?;
    let t = subword_range(&ctx.subword_alignment, trigger)?;
    Ok(concatenate![Axis(0), mean_of(ctx, e), mean_of(ctx, t)])
}

pub fn entity_candidate(ctx: &TextContext, entity: WordSpan, trigger: WordSpan) -> Result<EntityCandidate> {
    Ok(EntityCandidate {
        word_span: entity,
        subword_range: subword_range(&ctx.subword_alignment, entity)?,
        raw_feature: pool_entity(ctx, entity, trigger)?,
    })
}

/// Box mapped into the encoder frame and clipped to it.
fn frame_box(grid: &PatchGrid, bbox: &BBox) -> Result<BBox> {
    bbox.validate()?;
    let sx = grid.frame_width() as f64 / grid.image_width as f64;
    let sy = grid.frame_height() as f64 / grid.image_height as f64;
    let b = BBox::new(
        (bbox.x_min * sx).max(0.0),
        (bbox.y_min * sy).max(0.0),
        (bbox.x_max * sx).min(grid.frame_width() as f64),
        (bbox.y_max * sy).min(grid.frame_height() as f64),
    );
    if b.x_min >= b.x_max || b.y_min >= b.y_max {
        return Err(Error::Bounds(format!(
            "bounding box {bbox:?} does not intersect the {}x{} image",
            grid.image_width, grid.image_height
        )));
    }
    Ok(b)
}

/// Overlap area of each touched patch, in row-major patch order.
fn patch_overlaps(grid: &PatchGrid, bbox: &BBox) -> Result<Vec<(usize, f64)>> {
    let b = frame_box(grid, bbox)?;
    let mut out = Vec::new();
    for idx in 0..grid.len() {
        let (x0, y0, x1, y1) = grid.patch_rect(idx);
        let w = b.x_max.min(x1) - b.x_min.max(x0);
        let h = b.y_max.min(y1) - b.y_min.max(y0);
        if w > 0.0 && h > 0.0 {
            out.push((idx, w * h));
        }
    }
    Ok(out)
}

/// Indices of the patches whose rectangle overlaps the box with positive area,
/// after rescaling the box into the encoder frame.
pub fn bbox_to_patches(grid: &PatchGrid, bbox: &BBox) -> Result<Vec<usize>> {
    Ok(patch_overlaps(grid, bbox)?.into_iter().map(|(i, _)| i).collect())
}

/// How object patches are reduced to one vector.
#[derive(Debug, Clone, PartialEq)]
pub enum PatchReduction {
    Max(Vec<usize>),
    Weighted(Vec<(usize, f64)>),
}

pub fn patch_reduction(grid: &PatchGrid, bbox: &BBox, mode: ObjectPooling) -> Result<PatchReduction> {
    let overlaps = patch_overlaps(grid, bbox)?;
    Ok(match mode {
        ObjectPooling::Max => PatchReduction::Max(overlaps.into_iter().map(|(i, _)| i).collect()),
        ObjectPooling::Mean => {
            let w = 1.0 / overlaps.len() as f64;
            PatchReduction::Weighted(overlaps.into_iter().map(|(i, _)| (i, w)).collect())
        }
        ObjectPooling::Roi => {
            let total: f64 = overlaps.iter().map(|(_, a)| a).sum();
            PatchReduction::Weighted(overlaps.into_iter().map(|(i, a)| (i, a / total)).collect())
        }
    })
}

/// `pool(object patches) ⊕ cls`.
pub fn pool_object(ctx: &ImageContext, bbox: &BBox, mode: ObjectPooling) -> Result<Array1<f64>> {
    let patches = &ctx.patch_embeddings;
    let pooled = match patch_reduction(&ctx.grid, bbox, mode)? {
        PatchReduction::Max(idx) => {
            let mut acc = patches.row(idx[0]).to_owned();
            for &i in &idx[1..] {
                acc.zip_mut_with(&patches.row(i), |a, &b| *a = a.max(b));
            }
            acc
        }
        PatchReduction::Weighted(w) => {
            let mut acc = Array1::zeros(patches.ncols());
            for (i, wt) in w {
                acc.scaled_add(wt, &patches.row(i));
            }
            acc
        }
    };
    Ok(concatenate![Axis(0), pooled, ctx.cls_embedding.view()])
}

pub fn object_candidate(ctx: &ImageContext, bbox: BBox, mode: ObjectPooling) -> Result<ObjectCandidate> {
    Ok(ObjectCandidate {
        bbox,
        patch_index_set: bbox_to_patches(&ctx.grid, &bbox)?,
        raw_feature: pool_object(ctx, &bbox, mode)?,
    })
}
