//! Box geometry and region proposals for scale estimation and re-detection.
//!
//! Proposals come from a deterministic lattice on which neighboring boxes
//! of the same size overlap with IoU equal to the `step` parameter.
//! Ranking is left to the long-term classifier.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Center-based box in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x: f32,
    pub y: f32,
    pub w: f32,
    pub h: f32,
}

impl BoundingBox {
    pub fn new(x: f32, y: f32, w: f32, h: f32) -> Self {
        Self { x, y, w, h }
    }

    /// From the `(left, top, width, height)` convention used by benchmark files.
    pub fn from_top_left(left: f32, top: f32, w: f32, h: f32) -> Self {
        Self::new(left + w / 2.0, top + h / 2.0, w, h)
    }

    pub fn to_top_left(&self) -> [f32; 4] {
        [self.x - self.w / 2.0, self.y - self.h / 2.0, self.w, self.h]
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0
            && self.h > 0.0
            && self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidGeometry(format!("{self:?}")))
        }
    }

    pub fn area(&self) -> f32 {
        self.w * self.h
    }

    pub fn left(&self) -> f32 {
        self.x - self.w / 2.0
    }

    pub fn right(&self) -> f32 {
        self.x + self.w / 2.0
    }

    pub fn top(&self) -> f32 {
        self.y - self.h / 2.0
    }

    pub fn bottom(&self) -> f32 {
        self.y + self.h / 2.0
    }

    pub fn diagonal(&self) -> f32 {
        self.w.hypot(self.h)
    }

    pub fn center_distance(&self, other: &BoundingBox) -> f32 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn with_center(&self, x: f32, y: f32) -> Self {
        Self::new(x, y, self.w, self.h)
    }

    pub fn with_size(&self, w: f32, h: f32) -> Self {
        Self::new(self.x, self.y, w, h)
    }

    fn lexical_cmp(&self, other: &BoundingBox) -> Ordering {
        self.x
            .total_cmp(&other.x)
            .then(self.y.total_cmp(&other.y))
            .then(self.w.total_cmp(&other.w))
            .then(self.h.total_cmp(&other.h))
    }
}

/// A box with an associated ranking score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub bbox: BoundingBox,
    pub score: f32,
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f32 {
    let iw = (a.right().min(b.right()) - a.left().max(b.left())).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.top().max(b.top())).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy non-maximum suppression. Boxes are visited by descending score
/// (stable for ties) and kept iff their IoU with every kept box is at most
/// `thresh`.
pub fn nms(boxes: &[ScoredBox], thresh: f32) -> Vec<ScoredBox> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].score.total_cmp(&boxes[a].score));
    let mut kept: Vec<ScoredBox> = Vec::new();
    for i in order {
        let cand = boxes[i];
        if kept.iter().all(|k| iou(&k.bbox, &cand.bbox) <= thresh) {
            kept.push(cand);
        }
    }
    kept
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProposalMode {
    Scale,
    Detection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposalSpec {
    pub mode: ProposalMode,
    /// IoU between neighboring same-size boxes on the lattice.
    pub step: f32,
    pub nms_iou: f32,
    pub scale_ratios: Vec<f32>,
    pub max_boxes: usize,
}

impl ProposalSpec {
    pub fn scale() -> Self {
        Self {
            mode: ProposalMode::Scale,
            step: 0.75,
            nms_iou: 0.6,
            scale_ratios: vec![0.90, 0.95, 1.0, 1.05, 1.10],
            max_boxes: 100,
        }
    }

    pub fn detection() -> Self {
        Self {
            mode: ProposalMode::Detection,
            step: 0.85,
            nms_iou: 0.8,
            scale_ratios: vec![0.8, 1.0, 1.2],
            max_boxes: 200,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step < 1.0) {
            return Err(Error::Config(format!("proposal step {} not in (0,1)", self.step)));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return Err(Error::Config(format!(
                "proposal NMS threshold {} not in (0,1)",
                self.nms_iou
            )));
        }
        if self.scale_ratios.is_empty() || self.scale_ratios.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Config("scale ratios must be positive".into()));
        }
        Ok(())
    }

    fn expect_mode(&self, mode: ProposalMode) -> Result<()> {
        self.validate()?;
        if self.mode != mode {
            return Err(Error::Config(format!(
                "expected a {mode:?} proposal spec, got {:?}",
                self.mode
            )));
        }
        Ok(())
    }
}

/// Center offset at which two boxes of extent `len` overlap with IoU `step`
/// along one axis.
fn lattice_stride(len: f32, step: f32) -> f32 {
    len * (1.0 - step) / (1.0 + step)
}

/// Lower and upper IoU bounds for scale proposals against the current box.
pub const SCALE_IOU_BAND: (f32, f32) = (0.6, 0.9);

/// Scale proposals around `current`: for every `(w, h)` ratio pair, a 3x3
/// center lattice one stride apart, thinned by NMS within that size level,
/// then restricted to the IoU band against `current`.
pub fn generate_scale_proposals(current: &BoundingBox, spec: &ProposalSpec) -> Result<Vec<BoundingBox>> {
    spec.expect_mode(ProposalMode::Scale)?;
    current.validate()?;
    let mut out: Vec<BoundingBox> = Vec::new();
    for &rw in &spec.scale_ratios {
        for &rh in &spec.scale_ratios {
            let (w, h) = (current.w * rw, current.h * rh);
            let sx = lattice_stride(w, spec.step);
            let sy = lattice_stride(h, spec.step);
            let mut level = Vec::with_capacity(9);
            for oy in -1..=1 {
                for ox in -1..=1 {
                    let b = BoundingBox::new(
                        current.x + ox as f32 * sx,
                        current.y + oy as f32 * sy,
                        w,
                        h,
                    );
                    level.push(ScoredBox {
                        bbox: b,
                        score: -b.center_distance(current),
                    });
                }
            }
            out.extend(nms(&level, spec.nms_iou).into_iter().map(|s| s.bbox));
        }
    }
    let (lo, hi) = SCALE_IOU_BAND;
    out.retain(|b| {
        let o = iou(b, current);
        o >= lo && o <= hi
    });
    // same-center candidates first when capping
    out.sort_by(|a, b| {
        a.center_distance(current)
            .total_cmp(&b.center_distance(current))
    });
    out.truncate(spec.max_boxes);
    Ok(out)
}

/// Evenly spaced centers covering `[half, len - half]` with spacing no larger
/// than `stride`.
fn axis_centers(len: f32, extent: f32, stride: f32) -> Vec<f32> {
    let span = len - extent;
    if span <= 0.0 {
        return vec![len / 2.0];
    }
    let count = (span / stride).ceil() as usize + 1;
    let spacing = span / (count - 1) as f32;
    (0..count)
        .map(|i| extent / 2.0 + i as f32 * spacing)
        .collect()
}

/// Full-frame detection proposals at the current box size times each ratio.
///
/// When the lattice implied by `spec.step` would exceed `spec.max_boxes`,
/// the stride is widened uniformly so the frame stays covered.
pub fn generate_detection_proposals(
    img_w: usize,
    img_h: usize,
    current: &BoundingBox,
    spec: &ProposalSpec,
) -> Result<Vec<BoundingBox>> {
    spec.expect_mode(ProposalMode::Detection)?;
    current.validate()?;
    if img_w == 0 || img_h == 0 {
        return Err(Error::InvalidSize(format!("frame {img_w}x{img_h}")));
    }
    let (fw, fh) = (img_w as f32, img_h as f32);
    let sizes: Vec<(f32, f32)> = spec
        .scale_ratios
        .iter()
        .map(|&r| ((current.w * r).min(fw), (current.h * r).min(fh)))
        .collect();

    let lattice = |widen: f32| -> Vec<BoundingBox> {
        let mut boxes = Vec::new();
        for &(w, h) in &sizes {
            let xs = axis_centers(fw, w, lattice_stride(w, spec.step) * widen);
            let ys = axis_centers(fh, h, lattice_stride(h, spec.step) * widen);
            for &y in &ys {
                for &x in &xs {
                    boxes.push(BoundingBox::new(x, y, w, h));
                }
            }
        }
        boxes
    };

    let mut widen = 1.0f32;
    let mut boxes = lattice(widen);
    while boxes.len() > spec.max_boxes.max(1) && widen < 1e4 {
        widen *= 1.1;
        boxes = lattice(widen);
    }
    let scored: Vec<ScoredBox> = boxes
        .into_iter()
        .map(|b| ScoredBox {
            bbox: b,
            score: -b.center_distance(current),
        })
        .collect();
    let mut kept: Vec<BoundingBox> = nms(&scored, spec.nms_iou).into_iter().map(|s| s.bbox).collect();
    kept.truncate(spec.max_boxes);
    Ok(kept)
}

/// Motion prior for re-detection candidates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionModel {
    /// Diagonal of the first-frame box, in pixels.
    pub sigma: f32,
    pub alpha: f32,
}

impl MotionModel {
    pub fn new(sigma: f32, alpha: f32) -> Self {
        Self { sigma, alpha }
    }
}

/// Gaussian weight of the center displacement between `cand` and `prev`.
pub fn motion_weight(cand: &BoundingBox, prev: &BoundingBox, mm: &MotionModel) -> f32 {
    let d2 = (cand.x - prev.x).powi(2) + (cand.y - prev.y).powi(2);
    (-(d2 as f64) / (2.0 * (mm.sigma as f64).powi(2))).exp() as f32
}

/// Pick the candidate maximizing `g(b) + alpha * D(b, prev)` among those with
/// `g(b) > accept_thresh`. Ties fall to the lexicographically smallest box so
/// the result does not depend on candidate order.
pub fn select_redetection(
    cands: &[BoundingBox],
    scores: &[f32],
    prev: &BoundingBox,
    mm: &MotionModel,
    accept_thresh: f32,
) -> Result<Option<BoundingBox>> {
    if cands.len() != scores.len() {
        return Err(Error::Shape(format!(
            "{} candidates but {} scores",
            cands.len(),
            scores.len()
        )));
    }
    let best = cands
        .iter()
        .zip(scores)
        .filter(|(_, &g)| g > accept_thresh)
        .map(|(b, &g)| (b, g + mm.alpha * motion_weight(b, prev, mm)))
        .max_by(|(ba, a), (bb, b)| a.total_cmp(b).then_with(|| bb.lexical_cmp(ba)));
    Ok(best.map(|(b, _)| *b))
}

/// Moving-average size update, applied only when the best proposal beats the
/// current patch's confidence. The center stays at `prev`.
pub fn update_scale(
    prev: &BoundingBox,
    best: &BoundingBox,
    best_score: f32,
    current_score: f32,
    beta: f32,
) -> BoundingBox {
    if !(best_score > current_score) {
        return *prev;
    }
    prev.with_size(
        beta * best.w + (1.0 - beta) * prev.w,
        beta * best.h + (1.0 - beta) * prev.h,
    )
}
