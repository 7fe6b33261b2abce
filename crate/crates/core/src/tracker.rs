//! Per-frame tracking loop: translation from fused per-layer responses,
//! long-term confidence, re-detection on failure, scale estimation and model
//! updates.

use crate::config::TrackerConfig;
use crate::corrfilter::{CorrelationFilter, LabelSpec};
use crate::error::{Error, Result};
use crate::features::{FeaturePyramid, FeatureSource};
use crate::fusion::{localize, ResponseMap};
use crate::longterm::LongTermClassifier;
use crate::proposals::{
    generate_detection_proposals, generate_scale_proposals, select_redetection, update_scale,
    BoundingBox, MotionModel,
};
use crate::tensor::{cosine_window, FeatureMap, Image};

/// Smallest feature grid side, in cells.
pub const MIN_GRID: usize = 4;

/// Everything carried from one frame to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    /// 1-based index of the last processed frame.
    pub frame_index: u32,
    pub bbox: BoundingBox,
    /// One filter per pyramid layer, deepest first.
    pub filters: Vec<CorrelationFilter>,
    pub clf: LongTermClassifier,
    pub last_confidence: f32,
    /// Diagonal of the first-frame box, in pixels.
    pub initial_diag: f32,
}

/// What happened inside one call to [`Tracker::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub frame_index: u32,
    /// Box after translation only.
    pub translated: BoundingBox,
    /// Fused peak displacement in cells, `(rows, cols)`.
    pub displacement: (isize, isize),
    /// `g` at the translated box.
    pub confidence: f32,
    pub redetection_attempted: bool,
    pub redetected: Option<BoundingBox>,
    /// `g` at the re-detected box.
    pub redetection_score: Option<f32>,
    pub scale_updated: bool,
    /// Translation filters are updated every frame.
    pub filters_updated: bool,
    /// `g` at the final box, which gates the classifier update.
    pub final_confidence: f32,
    pub clf_updated: bool,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    src: FeatureSource,
    state: TrackerState,
    grid_m: usize,
    grid_n: usize,
    window: FeatureMap,
    frame_w: usize,
    frame_h: usize,
}

fn even_cells(len: f32, padding: f32, cell: usize) -> usize {
    let cells = len * padding / cell as f32;
    ((2.0 * (cells / 2.0).round()) as usize).max(MIN_GRID)
}

impl Tracker {
    /// Train the per-layer filters and the long-term classifier on frame 1.
    pub fn init(img: &Image, box0: &BoundingBox, cfg: TrackerConfig, src: FeatureSource) -> Result<Self> {
        cfg.validate()?;
        box0.validate()?;
        let (fw, fh) = (img.width() as f32, img.height() as f32);
        if !(box0.x >= 0.0 && box0.x < fw && box0.y >= 0.0 && box0.y < fh) {
            return Err(Error::InvalidGeometry(format!(
                "initial box center ({}, {}) outside the {}x{} frame",
                box0.x,
                box0.y,
                img.width(),
                img.height()
            )));
        }
        let grid_m = even_cells(box0.w, cfg.padding, cfg.cell);
        let grid_n = even_cells(box0.h, cfg.padding, cfg.cell);
        let window = cosine_window(grid_m, grid_n)?;
        let clf = LongTermClassifier::train(img, box0, cfg.longterm_params())?;
        let mut tracker = Self {
            state: TrackerState {
                frame_index: 1,
                bbox: *box0,
                filters: Vec::new(),
                last_confidence: 0.0,
                initial_diag: box0.diagonal(),
                clf,
            },
            cfg,
            src,
            grid_m,
            grid_n,
            window,
            frame_w: img.width(),
            frame_h: img.height(),
        };
        let x = tracker.features(1, img, box0)?;
        let labels = tracker.label_spec();
        tracker.state.filters = x
            .layers()
            .iter()
            .map(|l| CorrelationFilter::train(l, &labels, tracker.cfg.lambda))
            .collect::<Result<_>>()?;
        tracker.state.last_confidence = tracker.state.clf.confidence(img, box0)?;
        Ok(tracker)
    }

    pub fn state(&self) -> &TrackerState {
        &self.state
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn source(&self) -> &FeatureSource {
        &self.src
    }

    pub fn bbox(&self) -> BoundingBox {
        self.state.bbox
    }

    /// Feature grid `(m, n)`, fixed at init.
    pub fn grid(&self) -> (usize, usize) {
        (self.grid_m, self.grid_n)
    }

    /// Labels shared by all layers; the target spans `grid / padding` cells.
    fn label_spec(&self) -> LabelSpec {
        LabelSpec::for_target(
            self.grid_m,
            self.grid_n,
            self.grid_m as f32 / self.cfg.padding,
            self.grid_n as f32 / self.cfg.padding,
            self.cfg.sigma_factor,
        )
    }

    fn search_window(&self, bbox: &BoundingBox) -> BoundingBox {
        bbox.with_size(bbox.w * self.cfg.padding, bbox.h * self.cfg.padding)
    }

    /// Cosine-windowed pyramid of the search window around `bbox`.
    fn features(&self, frame_index: u32, img: &Image, bbox: &BoundingBox) -> Result<FeaturePyramid> {
        let win = self.search_window(bbox);
        self.src
            .extract_pyramid(frame_index, img, &win, self.grid_m, self.grid_n)?
            .windowed(&self.window)
    }

    /// Per-layer responses of the search window around `bbox`.
    pub fn responses(&self, frame_index: u32, img: &Image, bbox: &BoundingBox) -> Result<Vec<ResponseMap>> {
        let z = self.features(frame_index, img, bbox)?;
        self.state
            .filters
            .iter()
            .zip(z.layers())
            .map(|(f, l)| f.respond(l))
            .collect()
    }

    fn clamp(&self, b: BoundingBox) -> BoundingBox {
        let (fw, fh) = (self.frame_w as f32, self.frame_h as f32);
        let min_side = self.cfg.cell as f32;
        let w = b.w.clamp(min_side, fw.max(min_side));
        let h = b.h.clamp(min_side, fh.max(min_side));
        BoundingBox::new(b.x.clamp(0.0, fw - 1.0), b.y.clamp(0.0, fh - 1.0), w, h)
    }

    /// Process the next frame and return the new target box.
    pub fn step(&mut self, img: &Image) -> Result<(BoundingBox, StepReport)> {
        if img.width() != self.frame_w || img.height() != self.frame_h {
            return Err(Error::InvalidSize(format!(
                "frame is {}x{}, sequence is {}x{}",
                img.width(),
                img.height(),
                self.frame_w,
                self.frame_h
            )));
        }
        let frame_index = self.state.frame_index + 1;
        let prev = self.state.bbox;

        // translation
        let maps = self.responses(frame_index, img, &prev)?;
        let spec = self.cfg.fusion_spec(maps.len(), self.grid_m, self.grid_n);
        let (peak, _) = localize(&maps, &spec)?;
        let (drow, dcol) = maps[0].displacement(peak);
        let win = self.search_window(&prev);
        let dx = dcol as f32 * win.w / self.grid_m as f32;
        let dy = drow as f32 * win.h / self.grid_n as f32;
        let translated = self.clamp(prev.with_center(prev.x + dx, prev.y + dy));

        // failure check and re-detection
        let clf = &self.state.clf;
        let confidence = clf.confidence(img, &translated)?;
        let mut bbox = translated;
        let mut current_score = confidence;
        let mut redetected = None;
        let mut redetection_score = None;
        let redetection_attempted = clf.is_failure(confidence);
        if redetection_attempted {
            let cands = generate_detection_proposals(self.frame_w, self.frame_h, &bbox, &self.cfg.detect_spec)?;
            let scores = cands
                .iter()
                .map(|b| clf.confidence(img, b))
                .collect::<Result<Vec<_>>>()?;
            let mm = MotionModel::new(self.state.initial_diag, self.cfg.alpha);
            if let Some(b) = select_redetection(&cands, &scores, &bbox, &mm, clf.accept_threshold())? {
                bbox = self.clamp(bbox.with_center(b.x, b.y));
                current_score = clf.confidence(img, &bbox)?;
                redetected = Some(bbox);
                redetection_score = Some(current_score);
            }
        }

        // scale, skipped while the target is still lost
        let cands = if clf.is_failure(current_score) {
            Vec::new()
        } else {
            generate_scale_proposals(&bbox, &self.cfg.scale_spec)?
        };
        let mut best: Option<(BoundingBox, f32)> = None;
        for b in &cands {
            let g = clf.confidence(img, b)?;
            if best.is_none_or(|(_, s)| g > s) {
                best = Some((*b, g));
            }
        }
        let mut scale_updated = false;
        if let Some((b, g)) = best {
            let scaled = self.clamp(update_scale(&bbox, &b, g, current_score, self.cfg.beta));
            scale_updated = scaled != bbox;
            bbox = scaled;
        }

        // model updates at the final box
        let x = self.features(frame_index, img, &bbox)?;
        let filters = self
            .state
            .filters
            .iter()
            .zip(x.layers())
            .map(|(f, l)| f.update(l, self.cfg.eta))
            .collect::<Result<Vec<_>>>()?;
        let final_confidence = clf.confidence(img, &bbox)?;
        let clf_updated = final_confidence > clf.t0();
        let clf = clf.conservative_update(img, &bbox, final_confidence, self.cfg.eta)?;

        self.state = TrackerState {
            frame_index,
            bbox,
            filters,
            clf,
            last_confidence: final_confidence,
            initial_diag: self.state.initial_diag,
        };
        let report = StepReport {
            frame_index,
            translated,
            displacement: (drow, dcol),
            confidence,
            redetection_attempted,
            redetected,
            redetection_score,
            scale_updated,
            filters_updated: true,
            final_confidence,
            clf_updated,
            bbox,
        };
        Ok((bbox, report))
    }
}
