//! Long-term memory filter `g(.)` over handcrafted channels: scores patches
//! and proposals, flags tracking failures, and only learns from confident
//! frames.

use crate::corrfilter::{CorrelationFilter, LabelSpec};
use crate::error::{Error, Result};
use crate::features::handcrafted_pyramid_layer;
use crate::proposals::BoundingBox;
use crate::tensor::{apply_window, cosine_window, crop_window, FeatureMap, Image};

/// Smallest template grid side, in cells.
pub const MIN_TEMPLATE_CELLS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongTermParams {
    pub t0: f32,
    pub redetect_factor: f32,
    pub padding: f32,
    pub cell: usize,
    pub lambda: f32,
    pub sigma_factor: f32,
}

impl Default for LongTermParams {
    fn default() -> Self {
        Self {
            t0: 0.2,
            redetect_factor: 1.5,
            padding: 1.8,
            cell: 4,
            lambda: 1e-4,
            sigma_factor: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongTermClassifier {
    filter: CorrelationFilter,
    template_m: usize,
    template_n: usize,
    window: FeatureMap,
    params: LongTermParams,
}

impl LongTermClassifier {
    /// Fix the template grid from the first-frame box and train on it.
    pub fn train(img: &Image, bbox: &BoundingBox, params: LongTermParams) -> Result<Self> {
        bbox.validate()?;
        if !(params.t0 > 0.0) || !(params.redetect_factor > 1.0) {
            return Err(Error::Config(format!(
                "failure threshold {} / re-detection factor {}",
                params.t0, params.redetect_factor
            )));
        }
        if params.cell == 0 {
            return Err(Error::Config("cell size 0".into()));
        }
        let cells = |len: f32| {
            ((len * params.padding / params.cell as f32).round() as usize).max(MIN_TEMPLATE_CELLS)
        };
        let (template_m, template_n) = (cells(bbox.w), cells(bbox.h));
        let window = cosine_window(template_m, template_n)?;
        let labels = LabelSpec::for_target(
            template_m,
            template_n,
            template_m as f32 / params.padding,
            template_n as f32 / params.padding,
            params.sigma_factor,
        );
        let x = template_features(img, bbox, &params, &window, template_m, template_n)?;
        Ok(Self {
            filter: CorrelationFilter::train(&x, &labels, params.lambda)?,
            template_m,
            template_n,
            window,
            params,
        })
    }

    pub fn filter(&self) -> &CorrelationFilter {
        &self.filter
    }

    pub fn params(&self) -> &LongTermParams {
        &self.params
    }

    pub fn template_grid(&self) -> (usize, usize) {
        (self.template_m, self.template_n)
    }

    pub fn t0(&self) -> f32 {
        self.params.t0
    }

    /// Confidence a re-detection candidate must exceed.
    pub fn accept_threshold(&self) -> f32 {
        self.params.redetect_factor * self.params.t0
    }

    /// Windowed handcrafted features of the padded patch around `bbox`,
    /// warped onto the template grid.
    pub fn features(&self, img: &Image, bbox: &BoundingBox) -> Result<FeatureMap> {
        template_features(img, bbox, &self.params, &self.window, self.template_m, self.template_n)
    }

    /// `g(b)`: the maximum long-term filter response on the patch around `bbox`.
    pub fn confidence(&self, img: &Image, bbox: &BoundingBox) -> Result<f32> {
        let z = self.features(img, bbox)?;
        Ok(self.filter.respond(&z)?.max())
    }

    pub fn is_failure(&self, score: f32) -> bool {
        score < self.params.t0
    }

    /// Learn from `bbox` only when `score` clears the failure threshold;
    /// otherwise the classifier is returned unchanged.
    pub fn conservative_update(&self, img: &Image, bbox: &BoundingBox, score: f32, eta: f32) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Config(format!("learning rate {eta} not in [0,1]")));
        }
        if !(score > self.params.t0) {
            return Ok(self.clone());
        }
        let x = self.features(img, bbox)?;
        Ok(Self {
            filter: self.filter.update(&x, eta)?,
            ..self.clone()
        })
    }
}

fn template_features(
    img: &Image,
    bbox: &BoundingBox,
    params: &LongTermParams,
    window: &FeatureMap,
    m: usize,
    n: usize,
) -> Result<FeatureMap> {
    bbox.validate()?;
    let patch = crop_window(img, bbox, params.padding)?;
    let fm = handcrafted_pyramid_layer(&patch, params.cell, m, n)?;
    apply_window(&fm, window)
}
