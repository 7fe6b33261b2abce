//! Per-frame feature pyramids, from precomputed deep-layer archives or the
//! built-in handcrafted channels.

mod archive;
mod handcrafted;

use std::sync::Arc;

pub use archive::{encode_archive, write_archive, ArchiveRecord, FeatureArchive, MAGIC, VERSION};
pub use handcrafted::{
    handcrafted_channels, HANDCRAFTED_CHANNELS, HANDCRAFTED_LAYER, INTENSITY_BINS,
    ORIENTATION_BINS,
};

use crate::error::{Error, Result};
use crate::proposals::BoundingBox;
use crate::tensor::{apply_window, bilinear_resize, crop_window, resample_region, resize_image, FeatureMap, Image};

/// Feature layers of one search window, deepest first, all sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    layers: Vec<FeatureMap>,
}

impl FeaturePyramid {
    pub fn new(layers: Vec<FeatureMap>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Shape("empty feature pyramid".into()))?;
        if let Some(bad) = layers
            .iter()
            .find(|l| l.m() != first.m() || l.n() != first.n())
        {
            return Err(Error::Shape(format!(
                "layer {} is {}x{}, pyramid grid is {}x{}",
                bad.layer_id(),
                bad.m(),
                bad.n(),
                first.m(),
                first.n()
            )));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[FeatureMap] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.layers[0].m(), self.layers[0].n())
    }

    pub fn windowed(&self, win: &FeatureMap) -> Result<FeaturePyramid> {
        let layers = self
            .layers
            .iter()
            .map(|l| apply_window(l, win))
            .collect::<Result<Vec<_>>>()?;
        Ok(FeaturePyramid { layers })
    }
}

/// Where feature layers come from.
#[derive(Debug, Clone)]
pub enum FeatureSource {
    /// The 17-channel gradient/intensity histogram stack.
    Handcrafted { cell: usize },
    /// Full-frame deep features from an archive. `layers` lists the layer ids
    /// to use, deepest first.
    DeepFile {
        archive: Arc<FeatureArchive>,
        layers: Vec<String>,
        cell: usize,
    },
}

impl FeatureSource {
    pub fn handcrafted() -> Self {
        FeatureSource::Handcrafted { cell: 4 }
    }

    /// Use every layer stored in `archive`, ordered by descending layer id
    /// (`conv5`, `conv4`, `conv3`).
    pub fn deep(archive: FeatureArchive) -> Self {
        let mut layers = archive.layer_ids();
        layers.reverse();
        FeatureSource::DeepFile {
            archive: Arc::new(archive),
            layers,
            cell: 4,
        }
    }

    pub fn cell(&self) -> usize {
        match self {
            FeatureSource::Handcrafted { cell } | FeatureSource::DeepFile { cell, .. } => *cell,
        }
    }

    pub fn layer_count(&self) -> usize {
        match self {
            FeatureSource::Handcrafted { .. } => 1,
            FeatureSource::DeepFile { layers, .. } => layers.len(),
        }
    }

    pub fn layer_ids(&self) -> Vec<String> {
        match self {
            FeatureSource::Handcrafted { .. } => vec![HANDCRAFTED_LAYER.to_string()],
            FeatureSource::DeepFile { layers, .. } => layers.clone(),
        }
    }

    /// Features of the pixel region `window` of frame `frame_index`
    /// (1-based), resampled onto an `out_m x out_n` grid. No cosine window is
    /// applied.
    pub fn extract_pyramid(
        &self,
        frame_index: u32,
        frame: &Image,
        window: &BoundingBox,
        out_m: usize,
        out_n: usize,
    ) -> Result<FeaturePyramid> {
        if out_m < 2 || out_n < 2 {
            return Err(Error::InvalidSize(format!("feature grid {out_m}x{out_n}")));
        }
        window.validate()?;
        match self {
            FeatureSource::Handcrafted { cell } => {
                let patch = crop_window(frame, window, 1.0)?;
                let layer = handcrafted_pyramid_layer(&patch, *cell, out_m, out_n)?;
                FeaturePyramid::new(vec![layer])
            }
            FeatureSource::DeepFile { archive, layers, .. } => {
                if layers.is_empty() {
                    return Err(Error::FeatureMissing {
                        frame: frame_index,
                        layer: "<none>".into(),
                    });
                }
                let maps = layers
                    .iter()
                    .map(|id| {
                        let full = archive.load(frame_index, id)?;
                        crop_cells(&full, frame, window, out_m, out_n)
                    })
                    .collect::<Result<Vec<_>>>()?;
                FeaturePyramid::new(maps)
            }
        }
    }
}

/// Handcrafted channels of `patch` on an `out_m x out_n` grid: the patch is
/// warped to `out * cell` pixels first so cells land exactly on the grid.
pub fn handcrafted_pyramid_layer(patch: &Image, cell: usize, out_m: usize, out_n: usize) -> Result<FeatureMap> {
    let warped = resize_image(patch, out_m * cell, out_n * cell)?;
    let fm = handcrafted_channels(&warped, cell)?;
    bilinear_resize(&fm, out_m, out_n)
}

/// Crop the cell region under pixel `window` from a full-frame feature map
/// and resample it to `out_m x out_n`.
pub fn crop_cells(
    full: &FeatureMap,
    frame: &Image,
    window: &BoundingBox,
    out_m: usize,
    out_n: usize,
) -> Result<FeatureMap> {
    let sx = full.m() as f64 / frame.width() as f64;
    let sy = full.n() as f64 / frame.height() as f64;
    let span_x = (window.w as f64 * sx - 1.0).max(0.0);
    let span_y = (window.h as f64 * sy - 1.0).max(0.0);
    resample_region(
        full,
        window.left() as f64 * sx,
        window.top() as f64 * sy,
        span_x,
        span_y,
        out_m,
        out_n,
    )
}
