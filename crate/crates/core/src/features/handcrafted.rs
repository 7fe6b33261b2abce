//! Built-in gradient-orientation and intensity histograms per cell.

use std::f32::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, Image};

pub const ORIENTATION_BINS: usize = 9;
pub const INTENSITY_BINS: usize = 8;
pub const HANDCRAFTED_CHANNELS: usize = ORIENTATION_BINS + INTENSITY_BINS;
pub const HANDCRAFTED_LAYER: &str = "handcrafted";

const GRAD_EPS: f32 = 1e-5;

/// 17 channels per `cell x cell` block: a magnitude-weighted 9-bin
/// orientation histogram over `[0, pi)` (L2-normalized) followed by an 8-bin
/// intensity histogram over `[0, 1]` (L1-normalized).
///
/// Gradients are central differences on the luma plane with replicated
/// borders. Pixels beyond the last whole cell are ignored.
pub fn handcrafted_channels(patch: &Image, cell: usize) -> Result<FeatureMap> {
    if cell == 0 {
        return Err(Error::InvalidSize("cell size 0".into()));
    }
    let (w, h) = (patch.width(), patch.height());
    let (m, n) = (w / cell, h / cell);
    if m == 0 || n == 0 {
        return Err(Error::InvalidSize(format!(
            "{w}x{h} patch is smaller than one {cell}x{cell} cell"
        )));
    }
    let gray = patch.to_gray();
    let px = |x: usize, y: usize| gray.get(x, y, 0);

    let mut out = FeatureMap::zeros(HANDCRAFTED_LAYER, m, n, HANDCRAFTED_CHANNELS);
    let bin_width = PI / ORIENTATION_BINS as f32;
    for y in 0..n * cell {
        let (up, down) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..m * cell {
            let (left, right) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let gx = px(right, y) - px(left, y);
            let gy = px(x, down) - px(x, up);
            let (row, col) = (y / cell, x / cell);
            let mag = gx.hypot(gy);
            if mag > 0.0 {
                let mut theta = gy.atan2(gx);
                if theta < 0.0 {
                    theta += PI;
                }
                let bin = ((theta / bin_width) as usize).min(ORIENTATION_BINS - 1);
                let idx = (bin * n + row) * m + col;
                out.data_mut()[idx] += mag;
            }
            let v = px(x, y);
            let ibin = ((v * INTENSITY_BINS as f32) as usize).min(INTENSITY_BINS - 1);
            let idx = ((ORIENTATION_BINS + ibin) * n + row) * m + col;
            out.data_mut()[idx] += 1.0;
        }
    }

    let plane = m * n;
    let per_cell = (cell * cell) as f32;
    let data = out.data_mut();
    for k in 0..plane {
        let norm = (0..ORIENTATION_BINS)
            .map(|b| data[b * plane + k].powi(2))
            .sum::<f32>()
            .sqrt();
        for b in 0..ORIENTATION_BINS {
            data[b * plane + k] /= norm + GRAD_EPS;
        }
        for b in ORIENTATION_BINS..HANDCRAFTED_CHANNELS {
            data[b * plane + k] /= per_cell;
        }
    }
    Ok(out)
}
