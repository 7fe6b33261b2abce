//! Dense 2-D multi-channel arrays: frames, feature stacks, cropping,
//! bilinear resampling, windowing and principal-component visualization.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::proposals::BoundingBox;

/// A frame or patch with values in `[0, 1]`, stored row-major with
/// interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidSize(format!("image {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidSize(format!("{channels} image channels")));
        }
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "image buffer has {} values, expected {}",
                data.len(),
                width * height * channels
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::Numeric("image values outside [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Image filled with a single value in every channel.
    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f32) {
        self.data[(y * self.width + x) * self.channels + c] = value;
    }

    /// Luma using the 0.299/0.587/0.114 weights; identity for gray images.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).clamp(0.0, 1.0))
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    fn from_planes(planes: &FeatureMap) -> Image {
        let (m, n, d) = (planes.m(), planes.n(), planes.d());
        let mut data = Vec::with_capacity(m * n * d);
        for row in 0..n {
            for col in 0..m {
                for c in 0..d {
                    data.push(planes.get(c, row, col).clamp(0.0, 1.0));
                }
            }
        }
        Image {
            width: m,
            height: n,
            channels: d,
            data,
        }
    }

    fn to_planes(&self) -> FeatureMap {
        let mut fm = FeatureMap::zeros("image", self.width, self.height, self.channels);
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..self.channels {
                    fm.set(c, y, x, self.get(x, y, c));
                }
            }
        }
        fm
    }
}

/// An `m` (width) by `n` (height) by `d` (channels) feature stack, stored
/// channel-planar with each plane row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    layer_id: String,
    m: usize,
    n: usize,
    d: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(layer_id: impl Into<String>, m: usize, n: usize, d: usize, data: Vec<f32>) -> Result<Self> {
        if m == 0 || n == 0 || d == 0 {
            return Err(Error::InvalidSize(format!("feature map {m}x{n}x{d}")));
        }
        if data.len() != m * n * d {
            return Err(Error::Shape(format!(
                "feature buffer has {} values, expected {}",
                data.len(),
                m * n * d
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("feature map".into()));
        }
        Ok(Self {
            layer_id: layer_id.into(),
            m,
            n,
            d,
            data,
        })
    }

    pub fn zeros(layer_id: impl Into<String>, m: usize, n: usize, d: usize) -> Self {
        Self {
            layer_id: layer_id.into(),
            m,
            n,
            d,
            data: vec![0.0; m * n * d],
        }
    }

    pub fn layer_id(&self) -> &str {
        &self.layer_id
    }

    pub fn with_layer_id(mut self, layer_id: impl Into<String>) -> Self {
        self.layer_id = layer_id.into();
        self
    }

    /// Width in cells.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Height in cells.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Channel count.
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let len = self.m * self.n;
        &self.data[c * len..(c + 1) * len]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let len = self.m * self.n;
        &mut self.data[c * len..(c + 1) * len]
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> f32 {
        self.data[(c * self.n + row) * self.m + col]
    }

    pub fn set(&mut self, c: usize, row: usize, col: usize, value: f32) {
        self.data[(c * self.n + row) * self.m + col] = value;
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Circular shift of every plane by `rows` down and `cols` right.
    pub fn circshift(&self, rows: isize, cols: isize) -> FeatureMap {
        let mut out = FeatureMap::zeros(self.layer_id.clone(), self.m, self.n, self.d);
        let (m, n) = (self.m as isize, self.n as isize);
        for c in 0..self.d {
            for r in 0..self.n {
                for q in 0..self.m {
                    let rr = (r as isize + rows).rem_euclid(n) as usize;
                    let qq = (q as isize + cols).rem_euclid(m) as usize;
                    out.set(c, rr, qq, self.get(c, r, q));
                }
            }
        }
        out
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.m == other.m && self.n == other.n && self.d == other.d
    }
}

/// Crop a `padding`-scaled window centered on `bbox`, replicating edge
/// pixels for any part that falls outside the frame.
pub fn crop_window(img: &Image, bbox: &BoundingBox, padding: f32) -> Result<Image> {
    if !(padding >= 1.0) {
        return Err(Error::InvalidGeometry(format!("padding {padding} < 1")));
    }
    let pw = (bbox.w * padding).round();
    let ph = (bbox.h * padding).round();
    if !(pw >= 1.0 && ph >= 1.0) {
        return Err(Error::InvalidGeometry(format!(
            "window {}x{} for box {bbox:?}",
            pw, ph
        )));
    }
    let (pw, ph) = (pw as usize, ph as usize);
    let left = (bbox.x - pw as f32 / 2.0).round() as i64;
    let top = (bbox.y - ph as f32 / 2.0).round() as i64;
    let max_x = img.width as i64 - 1;
    let max_y = img.height as i64 - 1;
    let ch = img.channels;
    let mut data = Vec::with_capacity(pw * ph * ch);
    for y in 0..ph as i64 {
        let sy = (top + y).clamp(0, max_y) as usize;
        for x in 0..pw as i64 {
            let sx = (left + x).clamp(0, max_x) as usize;
            let base = (sy * img.width + sx) * ch;
            data.extend_from_slice(&img.data[base..base + ch]);
        }
    }
    Ok(Image {
        width: pw,
        height: ph,
        channels: ch,
        data,
    })
}

/// Separable linear-interpolation coordinates for one axis.
struct AxisSamples {
    lo: Vec<usize>,
    hi: Vec<usize>,
    t: Vec<f64>,
}

impl AxisSamples {
    /// `count` samples from `start` with spacing `span / (count - 1)`, in
    /// source index units, clamped to `[0, len - 1]`.
    fn new(len: usize, start: f64, span: f64, count: usize) -> Self {
        let last = (len - 1) as f64;
        let mut out = AxisSamples {
            lo: Vec::with_capacity(count),
            hi: Vec::with_capacity(count),
            t: Vec::with_capacity(count),
        };
        for i in 0..count {
            let pos = if count == 1 {
                start + span / 2.0
            } else {
                start + i as f64 * span / (count - 1) as f64
            };
            let pos = pos.clamp(0.0, last);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            out.lo.push(lo);
            out.hi.push(hi);
            out.t.push(pos - lo as f64);
        }
        out
    }
}

/// Sample an `out_m` x `out_n` grid from `fm` whose first/last samples lie
/// at `(x0, y0)` and `(x0 + span_x, y0 + span_y)` in cell-index units.
/// Out-of-range positions replicate the border.
pub fn resample_region(
    fm: &FeatureMap,
    x0: f64,
    y0: f64,
    span_x: f64,
    span_y: f64,
    out_m: usize,
    out_n: usize,
) -> Result<FeatureMap> {
    if out_m == 0 || out_n == 0 {
        return Err(Error::InvalidSize(format!("resize to {out_m}x{out_n}")));
    }
    let xs = AxisSamples::new(fm.m, x0, span_x, out_m);
    let ys = AxisSamples::new(fm.n, y0, span_y, out_n);
    let mut out = FeatureMap::zeros(fm.layer_id.clone(), out_m, out_n, fm.d);
    for c in 0..fm.d {
        let src = fm.plane(c);
        let dst = out.plane_mut(c);
        for (r, ((&y0, &y1), &ty)) in ys.lo.iter().zip(&ys.hi).zip(&ys.t).enumerate() {
            let row0 = &src[y0 * fm.m..(y0 + 1) * fm.m];
            let row1 = &src[y1 * fm.m..(y1 + 1) * fm.m];
            for (q, ((&x0, &x1), &tx)) in xs.lo.iter().zip(&xs.hi).zip(&xs.t).enumerate() {
                let top = (1.0 - tx) * row0[x0] as f64 + tx * row0[x1] as f64;
                let bottom = (1.0 - tx) * row1[x0] as f64 + tx * row1[x1] as f64;
                dst[r * out_m + q] = ((1.0 - ty) * top + ty * bottom) as f32;
            }
        }
    }
    Ok(out)
}

/// Bilinear resize with the align-corners convention: the corner cells of
/// input and output coincide and every output is a convex combination of at
/// most four input neighbors.
pub fn bilinear_resize(fm: &FeatureMap, out_m: usize, out_n: usize) -> Result<FeatureMap> {
    if out_m == fm.m && out_n == fm.n {
        return Ok(fm.clone());
    }
    resample_region(
        fm,
        0.0,
        0.0,
        (fm.m - 1) as f64,
        (fm.n - 1) as f64,
        out_m,
        out_n,
    )
}

/// Bilinear image resize (same convention as [`bilinear_resize`]).
pub fn resize_image(img: &Image, width: usize, height: usize) -> Result<Image> {
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let planes = bilinear_resize(&img.to_planes(), width, height)?;
    Ok(Image::from_planes(&planes))
}

/// Separable Hann window, zero on all four borders.
pub fn cosine_window(m: usize, n: usize) -> Result<FeatureMap> {
    if m < 2 || n < 2 {
        return Err(Error::InvalidSize(format!("cosine window {m}x{n}")));
    }
    let hann = |len: usize| -> Vec<f64> {
        (0..len)
            .map(|i| {
                0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / (len - 1) as f64).cos())
            })
            .collect()
    };
    let wx = hann(m);
    let wy = hann(n);
    let mut data = Vec::with_capacity(m * n);
    for (row, &y) in wy.iter().enumerate() {
        for (col, &x) in wx.iter().enumerate() {
            // exact zeros at the borders regardless of cos rounding
            let v = if row == 0 || col == 0 || row == n - 1 || col == m - 1 {
                0.0
            } else {
                (y * x) as f32
            };
            data.push(v);
        }
    }
    FeatureMap::new("cosine", m, n, 1, data)
}

/// Multiply every channel of `fm` by the single-channel `win`.
pub fn apply_window(fm: &FeatureMap, win: &FeatureMap) -> Result<FeatureMap> {
    if fm.m != win.m || fm.n != win.n {
        return Err(Error::Shape(format!(
            "window {}x{} vs features {}x{}",
            win.m, win.n, fm.m, fm.n
        )));
    }
    let w = win.plane(0);
    let mut out = fm.clone();
    for c in 0..fm.d {
        out.plane_mut(c)
            .iter_mut()
            .zip(w)
            .for_each(|(v, &k)| *v *= k);
    }
    Ok(out)
}

/// Project each cell's channel vector onto the top three principal
/// components and min-max normalize them into R, G, B.
///
/// Each component's sign is chosen so its largest-magnitude loading is
/// positive. A component with zero range maps to 0.5.
pub fn pca_rgb(fm: &FeatureMap) -> Result<Image> {
    if fm.d < 3 {
        return Err(Error::InsufficientChannels(fm.d));
    }
    let cells = fm.m * fm.n;
    let d = fm.d;
    let mean: Vec<f64> = (0..d)
        .map(|c| fm.plane(c).iter().map(|&v| v as f64).sum::<f64>() / cells as f64)
        .collect();
    let centered = DMatrix::from_fn(cells, d, |i, c| fm.plane(c)[i] as f64 - mean[c]);
    let cov = centered.transpose() * &centered / cells as f64;

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut out = FeatureMap::zeros("pca", fm.m, fm.n, 3);
    for (k, &idx) in order.iter().take(3).enumerate() {
        let mut v = eig.eigenvectors.column(idx).into_owned();
        let lead = v.iter().copied().fold(0.0f64, |acc, x| {
            if x.abs() > acc.abs() {
                x
            } else {
                acc
            }
        });
        if lead < 0.0 {
            v = -v;
        }
        let proj = &centered * v;
        let (lo, hi) = proj
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        let range = hi - lo;
        let scale = proj.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1.0);
        let plane = out.plane_mut(k);
        for (dst, &x) in plane.iter_mut().zip(proj.iter()) {
            *dst = if range <= 1e-9 * scale {
                0.5
            } else {
                ((x - lo) / range) as f32
            };
        }
    }
    Ok(Image::from_planes(&out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_image(w: usize, h: usize) -> Image {
        let data = (0..w * h)
            .map(|i| ((i % w) + (i / w) * w) as f32 / (w * h) as f32)
            .collect();
        Image::new(w, h, 1, data).unwrap()
    }

    #[test]
    fn crop_inside_is_identity_copy() {
        let img = ramp_image(20, 10);
        let bbox = BoundingBox::new(10.0, 5.0, 6.0, 4.0);
        let patch = crop_window(&img, &bbox, 1.0).unwrap();
        assert_eq!((patch.width(), patch.height()), (6, 4));
        for y in 0..4 {
            for x in 0..6 {
                assert_eq!(patch.get(x, y, 0), img.get(7 + x, 3 + y, 0));
            }
        }
    }

    #[test]
    fn crop_at_corner_replicates_edges() {
        let img = ramp_image(20, 10);
        let bbox = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
        let patch = crop_window(&img, &bbox, 1.8).unwrap();
        assert_eq!((patch.width(), patch.height()), (18, 18));
        let corner = img.get(0, 0, 0);
        for y in 0..9 {
            for x in 0..9 {
                assert_eq!(patch.get(x, y, 0), corner);
            }
        }
    }

    #[test]
    fn crop_size_rounds_padding() {
        let img = Image::filled(100, 100, 3, 0.25).unwrap();
        let patch = crop_window(&img, &BoundingBox::new(50.0, 50.0, 40.0, 40.0), 1.8).unwrap();
        assert_eq!((patch.width(), patch.height(), patch.channels()), (72, 72, 3));
        assert!(patch.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn crop_rejects_degenerate() {
        let img = Image::filled(10, 10, 1, 0.0).unwrap();
        let err = crop_window(&img, &BoundingBox::new(5.0, 5.0, 0.2, 4.0), 1.0).unwrap_err();
        assert!(matches!(err, Error::InvalidGeometry(_)));
    }

    #[test]
    fn resize_examples() {
        let fm = FeatureMap::new("x", 2, 1, 1, vec![0.0, 1.0]).unwrap();
        let out = bilinear_resize(&fm, 3, 1).unwrap();
        assert_eq!(out.data(), &[0.0, 0.5, 1.0]);

        let c = FeatureMap::new("c", 3, 2, 2, vec![0.7; 12]).unwrap();
        let out = bilinear_resize(&c, 7, 5).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.7).abs() < 1e-7));

        let same = bilinear_resize(&c, 3, 2).unwrap();
        assert_eq!(same, c);
    }

    #[test]
    fn resize_round_trip_of_linear_ramp() {
        let (m, n) = (6, 5);
        let data = (0..m * n)
            .map(|i| 0.3 * (i % m) as f32 - 0.1 * (i / m) as f32)
            .collect();
        let fm = FeatureMap::new("ramp", m, n, 1, data).unwrap();
        let up = bilinear_resize(&fm, 2 * m, 2 * n).unwrap();
        let back = bilinear_resize(&up, m, n).unwrap();
        for (a, b) in back.data().iter().zip(fm.data()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn cosine_window_examples() {
        let w = cosine_window(3, 3).unwrap();
        assert_eq!(w.get(0, 0, 0), 0.0);
        assert!((w.get(0, 1, 1) - 1.0).abs() < 1e-7);
        let w5 = cosine_window(5, 5).unwrap();
        assert!((w5.get(0, 1, 2) - 0.5).abs() < 1e-7);
        assert!(matches!(cosine_window(1, 4), Err(Error::InvalidSize(_))));
    }

    #[test]
    fn cosine_window_is_flip_symmetric() {
        let w = cosine_window(8, 5).unwrap();
        for r in 0..5 {
            for c in 0..8 {
                assert_eq!(w.get(0, r, c), w.get(0, 4 - r, c));
                assert_eq!(w.get(0, r, c), w.get(0, r, 7 - c));
            }
        }
        let borders_zero = (0..8).all(|c| w.get(0, 0, c) == 0.0 && w.get(0, 4, c) == 0.0)
            && (0..5).all(|r| w.get(0, r, 0) == 0.0 && w.get(0, r, 7) == 0.0);
        assert!(borders_zero);
    }

    #[test]
    fn apply_window_cases() {
        let fm = FeatureMap::new("f", 4, 3, 2, vec![2.0; 24]).unwrap();
        let ones = FeatureMap::new("w", 4, 3, 1, vec![1.0; 12]).unwrap();
        assert_eq!(apply_window(&fm, &ones).unwrap().data(), fm.data());
        let zeros = FeatureMap::zeros("w", 4, 3, 1);
        assert!(apply_window(&fm, &zeros).unwrap().data().iter().all(|&v| v == 0.0));
        let cos = cosine_window(4, 3).unwrap();
        let out = apply_window(&fm, &cos).unwrap();
        for c in 0..2 {
            for (a, b) in out.plane(c).iter().zip(cos.plane(0)) {
                assert_eq!(*a, 2.0 * b);
            }
        }
        let bad = FeatureMap::zeros("w", 3, 3, 1);
        assert!(matches!(apply_window(&fm, &bad), Err(Error::Shape(_))));
    }

    #[test]
    fn pca_of_constant_map_is_mid_gray() {
        let fm = FeatureMap::new("c", 4, 4, 5, vec![0.3; 80]).unwrap();
        let img = pca_rgb(&fm).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (4, 4, 3));
        assert!(img.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn pca_needs_three_channels() {
        let fm = FeatureMap::zeros("c", 4, 4, 2);
        assert!(matches!(pca_rgb(&fm), Err(Error::InsufficientChannels(2))));
    }

    #[test]
    fn pca_of_uncorrelated_channels_orders_by_variance() {
        // zero-mean, mutually orthogonal patterns with variances 3 > 2 > 1,
        // stored in ascending-variance channel order
        let (m, n) = (4, 4);
        let a: Vec<f32> = (0..16).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let b: Vec<f32> = (0..16).map(|i| if (i / 2) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let c: Vec<f32> = (0..16).map(|i| if (i / 4) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let scaled = |v: &[f32], s: f32| v.iter().map(|x| x * s).collect::<Vec<_>>();
        let mut data = scaled(&a, 1.0);
        data.extend(scaled(&b, 2f32.sqrt()));
        data.extend(scaled(&c, 3f32.sqrt()));
        let fm = FeatureMap::new("u", m, n, 3, data).unwrap();
        let img = pca_rgb(&fm).unwrap();
        let norm = |v: &[f32]| {
            v.iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect::<Vec<f32>>()
        };
        let channel = |k: usize| (0..16).map(|i| img.data()[i * 3 + k]).collect::<Vec<f32>>();
        for (k, src) in [c, b, a].iter().enumerate() {
            let got = channel(k);
            let pos = norm(src);
            let neg: Vec<f32> = pos.iter().map(|x| 1.0 - x).collect();
            let close = |t: &[f32]| got.iter().zip(t).all(|(g, e)| (g - e).abs() < 1e-5);
            assert!(close(&pos) || close(&neg), "component {k}: {got:?}");
        }
    }
}
