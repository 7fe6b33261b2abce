//! Synthetic sequences and small helpers shared by the integration tests.
#![allow(dead_code)]

use hcft::{BoundingBox, Image};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FRAME_W: usize = 320;
pub const FRAME_H: usize = 240;
pub const TARGET: usize = 40;

/// Blocky random texture, `block` pixels per tile, values in `[lo, hi]`.
pub fn block_texture(w: usize, h: usize, block: usize, lo: f32, hi: f32, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (bw, bh) = (w.div_ceil(block), h.div_ceil(block));
    let tiles: Vec<f32> = (0..bw * bh).map(|_| rng.gen_range(lo..=hi)).collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            out.push(tiles[(y / block) * bw + x / block]);
        }
    }
    out
}

/// Low-contrast, slowly varying shading.
pub fn smooth_background(seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (fx, fy, phase): (f32, f32, f32) = (rng.gen_range(25.0..45.0), rng.gen_range(25.0..45.0), rng.gen_range(0.0..6.0));
    let mut out = Vec::with_capacity(FRAME_W * FRAME_H);
    for y in 0..FRAME_H {
        for x in 0..FRAME_W {
            let (x, y) = (x as f32, y as f32);
            out.push(0.45 + 0.08 * (x / fx + phase).sin() * (y / fy).cos() + 0.1 * x / FRAME_W as f32);
        }
    }
    out
}

pub struct Scene {
    background: Vec<f32>,
    target: Vec<f32>,
}

impl Scene {
    pub fn new(seed: u64) -> Self {
        Self {
            background: smooth_background(seed),
            target: block_texture(TARGET, TARGET, 5, 0.0, 1.0, seed + 1),
        }
    }

    /// The background with the target's top-left corner at `(tx, ty)`, or no
    /// target at all.
    pub fn render(&self, target_at: Option<(i64, i64)>) -> Image {
        let mut data = self.background.clone();
        if let Some((tx, ty)) = target_at {
            for v in 0..TARGET as i64 {
                for u in 0..TARGET as i64 {
                    let (x, y) = (tx + u, ty + v);
                    if (0..FRAME_W as i64).contains(&x) && (0..FRAME_H as i64).contains(&y) {
                        data[y as usize * FRAME_W + x as usize] = self.target[(v * TARGET as i64 + u) as usize];
                    }
                }
            }
        }
        Image::new(FRAME_W, FRAME_H, 1, data).unwrap()
    }
}

pub fn target_box(tx: i64, ty: i64) -> BoundingBox {
    BoundingBox::from_top_left(tx as f32, ty as f32, TARGET as f32, TARGET as f32)
}

/// 60 frames, target moving 2 px right per frame.
pub fn translation_sequence() -> (Vec<Image>, Vec<BoundingBox>) {
    let scene = Scene::new(7);
    let pos = |i: i64| (60 + 2 * i, 100);
    (0..60)
        .map(|i| {
            let (x, y) = pos(i);
            (scene.render(Some((x, y))), target_box(x, y))
        })
        .unzip()
}

/// Frames whose 1-based index lies in this range show no target.
pub const OCCLUDED: std::ops::RangeInclusive<usize> = 25..=35;

/// 60 frames: 2 px/frame motion, the target hidden on frames 25-35, then
/// visible again about 55 px from where it vanished.
pub fn occlusion_sequence() -> (Vec<Image>, Vec<BoundingBox>) {
    let scene = Scene::new(11);
    let pos = |frame: usize| -> (i64, i64) {
        let f = frame as i64;
        if f < 25 {
            (60 + 2 * f, 100)
        } else {
            // reappears 55 px down-left of the last visible position and keeps moving
            let (lx, ly) = (60 + 2 * 24, 100);
            (lx - 45 + 2 * (f - 36).max(0), ly + 32)
        }
    };
    (1..=60)
        .map(|frame| {
            let (x, y) = pos(frame);
            let shown = !OCCLUDED.contains(&frame);
            (scene.render(shown.then_some((x, y))), target_box(x, y))
        })
        .unzip()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_features(rng: &mut ChaCha8Rng, m: usize, n: usize, d: usize) -> hcft::FeatureMap {
    let data = (0..m * n * d).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    hcft::FeatureMap::new("x", m, n, d, data).unwrap()
}

/// Gaussian labels peaked at `(n/2, m/2)`, computed directly in f64.
pub fn oracle_labels(m: usize, n: usize, sigma: f64) -> Vec<f64> {
    let (cr, cc) = ((n / 2) as f64, (m / 2) as f64);
    let mut y = Vec::with_capacity(m * n);
    for i in 0..n {
        for j in 0..m {
            let d2 = (i as f64 - cr).powi(2) + (j as f64 - cc).powi(2);
            y.push((-d2 / (2.0 * sigma * sigma)).exp());
        }
    }
    y
}

/// Ridge regression over all circular shifts, solved densely:
/// `min_w |sum_c w_c (*) x_c - y|^2 + lambda |w|^2` where `(*)` is circular
/// convolution. Returns `w` channel-planar, each plane row-major.
pub fn dense_ridge(x: &hcft::FeatureMap, y: &[f64], lambda: f64) -> Vec<f64> {
    use nalgebra::{DMatrix, DVector};
    let (m, n, d) = (x.m(), x.n(), x.d());
    let len = m * n;
    let design = DMatrix::from_fn(len, len * d, |u, col| {
        let (c, v) = (col / len, col % len);
        let (i, j) = (u / m, u % m);
        let (p, q) = (v / m, v % m);
        x.get(c, (i + n - p) % n, (j + m - q) % m) as f64
    });
    let gram = design.transpose() * &design + DMatrix::identity(len * d, len * d) * lambda;
    let rhs = design.transpose() * DVector::from_column_slice(y);
    let w = gram.cholesky().expect("ridge system is positive definite").solve(&rhs);
    w.iter().copied().collect()
}

/// Direct circular cross-correlation of the reflected template
/// `h_c(v) = w_c(-v)` with `z`: `f(u) = sum_c sum_v h_c(v) z_c(u + v)`.
pub fn direct_response(w: &hcft::FeatureMap, z: &hcft::FeatureMap) -> Vec<f64> {
    let (m, n, d) = (z.m(), z.n(), z.d());
    let mut f = vec![0.0f64; m * n];
    for i in 0..n {
        for j in 0..m {
            let mut acc = 0.0;
            for c in 0..d {
                for p in 0..n {
                    for q in 0..m {
                        let h = w.get(c, (n - p) % n, (m - q) % m) as f64;
                        acc += h * z.get(c, (i + p) % n, (j + q) % m) as f64;
                    }
                }
            }
            f[i * m + j] = acc;
        }
    }
    f
}

/// Center errors per frame.
pub fn center_errors(result: &[BoundingBox], truth: &[BoundingBox]) -> Vec<f64> {
    result
        .iter()
        .zip(truth)
        .map(|(a, b)| ((a.x - b.x) as f64).hypot((a.y - b.y) as f64))
        .collect()
}
