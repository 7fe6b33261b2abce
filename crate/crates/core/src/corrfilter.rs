//! Multi-channel correlation filter learned by ridge regression over all
//! circular shifts of a feature patch, solved per frequency.
//!
//! The model is kept as numerator `A = Y . conj(X)` (per channel) and shared
//! denominator `B = sum_d X . conj(X)`, so the filter is `W = A / (B + lambda)`
//! and moving-average updates act on `A` and `B` directly.

use rustfft::num_complex::Complex32;

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::fusion::ResponseMap;
use crate::tensor::FeatureMap;

/// Gaussian label grid parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelSpec {
    pub m: usize,
    pub n: usize,
    pub sigma: f32,
}

impl LabelSpec {
    pub fn new(m: usize, n: usize, sigma: f32) -> Self {
        Self { m, n, sigma }
    }

    /// Label width proportional to the target extent in cells.
    pub fn for_target(m: usize, n: usize, target_cells_w: f32, target_cells_h: f32, factor: f32) -> Self {
        Self::new(m, n, factor * (target_cells_w * target_cells_h).sqrt())
    }
}

/// Gaussian labels peaked at `(n/2, m/2)` (floored), row-major `n x m`.
pub fn gaussian_labels(spec: &LabelSpec) -> Result<Vec<f32>> {
    if spec.m < 2 || spec.n < 2 {
        return Err(Error::InvalidSize(format!("label grid {}x{}", spec.m, spec.n)));
    }
    if !(spec.sigma > 0.0) {
        return Err(Error::InvalidSize(format!("label sigma {}", spec.sigma)));
    }
    let (cr, cc) = ((spec.n / 2) as f64, (spec.m / 2) as f64);
    let denom = 2.0 * (spec.sigma as f64).powi(2);
    let mut y = Vec::with_capacity(spec.m * spec.n);
    for i in 0..spec.n {
        for j in 0..spec.m {
            let d2 = (i as f64 - cr).powi(2) + (j as f64 - cc).powi(2);
            y.push((-d2 / denom).exp() as f32);
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationFilter {
    m: usize,
    n: usize,
    d: usize,
    /// `d` planes of `Y . conj(X^d)`.
    a: Vec<Complex32>,
    /// `sum_d X^d . conj(X^d)`.
    b: Vec<Complex32>,
    y_spec: Vec<Complex32>,
    lambda: f32,
}

fn check_finite(fm: &FeatureMap) -> Result<()> {
    if fm.data().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("features of layer {}", fm.layer_id())))
    }
}

/// Per-channel spectra of `fm` plus `A` and `B` targets for label spectrum `y_spec`.
fn model_terms(fm: &FeatureMap, y_spec: &[Complex32]) -> (Vec<Complex32>, Vec<Complex32>) {
    let (m, n, d) = (fm.m(), fm.n(), fm.d());
    let fft = Fft2::forward(m, n);
    let len = m * n;
    let mut a = Vec::with_capacity(len * d);
    let mut b = vec![Complex32::new(0.0, 0.0); len];
    for c in 0..d {
        let x = fft.real_forward(fm.plane(c));
        for (k, xk) in x.iter().enumerate() {
            a.push(y_spec[k] * xk.conj());
            b[k] += Complex32::new(xk.norm_sqr(), 0.0);
        }
    }
    (a, b)
}

impl CorrelationFilter {
    /// Closed-form training against Gaussian labels.
    pub fn train(features: &FeatureMap, spec: &LabelSpec, lambda: f32) -> Result<Self> {
        if features.m() != spec.m || features.n() != spec.n {
            return Err(Error::Shape(format!(
                "features {}x{} vs labels {}x{}",
                features.m(),
                features.n(),
                spec.m,
                spec.n
            )));
        }
        let labels = gaussian_labels(spec)?;
        Self::train_with_labels(features, &labels, lambda)
    }

    /// Closed-form training against an arbitrary row-major label grid.
    pub fn train_with_labels(features: &FeatureMap, labels: &[f32], lambda: f32) -> Result<Self> {
        let (m, n, d) = (features.m(), features.n(), features.d());
        if labels.len() != m * n {
            return Err(Error::Shape(format!(
                "{} labels for a {m}x{n} grid",
                labels.len()
            )));
        }
        if !(lambda >= 0.0) {
            return Err(Error::Config(format!("lambda {lambda} < 0")));
        }
        check_finite(features)?;
        let y_spec = Fft2::forward(m, n).real_forward(labels);
        let (a, b) = model_terms(features, &y_spec);
        Ok(Self {
            m,
            n,
            d,
            a,
            b,
            y_spec,
            lambda,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn lambda(&self) -> f32 {
        self.lambda
    }

    pub fn numerator(&self) -> &[Complex32] {
        &self.a
    }

    pub fn denominator(&self) -> &[Complex32] {
        &self.b
    }

    pub fn label_spectrum(&self) -> &[Complex32] {
        &self.y_spec
    }

    /// Frequency-domain filter `W^d = A^d / (B + lambda)` for every channel.
    pub fn spectrum(&self) -> Vec<Complex32> {
        let len = self.m * self.n;
        self.a
            .iter()
            .enumerate()
            .map(|(i, a)| a / (self.b[i % len] + self.lambda))
            .collect()
    }

    /// Spatial-domain filter (real part of the inverse transform of `W`).
    pub fn spatial(&self) -> FeatureMap {
        let len = self.m * self.n;
        let w = self.spectrum();
        let ifft = Fft2::inverse(self.m, self.n);
        let mut out = FeatureMap::zeros("filter", self.m, self.n, self.d);
        for c in 0..self.d {
            let mut plane = w[c * len..(c + 1) * len].to_vec();
            ifft.process(&mut plane);
            for (dst, v) in out.plane_mut(c).iter_mut().zip(&plane) {
                *dst = v.re;
            }
        }
        out
    }

    fn check_dims(&self, fm: &FeatureMap) -> Result<()> {
        if fm.m() != self.m || fm.n() != self.n || fm.d() != self.d {
            return Err(Error::Shape(format!(
                "features {}x{}x{} vs filter {}x{}x{}",
                fm.m(),
                fm.n(),
                fm.d(),
                self.m,
                self.n,
                self.d
            )));
        }
        Ok(())
    }

    /// Response map plus the largest imaginary residue of the inverse transform.
    pub fn respond_with_residue(&self, features: &FeatureMap) -> Result<(ResponseMap, f32)> {
        self.check_dims(features)?;
        check_finite(features)?;
        let len = self.m * self.n;
        let fft = Fft2::forward(self.m, self.n);
        let mut acc = vec![Complex32::new(0.0, 0.0); len];
        for c in 0..self.d {
            let z = fft.real_forward(features.plane(c));
            let a = &self.a[c * len..(c + 1) * len];
            for k in 0..len {
                acc[k] += a[k] / (self.b[k] + self.lambda) * z[k];
            }
        }
        Fft2::inverse(self.m, self.n).process(&mut acc);
        let residue = acc.iter().map(|v| v.im.abs()).fold(0.0, f32::max);
        let values = acc.iter().map(|v| v.re).collect();
        let map = ResponseMap::new(features.layer_id(), self.m, self.n, values)?;
        Ok((map, residue))
    }

    /// Correlation response `IFFT(sum_d W^d . Z^d)`; the grid center means
    /// zero translation.
    pub fn respond(&self, features: &FeatureMap) -> Result<ResponseMap> {
        self.respond_with_residue(features).map(|(r, _)| r)
    }

    /// Moving-average update of numerator and denominator with rate `eta`.
    pub fn update(&self, features: &FeatureMap, eta: f32) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Config(format!("learning rate {eta} not in [0,1]")));
        }
        self.check_dims(features)?;
        check_finite(features)?;
        if eta == 0.0 {
            return Ok(self.clone());
        }
        let (a_new, b_new) = model_terms(features, &self.y_spec);
        if eta == 1.0 {
            return Ok(Self {
                a: a_new,
                b: b_new,
                ..self.clone()
            });
        }
        let keep = 1.0 - eta;
        let blend = |old: &[Complex32], new: &[Complex32]| -> Vec<Complex32> {
            old.iter().zip(new).map(|(o, t)| o * keep + t * eta).collect()
        };
        Ok(Self {
            a: blend(&self.a, &a_new),
            b: blend(&self.b, &b_new),
            ..self.clone()
        })
    }
}
