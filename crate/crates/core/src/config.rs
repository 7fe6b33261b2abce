//! Tracker parameters and the line-based `key = value` config format.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fusion::{FusionMode, FusionSpec};
use crate::longterm::LongTermParams;
use crate::proposals::ProposalSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub lambda: f32,
    pub eta: f32,
    pub sigma_factor: f32,
    pub padding: f32,
    pub cell: usize,
    /// Per-layer fusion weights, deepest first.
    pub mu: Vec<f32>,
    pub fusion_mode: FusionMode,
    /// Coarse-to-fine search radius in cells; `None` picks a quarter of the
    /// smaller grid side.
    pub radius: Option<usize>,
    pub t0: f32,
    pub redetect_factor: f32,
    pub alpha: f32,
    pub beta: f32,
    pub scale_spec: ProposalSpec,
    pub detect_spec: ProposalSpec,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            eta: 0.01,
            sigma_factor: 0.1,
            padding: 1.8,
            cell: 4,
            mu: vec![1.0, 0.5, 0.25],
            fusion_mode: FusionMode::SoftWeight,
            radius: None,
            t0: 0.2,
            redetect_factor: 1.5,
            alpha: 0.1,
            beta: 0.6,
            scale_spec: ProposalSpec::scale(),
            detect_spec: ProposalSpec::detection(),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.lambda > 0.0) {
            return bad("lambda must be positive");
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad("eta must lie in [0,1]");
        }
        if !(self.sigma_factor > 0.0) {
            return bad("sigma_factor must be positive");
        }
        if !(self.padding >= 1.0) {
            return bad("padding must be at least 1");
        }
        if self.cell == 0 {
            return bad("cell must be positive");
        }
        if self.mu.is_empty() || self.mu.iter().any(|m| !(*m >= 0.0)) {
            return bad("mu must be a non-empty list of non-negative weights");
        }
        if !(self.t0 > 0.0) {
            return bad("t0 must be positive");
        }
        if !(self.redetect_factor > 1.0) {
            return bad("redetect_factor must exceed 1");
        }
        if !(self.alpha >= 0.0) {
            return bad("alpha must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad("beta must lie in [0,1]");
        }
        self.scale_spec.validate()?;
        self.detect_spec.validate()
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "lambda" => self.lambda = parse_num(key, v)?,
            "eta" => self.eta = parse_num(key, v)?,
            "sigma_factor" => self.sigma_factor = parse_num(key, v)?,
            "padding" => self.padding = parse_num(key, v)?,
            "cell" => self.cell = parse_num(key, v)?,
            "mu" => self.mu = parse_list(key, v)?,
            "fusion_mode" => self.fusion_mode = v.parse()?,
            "radius" | "r" => {
                self.radius = if v == "auto" { None } else { Some(parse_num(key, v)?) }
            }
            "t0" => self.t0 = parse_num(key, v)?,
            "redetect_factor" => self.redetect_factor = parse_num(key, v)?,
            "alpha" => self.alpha = parse_num(key, v)?,
            "beta" => self.beta = parse_num(key, v)?,
            "scale_step" => self.scale_spec.step = parse_num(key, v)?,
            "scale_nms" => self.scale_spec.nms_iou = parse_num(key, v)?,
            "scale_ratios" => self.scale_spec.scale_ratios = parse_list(key, v)?,
            "scale_max_boxes" => self.scale_spec.max_boxes = parse_num(key, v)?,
            "detect_step" => self.detect_spec.step = parse_num(key, v)?,
            "detect_nms" => self.detect_spec.nms_iou = parse_num(key, v)?,
            "detect_ratios" => self.detect_spec.scale_ratios = parse_list(key, v)?,
            "detect_max_boxes" => self.detect_spec.max_boxes = parse_num(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Parse config text on top of the defaults. Blank lines and `#`
    /// comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            cfg.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Render every setting in the config file syntax.
    pub fn to_text(&self) -> String {
        let list = |v: &[f32]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        kv("lambda", self.lambda.to_string());
        kv("eta", self.eta.to_string());
        kv("sigma_factor", self.sigma_factor.to_string());
        kv("padding", self.padding.to_string());
        kv("cell", self.cell.to_string());
        kv("mu", list(&self.mu));
        kv("fusion_mode", self.fusion_mode.to_string());
        kv("radius", self.radius.map_or("auto".to_string(), |r| r.to_string()));
        kv("t0", self.t0.to_string());
        kv("redetect_factor", self.redetect_factor.to_string());
        kv("alpha", self.alpha.to_string());
        kv("beta", self.beta.to_string());
        kv("scale_step", self.scale_spec.step.to_string());
        kv("scale_nms", self.scale_spec.nms_iou.to_string());
        kv("scale_ratios", list(&self.scale_spec.scale_ratios));
        kv("scale_max_boxes", self.scale_spec.max_boxes.to_string());
        kv("detect_step", self.detect_spec.step.to_string());
        kv("detect_nms", self.detect_spec.nms_iou.to_string());
        kv("detect_ratios", list(&self.detect_spec.scale_ratios));
        kv("detect_max_boxes", self.detect_spec.max_boxes.to_string());
        s
    }

    /// Fusion settings for `layers` layers on an `m x n` grid. Missing
    /// weights continue the halving pattern of the last given one.
    pub fn fusion_spec(&self, layers: usize, m: usize, n: usize) -> FusionSpec {
        let mut mu: Vec<f32> = self.mu.iter().copied().take(layers).collect();
        while mu.len() < layers {
            let last = mu.last().copied().unwrap_or(1.0);
            mu.push(last * 0.5);
        }
        let radius = self.radius.unwrap_or_else(|| m.min(n).div_ceil(4));
        FusionSpec::new(self.fusion_mode, mu, radius)
    }

    pub fn longterm_params(&self) -> LongTermParams {
        LongTermParams {
            t0: self.t0,
            redetect_factor: self.redetect_factor,
            padding: self.padding,
            cell: self.cell,
            lambda: self.lambda,
            sigma_factor: self.sigma_factor,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = TrackerConfig::default();
        cfg.validate().unwrap();
        assert!((cfg.longterm_params().redetect_factor * cfg.t0 - 0.3).abs() < 1e-6);
    }

    #[test]
    fn parse_overrides_and_comments() {
        let cfg = TrackerConfig::parse(
            "# tuned\nlambda = 0.001\nmu = 1, 0.4\nfusion_mode = coarse_to_fine  # c2f\nradius = 3\n\n",
        )
        .unwrap();
        assert_eq!(cfg.lambda, 0.001);
        assert_eq!(cfg.mu, vec![1.0, 0.4]);
        assert_eq!(cfg.fusion_mode, FusionMode::CoarseToFine);
        assert_eq!(cfg.radius, Some(3));
        assert_eq!(cfg.eta, 0.01);
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = TrackerConfig {
            radius: Some(2),
            ..TrackerConfig::default()
        };
        cfg.detect_spec.max_boxes = 50;
        assert_eq!(TrackerConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn bad_configs() {
        for text in ["lambda 1", "speed = 3", "eta = 2", "t0 = x", "fusion_mode = max", "cell = 0"] {
            assert!(matches!(TrackerConfig::parse(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn fusion_spec_extends_weights_and_radius() {
        let cfg = TrackerConfig {
            mu: vec![1.0],
            ..TrackerConfig::default()
        };
        let spec = cfg.fusion_spec(3, 22, 14);
        assert_eq!(spec.mu, vec![1.0, 0.5, 0.25]);
        assert_eq!(spec.radius, 4);
        assert_eq!(TrackerConfig::default().fusion_spec(1, 8, 8).mu, vec![1.0]);
    }
}
