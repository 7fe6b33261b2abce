//! Sequence and box-file I/O, running the tracker over a sequence, and the
//! benchmark metrics (precision / success rates, center error, AUC).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::features::{handcrafted_channels, FeatureArchive, FeatureSource};
use crate::proposals::BoundingBox;
use crate::tensor::{pca_rgb, Image};
use crate::tracker::Tracker;

pub const GROUND_TRUTH_FILE: &str = "groundtruth_rect.txt";
pub const FEATURE_FILE: &str = "features.hcf";
const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "bmp"];

/// Default distance threshold for the precision rate, in pixels.
pub const DP_THRESHOLD: f64 = 20.0;
/// Default overlap threshold for the success rate.
pub const OS_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub frames: Vec<PathBuf>,
    /// Annotated boxes for the leading frames.
    pub ground_truth: Vec<BoundingBox>,
    pub features: Option<PathBuf>,
}

impl Sequence {
    /// Load a sequence directory: frames from `img/` if present (otherwise the
    /// directory itself) in lexicographic order, `groundtruth_rect.txt`, and
    /// an optional `features.hcf`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let img_dir = if dir.join("img").is_dir() { dir.join("img") } else { dir.to_path_buf() };
        let frames = list_frames(&img_dir)?;
        let gt_path = dir.join(GROUND_TRUTH_FILE);
        let ground_truth = read_boxes(&gt_path)?
            .into_iter()
            .map(|[x, y, w, h]| BoundingBox::from_top_left(x, y, w, h))
            .collect();
        let features = Some(dir.join(FEATURE_FILE)).filter(|p| p.is_file());
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let seq = Self {
            name,
            frames,
            ground_truth,
            features,
        };
        seq.validate(&gt_path)?;
        Ok(seq)
    }

    fn validate(&self, gt_path: &Path) -> Result<()> {
        let data = |msg: String| Error::Data {
            path: gt_path.to_path_buf(),
            msg,
        };
        if self.frames.len() < 2 {
            return Err(data(format!("need at least 2 frames, found {}", self.frames.len())));
        }
        if self.ground_truth.is_empty() {
            return Err(data("frame 1 is not annotated".into()));
        }
        if self.ground_truth.len() > self.frames.len() {
            return Err(data(format!(
                "{} annotations for {} frames",
                self.ground_truth.len(),
                self.frames.len()
            )));
        }
        if !self.ground_truth[0].is_valid() {
            return Err(data("frame 1 box is degenerate".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, index: usize) -> Result<Image> {
        load_image(&self.frames[index])
    }
}

fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::Data {
        path: dir.to_path_buf(),
        msg: e.to_string(),
    })?;
    let mut frames = Vec::new();
    for entry in rd {
        let path = entry?.path();
        let ext = path
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase())
            .unwrap_or_default();
        if path.is_file() && IMAGE_EXTENSIONS.contains(&ext.as_str()) {
            frames.push(path);
        }
    }
    frames.sort();
    Ok(frames)
}

/// Decode an 8-bit image file into `[0, 1]` floats: gray stays one channel,
/// everything else becomes RGB.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let dynimg = image::open(path).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    let is_gray = matches!(dynimg.color().channel_count(), 1 | 2);
    if is_gray {
        let data = dynimg.to_luma8().into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
        Image::new(w, h, 1, data)
    } else {
        let data = dynimg.to_rgb8().into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
        Image::new(w, h, 3, data)
    }
}

/// Encode an image as 8-bit (format from the file extension).
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let (w, h) = (img.width() as u32, img.height() as u32);
    let dynimg = if img.channels() == 1 {
        image::DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, bytes).expect("buffer size"))
    } else {
        image::DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, bytes).expect("buffer size"))
    };
    dynimg.save(path)?;
    Ok(())
}

/// Parse `x,y,w,h` lines (top-left convention). Commas, tabs and spaces are
/// all accepted as separators; blank lines are skipped.
pub fn parse_boxes(text: &str, path: &Path) -> Result<Vec<[f32; 4]>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f32> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Data {
                path: path.to_path_buf(),
                msg: format!("line {}: {e}", i + 1),
            })?;
        match vals[..] {
            [x, y, w, h] if vals.iter().all(|v| v.is_finite()) => out.push([x, y, w, h]),
            _ => {
                return Err(Error::Data {
                    path: path.to_path_buf(),
                    msg: format!("line {}: expected 4 finite numbers", i + 1),
                })
            }
        }
    }
    Ok(out)
}

pub fn read_boxes(path: impl AsRef<Path>) -> Result<Vec<[f32; 4]>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    parse_boxes(&text, path)
}

pub fn format_boxes(boxes: &[[f32; 4]]) -> String {
    let mut s = String::new();
    for [x, y, w, h] in boxes {
        let _ = writeln!(s, "{x},{y},{w},{h}");
    }
    s
}

pub fn write_boxes(path: impl AsRef<Path>, boxes: &[[f32; 4]]) -> Result<()> {
    std::fs::write(path, format_boxes(boxes))?;
    Ok(())
}

/// Output of one tracking run, one entry per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackResult {
    pub boxes: Vec<BoundingBox>,
    pub confidence: Vec<f32>,
    pub seconds: Vec<f64>,
}

impl TrackResult {
    pub fn top_left(&self) -> Vec<[f32; 4]> {
        self.boxes.iter().map(|b| b.to_top_left()).collect()
    }
}

/// Initialize on the first annotated box and track through every frame.
pub fn run_track(seq: &Sequence, cfg: &TrackerConfig, src: &FeatureSource) -> Result<TrackResult> {
    let start = Instant::now();
    let first = seq.frame(0).map_err(|e| e.at_frame(1))?;
    let box0 = seq.ground_truth[0];
    let mut tracker = Tracker::init(&first, &box0, cfg.clone(), src.clone()).map_err(|e| e.at_frame(1))?;
    let mut result = TrackResult {
        boxes: vec![box0],
        confidence: vec![tracker.state().last_confidence],
        seconds: vec![start.elapsed().as_secs_f64()],
    };
    for i in 1..seq.len() {
        let t = Instant::now();
        let img = seq.frame(i).map_err(|e| e.at_frame(i + 1))?;
        let (bbox, report) = tracker.step(&img).map_err(|e| e.at_frame(i + 1))?;
        result.boxes.push(bbox);
        result.confidence.push(report.final_confidence);
        result.seconds.push(t.elapsed().as_secs_f64());
    }
    Ok(result)
}

fn check_aligned(result: &[BoundingBox], truth: &[BoundingBox]) -> Result<()> {
    if result.len() != truth.len() || result.is_empty() {
        return Err(Error::Alignment {
            result: result.len(),
            truth: truth.len(),
        });
    }
    Ok(())
}

/// Euclidean center distance per frame.
pub fn center_errors(result: &[BoundingBox], truth: &[BoundingBox]) -> Result<Vec<f64>> {
    check_aligned(result, truth)?;
    Ok(result
        .iter()
        .zip(truth)
        .map(|(a, b)| ((a.x as f64 - b.x as f64).powi(2) + (a.y as f64 - b.y as f64).powi(2)).sqrt())
        .collect())
}

fn overlap(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (al, at, ar, ab) = (a.left() as f64, a.top() as f64, a.right() as f64, a.bottom() as f64);
    let (bl, bt, br, bb) = (b.left() as f64, b.top() as f64, b.right() as f64, b.bottom() as f64);
    let iw = (ar.min(br) - al.max(bl)).max(0.0);
    let ih = (ab.min(bb) - at.max(bt)).max(0.0);
    let inter = iw * ih;
    let union = (ar - al) * (ab - at) + (br - bl) * (bb - bt) - inter;
    if union > 0.0 { inter / union } else { 0.0 }
}

/// Intersection-over-union per frame.
pub fn overlaps(result: &[BoundingBox], truth: &[BoundingBox]) -> Result<Vec<f64>> {
    check_aligned(result, truth)?;
    Ok(result.iter().zip(truth).map(|(a, b)| overlap(a, b)).collect())
}

fn percent_where(values: &[f64], pred: impl Fn(f64) -> bool) -> f64 {
    100.0 * values.iter().filter(|&&v| pred(v)).count() as f64 / values.len() as f64
}

/// Percentage of frames with center error strictly below `thresh` pixels.
pub fn dp_rate_from_errors(errors: &[f64], thresh: f64) -> f64 {
    percent_where(errors, |e| e < thresh)
}

/// Percentage of frames with overlap strictly above `thresh`. An exact
/// overlap counts at every threshold, so a perfect track scores 100 at 1.0.
pub fn os_rate_from_overlaps(ious: &[f64], thresh: f64) -> f64 {
    percent_where(ious, |o| o > thresh || o >= 1.0)
}

pub fn dp_rate(result: &[BoundingBox], truth: &[BoundingBox], thresh: f64) -> Result<f64> {
    Ok(dp_rate_from_errors(&center_errors(result, truth)?, thresh))
}

pub fn os_rate(result: &[BoundingBox], truth: &[BoundingBox], thresh: f64) -> Result<f64> {
    Ok(os_rate_from_overlaps(&overlaps(result, truth)?, thresh))
}

pub fn cle(result: &[BoundingBox], truth: &[BoundingBox]) -> Result<f64> {
    let e = center_errors(result, truth)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

/// Overlap thresholds `0, 0.05, ..., 1`.
pub fn success_thresholds() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// Distance thresholds `0, 1, ..., 50` pixels.
pub fn precision_thresholds() -> Vec<f64> {
    (0..=50).map(|i| i as f64).collect()
}

pub fn auc_from_overlaps(ious: &[f64]) -> f64 {
    let t = success_thresholds();
    t.iter().map(|&th| os_rate_from_overlaps(ious, th)).sum::<f64>() / t.len() as f64 / 100.0
}

/// Mean success rate over the 21 overlap thresholds, as a fraction.
pub fn auc(result: &[BoundingBox], truth: &[BoundingBox]) -> Result<f64> {
    Ok(auc_from_overlaps(&overlaps(result, truth)?))
}

/// `(threshold, rate)` pairs of the precision plot.
pub fn precision_curve(result: &[BoundingBox], truth: &[BoundingBox]) -> Result<Vec<(f64, f64)>> {
    let e = center_errors(result, truth)?;
    Ok(precision_thresholds()
        .into_iter()
        .map(|t| (t, dp_rate_from_errors(&e, t)))
        .collect())
}

/// `(threshold, rate)` pairs of the success plot.
pub fn success_curve(result: &[BoundingBox], truth: &[BoundingBox]) -> Result<Vec<(f64, f64)>> {
    let o = overlaps(result, truth)?;
    Ok(success_thresholds()
        .into_iter()
        .map(|t| (t, os_rate_from_overlaps(&o, t)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub frames: usize,
    pub dp: f64,
    pub os: f64,
    pub cle: f64,
    pub auc: f64,
}

pub fn evaluate(result: &[BoundingBox], truth: &[BoundingBox]) -> Result<Metrics> {
    Ok(Metrics {
        frames: result.len(),
        dp: dp_rate(result, truth, DP_THRESHOLD)?,
        os: os_rate(result, truth, OS_THRESHOLD)?,
        cle: cle(result, truth)?,
        auc: auc(result, truth)?,
    })
}

impl Metrics {
    /// `metric,value` CSV.
    pub fn to_csv(&self) -> String {
        format!(
            "metric,value\nframes,{}\ndp_rate@20,{:.6}\nos_rate@0.5,{:.6}\ncle,{:.6}\nauc,{:.6}\n",
            self.frames, self.dp, self.os, self.cle, self.auc
        )
    }
}

/// `threshold,rate` CSV.
pub fn curve_csv(curve: &[(f64, f64)]) -> String {
    let mut s = String::from("threshold,rate\n");
    for (t, r) in curve {
        let _ = writeln!(s, "{t},{r:.6}");
    }
    s
}

/// First three principal components of one feature layer of a frame, as an
/// RGB image on the feature grid. Handcrafted features are computed over the
/// whole frame.
pub fn viz_features(frame_index: u32, frame: &Image, src: &FeatureSource, layer: &str) -> Result<Image> {
    match src {
        FeatureSource::Handcrafted { cell } => {
            if layer != crate::features::HANDCRAFTED_LAYER {
                return Err(Error::FeatureMissing {
                    frame: frame_index,
                    layer: layer.to_string(),
                });
            }
            pca_rgb(&handcrafted_channels(frame, *cell)?)
        }
        FeatureSource::DeepFile { archive, .. } => pca_rgb(&archive.load(frame_index, layer)?),
    }
}

/// Feature source for a sequence: the deep archive when one is given or
/// found next to the frames, handcrafted channels otherwise.
pub fn source_for(seq: &Sequence, archive: Option<&Path>, handcrafted: bool) -> Result<FeatureSource> {
    if handcrafted {
        return Ok(FeatureSource::handcrafted());
    }
    match archive.map(Path::to_path_buf).or_else(|| seq.features.clone()) {
        Some(p) => Ok(FeatureSource::deep(FeatureArchive::open(p)?)),
        None => Ok(FeatureSource::handcrafted()),
    }
}
