//! Depth-aided occlusion handling on top of the correlation filter.
//!
//! Each frame the tracker runs the usual detection. A weak response is checked
//! against depth: the center depth patch of the last confidently tracked frame
//! is differenced with the current one, background columns leaking in at the
//! patch edges are trimmed away, and a remaining cluster of large differences
//! means something moved in front of the target. While occluded no box is
//! reported, the model is frozen, and a horizontal sliding window searches for
//! the target with the first-frame template.

use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::features::to_grayscale;
use crate::geometry::{BoundingBox, Frame};
use crate::kcf::{Detection, TrackerConfig, TrackerModel};

/// Depth values in millimeters with a validity mask (0 mm = no return).
#[derive(Debug, Clone, PartialEq)]
pub struct DepthPatch {
    pub values: Array2<f64>,
    pub valid: Array2<bool>,
}

impl DepthPatch {
    pub fn from_raw(raw: ArrayView2<u16>) -> Self {
        Self {
            values: raw.mapv(f64::from),
            valid: raw.mapv(|v| v > 0),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// Nearest-neighbour resampling to `(h, w)`.
    pub fn resample(&self, h: usize, w: usize) -> Self {
        let (sh, sw) = self.dim();
        if (sh, sw) == (h, w) {
            return self.clone();
        }
        let map = |i: usize, n: usize, src: usize| (((i as f64 + 0.5) * src as f64 / n as f64) as usize).min(src - 1);
        Self {
            values: Array2::from_shape_fn((h, w), |(i, j)| self.values[[map(i, h, sh), map(j, w, sw)]]),
            valid: Array2::from_shape_fn((h, w), |(i, j)| self.valid[[map(i, h, sh), map(j, w, sw)]]),
        }
    }
}

/// How many columns at each side of a difference patch count as its edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeWidth {
    Columns(usize),
    /// Fraction of the patch width, rounded down.
    Fraction(f64),
}

impl EdgeWidth {
    pub fn columns(&self, width: usize) -> usize {
        match *self {
            EdgeWidth::Columns(c) => c,
            EdgeWidth::Fraction(f) => (f * width as f64).floor() as usize,
        }
    }
}

/// Reduction of a trimmed difference patch to an occlusion decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OcclusionRule {
    /// Occluded when more than `interior_peak_ratio` of the pixels are peaks.
    PeakFraction,
    /// Occluded when the mean absolute difference exceeds the peak threshold.
    MeanAbs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcclusionConfig {
    /// Side of the center depth patch relative to the box.
    pub center_fraction: f64,
    pub edge: EdgeWidth,
    /// Absolute depth difference (mm) that counts as a peak.
    pub peak_threshold_mm: f64,
    pub interior_peak_ratio: f64,
    /// Detection responses at or below this value trigger the depth check;
    /// re-detection needs a response above it.
    pub response_threshold: f64,
    /// Re-detection search span per side, in target widths.
    pub search_span: f64,
    /// Horizontal step of the re-detection window in pixels; `None` uses the cell size.
    pub search_stride: Option<usize>,
    pub rule: OcclusionRule,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        Self {
            center_fraction: 0.25,
            edge: EdgeWidth::Fraction(0.2),
            peak_threshold_mm: 300.0,
            interior_peak_ratio: 0.3,
            response_threshold: 0.5,
            search_span: 2.0,
            search_stride: None,
            rule: OcclusionRule::PeakFraction,
        }
    }
}

impl OcclusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.center_fraction > 0.0 && self.center_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "center fraction must lie in (0, 1], got {}",
                self.center_fraction
            )));
        }
        if !(self.response_threshold > 0.0 && self.response_threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "response threshold must lie in (0, 1), got {}",
                self.response_threshold
            )));
        }
        if !(self.peak_threshold_mm >= 0.0) || !(0.0..=1.0).contains(&self.interior_peak_ratio) {
            return Err(Error::InvalidParameter("invalid depth peak thresholds".into()));
        }
        if !(self.search_span >= 0.0) {
            return Err(Error::InvalidParameter("search span must be non-negative".into()));
        }
        if let EdgeWidth::Fraction(f) = self.edge {
            if !(0.0..0.5).contains(&f) {
                return Err(Error::InvalidParameter(format!("edge fraction must lie in [0, 0.5), got {f}")));
            }
        }
        Ok(())
    }
}

/// Crops the centered `center_fraction` sub-region of `bbox` from a depth map.
/// The crop is clipped to the frame.
pub fn center_depth_patch(depth: ArrayView2<u16>, bbox: &BoundingBox, cfg: &OcclusionConfig) -> Result<DepthPatch> {
    bbox.validate()?;
    let (fh, fw) = depth.dim();
    let pw = (bbox.w * cfg.center_fraction).round().max(1.0);
    let ph = (bbox.h * cfg.center_fraction).round().max(1.0);
    let (cx, cy) = bbox.center();
    let x0 = (cx - pw / 2.0).round() as isize;
    let y0 = (cy - ph / 2.0).round() as isize;
    let (x1, y1) = (x0 + pw as isize, y0 + ph as isize);
    let (cx0, cy0) = (x0.max(0), y0.max(0));
    let (cx1, cy1) = (x1.min(fw as isize), y1.min(fh as isize));
    if cx0 >= cx1 || cy0 >= cy1 {
        return Err(Error::BoxOutsideFrame);
    }
    Ok(DepthPatch::from_raw(depth.slice(s![
        cy0 as usize..cy1 as usize,
        cx0 as usize..cx1 as usize
    ])))
}

/// Signed difference `curr - prev`; valid only where both patches are.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthDiff {
    pub values: Array2<f64>,
    pub valid: Array2<bool>,
}

impl DepthDiff {
    /// `curr` is resampled to the size of `prev` when they differ.
    pub fn between(prev: &DepthPatch, curr: &DepthPatch) -> Self {
        let (h, w) = prev.dim();
        let curr = curr.resample(h, w);
        let valid = ndarray::Zip::from(&prev.valid)
            .and(&curr.valid)
            .map_collect(|&a, &b| a && b);
        let values = ndarray::Zip::from(&prev.values)
            .and(&curr.values)
            .and(&valid)
            .map_collect(|&p, &c, &ok| if ok { c - p } else { 0.0 });
        Self { values, valid }
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    fn column_has_peak(&self, col: usize, threshold: f64) -> bool {
        self.values
            .column(col)
            .iter()
            .zip(self.valid.column(col))
            .any(|(v, &ok)| ok && v.abs() > threshold)
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .zip(self.valid.iter())
            .filter(|(_, &ok)| ok)
            .fold(0.0f64, |m, (v, _)| m.max(v.abs()))
    }
}

/// Drops outer columns while the edge region still holds a peak, at most
/// `edge` columns per side. Returns the trimmed patch and `(left, right)`
/// column counts removed.
pub fn self_adjust(diff: &DepthDiff, cfg: &OcclusionConfig) -> Result<(DepthDiff, (usize, usize))> {
    let width = diff.width();
    let edge = cfg.edge.columns(width);
    if width < 2 * edge + 1 {
        return Err(Error::PatchTooNarrow { width, edge });
    }
    let th = cfg.peak_threshold_mm;
    let mut left = 0;
    while left < edge && (left..edge).any(|c| diff.column_has_peak(c, th)) {
        left += 1;
    }
    let mut right = 0;
    while right < edge && (width - edge..width - right).any(|c| diff.column_has_peak(c, th)) {
        right += 1;
    }
    let cols = s![.., left..width - right];
    Ok((
        DepthDiff {
            values: diff.values.slice(cols).to_owned(),
            valid: diff.valid.slice(cols).to_owned(),
        },
        (left, right),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcclusionVerdict {
    pub occluded: bool,
    /// Fraction of valid interior pixels that are peaks after trimming.
    pub peak_fraction: f64,
    pub mean_abs_mm: f64,
    pub trimmed: (usize, usize),
    /// Set when the patches share no valid pixel; the verdict is then "clear".
    pub no_valid_pixels: bool,
}

/// Compares the center depth patches of two frames.
pub fn occlusion_check(prev: &DepthPatch, curr: &DepthPatch, cfg: &OcclusionConfig) -> Result<OcclusionVerdict> {
    let diff = DepthDiff::between(prev, curr);
    let (trimmed, removed) = self_adjust(&diff, cfg)?;
    let mut count = 0usize;
    let mut peaks = 0usize;
    let mut sum = 0.0;
    for (v, &ok) in trimmed.values.iter().zip(trimmed.valid.iter()) {
        if ok {
            count += 1;
            sum += v.abs();
            if v.abs() > cfg.peak_threshold_mm {
                peaks += 1;
            }
        }
    }
    if count == 0 {
        return Ok(OcclusionVerdict {
            occluded: false,
            peak_fraction: 0.0,
            mean_abs_mm: 0.0,
            trimmed: removed,
            no_valid_pixels: true,
        });
    }
    let peak_fraction = peaks as f64 / count as f64;
    let mean_abs_mm = sum / count as f64;
    let occluded = match cfg.rule {
        OcclusionRule::PeakFraction => peak_fraction > cfg.interior_peak_ratio,
        OcclusionRule::MeanAbs => mean_abs_mm > cfg.peak_threshold_mm,
    };
    Ok(OcclusionVerdict {
        occluded,
        peak_fraction,
        mean_abs_mm,
        trimmed: removed,
        no_valid_pixels: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tracking,
    Occluded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcclusionState {
    pub status: TrackStatus,
    pub last_known_box: BoundingBox,
    pub frames_occluded: usize,
}

impl OcclusionState {
    pub fn tracking(bbox: BoundingBox) -> Self {
        Self {
            status: TrackStatus::Tracking,
            last_known_box: bbox,
            frames_occluded: 0,
        }
    }

    fn occlude(&mut self) {
        self.status = TrackStatus::Occluded;
        self.frames_occluded += 1;
    }
}

/// Best detection and its response among the horizontal sliding-window candidates.
pub fn best_horizontal_match(
    model: &TrackerModel,
    gray: ArrayView2<f64>,
    around: &BoundingBox,
    cfg: &OcclusionConfig,
) -> Result<Option<Detection>> {
    let width = gray.ncols() as f64;
    let stride = cfg.search_stride.unwrap_or_else(|| model.cell_size()).max(1) as f64;
    let (cx, cy) = around.center();
    let steps = (cfg.search_span * around.w / stride).floor() as isize;
    let mut best: Option<Detection> = None;
    // Nearest offsets first so ties resolve toward the last known position.
    for k in std::iter::once(0).chain((1..=steps).flat_map(|k| [-k, k])) {
        let x = cx + k as f64 * stride;
        if !(0.0..width).contains(&x) {
            continue;
        }
        let det = model.detect_at(gray, x, cy)?;
        if best.as_ref().is_none_or(|b| det.peak_response > b.peak_response) {
            best = Some(det);
        }
    }
    Ok(best)
}

/// Searches horizontally around the last known box with the given (first-frame)
/// model. Returns a detection only if its response clears the threshold.
pub fn redetect(
    model: &TrackerModel,
    gray: ArrayView2<f64>,
    state: &OcclusionState,
    cfg: &OcclusionConfig,
) -> Result<Option<Detection>> {
    Ok(best_horizontal_match(model, gray, &state.last_known_box, cfg)?
        .filter(|d| d.peak_response > cfg.response_threshold))
}

/// Per-frame result of the depth-aware trackers.
#[derive(Debug, Clone)]
pub struct FrameOutcome {
    /// `None` while the target is considered occluded.
    pub bbox: Option<BoundingBox>,
    pub response: f64,
    pub status: TrackStatus,
}

/// RGB-D tracker: correlation filter plus depth-based occlusion detection and re-detection.
#[derive(Debug, Clone)]
pub struct RgbdTracker {
    pub model: TrackerModel,
    original: TrackerModel,
    pub state: OcclusionState,
    pub cfg: OcclusionConfig,
    reference: Option<DepthPatch>,
    prev_box: BoundingBox,
    depth_warned: bool,
}

impl RgbdTracker {
    pub fn init(frame: &Frame, bbox: &BoundingBox, config: TrackerConfig, cfg: OcclusionConfig) -> Result<Self> {
        cfg.validate()?;
        let model = TrackerModel::init(frame, bbox, config)?;
        let reference = match &frame.depth {
            Some(d) => Some(center_depth_patch(d.view(), bbox, &cfg)?),
            None => None,
        };
        Ok(Self {
            original: model.clone(),
            model,
            state: OcclusionState::tracking(*bbox),
            cfg,
            reference,
            prev_box: *bbox,
            depth_warned: false,
        })
    }

    /// The model trained on the first frame, used for re-detection.
    pub fn original_model(&self) -> &TrackerModel {
        &self.original
    }

    pub fn track_frame(&mut self, frame: &Frame) -> Result<FrameOutcome> {
        let gray = to_grayscale(&frame.rgb);
        let Some(depth) = frame.depth.as_ref() else {
            if !self.depth_warned {
                eprintln!("warning: frame {} has no depth; falling back to RGB-only tracking", frame.index);
                self.depth_warned = true;
            }
            let det = self.model.track_gray(gray.view(), &self.prev_box)?;
            self.prev_box = det.bbox;
            self.state = OcclusionState::tracking(det.bbox);
            return Ok(FrameOutcome {
                bbox: Some(det.bbox),
                response: det.peak_response,
                status: TrackStatus::Tracking,
            });
        };

        if self.state.status == TrackStatus::Occluded {
            let best = best_horizontal_match(&self.original, gray.view(), &self.state.last_known_box, &self.cfg)?;
            let response = best.as_ref().map_or(0.0, |d| d.peak_response);
            return match best.filter(|d| d.peak_response > self.cfg.response_threshold) {
                Some(det) => self.confirm(gray.view(), depth.view(), det),
                None => {
                    self.state.occlude();
                    Ok(FrameOutcome {
                        bbox: None,
                        response,
                        status: TrackStatus::Occluded,
                    })
                }
            };
        }

        let (cx, cy) = self.prev_box.center();
        let det = self.model.detect_at(gray.view(), cx, cy)?;
        if det.peak_response > self.cfg.response_threshold {
            return self.confirm(gray.view(), depth.view(), det);
        }

        let curr = center_depth_patch(depth.view(), &det.bbox, &self.cfg).ok();
        let occluded = match (&self.reference, &curr) {
            (Some(prev), Some(curr)) => occlusion_check(prev, curr, &self.cfg)?.occluded,
            _ => false,
        };
        if occluded {
            self.state.last_known_box = self.prev_box;
            self.state.occlude();
            Ok(FrameOutcome {
                bbox: None,
                response: det.peak_response,
                status: TrackStatus::Occluded,
            })
        } else {
            // Weak but depth-consistent: probably a partly visible target. Follow
            // it without training on the contaminated patch.
            self.prev_box = det.bbox;
            self.state = OcclusionState::tracking(det.bbox);
            Ok(FrameOutcome {
                bbox: Some(det.bbox),
                response: det.peak_response,
                status: TrackStatus::Tracking,
            })
        }
    }

    /// Accepts a confident detection: retrain there and refresh the depth reference.
    fn confirm(&mut self, gray: ArrayView2<f64>, depth: ArrayView2<u16>, det: Detection) -> Result<FrameOutcome> {
        let (ncx, ncy) = det.bbox.center();
        self.model.learn_at(gray, ncx, ncy)?;
        if let Ok(patch) = center_depth_patch(depth, &det.bbox, &self.cfg) {
            self.reference = Some(patch);
        }
        self.prev_box = det.bbox;
        self.state = OcclusionState::tracking(det.bbox);
        Ok(FrameOutcome {
            bbox: Some(det.bbox),
            response: det.peak_response,
            status: TrackStatus::Tracking,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(h: usize, w: usize, mm: u16) -> Array2<u16> {
        Array2::from_elem((h, w), mm)
    }

    fn diff_from(values: Array2<f64>) -> DepthDiff {
        let valid = values.mapv(|_| true);
        DepthDiff { values, valid }
    }

    #[test]
    fn center_patch_sizes() {
        let depth = flat(300, 400, 2000);
        let cfg = OcclusionConfig {
            center_fraction: 1.0,
            ..OcclusionConfig::default()
        };
        let b = BoundingBox::new(50.0, 40.0, 200.0, 100.0);
        let p = center_depth_patch(depth.view(), &b, &cfg).unwrap();
        assert_eq!(p.dim(), (100, 200));
        let p = center_depth_patch(depth.view(), &b, &OcclusionConfig::default()).unwrap();
        assert_eq!(p.dim(), (25, 50));
        assert!(p.values.iter().all(|&v| v == 2000.0));
        assert!(p.valid.iter().all(|&v| v));
    }

    #[test]
    fn center_patch_outside_frame_is_an_error() {
        let depth = flat(50, 50, 1000);
        let b = BoundingBox::new(200.0, 200.0, 20.0, 20.0);
        assert!(matches!(
            center_depth_patch(depth.view(), &b, &OcclusionConfig::default()),
            Err(Error::BoxOutsideFrame)
        ));
    }

    #[test]
    fn zero_difference_is_not_trimmed() {
        let d = diff_from(Array2::zeros((10, 20)));
        let (t, removed) = self_adjust(&d, &OcclusionConfig::default()).unwrap();
        assert_eq!(removed, (0, 0));
        assert_eq!(t.width(), 20);
    }

    #[test]
    fn outermost_column_peaks_are_trimmed() {
        let mut v = Array2::<f64>::zeros((10, 20));
        v.column_mut(0).fill(1500.0);
        v.column_mut(19).fill(-1500.0);
        let (t, removed) = self_adjust(&diff_from(v), &OcclusionConfig::default()).unwrap();
        assert_eq!(removed, (1, 1));
        assert!(t.max_abs() < 300.0);
    }

    #[test]
    fn trimming_stops_at_the_edge_width() {
        let mut v = Array2::<f64>::zeros((10, 20));
        v.slice_mut(s![.., 0..12]).fill(900.0);
        let (t, removed) = self_adjust(&diff_from(v), &OcclusionConfig::default()).unwrap();
        assert_eq!(removed, (4, 0));
        assert!(t.max_abs() > 300.0);
    }

    #[test]
    fn narrow_patch_cannot_be_trimmed() {
        let cfg = OcclusionConfig {
            edge: EdgeWidth::Columns(3),
            ..OcclusionConfig::default()
        };
        let d = diff_from(Array2::zeros((4, 6)));
        assert!(matches!(self_adjust(&d, &cfg), Err(Error::PatchTooNarrow { width: 6, edge: 3 })));
    }

    #[test]
    fn identical_frames_are_clear() {
        let p = DepthPatch::from_raw(flat(20, 40, 2500).view());
        let v = occlusion_check(&p, &p, &OcclusionConfig::default()).unwrap();
        assert!(!v.occluded);
        assert_eq!(v.peak_fraction, 0.0);
    }

    #[test]
    fn near_occluder_over_center_is_detected() {
        let prev = DepthPatch::from_raw(flat(20, 40, 2500).view());
        let mut cur = flat(20, 40, 2500);
        cur.slice_mut(s![.., 5..35]).fill(1700);
        let v = occlusion_check(&prev, &DepthPatch::from_raw(cur.view()), &OcclusionConfig::default()).unwrap();
        assert!(v.occluded);
        let mean_rule = OcclusionConfig {
            rule: OcclusionRule::MeanAbs,
            ..OcclusionConfig::default()
        };
        assert!(occlusion_check(&prev, &DepthPatch::from_raw(cur.view()), &mean_rule).unwrap().occluded);
    }

    #[test]
    fn invalid_pixels_are_ignored() {
        let prev = DepthPatch::from_raw(flat(10, 20, 2500).view());
        let mut cur = flat(10, 20, 2500);
        cur.slice_mut(s![.., 5..15]).fill(0);
        let v = occlusion_check(&prev, &DepthPatch::from_raw(cur.view()), &OcclusionConfig::default()).unwrap();
        assert!(!v.occluded);
        let none = DepthPatch::from_raw(flat(10, 20, 0).view());
        let v = occlusion_check(&prev, &none, &OcclusionConfig::default()).unwrap();
        assert!(!v.occluded && v.no_valid_pixels);
    }

    #[test]
    fn drifting_patch_size_is_resampled() {
        let prev = DepthPatch::from_raw(flat(20, 40, 2500).view());
        let cur = DepthPatch::from_raw(flat(22, 37, 2510).view());
        let v = occlusion_check(&prev, &cur, &OcclusionConfig::default()).unwrap();
        assert!(!v.occluded);
    }

    #[test]
    fn config_validation() {
        assert!(OcclusionConfig::default().validate().is_ok());
        let bad = OcclusionConfig {
            response_threshold: 1.0,
            ..OcclusionConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = OcclusionConfig {
            center_fraction: 0.0,
            ..OcclusionConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
