//! Tracking metrics: center and per-axis errors, overlap, precision, the
//! Princeton success rate and the prediction-conditioned confusion matrix.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// Per-frame boxes; `None` means the target is absent (ground truth) or was not
/// reported (tracker output).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Annotation {
    entries: Vec<(u64, Option<BoundingBox>)>,
}

impl Annotation {
    /// Builds an annotation, rejecting frame indices that do not strictly increase.
    pub fn new(entries: Vec<(u64, Option<BoundingBox>)>) -> Result<Self> {
        for pair in entries.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::InvalidParameter(format!(
                    "frame indices must strictly increase ({} after {})",
                    pair[1].0, pair[0].0
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_boxes(boxes: impl IntoIterator<Item = Option<BoundingBox>>) -> Self {
        Self {
            entries: boxes.into_iter().enumerate().map(|(i, b)| (i as u64, b)).collect(),
        }
    }

    pub fn entries(&self) -> &[(u64, Option<BoundingBox>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, frame: u64) -> Option<BoundingBox> {
        self.entries
            .binary_search_by_key(&frame, |e| e.0)
            .ok()
            .and_then(|i| self.entries[i].1)
    }
}

/// Ground truth and prediction for every frame mentioned by either sequence.
fn align(gt: &Annotation, tracks: &Annotation) -> Vec<(u64, Option<BoundingBox>, Option<BoundingBox>)> {
    let mut frames: BTreeMap<u64, (Option<BoundingBox>, Option<BoundingBox>)> = BTreeMap::new();
    for &(f, b) in gt.entries() {
        frames.entry(f).or_default().0 = b;
    }
    for &(f, b) in tracks.entries() {
        frames.entry(f).or_default().1 = b;
    }
    frames.into_iter().map(|(f, (g, t))| (f, g, t)).collect()
}

/// Euclidean distance between box centers.
pub fn center_error(g: &BoundingBox, t: &BoundingBox) -> f64 {
    let (dx, dy) = coordinate_errors(g, t);
    (dx * dx + dy * dy).sqrt()
}

/// Signed center displacement `(t - g)` along each axis.
pub fn coordinate_errors(g: &BoundingBox, t: &BoundingBox) -> (f64, f64) {
    let (gx, gy) = g.center();
    let (tx, ty) = t.center();
    (tx - gx, ty - gy)
}

/// Intersection over union.
pub fn iou(g: &BoundingBox, t: &BoundingBox) -> Result<f64> {
    g.validate()?;
    t.validate()?;
    if g == t {
        return Ok(1.0);
    }
    let inter = g.intersection_area(t);
    Ok((inter / (g.area() + t.area() - inter)).clamp(0.0, 1.0))
}

/// When a reported box counts as correct.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    /// Overlap of at least this value.
    Iou(f64),
    /// Center error of at most this many pixels.
    CenterDistance(f64),
}

impl Default for Criterion {
    fn default() -> Self {
        Criterion::Iou(0.5)
    }
}

impl Criterion {
    pub fn is_correct(&self, g: &BoundingBox, t: &BoundingBox) -> bool {
        match *self {
            Criterion::Iou(th) => iou(g, t).map(|v| v >= th).unwrap_or(false),
            Criterion::CenterDistance(px) => center_error(g, t) <= px,
        }
    }
}

/// Errors for one frame in which both boxes exist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameErrors {
    pub frame: u64,
    pub center_error: f64,
    pub dx: f64,
    pub dy: f64,
    pub iou: f64,
}

/// Per-frame error series plus the number of frames skipped because a box was missing.
pub fn error_series(gt: &Annotation, tracks: &Annotation) -> (Vec<FrameErrors>, usize) {
    let mut skipped = 0;
    let mut out = Vec::new();
    for (frame, g, t) in align(gt, tracks) {
        match (g, t) {
            (Some(g), Some(t)) => {
                let (dx, dy) = coordinate_errors(&g, &t);
                out.push(FrameErrors {
                    frame,
                    center_error: center_error(&g, &t),
                    dx,
                    dy,
                    iou: iou(&g, &t).unwrap_or(0.0),
                });
            }
            _ => skipped += 1,
        }
    }
    (out, skipped)
}

/// Raw confusion counts. A prediction is a true positive only when the ground
/// truth is present and the criterion holds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

pub fn confusion_counts(gt: &Annotation, tracks: &Annotation, criterion: Criterion) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (_, g, t) in align(gt, tracks) {
        match (g, t) {
            (Some(g), Some(t)) if criterion.is_correct(&g, &t) => c.tp += 1,
            (_, Some(_)) => c.fp += 1,
            (Some(_), None) => c.fn_ += 1,
            (None, None) => c.tn += 1,
        }
    }
    c
}

/// `TP / (TP + FP)`, or `None` when the tracker never reported a box.
pub fn precision(gt: &Annotation, tracks: &Annotation, criterion: Criterion) -> Option<f64> {
    let c = confusion_counts(gt, tracks, criterion);
    let predicted = c.tp + c.fp;
    (predicted > 0).then(|| c.tp as f64 / predicted as f64)
}

/// Princeton success rate: the fraction of frames whose overlap code exceeds `r_t`.
/// Frames where both boxes are absent score `+1`; a box on one side only scores `-1`.
pub fn success_rate(gt: &Annotation, tracks: &Annotation, r_t: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&r_t) {
        return Err(Error::InvalidParameter(format!(
            "overlap threshold must lie in [0, 1), got {r_t}"
        )));
    }
    let frames = align(gt, tracks);
    if frames.is_empty() {
        return Err(Error::EmptySequence);
    }
    let hits = frames
        .iter()
        .filter(|(_, g, t)| {
            let r = match (g, t) {
                (Some(g), Some(t)) => iou(g, t).unwrap_or(0.0),
                (None, None) => 1.0,
                _ => -1.0,
            };
            r > r_t
        })
        .count();
    Ok(hits as f64 / frames.len() as f64)
}

/// Success rate at each threshold.
pub fn success_curve(gt: &Annotation, tracks: &Annotation, thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    thresholds
        .iter()
        .map(|&r| success_rate(gt, tracks, r).map(|s| (r, s)))
        .collect()
}

/// Confusion percentages normalized per tracker decision: the first row over
/// frames with a reported box, the second over frames without one. A row is
/// `None` (undetermined) when its denominator is empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfusionMethod2 {
    pub counts: ConfusionCounts,
    pub tp_pct: Option<f64>,
    pub fp_pct: Option<f64>,
    pub fn_pct: Option<f64>,
    pub tn_pct: Option<f64>,
}

pub fn confusion_method2(gt: &Annotation, tracks: &Annotation, criterion: Criterion) -> ConfusionMethod2 {
    let counts = confusion_counts(gt, tracks, criterion);
    let pct = |a: usize, total: usize| (total > 0).then(|| 100.0 * a as f64 / total as f64);
    let predicted = counts.tp + counts.fp;
    let abstained = counts.fn_ + counts.tn;
    ConfusionMethod2 {
        counts,
        tp_pct: pct(counts.tp, predicted),
        fp_pct: pct(counts.fp, predicted),
        fn_pct: pct(counts.fn_, abstained),
        tn_pct: pct(counts.tn, abstained),
    }
}

struct Pct(Option<f64>);

impl fmt::Display for Pct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v:.2}%"),
            None => f.write_str("undetermined"),
        }
    }
}

impl fmt::Display for ConfusionMethod2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "TP {} FP {} FN {} TN {}",
            Pct(self.tp_pct),
            Pct(self.fp_pct),
            Pct(self.fn_pct),
            Pct(self.tn_pct)
        )
    }
}

/// Mean of the defined per-sequence precisions.
pub fn average_precision(precisions: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = precisions.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}
