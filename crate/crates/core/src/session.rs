//! One tracking run over a sequence, for any of the three tracker variants.

use std::fmt;
use std::str::FromStr;

use crate::depth::{OcclusionConfig, RgbdTracker, TrackStatus};
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Frame};
use crate::io::TrackRecord;
use crate::kcf::{TrackerConfig, TrackerModel};
use crate::particle::{PfConfig, PfRgbdTracker};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Kcf,
    Rgbd,
    RgbdPf,
}

impl Variant {
    pub fn needs_depth(self) -> bool {
        self != Variant::Kcf
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Kcf => "kcf",
            Variant::Rgbd => "rgbd",
            Variant::RgbdPf => "rgbd-pf",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kcf" => Ok(Variant::Kcf),
            "rgbd" => Ok(Variant::Rgbd),
            "rgbd-pf" => Ok(Variant::RgbdPf),
            other => Err(Error::InvalidParameter(format!(
                "unknown variant {other:?} (expected kcf, rgbd or rgbd-pf)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SessionConfig {
    pub tracker: TrackerConfig,
    pub occlusion: OcclusionConfig,
    pub pf: PfConfig,
    pub seed: u64,
}

/// Per-frame result common to all variants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub bbox: Option<BoundingBox>,
    pub response: f64,
    pub occluded: bool,
}

#[derive(Debug, Clone)]
pub enum Tracker {
    Kcf { model: Box<TrackerModel>, prev_box: BoundingBox },
    Rgbd(Box<RgbdTracker>),
    RgbdPf(Box<PfRgbdTracker>),
}

impl Tracker {
    pub fn init(variant: Variant, frame: &Frame, bbox: &BoundingBox, cfg: &SessionConfig) -> Result<Self> {
        if variant.needs_depth() && frame.depth.is_none() {
            return Err(Error::MissingDepth(frame.index));
        }
        Ok(match variant {
            Variant::Kcf => Tracker::Kcf {
                model: Box::new(TrackerModel::init(frame, bbox, cfg.tracker)?),
                prev_box: *bbox,
            },
            Variant::Rgbd => Tracker::Rgbd(Box::new(RgbdTracker::init(frame, bbox, cfg.tracker, cfg.occlusion)?)),
            Variant::RgbdPf => Tracker::RgbdPf(Box::new(PfRgbdTracker::init(
                frame,
                bbox,
                cfg.tracker,
                cfg.occlusion,
                cfg.pf,
                cfg.seed,
            )?)),
        })
    }

    pub fn step(&mut self, frame: &Frame) -> Result<Step> {
        Ok(match self {
            Tracker::Kcf { model, prev_box } => {
                let det = model.track_frame(frame, prev_box)?;
                *prev_box = det.bbox;
                Step {
                    bbox: Some(det.bbox),
                    response: det.peak_response,
                    occluded: false,
                }
            }
            Tracker::Rgbd(t) => {
                let out = t.track_frame(frame)?;
                Step {
                    bbox: out.bbox,
                    response: out.response,
                    occluded: out.status == TrackStatus::Occluded,
                }
            }
            Tracker::RgbdPf(t) => {
                let out = t.track_frame(frame)?;
                Step {
                    bbox: out.bbox,
                    response: out.response,
                    occluded: out.status == TrackStatus::Occluded,
                }
            }
        })
    }
}

/// Tracks every frame. The first frame initializes the tracker and is reported
/// with the initial box and response 1.
pub fn run<I>(frames: I, init: &BoundingBox, variant: Variant, cfg: &SessionConfig) -> Result<Vec<TrackRecord>>
where
    I: IntoIterator<Item = Result<Frame>>,
{
    run_with(frames, init, variant, cfg, |_, _| Ok(()))
}

/// Like [`run`], calling `visit` with every frame and its record as they are produced.
pub fn run_with<I, F>(
    frames: I,
    init: &BoundingBox,
    variant: Variant,
    cfg: &SessionConfig,
    mut visit: F,
) -> Result<Vec<TrackRecord>>
where
    I: IntoIterator<Item = Result<Frame>>,
    F: FnMut(&Frame, &TrackRecord) -> Result<()>,
{
    init.validate()?;
    let mut frames = frames.into_iter();
    let first = frames.next().ok_or(Error::EmptySequence)??;
    let mut tracker = Tracker::init(variant, &first, init, cfg)?;
    let record = |index: usize, s: Step| TrackRecord {
        frame: index as u64,
        bbox: s.bbox,
        response: s.response,
        occluded: s.occluded,
        variant: variant.to_string(),
    };
    let first_record = record(
        first.index,
        Step {
            bbox: Some(*init),
            response: 1.0,
            occluded: false,
        },
    );
    visit(&first, &first_record)?;
    let mut out = vec![first_record];
    for frame in frames {
        let frame = frame?;
        let r = record(frame.index, tracker.step(&frame)?);
        visit(&frame, &r)?;
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::RgbImage;

    #[test]
    fn variant_names_round_trip() {
        for v in [Variant::Kcf, Variant::Rgbd, Variant::RgbdPf] {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("mosse".parse::<Variant>().is_err());
    }

    #[test]
    fn depth_variants_need_depth() {
        let f = Frame::new(1, RgbImage::new(64, 64), None);
        let b = BoundingBox::new(20.0, 20.0, 16.0, 16.0);
        let cfg = SessionConfig::default();
        assert!(matches!(Tracker::init(Variant::Rgbd, &f, &b, &cfg), Err(Error::MissingDepth(1))));
        assert!(matches!(Tracker::init(Variant::RgbdPf, &f, &b, &cfg), Err(Error::MissingDepth(1))));
        assert!(Tracker::init(Variant::Kcf, &f, &b, &cfg).is_ok());
    }

    #[test]
    fn empty_input() {
        let cfg = SessionConfig::default();
        let b = BoundingBox::new(0.0, 0.0, 8.0, 8.0);
        assert!(matches!(run(Vec::new(), &b, Variant::Kcf, &cfg), Err(Error::EmptySequence)));
    }
}
