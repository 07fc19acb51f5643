//! File formats and dataset plumbing: annotation and track CSVs, Princeton-style
//! frame directories, synthetic scenario rendering and overlay frames.

mod annotations;
mod overlay;
mod sequence;
mod synthetic;
mod tracks;

pub use annotations::{format_annotations, load_annotations, parse_annotations, write_annotations};
pub use overlay::{draw_box, write_overlay, GT_COLOR, TRACK_COLOR};
pub use sequence::{load_princeton, load_sequence, parse_sequence_spec, FrameEntry, Sequence, SequenceSpec};
pub use synthetic::{
    load_scenario, parse_scenario, render_synthetic, write_sequence, OccluderKey, SyntheticScenario,
    SyntheticSequence,
};
pub use tracks::{format_tracks, TRACKS_HEADER, parse_tracks, read_tracks, tracks_to_annotation, write_tracks, TrackRecord};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-empty lines with their 1-based line numbers, `#` comments and CR stripped.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}
