use std::path::Path;

use super::{content_lines, read_text, write_text};
use crate::error::{Error, Result};
use crate::eval::Annotation;
use crate::geometry::BoundingBox;

pub const TRACKS_HEADER: &str = "frame,x,y,w,h,response,occluded,variant";

/// One line of tracker output.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRecord {
    pub frame: u64,
    pub bbox: Option<BoundingBox>,
    pub response: f64,
    pub occluded: bool,
    pub variant: String,
}

pub fn format_tracks(records: &[TrackRecord]) -> String {
    let mut out = String::from(TRACKS_HEADER);
    out.push('\n');
    for r in records {
        let b = match &r.bbox {
            Some(b) => format!("{},{},{},{}", b.x, b.y, b.w, b.h),
            None => ",,,".to_string(),
        };
        out.push_str(&format!(
            "{},{b},{},{},{}\n",
            r.frame,
            r.response,
            u8::from(r.occluded),
            r.variant
        ));
    }
    out
}

pub fn write_tracks(records: &[TrackRecord], path: &Path) -> Result<()> {
    write_text(path, &format_tracks(records))
}

pub fn parse_tracks(text: &str, path: &Path) -> Result<Vec<TrackRecord>> {
    let mut out: Vec<TrackRecord> = Vec::new();
    for (line_no, line) in content_lines(text) {
        if line == TRACKS_HEADER {
            continue;
        }
        let err = |msg: String| Error::parse(path, line_no, msg);
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 8 {
            return Err(err(format!("expected 8 fields, found {}", fields.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number {s:?}")));
        let frame = fields[0]
            .parse::<u64>()
            .map_err(|_| err(format!("bad frame index {:?}", fields[0])))?;
        let bbox = if fields[1..5].iter().all(|f| f.is_empty()) {
            None
        } else {
            Some(BoundingBox::new(
                num(fields[1])?,
                num(fields[2])?,
                num(fields[3])?,
                num(fields[4])?,
            ))
        };
        let occluded = match fields[6] {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("occluded flag must be 0 or 1, found {other:?}"))),
        };
        if out.last().is_some_and(|r| r.frame >= frame) {
            return Err(err(format!("frame {frame} is not after the previous record")));
        }
        out.push(TrackRecord {
            frame,
            bbox,
            response: num(fields[5])?,
            occluded,
            variant: fields[7].to_string(),
        });
    }
    Ok(out)
}

pub fn read_tracks(path: &Path) -> Result<Vec<TrackRecord>> {
    parse_tracks(&read_text(path)?, path)
}

pub fn tracks_to_annotation(records: &[TrackRecord]) -> Result<Annotation> {
    Annotation::new(records.iter().map(|r| (r.frame, r.bbox)).collect())
}
