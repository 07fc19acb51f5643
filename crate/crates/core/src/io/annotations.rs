use std::path::Path;

use super::{content_lines, read_text, write_text};
use crate::error::{Error, Result};
use crate::eval::Annotation;
use crate::geometry::BoundingBox;

/// Parses `frame,x,y,w,h` / `frame,absent` lines. An optional leading header
/// line starting with `frame` is skipped. `path` only labels errors.
pub fn parse_annotations(text: &str, path: &Path) -> Result<Annotation> {
    let mut entries: Vec<(u64, Option<BoundingBox>)> = Vec::new();
    for (line_no, line) in content_lines(text) {
        if entries.is_empty() && line.starts_with("frame") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let frame: u64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("bad frame index {:?}", fields[0])))?;
        let bbox = match fields.len() {
            2 if fields[1].eq_ignore_ascii_case("absent") => None,
            5 => {
                let mut v = [0.0; 4];
                for (slot, f) in v.iter_mut().zip(&fields[1..]) {
                    *slot = f
                        .parse()
                        .ok()
                        .filter(|x: &f64| x.is_finite())
                        .ok_or_else(|| Error::parse(path, line_no, format!("bad coordinate {f:?}")))?;
                }
                let b = BoundingBox::new(v[0], v[1], v[2], v[3]);
                if b.is_degenerate() {
                    return Err(Error::parse(path, line_no, "box width and height must be positive"));
                }
                Some(b)
            }
            _ => {
                return Err(Error::parse(
                    path,
                    line_no,
                    "expected `frame,x,y,w,h` or `frame,absent`",
                ))
            }
        };
        if let Some(&(last, _)) = entries.last() {
            if frame == last {
                return Err(Error::parse(path, line_no, format!("duplicate frame index {frame}")));
            }
            if frame < last {
                return Err(Error::parse(path, line_no, format!("frame {frame} listed after frame {last}")));
            }
        }
        entries.push((frame, bbox));
    }
    Annotation::new(entries)
}

pub fn load_annotations(path: &Path) -> Result<Annotation> {
    parse_annotations(&read_text(path)?, path)
}

pub fn format_annotations(ann: &Annotation) -> String {
    let mut out = String::new();
    for (frame, b) in ann.entries() {
        match b {
            Some(b) => out.push_str(&format!("{frame},{},{},{},{}\n", b.x, b.y, b.w, b.h)),
            None => out.push_str(&format!("{frame},absent\n")),
        }
    }
    out
}

pub fn write_annotations(ann: &Annotation, path: &Path) -> Result<()> {
    write_text(path, &format_annotations(ann))
}
