use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageError, RgbImage};
use ndarray::Array2;

use super::{content_lines, load_annotations, read_text};
use crate::error::{Error, Result};
use crate::eval::Annotation;
use crate::geometry::Frame;

/// Where a sequence's frames and ground truth live.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSpec {
    pub name: String,
    pub rgb_dir: PathBuf,
    pub depth_dir: Option<PathBuf>,
    pub gt_path: Option<PathBuf>,
    /// Pattern for color frame file names, relative to `rgb_dir`.
    pub frame_glob: String,
}

impl SequenceSpec {
    /// The directory layout `<dir>/rgb`, optional `<dir>/depth`, optional `<dir>/gt.csv`.
    pub fn from_dir(dir: &Path) -> Self {
        let depth = dir.join("depth");
        let gt = dir.join("gt.csv");
        Self {
            name: dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "sequence".into()),
            rgb_dir: dir.join("rgb"),
            depth_dir: depth.is_dir().then_some(depth),
            gt_path: gt.is_file().then_some(gt),
            frame_glob: "*".into(),
        }
    }
}

/// Parses a `key = value` sequence description. Relative paths resolve against `base`.
pub fn parse_sequence_spec(text: &str, path: &Path, base: &Path) -> Result<SequenceSpec> {
    let mut spec = SequenceSpec {
        name: path
            .file_stem()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        rgb_dir: PathBuf::new(),
        depth_dir: None,
        gt_path: None,
        frame_glob: "*".into(),
    };
    let mut have_rgb = false;
    for (line_no, line) in content_lines(text) {
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::parse(path, line_no, "expected `key = value`"));
        };
        let value = value.trim();
        match key.trim() {
            "name" => spec.name = value.to_string(),
            "rgb_dir" => {
                spec.rgb_dir = base.join(value);
                have_rgb = true;
            }
            "depth_dir" => spec.depth_dir = Some(base.join(value)),
            "gt" | "gt_path" => spec.gt_path = Some(base.join(value)),
            "frame_glob" => spec.frame_glob = value.to_string(),
            other => return Err(Error::parse(path, line_no, format!("unknown key {other:?}"))),
        }
    }
    if !have_rgb {
        return Err(Error::parse(path, 0, "missing rgb_dir"));
    }
    Ok(spec)
}

/// One color frame and its paired depth file.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEntry {
    pub index: u64,
    pub rgb: PathBuf,
    pub depth: Option<PathBuf>,
}

/// An indexed sequence whose frames are decoded on demand.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub name: String,
    pub entries: Vec<FrameEntry>,
    pub gt: Option<Annotation>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn has_depth(&self) -> bool {
        self.entries.iter().all(|e| e.depth.is_some())
    }

    pub fn load_frame(&self, i: usize) -> Result<Frame> {
        let e = &self.entries[i];
        let rgb = load_rgb(&e.rgb)?;
        let depth = match &e.depth {
            Some(p) => {
                let d = load_depth(p)?;
                let want = [rgb.height() as usize, rgb.width() as usize];
                if d.shape() != want {
                    return Err(Error::ShapeMismatch {
                        expected: want.to_vec(),
                        actual: d.shape().to_vec(),
                    });
                }
                Some(d)
            }
            None => None,
        };
        Ok(Frame::new(e.index as usize, rgb, depth))
    }

    pub fn frames(&self) -> impl Iterator<Item = Result<Frame>> + '_ {
        (0..self.len()).map(|i| self.load_frame(i))
    }
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|e| match e {
        ImageError::IoError(source) => Error::io(path, source),
        source => Error::CorruptImage {
            path: path.to_path_buf(),
            source,
        },
    })
}

pub(crate) fn load_rgb(path: &Path) -> Result<RgbImage> {
    Ok(open_image(path)?.to_rgb8())
}

/// Decodes a 16-bit single-channel PNG as millimeters (0 = no reading).
pub(crate) fn load_depth(path: &Path) -> Result<Array2<u16>> {
    match open_image(path)? {
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            Ok(Array2::from_shape_vec((h as usize, w as usize), buf.into_raw()).expect("buffer matches dimensions"))
        }
        other => Err(Error::BitDepth {
            path: path.to_path_buf(),
            found: format!("{:?}", other.color()),
        }),
    }
}

/// Last run of ASCII digits in the file stem.
fn frame_index(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let end = stem.rfind(|c: char| c.is_ascii_digit())? + 1;
    let start = stem[..end]
        .rfind(|c: char| !c.is_ascii_digit())
        .map_or(0, |i| i + 1);
    stem[start..end].parse().ok()
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| ["png", "jpg", "jpeg"].contains(&e.to_ascii_lowercase().as_str()))
}

fn index_dir(dir: &Path, pattern: &str) -> Result<BTreeMap<u64, PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "directory not found"),
        ));
    }
    let full = dir.join(pattern);
    let paths = glob::glob(&full.to_string_lossy())
        .map_err(|e| Error::InvalidParameter(format!("bad frame pattern {pattern:?}: {e}")))?;
    let mut out = BTreeMap::new();
    for p in paths {
        let p = p.map_err(|e| {
            let path = e.path().to_path_buf();
            Error::io(path, e.into())
        })?;
        if !p.is_file() || !is_image(&p) {
            continue;
        }
        let Some(index) = frame_index(&p) else {
            return Err(Error::parse(&p, 0, "file name carries no frame index"));
        };
        if let Some(prev) = out.insert(index, p.clone()) {
            return Err(Error::parse(
                &p,
                0,
                format!("frame index {index} also used by {}", prev.display()),
            ));
        }
    }
    Ok(out)
}

/// Indexes a Princeton-style sequence: color and depth frames paired by the
/// integer index in their file names.
pub fn load_princeton(spec: &SequenceSpec) -> Result<Sequence> {
    let rgb = index_dir(&spec.rgb_dir, &spec.frame_glob)?;
    if rgb.is_empty() {
        return Err(Error::EmptySequence);
    }
    let depth = match &spec.depth_dir {
        Some(d) => Some((d, index_dir(d, "*.png")?)),
        None => None,
    };
    let mut entries = Vec::with_capacity(rgb.len());
    for (index, path) in rgb {
        let depth_path = match &depth {
            Some((dir, files)) => Some(files.get(&index).cloned().ok_or_else(|| Error::MissingFrame {
                dir: dir.to_path_buf(),
                index,
            })?),
            None => None,
        };
        entries.push(FrameEntry {
            index,
            rgb: path,
            depth: depth_path,
        });
    }
    let gt = spec.gt_path.as_deref().map(load_annotations).transpose()?;
    Ok(Sequence {
        name: spec.name.clone(),
        entries,
        gt,
    })
}

/// Loads a sequence from either a directory in the standard layout or a
/// `key = value` spec file.
pub fn load_sequence(path: &Path) -> Result<Sequence> {
    let spec = if path.is_dir() {
        SequenceSpec::from_dir(path)
    } else {
        let base = path.parent().unwrap_or(Path::new("."));
        parse_sequence_spec(&read_text(path)?, path, base)?
    };
    load_princeton(&spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, ImageBuffer, Luma, Rgb};

    #[test]
    fn frame_indices_from_names() {
        assert_eq!(frame_index(Path::new("r-12345-7.png")), Some(7));
        assert_eq!(frame_index(Path::new("frame-00042.png")), Some(42));
        assert_eq!(frame_index(Path::new("12.jpg")), Some(12));
        assert_eq!(frame_index(Path::new("cover.png")), None);
    }

    fn write_rgb(path: &Path) {
        RgbImage::from_pixel(4, 3, Rgb([10, 20, 30])).save(path).unwrap();
    }

    fn write_depth(path: &Path, value: u16) {
        ImageBuffer::<Luma<u16>, Vec<u16>>::from_pixel(4, 3, Luma([value])).save(path).unwrap();
    }

    fn layout(frames: &[u64]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("rgb")).unwrap();
        std::fs::create_dir(dir.path().join("depth")).unwrap();
        for &i in frames {
            write_rgb(&dir.path().join(format!("rgb/r-999-{i}.png")));
            write_depth(&dir.path().join(format!("depth/d-998-{i}.png")), 2500);
        }
        dir
    }

    #[test]
    fn loads_millimeters_and_pairs_by_index() {
        let dir = layout(&[2, 1, 10]);
        write_depth(&dir.path().join("depth/d-998-1.png"), 0);
        let seq = load_sequence(dir.path()).unwrap();
        assert_eq!(seq.entries.iter().map(|e| e.index).collect::<Vec<_>>(), [1, 2, 10]);
        assert!(seq.has_depth() && seq.gt.is_none());
        let f = seq.load_frame(1).unwrap();
        assert_eq!(f.index, 2);
        assert!(f.depth.as_ref().unwrap().iter().all(|&v| v == 2500));
        let first = seq.load_frame(0).unwrap();
        assert!(first.depth.unwrap().iter().all(|&v| v == 0));
    }

    #[test]
    fn missing_depth_frame() {
        let dir = layout(&[1, 2]);
        std::fs::remove_file(dir.path().join("depth/d-998-2.png")).unwrap();
        assert!(matches!(load_sequence(dir.path()), Err(Error::MissingFrame { index: 2, .. })));
    }

    #[test]
    fn eight_bit_depth_is_rejected() {
        let dir = layout(&[1]);
        GrayImage::from_pixel(4, 3, Luma([9])).save(dir.path().join("depth/d-998-1.png")).unwrap();
        let seq = load_sequence(dir.path()).unwrap();
        assert!(matches!(seq.load_frame(0), Err(Error::BitDepth { .. })));
    }

    #[test]
    fn corrupt_png() {
        let dir = layout(&[1]);
        std::fs::write(dir.path().join("rgb/r-999-1.png"), b"not a png").unwrap();
        let seq = load_sequence(dir.path()).unwrap();
        assert!(matches!(seq.load_frame(0), Err(Error::CorruptImage { .. })));
    }

    #[test]
    fn spec_file_with_relative_paths() {
        let dir = layout(&[1]);
        std::fs::write(dir.path().join("gt.txt"), "1,0,0,2,2\n").unwrap();
        let spec_path = dir.path().join("walk.seq");
        std::fs::write(&spec_path, "# demo\nrgb_dir = rgb\ngt = gt.txt\nframe_glob = r-*.png\n").unwrap();
        let seq = load_sequence(&spec_path).unwrap();
        assert_eq!(seq.name, "walk");
        assert!(!seq.has_depth());
        assert_eq!(seq.gt.unwrap().len(), 1);
        std::fs::write(&spec_path, "rgb_dir = rgb\ncolour = red\n").unwrap();
        assert!(matches!(load_sequence(&spec_path), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn empty_rgb_dir() {
        let dir = layout(&[]);
        assert!(matches!(load_sequence(dir.path()), Err(Error::EmptySequence)));
    }
}
