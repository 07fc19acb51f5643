//! Deterministic synthetic RGB-D sequences: a textured target translating over a
//! textured background, optionally swept by a nearer occluder.

use std::path::Path;

use image::{ImageBuffer, Luma, Rgb, RgbImage};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{content_lines, read_text, write_annotations};
use crate::error::{Error, Result};
use crate::eval::Annotation;
use crate::geometry::{BoundingBox, Frame};

/// Occluder left edge at a given frame; positions between keys are interpolated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccluderKey {
    pub frame: usize,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScenario {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
    /// Standard deviation of additive per-pixel color noise.
    pub noise: f64,
    pub target_x: f64,
    pub target_y: f64,
    pub target_w: usize,
    pub target_h: usize,
    pub target_vx: f64,
    pub target_vy: f64,
    /// Flip the velocity every this many frames (0 = never).
    pub reverse_every: usize,
    /// Average the target's color over its path since the previous frame.
    pub motion_blur: bool,
    pub target_depth: u16,
    pub background_depth: u16,
    /// Occluder width; 0 disables it.
    pub occluder_w: usize,
    /// Occluder height; 0 spans the whole frame.
    pub occluder_h: usize,
    pub occluder_y: f64,
    pub occluder_depth: u16,
    pub occluder_path: Vec<OccluderKey>,
}

impl Default for SyntheticScenario {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            frames: 100,
            seed: 0,
            noise: 0.0,
            target_x: 60.0,
            target_y: 80.0,
            target_w: 40,
            target_h: 80,
            target_vx: 2.0,
            target_vy: 0.0,
            reverse_every: 0,
            motion_blur: false,
            target_depth: 2500,
            background_depth: 4000,
            occluder_w: 0,
            occluder_h: 0,
            occluder_y: 0.0,
            occluder_depth: 1700,
            occluder_path: Vec::new(),
        }
    }
}

impl SyntheticScenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if self.width < 8 || self.height < 8 {
            return bad(format!("frame {}x{} is too small", self.width, self.height));
        }
        if self.frames == 0 {
            return bad("scenario has no frames".into());
        }
        if self.target_w == 0 || self.target_h == 0 {
            return bad("target must have a positive size".into());
        }
        if !(self.noise >= 0.0) {
            return bad("noise must be non-negative".into());
        }
        if self.has_occluder() {
            if self.occluder_depth >= self.target_depth {
                return bad(format!(
                    "occluder depth {} mm must be nearer than the target at {} mm",
                    self.occluder_depth, self.target_depth
                ));
            }
            if self.occluder_path.windows(2).any(|k| k[1].frame <= k[0].frame) {
                return bad("occluder path frames must strictly increase".into());
            }
        }
        Ok(())
    }

    fn has_occluder(&self) -> bool {
        self.occluder_w > 0 && !self.occluder_path.is_empty()
    }

    fn velocity_sign(&self, step: usize) -> f64 {
        if self.reverse_every > 0 && (step / self.reverse_every) % 2 == 1 {
            -1.0
        } else {
            1.0
        }
    }

    /// Unrounded top-left corner at 1-based frame `t`.
    fn target_position(&self, t: usize) -> (f64, f64) {
        let (mut x, mut y) = (self.target_x, self.target_y);
        for step in 0..t.saturating_sub(1) {
            let sign = self.velocity_sign(step);
            x += sign * self.target_vx;
            y += sign * self.target_vy;
        }
        (x, y)
    }

    /// Target box at 1-based frame `t`, snapped to whole pixels.
    pub fn target_box(&self, t: usize) -> BoundingBox {
        let (x, y) = self.target_position(t);
        BoundingBox::new(x.round(), y.round(), self.target_w as f64, self.target_h as f64)
    }

    /// Whole-pixel target offsets exposed during frame `t`, ending at the frame's box.
    fn exposure_path(&self, t: usize) -> Vec<(i64, i64)> {
        let end = self.target_box(t);
        let end = (end.x as i64, end.y as i64);
        if !self.motion_blur || t <= 1 {
            return vec![end];
        }
        let (x0, y0) = self.target_position(t - 1);
        let (x1, y1) = self.target_position(t);
        let n = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
        (1..=n)
            .map(|k| {
                let f = k as f64 / n as f64;
                ((x0 + f * (x1 - x0)).round() as i64, (y0 + f * (y1 - y0)).round() as i64)
            })
            .collect()
    }

    pub fn occluder_box(&self, t: usize) -> Option<BoundingBox> {
        if !self.has_occluder() {
            return None;
        }
        let path = &self.occluder_path;
        let x = if t <= path[0].frame {
            path[0].x
        } else if t >= path[path.len() - 1].frame {
            path[path.len() - 1].x
        } else {
            let i = path.iter().position(|k| k.frame > t).expect("t lies inside the path");
            let (a, b) = (path[i - 1], path[i]);
            a.x + (b.x - a.x) * (t - a.frame) as f64 / (b.frame - a.frame) as f64
        };
        let h = if self.occluder_h == 0 {
            self.height
        } else {
            self.occluder_h
        };
        Some(BoundingBox::new(x.round(), self.occluder_y.round(), self.occluder_w as f64, h as f64))
    }
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::parse(path, line, format!("bad value {v:?} for {key}")))
}

/// Parses a flat `key = value` scenario description.
pub fn parse_scenario(text: &str, path: &Path) -> Result<SyntheticScenario> {
    let mut s = SyntheticScenario::default();
    for (line_no, line) in content_lines(text) {
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::parse(path, line_no, "expected `key = value`"));
        };
        let (key, v) = (key.trim(), value.trim());
        let n = line_no;
        match key {
            "width" => s.width = parse_num(path, n, key, v)?,
            "height" => s.height = parse_num(path, n, key, v)?,
            "frames" => s.frames = parse_num(path, n, key, v)?,
            "seed" => s.seed = parse_num(path, n, key, v)?,
            "noise" => s.noise = parse_num(path, n, key, v)?,
            "target_x" => s.target_x = parse_num(path, n, key, v)?,
            "target_y" => s.target_y = parse_num(path, n, key, v)?,
            "target_w" => s.target_w = parse_num(path, n, key, v)?,
            "target_h" => s.target_h = parse_num(path, n, key, v)?,
            "target_vx" => s.target_vx = parse_num(path, n, key, v)?,
            "target_vy" => s.target_vy = parse_num(path, n, key, v)?,
            "reverse_every" => s.reverse_every = parse_num(path, n, key, v)?,
            "motion_blur" => s.motion_blur = parse_num(path, n, key, v)?,
            "target_depth" => s.target_depth = parse_num(path, n, key, v)?,
            "background_depth" => s.background_depth = parse_num(path, n, key, v)?,
            "occluder_w" => s.occluder_w = parse_num(path, n, key, v)?,
            "occluder_h" => s.occluder_h = parse_num(path, n, key, v)?,
            "occluder_y" => s.occluder_y = parse_num(path, n, key, v)?,
            "occluder_depth" => s.occluder_depth = parse_num(path, n, key, v)?,
            "occluder_path" => {
                s.occluder_path = v
                    .split(',')
                    .map(str::trim)
                    .filter(|k| !k.is_empty())
                    .map(|k| {
                        let (f, x) = k
                            .split_once(':')
                            .ok_or_else(|| Error::parse(path, n, format!("expected frame:x, found {k:?}")))?;
                        Ok(OccluderKey {
                            frame: parse_num(path, n, key, f.trim())?,
                            x: parse_num(path, n, key, x.trim())?,
                        })
                    })
                    .collect::<Result<_>>()?
            }
            other => return Err(Error::parse(path, line_no, format!("unknown key {other:?}"))),
        }
    }
    s.validate()?;
    Ok(s)
}

pub fn load_scenario(path: &Path) -> Result<SyntheticScenario> {
    parse_scenario(&read_text(path)?, path)
}

#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub frames: Vec<Frame>,
    pub gt: Annotation,
}

/// Smooth random texture: bilinear interpolation of a random lattice.
struct ValueNoise {
    grid: Array2<f64>,
    cell: f64,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, width: usize, height: usize, cell: f64) -> Self {
        let gw = (width as f64 / cell).ceil() as usize + 2;
        let gh = (height as f64 / cell).ceil() as usize + 2;
        Self {
            grid: Array2::from_shape_fn((gh, gw), |_| rng.random::<f64>()),
            cell,
        }
    }

    fn sample(&self, x: usize, y: usize) -> f64 {
        let fx = x as f64 / self.cell;
        let fy = y as f64 / self.cell;
        let (ix, iy) = (fx as usize, fy as usize);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty) = (smooth(fx - ix as f64), smooth(fy - iy as f64));
        let g = &self.grid;
        let top = g[[iy, ix]] * (1.0 - tx) + g[[iy, ix + 1]] * tx;
        let bottom = g[[iy + 1, ix]] * (1.0 - tx) + g[[iy + 1, ix + 1]] * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

fn texture(rng: &mut ChaCha8Rng, width: usize, height: usize, coarse: f64, fine: f64, base: [f64; 3]) -> RgbImage {
    let a = ValueNoise::new(rng, width, height, coarse);
    let b = ValueNoise::new(rng, width, height, fine);
    RgbImage::from_fn(width as u32, height as u32, |x, y| {
        let n = 0.65 * a.sample(x as usize, y as usize) + 0.35 * b.sample(x as usize, y as usize);
        let gain = 0.35 + 1.1 * n;
        Rgb(base.map(|c| (c * gain).round().clamp(0.0, 255.0) as u8))
    })
}

/// Copies `tex` into `img` with its top-left corner at `at`, clipped.
fn stamp(img: &mut RgbImage, tex: &RgbImage, at: (i64, i64)) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    for ty in 0..tex.height() as i64 {
        for tx in 0..tex.width() as i64 {
            let (px, py) = (at.0 + tx, at.1 + ty);
            if (0..w).contains(&px) && (0..h).contains(&py) {
                img.put_pixel(px as u32, py as u32, *tex.get_pixel(tx as u32, ty as u32));
            }
        }
    }
}

fn paint(depth: &mut Array2<u16>, bbox: &BoundingBox, z: u16) {
    let (h, w) = depth.dim();
    let x0 = bbox.x.max(0.0) as usize;
    let y0 = bbox.y.max(0.0) as usize;
    let x1 = ((bbox.x + bbox.w).max(0.0) as usize).min(w);
    let y1 = ((bbox.y + bbox.h).max(0.0) as usize).min(h);
    for y in y0..y1 {
        for x in x0..x1 {
            depth[[y, x]] = z;
        }
    }
}

/// Renders every frame and the matching ground truth. Ground truth is absent
/// exactly on frames where the occluder covers the whole target.
pub fn render_synthetic(s: &SyntheticScenario) -> Result<SyntheticSequence> {
    s.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let background = texture(&mut rng, s.width, s.height, 12.0, 3.0, [95.0, 125.0, 105.0]);
    let target_tex = texture(&mut rng, s.target_w, s.target_h, 6.0, 2.0, [200.0, 75.0, 55.0]);
    let occ_h = if s.occluder_h == 0 { s.height } else { s.occluder_h };
    let occluder_tex = texture(&mut rng, s.occluder_w.max(1), occ_h, 9.0, 3.0, [55.0, 75.0, 185.0]);
    let noise = Normal::new(0.0, s.noise).map_err(|e| Error::InvalidScenario(e.to_string()))?;

    let mut frames = Vec::with_capacity(s.frames);
    let mut gt = Vec::with_capacity(s.frames);
    for t in 1..=s.frames {
        let target = s.target_box(t);
        let occluder = s.occluder_box(t);
        let mut rgb = background.clone();
        let mut depth = Array2::from_elem((s.height, s.width), s.background_depth);
        paint(&mut depth, &target, s.target_depth);
        let path = s.exposure_path(t);
        if path.len() == 1 {
            stamp(&mut rgb, &target_tex, path[0]);
        } else {
            // Each exposure sample composites the target over the background;
            // the frame is their mean.
            let mut acc = vec![0.0f64; rgb.as_raw().len()];
            for &offset in &path {
                let mut sample = background.clone();
                stamp(&mut sample, &target_tex, offset);
                for (a, v) in acc.iter_mut().zip(sample.as_raw()) {
                    *a += *v as f64;
                }
            }
            let n = path.len() as f64;
            for (dst, a) in rgb.iter_mut().zip(acc) {
                *dst = (a / n).round() as u8;
            }
        }
        if let Some(o) = occluder {
            stamp(&mut rgb, &occluder_tex, (o.x as i64, o.y as i64));
            paint(&mut depth, &o, s.occluder_depth);
        }
        if s.noise > 0.0 {
            let mut frame_rng = ChaCha8Rng::seed_from_u64(s.seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            for p in rgb.pixels_mut() {
                for c in p.0.iter_mut() {
                    *c = (*c as f64 + noise.sample(&mut frame_rng)).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
        let hidden = occluder.is_some_and(|o| o.contains(&target));
        gt.push((t as u64, (!hidden).then_some(target)));
        frames.push(Frame::new(t, rgb, Some(depth)));
    }
    Ok(SyntheticSequence {
        frames,
        gt: Annotation::new(gt)?,
    })
}

/// Writes `rgb/frame-NNNNN.png`, `depth/frame-NNNNN.png` (16-bit mm) and
/// `gt.csv` under `dir`, the layout `load_sequence` reads back.
pub fn write_sequence(seq: &SyntheticSequence, dir: &Path) -> Result<()> {
    for sub in ["rgb", "depth"] {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let save_err = |path: &Path, e: image::ImageError| match e {
        image::ImageError::IoError(source) => Error::io(path, source),
        source => Error::CorruptImage {
            path: path.to_path_buf(),
            source,
        },
    };
    for f in &seq.frames {
        let name = format!("frame-{:05}.png", f.index);
        let rgb_path = dir.join("rgb").join(&name);
        f.rgb.save(&rgb_path).map_err(|e| save_err(&rgb_path, e))?;
        if let Some(depth) = &f.depth {
            let (h, w) = depth.dim();
            let img: ImageBuffer<Luma<u16>, Vec<u16>> =
                ImageBuffer::from_raw(w as u32, h as u32, depth.iter().copied().collect())
                    .expect("buffer matches dimensions");
            let depth_path = dir.join("depth").join(&name);
            img.save(&depth_path).map_err(|e| save_err(&depth_path, e))?;
        }
    }
    write_annotations(&seq.gt, &dir.join("gt.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn occlusion_scenario() -> SyntheticScenario {
        SyntheticScenario {
            frames: 40,
            target_vx: 0.0,
            occluder_w: 100,
            occluder_path: vec![OccluderKey { frame: 5, x: -120.0 }, OccluderKey { frame: 15, x: 30.0 }, OccluderKey { frame: 25, x: 30.0 }, OccluderKey { frame: 35, x: 330.0 }],
            ..SyntheticScenario::default()
        }
    }

    #[test]
    fn zero_motion_frames_are_identical() {
        let s = SyntheticScenario {
            frames: 3,
            target_vx: 0.0,
            ..SyntheticScenario::default()
        };
        let seq = render_synthetic(&s).unwrap();
        assert_eq!(seq.frames[0].rgb, seq.frames[2].rgb);
        assert_eq!(seq.frames[0].depth, seq.frames[2].depth);
    }

    #[test]
    fn ground_truth_absent_exactly_under_full_cover() {
        let s = occlusion_scenario();
        let seq = render_synthetic(&s).unwrap();
        for (t, b) in seq.gt.entries() {
            let target = s.target_box(*t as usize);
            let covered = s.occluder_box(*t as usize).unwrap().contains(&target);
            assert_eq!(b.is_none(), covered, "frame {t}");
        }
        assert!(seq.gt.entries().iter().any(|e| e.1.is_none()));
        let f = &seq.frames[19];
        let d = f.depth.as_ref().unwrap();
        assert_eq!(d[[120, 80]], s.occluder_depth);
        assert_eq!(seq.frames[0].depth.as_ref().unwrap()[[120, 80]], s.target_depth);
    }

    #[test]
    fn seeded_render_is_repeatable() {
        let s = SyntheticScenario {
            frames: 4,
            noise: 5.0,
            seed: 7,
            ..occlusion_scenario()
        };
        let a = render_synthetic(&s).unwrap();
        let b = render_synthetic(&s).unwrap();
        for (x, y) in a.frames.iter().zip(&b.frames) {
            assert_eq!(x.rgb.as_raw(), y.rgb.as_raw());
        }
        let other = render_synthetic(&SyntheticScenario { seed: 8, ..s }).unwrap();
        assert_ne!(a.frames[0].rgb.as_raw(), other.frames[0].rgb.as_raw());
    }

    #[test]
    fn reversal_path() {
        let s = SyntheticScenario {
            target_x: 100.0,
            target_vx: 8.0,
            reverse_every: 3,
            ..SyntheticScenario::default()
        };
        let xs: Vec<f64> = (1..=8).map(|t| s.target_box(t).x).collect();
        assert_eq!(xs, [100.0, 108.0, 116.0, 124.0, 116.0, 108.0, 100.0, 108.0]);
    }

    #[test]
    fn motion_blur_smears_only_moving_frames() {
        let s = SyntheticScenario {
            frames: 3,
            target_vx: 6.0,
            motion_blur: true,
            ..SyntheticScenario::default()
        };
        let sharp = render_synthetic(&SyntheticScenario {
            motion_blur: false,
            ..s.clone()
        })
        .unwrap();
        let blurred = render_synthetic(&s).unwrap();
        assert_eq!(s.exposure_path(2).len(), 6);
        assert_eq!(sharp.frames[0].rgb, blurred.frames[0].rgb);
        assert_ne!(sharp.frames[1].rgb, blurred.frames[1].rgb);
        assert_eq!(sharp.frames[1].depth, blurred.frames[1].depth);
        assert_eq!(sharp.gt, blurred.gt);
    }

    #[test]
    fn occluder_behind_target_is_invalid() {
        let s = SyntheticScenario {
            occluder_depth: 2600,
            ..occlusion_scenario()
        };
        assert!(matches!(render_synthetic(&s), Err(Error::InvalidScenario(_))));
    }

    #[test]
    fn parses_scenario_files() {
        let text = "frames = 12\r\ntarget_vx = -1.5\noccluder_w = 80\noccluder_path = 1:-90, 6:100\n";
        let s = parse_scenario(text, Path::new("s.txt")).unwrap();
        assert_eq!(s.frames, 12);
        assert_eq!(s.target_vx, -1.5);
        assert_eq!(s.occluder_path, vec![OccluderKey { frame: 1, x: -90.0 }, OccluderKey { frame: 6, x: 100.0 }]);
        assert_eq!(s.occluder_box(3).unwrap().x, (-90.0f64 + 190.0 * 2.0 / 5.0).round());
        assert!(matches!(parse_scenario("speed = 3\n", Path::new("s.txt")), Err(Error::Parse { line: 1, .. })));
        assert!(parse_scenario("occluder_w = 10\noccluder_path = 1:0\noccluder_depth = 9000\n", Path::new("s")).is_err());
    }

    #[test]
    fn written_sequence_loads_back() {
        let s = SyntheticScenario {
            frames: 3,
            width: 40,
            height: 30,
            target_x: 5.0,
            target_y: 5.0,
            target_w: 10,
            target_h: 12,
            ..SyntheticScenario::default()
        };
        let seq = render_synthetic(&s).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_sequence(&seq, dir.path()).unwrap();
        let loaded = super::super::load_sequence(dir.path()).unwrap();
        assert_eq!(loaded.gt.as_ref(), Some(&seq.gt));
        for (i, f) in seq.frames.iter().enumerate() {
            let back = loaded.load_frame(i).unwrap();
            assert_eq!(back.index, f.index);
            assert_eq!(back.rgb, f.rgb);
            assert_eq!(back.depth, f.depth);
        }
    }
}
