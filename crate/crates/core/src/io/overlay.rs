use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Frame};

pub const TRACK_COLOR: Rgb<u8> = Rgb([0, 230, 0]);
pub const GT_COLOR: Rgb<u8> = Rgb([230, 0, 0]);

/// Draws a 1-pixel rectangle outline, clipped to the image.
pub fn draw_box(img: &mut RgbImage, bbox: &BoundingBox, color: Rgb<u8>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0 = bbox.x.round() as i64;
    let y0 = bbox.y.round() as i64;
    let x1 = (bbox.x + bbox.w).round() as i64 - 1;
    let y1 = (bbox.y + bbox.h).round() as i64 - 1;
    let mut put = |x: i64, y: i64| {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            img.put_pixel(x as u32, y as u32, color);
        }
    };
    for x in x0..=x1 {
        put(x, y0);
        put(x, y1);
    }
    for y in y0..=y1 {
        put(x0, y);
        put(x1, y);
    }
}

/// Saves `frame-NNNNN.png` in `dir` with the predicted box and, if given, the ground truth.
pub fn write_overlay(
    frame: &Frame,
    predicted: Option<&BoundingBox>,
    gt: Option<&BoundingBox>,
    dir: &Path,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut img = frame.rgb.clone();
    if let Some(g) = gt {
        draw_box(&mut img, g, GT_COLOR);
    }
    if let Some(p) = predicted {
        draw_box(&mut img, p, TRACK_COLOR);
    }
    let path = dir.join(format!("frame-{:05}.png", frame.index));
    img.save(&path).map_err(|e| match e {
        image::ImageError::IoError(source) => Error::io(&path, source),
        source => Error::CorruptImage {
            path: path.clone(),
            source,
        },
    })?;
    Ok(path)
}
