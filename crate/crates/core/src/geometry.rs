//! Boxes and frames shared by every tracker variant.

use image::RgbImage;
use ndarray::Array2;

use crate::error::{Error, Result};

/// Axis-aligned target region in pixel coordinates (top-left corner + size).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    /// Box of the given size whose center is `(cx, cy)`.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.w > 0.0 && self.h > 0.0) || !self.w.is_finite() || !self.h.is_finite()
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_degenerate() || !self.x.is_finite() || !self.y.is_finite() {
            return Err(Error::DegenerateBox {
                w: self.w,
                h: self.h,
            });
        }
        Ok(())
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let iw = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let ih = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains(&self, other: &BoundingBox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.x + other.w <= self.x + self.w
            && other.y + other.h <= self.y + self.h
    }
}

/// One RGB(-D) frame. Depth is in millimeters, 0 marks a pixel without a return.
#[derive(Debug, Clone)]
pub struct Frame {
    pub index: usize,
    pub rgb: RgbImage,
    pub depth: Option<Array2<u16>>,
}

impl Frame {
    pub fn new(index: usize, rgb: RgbImage, depth: Option<Array2<u16>>) -> Self {
        Self { index, rgb, depth }
    }

    pub fn width(&self) -> usize {
        self.rgb.width() as usize
    }

    pub fn height(&self) -> usize {
        self.rgb.height() as usize
    }
}
