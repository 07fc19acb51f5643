//! Frame preprocessing and feature extraction: grayscale conversion, padded
//! window extraction, HOG, cosine windowing and Gaussian regression labels.

use image::RgbImage;
use ndarray::{Array2, Array3, ArrayView2, Axis};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::geometry::BoundingBox;

/// BT.601 luma weights.
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

const HOG_TRUNCATION: f64 = 0.2;
const HOG_TEXTURE_SCALE: f64 = 0.2357;
const HOG_NORM_EPS: f64 = 1e-4;

/// Grayscale image with values in `[0, 1]`.
pub fn to_grayscale(rgb: &RgbImage) -> Array2<f64> {
    let (w, h) = rgb.dimensions();
    Array2::from_shape_fn((h as usize, w as usize), |(y, x)| {
        let p = rgb.get_pixel(x as u32, y as u32).0;
        let v = (LUMA[0] * p[0] as f64 + LUMA[1] * p[1] as f64 + LUMA[2] * p[2] as f64) / 255.0;
        v.clamp(0.0, 1.0)
    })
}

/// Padded window size `(width, height)` in pixels for a target of the given size.
pub fn window_size(target_w: f64, target_h: f64, padding: f64) -> (usize, usize) {
    (
        (target_w * padding).floor().max(1.0) as usize,
        (target_h * padding).floor().max(1.0) as usize,
    )
}

/// Crops a `win_h x win_w` window centered on `(cx, cy)`. Pixels outside the
/// image replicate the nearest border pixel.
pub fn extract_window(
    image: ArrayView2<f64>,
    cx: f64,
    cy: f64,
    win_w: usize,
    win_h: usize,
) -> Array2<f64> {
    let (h, w) = image.dim();
    let x0 = (cx - win_w as f64 / 2.0 + 0.5).floor() as isize;
    let y0 = (cy - win_h as f64 / 2.0 + 0.5).floor() as isize;
    Array2::from_shape_fn((win_h, win_w), |(i, j)| {
        let y = (y0 + i as isize).clamp(0, h as isize - 1) as usize;
        let x = (x0 + j as isize).clamp(0, w as isize - 1) as usize;
        image[[y, x]]
    })
}

/// Extracts the padded region around `bbox`: `padding * size`, centered on the box.
pub fn extract_patch(image: ArrayView2<f64>, bbox: &BoundingBox, padding: f64) -> Result<Array2<f64>> {
    bbox.validate()?;
    if !(padding >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "padding must be >= 1, got {padding}"
        )));
    }
    let (win_w, win_h) = window_size(bbox.w, bbox.h, padding);
    let (cx, cy) = bbox.center();
    Ok(extract_window(image, cx, cy, win_w, win_h))
}

/// Multi-channel feature map, laid out as `(channel, row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePatch {
    pub data: Array3<f64>,
    pub cell_size: usize,
}

impl FeaturePatch {
    pub fn new(data: Array3<f64>, cell_size: usize) -> Self {
        Self { data, cell_size }
    }

    pub fn channels(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    /// Spatial size `(rows, cols)`.
    pub fn spatial(&self) -> (usize, usize) {
        let (_, h, w) = self.data.dim();
        (h, w)
    }

    pub fn shape(&self) -> [usize; 3] {
        let (c, h, w) = self.data.dim();
        [c, h, w]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Multiplies every channel by a spatial window.
    pub fn apply_window(&mut self, window: &Array2<f64>) {
        for mut channel in self.data.axis_iter_mut(Axis(0)) {
            channel *= window;
        }
    }

    /// `(1 - rate) * self + rate * other`.
    pub fn interpolate(&self, other: &FeaturePatch, rate: f64) -> FeaturePatch {
        FeaturePatch {
            data: &self.data * (1.0 - rate) + &other.data * rate,
            cell_size: self.cell_size,
        }
    }
}

/// Feature extractor used by the trackers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureKind {
    /// Felzenszwalb HOG with `orientations` unsigned bins (31 channels for 9).
    Hog { orientations: usize },
    /// Mean-subtracted gray intensities, one cell per pixel.
    Raw,
}

impl Default for FeatureKind {
    fn default() -> Self {
        FeatureKind::Hog { orientations: 9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    /// Pixels per cell; ignored (always 1) for raw features.
    pub cell_size: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            kind: FeatureKind::default(),
            cell_size: 4,
        }
    }
}

impl FeatureConfig {
    pub fn effective_cell_size(&self) -> usize {
        match self.kind {
            FeatureKind::Hog { .. } => self.cell_size,
            FeatureKind::Raw => 1,
        }
    }

    /// Spatial size of the feature map for a `win_h x win_w` window.
    pub fn feature_dims(&self, win_w: usize, win_h: usize) -> (usize, usize) {
        let cell = self.effective_cell_size();
        (win_h / cell, win_w / cell)
    }

    pub fn extract(&self, patch: ArrayView2<f64>) -> Result<FeaturePatch> {
        match self.kind {
            FeatureKind::Hog { orientations } => hog(patch, self.cell_size, orientations),
            FeatureKind::Raw => Ok(raw_features(patch)),
        }
    }
}

/// Mean-subtracted intensity as a single-channel feature map.
pub fn raw_features(patch: ArrayView2<f64>) -> FeaturePatch {
    let mean = patch.mean().unwrap_or(0.0);
    let data = patch.mapv(|v| v - mean).insert_axis(Axis(0));
    FeaturePatch::new(data, 1)
}

/// Felzenszwalb-style HOG: `2n` contrast-sensitive orientation channels, `n`
/// contrast-insensitive channels and 4 gradient-energy channels per cell.
///
/// Votes are spread bilinearly over the four nearest cells and each cell is
/// normalized against its four 2x2 neighbourhoods with truncation at 0.2.
/// Cells on the border reuse their clamped neighbours so the map keeps
/// `floor(h / cell) x floor(w / cell)` cells.
pub fn hog(patch: ArrayView2<f64>, cell_size: usize, orientations: usize) -> Result<FeaturePatch> {
    let (h, w) = patch.dim();
    if cell_size == 0 || orientations == 0 {
        return Err(Error::InvalidParameter(
            "cell size and orientation count must be positive".into(),
        ));
    }
    if !patch.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("image patch"));
    }
    let (hc, wc) = (h / cell_size, w / cell_size);
    if hc == 0 || wc == 0 {
        return Err(Error::PatchTooSmall {
            h,
            w,
            cell: cell_size,
        });
    }
    let n = orientations;
    let bins = 2 * n;
    let bin_scale = n as f64 / std::f64::consts::PI;

    // Bilinear vote targets along one axis: (first cell, weight of first cell).
    let sbin = cell_size as f64;
    let votes = |len: usize| -> Vec<(isize, f64)> {
        (0..len)
            .map(|i| {
                let p = (i as f64 + 0.5) / sbin - 0.5;
                let ip = p.floor();
                (ip as isize, 1.0 - (p - ip))
            })
            .collect()
    };
    let (xvotes, yvotes) = (votes(w), votes(h));

    let img = patch.as_standard_layout();
    let img = img.as_slice().expect("standard layout");
    let mut hist = vec![0.0f64; hc * wc * bins];
    for y in 0..h {
        let row = &img[y * w..(y + 1) * w];
        let up = &img[y.saturating_sub(1) * w..][..w];
        let down = &img[(y + 1).min(h - 1) * w..][..w];
        let (iyp, vy1) = yvotes[y];
        for x in 0..w {
            let dx = row[(x + 1).min(w - 1)] - row[x.saturating_sub(1)];
            let dy = down[x] - up[x];
            let mag = (dx * dx + dy * dy).sqrt();
            if mag == 0.0 {
                continue;
            }
            // Nearest of the 2n signed directions k·π/n.
            let bin = (dy.atan2(dx) * bin_scale).round().rem_euclid(bins as f64) as usize % bins;

            let (ixp, vx1) = xvotes[x];
            for (cy, wy) in [(iyp, vy1), (iyp + 1, 1.0 - vy1)] {
                if cy < 0 || cy as usize >= hc {
                    continue;
                }
                for (cx, wx) in [(ixp, vx1), (ixp + 1, 1.0 - vx1)] {
                    if cx >= 0 && (cx as usize) < wc {
                        hist[(cy as usize * wc + cx as usize) * bins + bin] += wy * wx * mag;
                    }
                }
            }
        }
    }
    let hist = Array3::from_shape_vec((hc, wc, bins), hist).expect("histogram shape");

    let norm = Array2::from_shape_fn((hc, wc), |(cy, cx)| {
        (0..n)
            .map(|o| {
                let s = hist[[cy, cx, o]] + hist[[cy, cx, o + n]];
                s * s
            })
            .sum::<f64>()
    });
    let norm_at = |cy: isize, cx: isize| -> f64 {
        norm[[
            cy.clamp(0, hc as isize - 1) as usize,
            cx.clamp(0, wc as isize - 1) as usize,
        ]]
    };

    let channels = 3 * n + 4;
    let mut out = Array3::<f64>::zeros((channels, hc, wc));
    for cy in 0..hc {
        for cx in 0..wc {
            let (y, x) = (cy as isize, cx as isize);
            let mut inv = [0.0; 4];
            for (k, (oy, ox)) in [(-1, -1), (-1, 0), (0, -1), (0, 0)].into_iter().enumerate() {
                let s = norm_at(y + oy, x + ox)
                    + norm_at(y + oy, x + ox + 1)
                    + norm_at(y + oy + 1, x + ox)
                    + norm_at(y + oy + 1, x + ox + 1);
                inv[k] = 1.0 / (s + HOG_NORM_EPS).sqrt();
            }
            let mut texture = [0.0; 4];
            for o in 0..bins {
                let v = hist[[cy, cx, o]];
                let mut acc = 0.0;
                for k in 0..4 {
                    let t = (v * inv[k]).min(HOG_TRUNCATION);
                    acc += t;
                    texture[k] += t;
                }
                out[[o, cy, cx]] = 0.5 * acc;
            }
            for o in 0..n {
                let v = hist[[cy, cx, o]] + hist[[cy, cx, o + n]];
                let acc: f64 = inv.iter().map(|&i| (v * i).min(HOG_TRUNCATION)).sum();
                out[[bins + o, cy, cx]] = 0.5 * acc;
            }
            for k in 0..4 {
                out[[3 * n + k, cy, cx]] = HOG_TEXTURE_SCALE * texture[k];
            }
        }
    }
    Ok(FeaturePatch::new(out, cell_size))
}

fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()))
        .collect()
}

/// Outer product of two zero-endpoint Hann windows.
pub fn cosine_window(h: usize, w: usize) -> Array2<f64> {
    let (rows, cols) = (hann(h), hann(w));
    Array2::from_shape_fn((h, w), |(i, j)| rows[i] * cols[j])
}

/// Desired regression response and its cached spectrum.
#[derive(Debug, Clone)]
pub struct RegressionLabels {
    pub values: Array2<f64>,
    pub spectrum: Array2<Complex64>,
}

/// Gaussian bump of peak 1, cyclically shifted so the peak sits at `(0, 0)`.
pub fn gaussian_labels(h: usize, w: usize, sigma: f64) -> Result<RegressionLabels> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "label sigma must be positive, got {sigma}"
        )));
    }
    let wrap = |i: usize, n: usize| -> f64 {
        if i <= n / 2 {
            i as f64
        } else {
            i as f64 - n as f64
        }
    };
    let values = Array2::from_shape_fn((h, w), |(i, j)| {
        let (di, dj) = (wrap(i, h), wrap(j, w));
        (-0.5 * (di * di + dj * dj) / (sigma * sigma)).exp()
    });
    let spectrum = fft::fft2_real(values.view());
    Ok(RegressionLabels { values, spectrum })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use proptest::prelude::*;

    #[test]
    fn grayscale_endpoints_and_red() {
        let mut img = RgbImage::new(3, 1);
        img.put_pixel(0, 0, Rgb([255, 255, 255]));
        img.put_pixel(1, 0, Rgb([0, 0, 0]));
        img.put_pixel(2, 0, Rgb([255, 0, 0]));
        let g = to_grayscale(&img);
        assert!((g[[0, 0]] - 1.0).abs() < 1e-12);
        assert_eq!(g[[0, 1]], 0.0);
        assert!((g[[0, 2]] - 0.299).abs() < 1e-12);
    }

    #[test]
    fn window_size_of_walkthrough_target() {
        assert_eq!(window_size(135.0, 412.0, 2.5), (337, 1030));
        assert_eq!(window_size(40.0, 80.0, 1.0), (40, 80));
    }

    #[test]
    fn unit_padding_returns_the_box() {
        let img = Array2::from_shape_fn((20, 20), |(i, j)| (i * 20 + j) as f64);
        let b = BoundingBox::new(3.0, 5.0, 4.0, 6.0);
        let p = extract_patch(img.view(), &b, 1.0).unwrap();
        assert_eq!(p, img.slice(ndarray::s![5..11, 3..7]));
    }

    #[test]
    fn corner_patch_replicates_border() {
        let img = Array2::from_shape_fn((10, 10), |(i, j)| (i * 10 + j) as f64);
        // Box centered on (0, 0), 4x4, padding 1.5 -> 6x6 window starting at (-3, -3).
        let b = BoundingBox::new(-2.0, -2.0, 4.0, 4.0);
        let p = extract_patch(img.view(), &b, 1.5).unwrap();
        assert_eq!(p.dim(), (6, 6));
        for i in 0..6 {
            for j in 0..6 {
                let y = (i as isize - 3).clamp(0, 9) as usize;
                let x = (j as isize - 3).clamp(0, 9) as usize;
                assert_eq!(p[[i, j]], img[[y, x]]);
            }
        }
    }

    #[test]
    fn degenerate_box_is_rejected() {
        let img = Array2::<f64>::zeros((10, 10));
        assert!(extract_patch(img.view(), &BoundingBox::new(1.0, 1.0, 0.0, 3.0), 2.0).is_err());
    }

    #[test]
    fn hog_of_constant_patch_is_zero() {
        let p = Array2::from_elem((16, 16), 0.37);
        let f = hog(p.view(), 4, 9).unwrap();
        assert_eq!(f.shape(), [31, 4, 4]);
        assert!(f.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hog_cell_grid_size() {
        let p = Array2::from_shape_fn((30, 30), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 11.0);
        let f = hog(p.view(), 4, 9).unwrap();
        assert_eq!(f.spatial(), (7, 7));
        assert!(f.data.iter().all(|&v| v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn hog_vertical_edge_votes_horizontal_gradient() {
        // Dark left half, bright right half: gradient points along +x.
        let p = Array2::from_shape_fn((24, 24), |(_, j)| if j < 12 { 0.1 } else { 0.9 });
        let f = hog(p.view(), 4, 9).unwrap();
        let energy = |c: usize| f.data.index_axis(Axis(0), c).sum();
        let sensitive: Vec<f64> = (0..18).map(energy).collect();
        let best = sensitive
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(best, 0);
        for (o, e) in sensitive.iter().enumerate().skip(1) {
            assert_eq!(*e, 0.0, "orientation {o} should get no votes");
        }
        let insensitive: Vec<f64> = (18..27).map(energy).collect();
        assert!(insensitive[0] > 0.0 && insensitive[1..].iter().all(|&e| e == 0.0));
    }

    #[test]
    fn hog_rejects_subcell_patch() {
        let p = Array2::<f64>::zeros((3, 10));
        assert!(matches!(hog(p.view(), 4, 9), Err(Error::PatchTooSmall { .. })));
    }

    #[test]
    fn cosine_window_values() {
        assert_eq!(cosine_window(1, 1)[[0, 0]], 0.0);
        let w3 = cosine_window(3, 3);
        assert!((w3[[1, 1]] - 1.0).abs() < 1e-15);
        assert_eq!(w3[[0, 1]], 0.0);
        let w5 = cosine_window(5, 5);
        let profile: Vec<f64> = w5.row(2).to_vec();
        for (a, b) in profile.iter().zip([0.0, 0.5, 1.0, 0.5, 0.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn labels_peak_and_width() {
        let l = gaussian_labels(10, 12, 2.0).unwrap();
        assert_eq!(l.values[[0, 0]], 1.0);
        assert!((l.values[[2, 0]] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((l.values[[0, 10]] - (-0.5f64).exp()).abs() < 1e-15);
        assert!(gaussian_labels(4, 4, 0.0).is_err());
    }

    #[test]
    fn labels_are_point_symmetric() {
        let (h, w) = (7, 10);
        let l = gaussian_labels(h, w, 1.7).unwrap();
        for i in 0..h {
            for j in 0..w {
                assert_eq!(l.values[[i, j]], l.values[[(h - i) % h, (w - j) % w]]);
            }
        }
    }

    proptest! {
        #[test]
        fn grayscale_in_unit_range(r: u8, g: u8, b: u8) {
            let img = RgbImage::from_pixel(1, 1, image::Rgb([r, g, b]));
            let v = to_grayscale(&img)[[0, 0]];
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn extraction_size_is_position_independent(x in -50.0f64..80.0, y in -50.0f64..80.0, pad in 1.0f64..3.0) {
            let img = Array2::<f64>::zeros((30, 40));
            let b = BoundingBox::new(x, y, 9.0, 13.0);
            let p = extract_patch(img.view(), &b, pad).unwrap();
            let (ww, wh) = window_size(9.0, 13.0, pad);
            prop_assert_eq!(p.dim(), (wh, ww));
        }

        #[test]
        fn hog_ignores_intensity_offset(seed in 0u64..1000, offset in -0.5f64..0.5) {
            let p = Array2::from_shape_fn((16, 20), |(i, j)| {
                (((i as u64 * 31 + j as u64 * 17 + seed) * 2654435761) % 1000) as f64 / 1000.0
            });
            let a = hog(p.view(), 4, 9).unwrap();
            let b = hog(p.mapv(|v| v + offset).view(), 4, 9).unwrap();
            for (x, y) in a.data.iter().zip(b.data.iter()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn cosine_window_is_symmetric(h in 1usize..20, w in 1usize..20) {
            let win = cosine_window(h, w);
            for i in 0..h {
                for j in 0..w {
                    prop_assert!((win[[i, j]] - win[[h - 1 - i, w - 1 - j]]).abs() < 1e-15);
                    prop_assert!((0.0..=1.0).contains(&win[[i, j]]));
                }
            }
        }

        #[test]
        fn labels_peak_is_one(h in 1usize..30, w in 1usize..30, sigma in 1.0f64..10.0) {
            let l = gaussian_labels(h, w, sigma).unwrap();
            let max = l.values.iter().cloned().fold(f64::MIN, f64::max);
            prop_assert_eq!(max, 1.0);
            prop_assert_eq!(l.values[[0, 0]], 1.0);
            prop_assert!(l.values.iter().all(|&v| v > 0.0 && v <= 1.0));
        }
    }
}
