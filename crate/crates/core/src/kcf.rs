//! Kernelized correlation filter: closed-form dual ridge regression in the
//! Fourier domain, detection over all cyclic shifts, and the
//! tracking-by-detection loop.

use ndarray::{Array2, ArrayView2};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::features::{
    cosine_window, extract_window, gaussian_labels, to_grayscale, window_size, FeatureConfig,
    FeaturePatch, RegressionLabels,
};
use crate::fft;
use crate::geometry::{BoundingBox, Frame};
use crate::kernel::{correlate_spectra, KernelParams, SpectralPatch};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// Window size relative to the target size.
    pub padding: f64,
    pub features: FeatureConfig,
    pub kernel: KernelParams,
    /// Ridge regularizer.
    pub lambda: f64,
    /// Model update rate in `[0, 1]`.
    pub interp_factor: f64,
    /// Label bandwidth as a fraction of `sqrt(target area)`.
    pub label_sigma_factor: f64,
    /// Parabolic sub-cell refinement of the response peak.
    pub subpixel: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            padding: 2.5,
            features: FeatureConfig::default(),
            kernel: KernelParams::default(),
            lambda: 1e-4,
            interp_factor: 0.02,
            label_sigma_factor: 0.1,
            subpixel: false,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.padding >= 1.0) {
            return Err(Error::InvalidParameter(format!("padding must be >= 1, got {}", self.padding)));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.interp_factor) {
            return Err(Error::InvalidParameter(format!(
                "interpolation factor must lie in [0, 1], got {}",
                self.interp_factor
            )));
        }
        if !(self.label_sigma_factor > 0.0) {
            return Err(Error::InvalidParameter("label sigma factor must be positive".into()));
        }
        if self.features.effective_cell_size() == 0 {
            return Err(Error::InvalidParameter("cell size must be positive".into()));
        }
        Ok(())
    }
}

/// Dual coefficients `α̂ = ŷ / (k̂ˣˣ + λ)` for a training patch.
pub fn train(
    features: &FeaturePatch,
    labels: &RegressionLabels,
    params: &KernelParams,
    lambda: f64,
) -> Result<Array2<Complex64>> {
    let spectral = SpectralPatch::new(features);
    train_spectral(&spectral, features, labels, params, lambda)
}

fn train_spectral(
    spectral: &SpectralPatch,
    features: &FeaturePatch,
    labels: &RegressionLabels,
    params: &KernelParams,
    lambda: f64,
) -> Result<Array2<Complex64>> {
    if !features.is_finite() {
        return Err(Error::NonFinite("training features"));
    }
    if features.spatial() != labels.values.dim() {
        let (h, w) = labels.values.dim();
        return Err(Error::ShapeMismatch {
            expected: vec![features.channels(), h, w],
            actual: features.shape().to_vec(),
        });
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    let kxx = correlate_spectra(spectral, spectral, params)?;
    let kf = fft::fft2_real(kxx.view());
    Ok(ndarray::Zip::from(&labels.spectrum)
        .and(&kf)
        .map_collect(|&y, &k| y / (k + lambda)))
}

/// Raw detector output for one candidate patch.
#[derive(Debug, Clone)]
pub struct Response {
    pub map: Array2<f64>,
    pub peak: f64,
    /// Peak location as a signed `(row, col)` displacement in cells; shifts past
    /// half the map wrap to negative values.
    pub shift: (f64, f64),
}

/// Where the target was found in a frame.
#[derive(Debug, Clone)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub peak_response: f64,
    pub response_map: Array2<f64>,
}

fn wrap_index(i: usize, n: usize) -> f64 {
    if i > n / 2 {
        i as f64 - n as f64
    } else {
        i as f64
    }
}

fn parabolic_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom.abs() < 1e-12 {
        0.0
    } else {
        (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
    }
}

/// Response map `IDFT(k̂ˣᶻ ⊙ α̂)` of a candidate against a template.
pub fn respond(
    template: &SpectralPatch,
    alpha: &Array2<Complex64>,
    candidate: &FeaturePatch,
    params: &KernelParams,
    subpixel: bool,
) -> Result<Response> {
    if candidate.shape() != template.shape {
        return Err(Error::ShapeMismatch {
            expected: template.shape.to_vec(),
            actual: candidate.shape().to_vec(),
        });
    }
    let kxz = correlate_spectra(template, &SpectralPatch::new(candidate), params)?;
    let kf = fft::fft2_real(kxz.view());
    let prod = &kf * alpha;
    let (map, residue) = fft::ifft2_real(&prod);
    let scale = map.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    debug_assert!(residue <= 1e-8 * scale, "response has imaginary residue {residue}");

    let (h, w) = map.dim();
    let (mut best, mut bi, mut bj) = (f64::NEG_INFINITY, 0, 0);
    for ((i, j), &v) in map.indexed_iter() {
        if v > best {
            best = v;
            bi = i;
            bj = j;
        }
    }
    let mut shift = (wrap_index(bi, h), wrap_index(bj, w));
    if subpixel {
        if h > 2 {
            shift.0 += parabolic_offset(map[[(bi + h - 1) % h, bj]], best, map[[(bi + 1) % h, bj]]);
        }
        if w > 2 {
            shift.1 += parabolic_offset(map[[bi, (bj + w - 1) % w]], best, map[[bi, (bj + 1) % w]]);
        }
    }
    Ok(Response { map, peak: best, shift })
}

/// Learned correlation filter and everything needed to apply it to new frames.
#[derive(Debug, Clone)]
pub struct TrackerModel {
    pub config: TrackerConfig,
    pub alpha_spectrum: Array2<Complex64>,
    pub template: FeaturePatch,
    template_spectrum: SpectralPatch,
    pub labels: RegressionLabels,
    /// Padded window `(width, height)` in pixels.
    pub window_size: (usize, usize),
    /// Target `(width, height)` in pixels; fixed for the whole sequence.
    pub target_size: (f64, f64),
    cos_window: Array2<f64>,
}

impl TrackerModel {
    /// Trains the first model on the ground-truth box of the first frame.
    pub fn init(frame: &Frame, bbox: &BoundingBox, config: TrackerConfig) -> Result<Self> {
        Self::init_gray(to_grayscale(&frame.rgb).view(), bbox, config)
    }

    pub fn init_gray(gray: ArrayView2<f64>, bbox: &BoundingBox, config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        bbox.validate()?;
        let window = window_size(bbox.w, bbox.h, config.padding);
        let (fh, fw) = config.features.feature_dims(window.0, window.1);
        if fh == 0 || fw == 0 {
            return Err(Error::PatchTooSmall {
                h: window.1,
                w: window.0,
                cell: config.features.effective_cell_size(),
            });
        }
        let cell = config.features.effective_cell_size() as f64;
        let sigma = (bbox.w * bbox.h).sqrt() * config.label_sigma_factor / cell;
        let labels = gaussian_labels(fh, fw, sigma)?;
        let cos_window = cosine_window(fh, fw);

        let mut model = Self {
            config,
            alpha_spectrum: Array2::zeros((fh, fw)),
            template: FeaturePatch::new(ndarray::Array3::zeros((0, fh, fw)), cell as usize),
            template_spectrum: SpectralPatch {
                channels: Vec::new(),
                sq_norm: 0.0,
                shape: [0, fh, fw],
            },
            labels,
            window_size: window,
            target_size: (bbox.w, bbox.h),
            cos_window,
        };
        let (cx, cy) = bbox.center();
        let features = model.features_at(gray, cx, cy)?;
        let spectral = SpectralPatch::new(&features);
        model.alpha_spectrum =
            train_spectral(&spectral, &features, &model.labels, &config.kernel, config.lambda)?;
        model.template = features;
        model.template_spectrum = spectral;
        Ok(model)
    }

    /// Windowed features of the padded window centered on `(cx, cy)`.
    pub fn features_at(&self, gray: ArrayView2<f64>, cx: f64, cy: f64) -> Result<FeaturePatch> {
        let (ww, wh) = self.window_size;
        let patch = extract_window(gray, cx, cy, ww, wh);
        let mut f = self.config.features.extract(patch.view())?;
        f.apply_window(&self.cos_window);
        Ok(f)
    }

    pub fn cell_size(&self) -> usize {
        self.config.features.effective_cell_size()
    }

    pub fn bbox_at(&self, cx: f64, cy: f64) -> BoundingBox {
        BoundingBox::from_center(cx, cy, self.target_size.0, self.target_size.1)
    }

    /// Response of a candidate feature patch against the current model.
    pub fn detect(&self, candidate: &FeaturePatch) -> Result<Response> {
        respond(
            &self.template_spectrum,
            &self.alpha_spectrum,
            candidate,
            &self.config.kernel,
            self.config.subpixel,
        )
    }

    /// Runs the detector on the window centered on `(cx, cy)` and converts the
    /// peak into a target box.
    pub fn detect_at(&self, gray: ArrayView2<f64>, cx: f64, cy: f64) -> Result<Detection> {
        let candidate = self.features_at(gray, cx, cy)?;
        let response = self.detect(&candidate)?;
        let cell = self.cell_size() as f64;
        let ncx = cx + response.shift.1 * cell;
        let ncy = cy + response.shift.0 * cell;
        Ok(Detection {
            bbox: self.bbox_at(ncx, ncy),
            peak_response: response.peak,
            response_map: response.map,
        })
    }

    /// Blends new coefficients and template into the model at `interp_factor`.
    pub fn update_model(&mut self, new_alpha: &Array2<Complex64>, new_template: &FeaturePatch) -> Result<()> {
        self.blend(new_alpha, new_template, &SpectralPatch::new(new_template))
    }

    fn blend(&mut self, new_alpha: &Array2<Complex64>, new_template: &FeaturePatch, spectral: &SpectralPatch) -> Result<()> {
        if new_alpha.dim() != self.alpha_spectrum.dim() || new_template.shape() != self.template.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.template.shape().to_vec(),
                actual: new_template.shape().to_vec(),
            });
        }
        let rate = self.config.interp_factor;
        let (keep, take) = (Complex64::new(1.0 - rate, 0.0), Complex64::new(rate, 0.0));
        self.alpha_spectrum = &self.alpha_spectrum * keep + new_alpha * take;
        self.template = self.template.interpolate(new_template, rate);
        // The DFT is linear, so the blended spectrum needs no new transform.
        for (old, new) in self.template_spectrum.channels.iter_mut().zip(&spectral.channels) {
            ndarray::Zip::from(old).and(new).for_each(|o, &n| *o = *o * keep + n * take);
        }
        self.template_spectrum.sq_norm = self.template.data.iter().map(|v| v * v).sum();
        Ok(())
    }

    /// Trains on the window centered on `(cx, cy)` and blends the result in.
    pub fn learn_at(&mut self, gray: ArrayView2<f64>, cx: f64, cy: f64) -> Result<()> {
        let features = self.features_at(gray, cx, cy)?;
        let spectral = SpectralPatch::new(&features);
        let alpha = train_spectral(
            &spectral,
            &features,
            &self.labels,
            &self.config.kernel,
            self.config.lambda,
        )?;
        self.blend(&alpha, &features, &spectral)
    }

    /// One tracking-by-detection step: detect around `prev_box`, retrain at the
    /// detected position.
    pub fn track_frame(&mut self, frame: &Frame, prev_box: &BoundingBox) -> Result<Detection> {
        self.track_gray(to_grayscale(&frame.rgb).view(), prev_box)
    }

    pub fn track_gray(&mut self, gray: ArrayView2<f64>, prev_box: &BoundingBox) -> Result<Detection> {
        let (cx, cy) = prev_box.center();
        let detection = self.detect_at(gray, cx, cy)?;
        let (ncx, ncy) = detection.bbox.center();
        self.learn_at(gray, ncx, ncy)?;
        Ok(detection)
    }
}
