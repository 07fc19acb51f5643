//! Kernel correlation between a feature patch and every cyclic shift of another,
//! evaluated in the Fourier domain.
//!
//! Map entry `(u, v)` holds `κ(x, z')` where `z'[m, n] = z[m + u, n + v]`, i.e. `z`
//! moved back by `(u, v)`. If `z` is `x` right-shifted by `(u, v)` the map peaks
//! at `(u, v)`.
//!
//! Inner products and squared distances are divided by the number of feature
//! elements, so `sigma` does not have to track the window size.

use ndarray::{Array2, Axis};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::features::FeaturePatch;
use crate::fft;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    Gaussian,
    Linear,
    Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub kind: KernelKind,
    pub sigma: f64,
    pub poly_offset: f64,
    pub poly_degree: u32,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            kind: KernelKind::Gaussian,
            sigma: 0.5,
            poly_offset: 1.0,
            poly_degree: 2,
        }
    }
}

impl KernelParams {
    pub fn gaussian(sigma: f64) -> Self {
        Self {
            kind: KernelKind::Gaussian,
            sigma,
            ..Self::default()
        }
    }

    pub fn linear() -> Self {
        Self {
            kind: KernelKind::Linear,
            ..Self::default()
        }
    }

    pub fn polynomial(offset: f64, degree: u32) -> Self {
        Self {
            kind: KernelKind::Polynomial,
            poly_offset: offset,
            poly_degree: degree,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            KernelKind::Gaussian if !(self.sigma > 0.0 && self.sigma.is_finite()) => Err(
                Error::InvalidParameter(format!("gaussian sigma must be positive, got {}", self.sigma)),
            ),
            KernelKind::Polynomial if self.poly_degree < 1 => Err(Error::InvalidParameter(
                "polynomial degree must be at least 1".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Kernel value from a (size-normalized) inner product and squared distance.
    fn apply(&self, inner: f64, sq_dist: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian => (-sq_dist.max(0.0) / (self.sigma * self.sigma)).exp(),
            KernelKind::Linear => inner,
            KernelKind::Polynomial => (inner + self.poly_offset).powi(self.poly_degree as i32),
        }
    }

    /// Direct evaluation `κ(a, b)` on two equally sized feature vectors.
    pub fn evaluate(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = a.len().max(1) as f64;
        let inner: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
        let dist: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
        self.apply(inner / n, dist / n)
    }
}

/// Per-channel spectra of a feature patch together with its squared norm.
#[derive(Debug, Clone)]
pub struct SpectralPatch {
    pub channels: Vec<Array2<Complex64>>,
    pub sq_norm: f64,
    pub shape: [usize; 3],
}

impl SpectralPatch {
    pub fn new(patch: &FeaturePatch) -> Self {
        let channels = patch
            .data
            .axis_iter(Axis(0))
            .map(|c| fft::fft2_real(c))
            .collect();
        Self {
            channels,
            sq_norm: patch.data.iter().map(|v| v * v).sum(),
            shape: patch.shape(),
        }
    }

    fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Kernel correlation map between `x` and all cyclic shifts of `z`.
pub fn kernel_correlation(x: &FeaturePatch, z: &FeaturePatch, params: &KernelParams) -> Result<Array2<f64>> {
    if x.shape() != z.shape() {
        return Err(Error::ShapeMismatch {
            expected: x.shape().to_vec(),
            actual: z.shape().to_vec(),
        });
    }
    correlate_spectra(&SpectralPatch::new(x), &SpectralPatch::new(z), params)
}

/// Same as [`kernel_correlation`] on precomputed spectra.
pub fn correlate_spectra(x: &SpectralPatch, z: &SpectralPatch, params: &KernelParams) -> Result<Array2<f64>> {
    if x.shape != z.shape {
        return Err(Error::ShapeMismatch {
            expected: x.shape.to_vec(),
            actual: z.shape.to_vec(),
        });
    }
    params.validate()?;
    let [_, h, w] = x.shape;
    let mut acc = Array2::<Complex64>::zeros((h, w));
    for (xc, zc) in x.channels.iter().zip(z.channels.iter()) {
        ndarray::Zip::from(&mut acc)
            .and(xc)
            .and(zc)
            .for_each(|a, &p, &q| *a += p.conj() * q);
    }
    let (cross, _) = fft::ifft2_real(&acc);
    let n = x.numel().max(1) as f64;
    let norms = x.sq_norm + z.sq_norm;
    Ok(cross.mapv(|c| params.apply(c / n, (norms - 2.0 * c) / n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_patch(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeaturePatch {
        FeaturePatch::new(Array3::from_shape_fn((c, h, w), |_| rng.random_range(-1.0..1.0)), 1)
    }

    /// κ(x, z moved back by (u, v)) for every shift, by direct enumeration.
    fn brute_force(x: &FeaturePatch, z: &FeaturePatch, params: &KernelParams) -> Array2<f64> {
        let [c, h, w] = x.shape();
        let xs: Vec<f64> = x.data.iter().copied().collect();
        Array2::from_shape_fn((h, w), |(u, v)| {
            let shifted = Array3::from_shape_fn((c, h, w), |(k, m, n)| z.data[[k, (m + u) % h, (n + v) % w]]);
            params.evaluate(&xs, shifted.as_slice().unwrap())
        })
    }

    #[test]
    fn zero_patches_give_unit_gaussian_map() {
        let z = FeaturePatch::new(Array3::zeros((2, 4, 5)), 1);
        let k = kernel_correlation(&z, &z, &KernelParams::gaussian(0.5)).unwrap();
        assert!(k.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn gaussian_autocorrelation_peaks_at_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_patch(&mut rng, 3, 8, 8);
        let k = kernel_correlation(&x, &x, &KernelParams::gaussian(0.5)).unwrap();
        assert!((k[[0, 0]] - 1.0).abs() < 1e-12);
        assert!(k.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn all_kinds_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for params in [
            KernelParams::gaussian(0.7),
            KernelParams::linear(),
            KernelParams::polynomial(1.0, 3),
        ] {
            let x = random_patch(&mut rng, 1, 8, 8);
            let z = random_patch(&mut rng, 1, 8, 8);
            let fast = kernel_correlation(&x, &z, &params).unwrap();
            let slow = brute_force(&x, &z, &params);
            for (a, b) in fast.iter().zip(slow.iter()) {
                assert!((a - b).abs() < 1e-9, "{params:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn multichannel_sums_inner_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_patch(&mut rng, 3, 6, 7);
        let z = random_patch(&mut rng, 3, 6, 7);
        let lin = kernel_correlation(&x, &z, &KernelParams::linear()).unwrap();
        let mut summed = Array2::<f64>::zeros((6, 7));
        for c in 0..3 {
            let xc = FeaturePatch::new(x.data.slice(ndarray::s![c..c + 1, .., ..]).to_owned(), 1);
            let zc = FeaturePatch::new(z.data.slice(ndarray::s![c..c + 1, .., ..]).to_owned(), 1);
            // Per-channel maps are normalized by a third of the elements.
            summed = summed + kernel_correlation(&xc, &zc, &KernelParams::linear()).unwrap() / 3.0;
        }
        for (a, b) in lin.iter().zip(summed.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reflection_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_patch(&mut rng, 2, 5, 6);
        let z = random_patch(&mut rng, 2, 5, 6);
        for params in [KernelParams::gaussian(1.0), KernelParams::linear(), KernelParams::polynomial(0.5, 2)] {
            let a = kernel_correlation(&x, &z, &params).unwrap();
            let b = kernel_correlation(&z, &x, &params).unwrap();
            for u in 0..5 {
                for v in 0..6 {
                    let r = b[[(5 - u) % 5, (6 - v) % 6]];
                    assert!((a[[u, v]] - r).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = FeaturePatch::new(Array3::zeros((1, 4, 4)), 1);
        let b = FeaturePatch::new(Array3::zeros((1, 4, 5)), 1);
        assert!(matches!(
            kernel_correlation(&a, &b, &KernelParams::linear()),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn invalid_params_are_rejected() {
        let a = FeaturePatch::new(Array3::zeros((1, 2, 2)), 1);
        assert!(kernel_correlation(&a, &a, &KernelParams::gaussian(0.0)).is_err());
        assert!(kernel_correlation(&a, &a, &KernelParams::polynomial(1.0, 0)).is_err());
    }
}
