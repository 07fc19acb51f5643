//! Discrete Fourier transforms shared by every module.
//!
//! Convention: unnormalized forward transform, `1/n` on the inverse. Plans are
//! cached per thread, so callers never share mutable planner state.

use std::cell::RefCell;

use ndarray::{Array2, ArrayView2};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn transform_rows(data: &mut [Complex64], row_len: usize, inverse: bool) {
    if row_len == 0 {
        return;
    }
    let fft = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(row_len)
        } else {
            p.plan_fft_forward(row_len)
        }
    });
    fft.process(data);
}

/// 1-D DFT of a real signal.
pub fn dft(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform_rows(&mut buf, x.len(), false);
    buf
}

/// 1-D inverse DFT (scaled by `1/n`).
pub fn idft(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    transform_rows(&mut buf, x.len(), true);
    let scale = 1.0 / x.len() as f64;
    buf.iter_mut().for_each(|v| *v *= scale);
    buf
}

fn fft2_in_place(data: &mut Array2<Complex64>, inverse: bool) {
    let (h, w) = data.dim();
    if h == 0 || w == 0 {
        return;
    }
    // Rows are contiguous in standard layout; columns go through a transpose.
    let mut owned = data.as_standard_layout().into_owned();
    transform_rows(owned.as_slice_mut().unwrap(), w, inverse);
    let mut transposed = owned.t().as_standard_layout().into_owned();
    transform_rows(transposed.as_slice_mut().unwrap(), h, inverse);
    data.assign(&transposed.t());
    if inverse {
        let scale = 1.0 / (h * w) as f64;
        data.mapv_inplace(|v| v * scale);
    }
}

pub fn fft2(input: &Array2<Complex64>) -> Array2<Complex64> {
    let mut out = input.clone();
    fft2_in_place(&mut out, false);
    out
}

pub fn fft2_real(input: ArrayView2<f64>) -> Array2<Complex64> {
    let mut out = input.mapv(|v| Complex64::new(v, 0.0));
    fft2_in_place(&mut out, false);
    out
}

pub fn ifft2(input: &Array2<Complex64>) -> Array2<Complex64> {
    let mut out = input.clone();
    fft2_in_place(&mut out, true);
    out
}

/// Inverse 2-D DFT keeping only the real part, together with the largest
/// discarded imaginary magnitude.
pub fn ifft2_real(input: &Array2<Complex64>) -> (Array2<f64>, f64) {
    let out = ifft2(input);
    let residue = out.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
    (out.mapv(|v| v.re), residue)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn naive_dft2(x: &Array2<f64>) -> Array2<Complex64> {
        let (h, w) = x.dim();
        Array2::from_shape_fn((h, w), |(k, l)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..h {
                for n in 0..w {
                    let phase = -2.0
                        * std::f64::consts::PI
                        * ((k * m) as f64 / h as f64 + (l * n) as f64 / w as f64);
                    acc += x[[m, n]] * Complex64::from_polar(1.0, phase);
                }
            }
            acc
        })
    }

    #[test]
    fn fft2_matches_naive_dft() {
        let x = array![[1.0, 2.0, -1.0], [0.5, 3.0, 4.0]];
        let fast = fft2_real(x.view());
        let slow = naive_dft2(&x);
        for (a, b) in fast.iter().zip(slow.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn inverse_round_trip() {
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, -6.0]];
        let (back, residue) = ifft2_real(&fft2_real(x.view()));
        assert!(residue < 1e-12);
        for (a, b) in back.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn one_dimensional_round_trip() {
        let x = [1.0, -2.0, 0.25, 8.0, 3.0];
        let back = idft(&dft(&x));
        for (a, b) in back.iter().zip(x.iter()) {
            assert!((a.re - b).abs() < 1e-12 && a.im.abs() < 1e-12);
        }
    }
}
