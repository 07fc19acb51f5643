//! Cyclic shifts and (block-)circulant matrices.
//!
//! The dense constructors exist to check the Fourier-domain code against; no
//! tracking path materializes a circulant matrix.

use ndarray::{Array2, ArrayView2};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;

/// Largest matrix side the dense constructors will build.
pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Right cyclic shift by `u` positions: `[x1, x2, x3]` shifted by 1 is `[x3, x1, x2]`.
pub fn cyclic_shift(x: &[f64], u: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let u = u % n;
    let mut out = Vec::with_capacity(n);
    out.extend_from_slice(&x[n - u..]);
    out.extend_from_slice(&x[..n - u]);
    out
}

/// 2-D right cyclic shift: `out[i][j] = a[(i - du) mod h][(j - dv) mod w]`.
pub fn cyclic_shift_2d(a: ArrayView2<f64>, du: isize, dv: isize) -> Array2<f64> {
    let (h, w) = a.dim();
    Array2::from_shape_fn((h, w), |(i, j)| {
        let si = (i as isize - du).rem_euclid(h as isize) as usize;
        let sj = (j as isize - dv).rem_euclid(w as isize) as usize;
        a[[si, sj]]
    })
}

/// Dense circulant matrix whose row `u` is `cyclic_shift(x, u)`.
pub fn circulant(x: &[f64]) -> Result<Array2<f64>> {
    let n = x.len();
    if n > DEFAULT_DENSE_CAP {
        return Err(Error::TooLarge {
            side: n,
            cap: DEFAULT_DENSE_CAP,
        });
    }
    Ok(Array2::from_shape_fn((n, n), |(u, j)| x[(j + n - u) % n]))
}

/// Dense block-circulant matrix with circulant blocks for an `h x w` patch.
///
/// Row `i * w + p` is the patch cyclically shifted by `(i, p)`, flattened
/// row-major. Block `(i, j)` therefore equals `circulant(row[(j - i) mod h])`.
pub fn block_circulant(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    block_circulant_capped(a, DEFAULT_DENSE_CAP)
}

pub fn block_circulant_capped(a: ArrayView2<f64>, cap: usize) -> Result<Array2<f64>> {
    let (h, w) = a.dim();
    let side = h * w;
    if side > cap {
        return Err(Error::TooLarge { side, cap });
    }
    Ok(Array2::from_shape_fn((side, side), |(r, c)| {
        let (i, p) = (r / w, r % w);
        let (j, q) = (c / w, c % w);
        a[[(j + h - i) % h, (q + w - p) % w]]
    }))
}

/// Largest absolute difference between the dense product `C(x) v` and its
/// spectral evaluation `IDFT(conj(DFT(x)) * DFT(v))`.
pub fn verify_diagonalization(x: &[f64], v: &[f64]) -> Result<f64> {
    if x.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: v.len(),
        });
    }
    let n = x.len();
    let c = circulant(x)?;
    let dense: Vec<f64> = (0..n)
        .map(|u| (0..n).map(|j| c[[u, j]] * v[j]).sum())
        .collect();
    let spectral = spectral_product(x, v);
    Ok(dense
        .iter()
        .zip(spectral.iter())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
}

/// `C(x) v` computed in O(n log n).
pub fn spectral_product(x: &[f64], v: &[f64]) -> Vec<f64> {
    let xf = fft::dft(x);
    let vf = fft::dft(v);
    let prod: Vec<Complex64> = xf.iter().zip(vf.iter()).map(|(a, b)| a.conj() * b).collect();
    fft::idft(&prod).into_iter().map(|c| c.re).collect()
}
