//! Centered, orthonormal 2D DFT.
//!
//! The zero frequency sits at index `(H/2, W/2)` (integer division) and both
//! directions are scaled by `1/sqrt(H*W)`, so the transform is unitary.

use std::cell::RefCell;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::error::Result;
use crate::image::Image;

pub type KSpace = Array2<Complex64>;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Copies `src` into a new array rolled by `(dr, dc)` and scaled.
fn rolled<T, U, F>(src: ArrayView2<'_, T>, dr: usize, dc: usize, mut map: F) -> Array2<U>
where
    T: Copy,
    U: Clone + Default,
    F: FnMut(T) -> U,
{
    let (h, w) = src.dim();
    let mut out = Array2::<U>::default((h, w));
    for ((i, j), &v) in src.indexed_iter() {
        out[((i + dr) % h, (j + dc) % w)] = map(v);
    }
    out
}

/// Unnormalized in-place 2D transform of a standard-layout array.
fn transform_in_place(data: &mut Array2<Complex64>, direction: FftDirection) {
    let (h, w) = data.dim();
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let row_fft = planner.plan_fft(w, direction);
        let col_fft = planner.plan_fft(h, direction);

        let mut scratch =
            vec![Complex64::default(); row_fft.get_inplace_scratch_len().max(col_fft.get_inplace_scratch_len())];
        let buf = data.as_slice_mut().expect("k-space buffers are allocated in standard layout");
        row_fft.process_with_scratch(buf, &mut scratch);

        let mut column = vec![Complex64::default(); h];
        for j in 0..w {
            for (i, c) in column.iter_mut().enumerate() {
                *c = buf[i * w + j];
            }
            col_fft.process_with_scratch(&mut column, &mut scratch);
            for (i, c) in column.iter().enumerate() {
                buf[i * w + j] = *c;
            }
        }
    });
}

/// Centered orthonormal forward transform of a real grid.
pub fn fft2c_array(x: ArrayView2<'_, f64>) -> KSpace {
    let (h, w) = x.dim();
    // ifftshift: move the spatial center (h/2, w/2) to the origin.
    let mut buf = rolled(x, h - h / 2, w - w / 2, |v| Complex64::new(v, 0.0));
    transform_in_place(&mut buf, FftDirection::Forward);
    let scale = 1.0 / ((h * w) as f64).sqrt();
    rolled(buf.view(), h / 2, w / 2, |v: Complex64| v * scale)
}

/// Centered orthonormal inverse transform, keeping the complex result.
pub fn ifft2c_complex(k: ArrayView2<'_, Complex64>) -> Array2<Complex64> {
    let (h, w) = k.dim();
    let mut buf = rolled(k, h - h / 2, w - w / 2, |v| v);
    transform_in_place(&mut buf, FftDirection::Inverse);
    let scale = 1.0 / ((h * w) as f64).sqrt();
    rolled(buf.view(), h / 2, w / 2, |v: Complex64| v * scale)
}

/// Centered orthonormal inverse transform, realized as the real part.
pub fn ifft2c_array(k: ArrayView2<'_, Complex64>) -> Array2<f64> {
    ifft2c_complex(k).mapv(|v| v.re)
}

pub fn fft2c(image: &Image) -> KSpace {
    fft2c_array(image.view())
}

pub fn ifft2c(k: &KSpace) -> Result<Image> {
    Image::new(ifft2c_array(k.view()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(h: usize, w: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((h, w), |_| rng.random::<f64>() - 0.5)
    }

    /// Direct O(n^2) centered DFT used as an independent reference.
    fn naive_fft2c(x: &Array2<f64>) -> KSpace {
        let (h, w) = x.dim();
        let (ch, cw) = ((h / 2) as f64, (w / 2) as f64);
        let scale = 1.0 / ((h * w) as f64).sqrt();
        Array2::from_shape_fn((h, w), |(ku, kv)| {
            let mut acc = Complex64::default();
            for ((i, j), &v) in x.indexed_iter() {
                let phase = -2.0
                    * std::f64::consts::PI
                    * ((ku as f64 - ch) * (i as f64 - ch) / h as f64 + (kv as f64 - cw) * (j as f64 - cw) / w as f64);
                acc += Complex64::from_polar(v, phase);
            }
            acc * scale
        })
    }

    #[test]
    fn constant_image_has_single_dc_entry() {
        let (h, w, c) = (6, 8, 0.7);
        let k = fft2c_array(Array2::from_elem((h, w), c).view());
        for ((i, j), v) in k.indexed_iter() {
            if (i, j) == (h / 2, w / 2) {
                assert!((v.re - c * ((h * w) as f64).sqrt()).abs() < 1e-12);
                assert!(v.im.abs() < 1e-12);
            } else {
                assert!(v.norm() < 1e-12, "({i},{j}) = {v}");
            }
        }
    }

    #[test]
    fn dc_only_inverts_to_ones() {
        let (h, w) = (4, 4);
        let mut k = KSpace::zeros((h, w));
        k[(h / 2, w / 2)] = Complex64::new(((h * w) as f64).sqrt(), 0.0);
        let x = ifft2c_array(k.view());
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(ifft2c_array(KSpace::zeros((3, 5)).view()).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn matches_naive_dft_even_and_odd() {
        for &(h, w) in &[(8, 8), (5, 7), (6, 3)] {
            let x = random_grid(h, w, 3);
            let fast = fft2c_array(x.view());
            let slow = naive_fft2c(&x);
            for (a, b) in fast.iter().zip(slow.iter()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn round_trip_and_parseval() {
        for &(h, w) in &[(8, 8), (7, 9), (64, 64)] {
            let x = random_grid(h, w, 11);
            let k = fft2c_array(x.view());
            let back = ifft2c_array(k.view());
            for (a, b) in x.iter().zip(back.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
            let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nk: f64 = k.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            assert!((nx - nk).abs() / nx < 1e-10);
        }
    }
}
