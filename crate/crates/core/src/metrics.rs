//! PSNR, SSIM and mean/std summaries.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{check_shape, Error, Result};
use crate::image::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    /// `f64::INFINITY` for identical images.
    pub psnr_db: f64,
    pub ssim: f64,
    pub data_range: f64,
}

impl MetricReport {
    pub fn evaluate(x: &Image, reference: &Image, data_range: f64) -> Result<Self> {
        Ok(Self { psnr_db: psnr(x, reference, data_range)?, ssim: ssim(x, reference, data_range)?, data_range })
    }
}

fn check_range(data_range: f64) -> Result<()> {
    if !(data_range > 0.0 && data_range.is_finite()) {
        return Err(Error::InvalidArgument(format!("data range must be > 0, got {data_range}")));
    }
    Ok(())
}

pub fn mse(x: ArrayView2<'_, f64>, reference: ArrayView2<'_, f64>) -> Result<f64> {
    check_shape(reference.dim(), x.dim())?;
    let sum: f64 = x.iter().zip(reference.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / x.len() as f64)
}

/// `10 log10(range^2 / mse)`; `+inf` when the images are equal.
pub fn psnr(x: &Image, reference: &Image, data_range: f64) -> Result<f64> {
    check_range(data_range)?;
    let m = mse(x.view(), reference.view())?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / m).log10())
}

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
fn gaussian_taps() -> Array1<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let taps = Array1::from_shape_fn(SSIM_WINDOW, |i| {
        let d = i as f64 - c;
        (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
    });
    let s = taps.sum();
    taps / s
}

/// Valid-mode separable filtering with the SSIM window.
fn filter_valid(x: &Array2<f64>, taps: &Array1<f64>) -> Array2<f64> {
    let (h, w) = x.dim();
    let n = taps.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let rows = Array2::from_shape_fn((h, ow), |(i, j)| (0..n).map(|k| taps[k] * x[(i, j + k)]).sum::<f64>());
    Array2::from_shape_fn((oh, ow), |(i, j)| (0..n).map(|k| taps[k] * rows[(i + k, j)]).sum::<f64>())
}

/// Mean SSIM over the valid-mode map (11x11 Gaussian window, sigma 1.5,
/// `K1 = 0.01`, `K2 = 0.03`). Symmetric in its arguments.
pub fn ssim(x: &Image, reference: &Image, data_range: f64) -> Result<f64> {
    check_range(data_range)?;
    check_shape(reference.shape(), x.shape())?;
    let (h, w) = x.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} images, got {h}x{w}"
        )));
    }
    let taps = gaussian_taps();
    let (a, b) = (x.as_array(), reference.as_array());
    let mu_a = filter_valid(a, &taps);
    let mu_b = filter_valid(b, &taps);
    let e_aa = filter_valid(&(a * a), &taps);
    let e_bb = filter_valid(&(b * b), &taps);
    let e_ab = filter_valid(&(a * b), &taps);

    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let mut total = 0.0;
    for idx in 0..mu_a.len() {
        let (i, j) = (idx / mu_a.ncols(), idx % mu_a.ncols());
        let (ma, mb) = (mu_a[(i, j)], mu_b[(i, j)]);
        let va = e_aa[(i, j)] - ma * ma;
        let vb = e_bb[(i, j)] - mb * mb;
        let cov = e_ab[(i, j)] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok((total / mu_a.len() as f64).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (divisor `n - 1`); 0 for one value.
    pub std: f64,
    pub count: usize,
    /// Set when `count == 1`, where `std` is not an estimate.
    pub single_sample: bool,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("cannot summarize an empty list".into()));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(Summary { mean, std: 0.0, count: 1, single_sample: true });
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    Ok(Summary { mean, std: var.sqrt(), count: n, single_sample: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(n: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::new(Array2::from_shape_fn((n, n), |_| rng.random::<f64>())).unwrap()
    }

    #[test]
    fn psnr_fixtures() {
        let x = random_image(16, 1);
        assert_eq!(psnr(&x, &x, 1.0).unwrap(), f64::INFINITY);
        let off = Image::new(x.as_array() + 0.5).unwrap();
        assert!((psnr(&off, &x, 1.0).unwrap() - 10.0 * 4f64.log10()).abs() < 1e-12);
        let off = Image::new(x.as_array() + 0.1).unwrap();
        assert!((psnr(&off, &x, 1.0).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_rejects_bad_input() {
        let x = random_image(16, 1);
        assert!(psnr(&x, &x, 0.0).is_err());
        assert!(psnr(&x, &random_image(8, 1), 1.0).is_err());
    }

    #[test]
    fn psnr_decreases_with_noise_amplitude() {
        let x = random_image(32, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = Array2::from_shape_fn((32, 32), |_| rng.random::<f64>() - 0.5);
        let values: Vec<f64> = [0.01, 0.05, 0.1, 0.2, 0.4]
            .iter()
            .map(|amp| psnr(&Image::new(x.as_array() + &(&u * *amp)).unwrap(), &x, 1.0).unwrap())
            .collect();
        assert!(values.windows(2).all(|w| w[1] < w[0]), "{values:?}");
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = random_image(24, 4);
        let b = random_image(24, 5);
        assert_eq!(ssim(&a, &a, 1.0).unwrap(), 1.0);
        let ab = ssim(&a, &b, 1.0).unwrap();
        assert!(ab < 1.0);
        assert!((ab - ssim(&b, &a, 1.0).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn ssim_matches_direct_window_sum() {
        let a = random_image(13, 6);
        let b = random_image(13, 7);
        // Direct 2D evaluation at each of the 3x3 valid positions.
        let g = |d: f64| (-d * d / (2.0 * 1.5 * 1.5)).exp();
        let mut win = Array2::from_shape_fn((11, 11), |(i, j)| g(i as f64 - 5.0) * g(j as f64 - 5.0));
        let s = win.sum();
        win /= s;
        let (c1, c2) = (1e-4, 9e-4);
        let mut total = 0.0;
        for oi in 0..3 {
            for oj in 0..3 {
                let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let wgt = win[(i, j)];
                        let (x, y) = (a[(oi + i, oj + j)], b[(oi + i, oj + j)]);
                        ma += wgt * x;
                        mb += wgt * y;
                        aa += wgt * x * x;
                        bb += wgt * y * y;
                        ab += wgt * x * y;
                    }
                }
                let (va, vb, cov) = (aa - ma * ma, bb - mb * mb, ab - ma * mb);
                total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
        }
        assert!((ssim(&a, &b, 1.0).unwrap() - total / 9.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = random_image(10, 1);
        assert!(ssim(&a, &a, 1.0).is_err());
    }

    #[test]
    fn summarize_fixtures() {
        assert_eq!(summarize(&[5.0]).unwrap(), Summary { mean: 5.0, std: 0.0, count: 1, single_sample: true });
        let s = summarize(&[1.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-15);
        let s = summarize(&[2.0; 4]).unwrap();
        assert_eq!((s.mean, s.std), (2.0, 0.0));
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn summarize_matches_two_pass_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v: Vec<f64> = (0..257).map(|_| rng.random::<f64>() * 40.0).collect();
        let mut mean = 0.0;
        for x in &v {
            mean += x;
        }
        mean /= v.len() as f64;
        let mut ss = 0.0;
        for x in &v {
            ss += (x - mean).powi(2);
        }
        let s = summarize(&v).unwrap();
        assert!((s.mean - mean).abs() < 1e-12);
        assert!((s.std - (ss / 256.0).sqrt()).abs() < 1e-12);
    }
}
