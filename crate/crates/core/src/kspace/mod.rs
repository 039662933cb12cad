//! The Cartesian MRI forward model `A = M F`, its zero-filled pseudoinverse
//! `F^-1 M`, and the data-consistency projection
//! `P_y(x) = F^-1 (M y + (I - M) F x)`.
//!
//! Every inverse transform is realized as its real part. For a real image and
//! a conjugate-symmetric mask (what [`make_uniform_mask`] produces) this loses
//! nothing on the kept columns, so projections are exactly consistent with
//! noiseless measurements.

mod fft;
mod mask;

use ndarray::{Array2, ArrayView2, Zip};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use fft::{fft2c, fft2c_array, ifft2c, ifft2c_array, ifft2c_complex, KSpace};
pub use mask::{make_uniform_mask, CartesianMask, DEFAULT_ACS_FRACTION};

use crate::error::{check_shape, Error, Result};
use crate::image::Image;

/// Masked k-space data `y` with unacquired columns held at exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    kspace: KSpace,
    mask: CartesianMask,
    sigma_e: f64,
}

impl Measurement {
    /// Builds a measurement, zeroing any entries on unkept columns.
    pub fn new(mut kspace: KSpace, mask: CartesianMask, sigma_e: f64) -> Result<Self> {
        if kspace.ncols() != mask.width() {
            return Err(Error::Mask(format!(
                "mask width {} does not match k-space width {}",
                mask.width(),
                kspace.ncols()
            )));
        }
        if kspace.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidArgument("k-space contains non-finite values".into()));
        }
        if sigma_e.is_nan() || sigma_e < 0.0 {
            return Err(Error::InvalidArgument(format!("sigma_e must be >= 0, got {sigma_e}")));
        }
        apply_mask(&mut kspace, &mask);
        Ok(Self { kspace, mask, sigma_e })
    }

    pub fn kspace(&self) -> &KSpace {
        &self.kspace
    }

    pub fn mask(&self) -> &CartesianMask {
        &self.mask
    }

    pub fn sigma_e(&self) -> f64 {
        self.sigma_e
    }

    pub fn shape(&self) -> (usize, usize) {
        self.kspace.dim()
    }
}

/// Zeroes every unkept column in place.
pub fn apply_mask(k: &mut KSpace, mask: &CartesianMask) {
    for (j, mut col) in k.columns_mut().into_iter().enumerate() {
        if !mask.is_kept(j) {
            col.fill(Complex64::default());
        }
    }
}

/// `y = M F x` with no noise.
pub fn forward(x: &Image, mask: &CartesianMask) -> Result<Measurement> {
    if x.width() != mask.width() {
        return Err(Error::Mask(format!("mask width {} does not match image width {}", mask.width(), x.width())));
    }
    Measurement::new(fft2c(x), mask.clone(), 0.0)
}

/// Adds circular complex Gaussian noise of total variance `sigma_e^2` to each
/// kept sample (`sigma_e / sqrt(2)` per real component).
pub fn add_noise(y: &Measurement, sigma_e: f64, seed: u64) -> Result<Measurement> {
    if !sigma_e.is_finite() || sigma_e < 0.0 {
        return Err(Error::InvalidArgument(format!("sigma_e must be >= 0, got {sigma_e}")));
    }
    let mut out = y.clone();
    if sigma_e == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = sigma_e / std::f64::consts::SQRT_2;
    let (h, w) = out.kspace.dim();
    for i in 0..h {
        for j in 0..w {
            if y.mask.is_kept(j) {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                out.kspace[(i, j)] += Complex64::new(re * scale, im * scale);
            }
        }
    }
    out.sigma_e = y.sigma_e.hypot(sigma_e);
    Ok(out)
}

/// Zero-filled reconstruction `Re(F^-1 M y)`.
pub fn zero_filled(y: &Measurement) -> Image {
    Image::new(ifft2c_array(y.kspace.view())).expect("finite k-space yields a finite image")
}

/// Data-consistency projection on a raw grid.
pub fn project_array(x: ArrayView2<'_, f64>, y: &Measurement) -> Result<Array2<f64>> {
    check_shape(y.shape(), x.dim())?;
    let mut k = fft2c_array(x);
    for j in y.mask.kept_columns() {
        k.column_mut(j).assign(&y.kspace.column(j));
    }
    Ok(ifft2c_array(k.view()))
}

/// `P_y(x) = Re F^-1 (M y + (I - M) F x)`.
pub fn project(x: &Image, y: &Measurement) -> Result<Image> {
    Image::new(project_array(x.view(), y)?)
}

/// Residual `M F x - y` on kept columns (zero elsewhere).
pub fn kspace_residual(x: ArrayView2<'_, f64>, y: &Measurement) -> Result<KSpace> {
    check_shape(y.shape(), x.dim())?;
    let mut r = fft2c_array(x);
    Zip::from(&mut r).and(&y.kspace).for_each(|a, &b| *a -= b);
    apply_mask(&mut r, &y.mask);
    Ok(r)
}

/// `||y - M F x||_2`.
pub fn data_fidelity_array(x: ArrayView2<'_, f64>, y: &Measurement) -> Result<f64> {
    Ok(kspace_residual(x, y)?.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt())
}

pub fn data_fidelity(x: &Image, y: &Measurement) -> Result<f64> {
    data_fidelity_array(x.view(), y)
}

/// `||M F x - M y||_inf` over kept entries.
pub fn max_kspace_residual(x: ArrayView2<'_, f64>, y: &Measurement) -> Result<f64> {
    Ok(kspace_residual(x, y)?.iter().map(|v| v.norm()).fold(0.0, f64::max))
}
