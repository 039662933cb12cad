//! Noise predictors `eps(x_t, t)`.
//!
//! Instead of a trained network the shipped predictors are exact: for a
//! Gaussian or Gaussian-mixture prior over clean images, the MMSE estimate of
//! the noise in `x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps` has a closed
//! form, `eps* = (x_t - sqrt(abar_t) E[x_0 | x_t]) / sqrt(1 - abar_t)`.

mod gaussian;
mod gmm;

use ndarray::{Array2, ArrayView2};

pub use gaussian::{fit_gaussian_prior, GaussianPrior};
pub use gmm::{GmmComponent, GmmPrior};

use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;

/// Lower bound applied to every `a^2 lambda + b^2` denominator.
pub(crate) const DENOM_FLOOR: f64 = 1e-12;

/// A noise predictor `eps_theta(x_t, t)`.
///
/// Implementations must be deterministic in `(x_t, t)` and return a grid of
/// the same shape as `x_t`.
pub trait Denoiser: Sync {
    fn eps(&self, x_t: ArrayView2<'_, f64>, t: usize, schedule: &NoiseSchedule) -> Result<Array2<f64>>;

    /// Vector-Jacobian product `(d eps / d x_t)^T v`.
    ///
    /// The default uses central differences of `v . eps(x)` along every
    /// pixel, costing `2 * H * W` calls to [`Denoiser::eps`]. Closed-form
    /// predictors override it.
    fn vjp(
        &self,
        x_t: ArrayView2<'_, f64>,
        t: usize,
        v: ArrayView2<'_, f64>,
        schedule: &NoiseSchedule,
    ) -> Result<Array2<f64>> {
        finite_difference_vjp(self, x_t, t, v, schedule)
    }
}

pub fn finite_difference_vjp<D: Denoiser + ?Sized>(
    denoiser: &D,
    x_t: ArrayView2<'_, f64>,
    t: usize,
    v: ArrayView2<'_, f64>,
    schedule: &NoiseSchedule,
) -> Result<Array2<f64>> {
    crate::error::check_shape(x_t.dim(), v.dim())?;
    let mut probe = x_t.to_owned();
    let mut out = Array2::zeros(x_t.dim());
    for idx in ndarray::indices(x_t.dim()) {
        let x0 = probe[idx];
        let h = 1e-5 * x0.abs().max(1.0);
        probe[idx] = x0 + h;
        let plus = (&denoiser.eps(probe.view(), t, schedule)? * &v).sum();
        probe[idx] = x0 - h;
        let minus = (&denoiser.eps(probe.view(), t, schedule)? * &v).sum();
        probe[idx] = x0;
        out[idx] = (plus - minus) / (2.0 * h);
    }
    Ok(out)
}

/// `(sqrt(abar_t), sqrt(1 - abar_t))` for a step that carries noise.
pub fn noise_levels(schedule: &NoiseSchedule, t: usize) -> Result<(f64, f64)> {
    if t == 0 || t > schedule.steps() {
        return Err(Error::ZeroStep(t));
    }
    let abar = schedule.alpha_bar(t);
    let b = (1.0 - abar).sqrt();
    if b <= 0.0 {
        return Err(Error::ZeroStep(t));
    }
    Ok((abar.sqrt(), b))
}

/// Predicts zero noise everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDenoiser;

impl Denoiser for ZeroDenoiser {
    fn eps(&self, x_t: ArrayView2<'_, f64>, t: usize, schedule: &NoiseSchedule) -> Result<Array2<f64>> {
        if t == 0 || t > schedule.steps() {
            return Err(Error::ZeroStep(t));
        }
        Ok(Array2::zeros(x_t.dim()))
    }

    fn vjp(
        &self,
        x_t: ArrayView2<'_, f64>,
        _t: usize,
        _v: ArrayView2<'_, f64>,
        _schedule: &NoiseSchedule,
    ) -> Result<Array2<f64>> {
        Ok(Array2::zeros(x_t.dim()))
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn eps(&self, x_t: ArrayView2<'_, f64>, t: usize, schedule: &NoiseSchedule) -> Result<Array2<f64>> {
        (**self).eps(x_t, t, schedule)
    }

    fn vjp(
        &self,
        x_t: ArrayView2<'_, f64>,
        t: usize,
        v: ArrayView2<'_, f64>,
        schedule: &NoiseSchedule,
    ) -> Result<Array2<f64>> {
        (**self).vjp(x_t, t, v, schedule)
    }
}
