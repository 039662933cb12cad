//! Single reverse-diffusion steps.

use ndarray::{Array2, ArrayView2};

use super::noise::NoiseSource;
use crate::denoiser::{noise_levels, Denoiser};
use crate::error::{Error, Result};
use crate::kspace::{fft2c_array, ifft2c_array, kspace_residual, project_array, zero_filled, Measurement};
use crate::schedule::NoiseSchedule;

/// `x_{0|t} = (x_t - sqrt(1 - abar_t) eps) / sqrt(abar_t)` for a given `eps`.
pub fn x0_from_eps(
    x_t: ArrayView2<'_, f64>,
    eps: ArrayView2<'_, f64>,
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<Array2<f64>> {
    let (a, b) = noise_levels(schedule, t)?;
    Ok((&x_t - &(&eps * b)) / a)
}

/// Denoiser-implied clean estimate `x_{0|t}`.
pub fn predict_x0<D: Denoiser + ?Sized>(
    x_t: ArrayView2<'_, f64>,
    t: usize,
    denoiser: &D,
    schedule: &NoiseSchedule,
) -> Result<Array2<f64>> {
    let eps = denoiser.eps(x_t, t, schedule)?;
    x0_from_eps(x_t, eps.view(), t, schedule)
}

/// Ancestral DDPM step `t -> t-1`:
/// `x_{t-1} = (x_t - beta_t / sqrt(1 - abar_t) eps) / sqrt(alpha_t) + sqrt(beta_t) z`.
pub fn ddpm_step<D: Denoiser + ?Sized>(
    x_t: ArrayView2<'_, f64>,
    t: usize,
    denoiser: &D,
    schedule: &NoiseSchedule,
    noise: &mut impl NoiseSource,
) -> Result<Array2<f64>> {
    let (_, b) = noise_levels(schedule, t)?;
    let alpha = schedule.alpha(t);
    let beta = 1.0 - alpha;
    let eps = denoiser.eps(x_t, t, schedule)?;
    let mean = (&x_t - &(eps * (beta / b))) / alpha.sqrt();
    if beta == 0.0 {
        return Ok(mean);
    }
    let z = noise.normal_grid(x_t.dim());
    Ok(mean + z * beta.sqrt())
}

/// DDIM noise scale
/// `sigma = eta * sqrt((1 - abar_prev) / (1 - abar_t)) * sqrt(1 - abar_t / abar_prev)`.
pub fn ddim_sigma(schedule: &NoiseSchedule, t: usize, t_prev: usize, eta: f64) -> f64 {
    let abar_t = schedule.alpha_bar(t);
    let abar_prev = schedule.alpha_bar(t_prev);
    eta * ((1.0 - abar_prev) / (1.0 - abar_t)).sqrt() * (1.0 - abar_t / abar_prev).max(0.0).sqrt()
}

/// DDIM update from an already computed clean estimate and noise estimate:
/// `x_prev = sqrt(abar_prev) x0 + sqrt(1 - abar_prev - sigma^2) eps + sigma z`.
pub fn ddim_update(
    x0: ArrayView2<'_, f64>,
    eps: ArrayView2<'_, f64>,
    t: usize,
    t_prev: usize,
    schedule: &NoiseSchedule,
    eta: f64,
    noise: &mut impl NoiseSource,
) -> Result<Array2<f64>> {
    if t_prev >= t || t > schedule.steps() {
        return Err(Error::InvalidArgument(format!("DDIM step needs t > t_prev, got {t} -> {t_prev}")));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidArgument(format!("eta must be in [0, 1], got {eta}")));
    }
    let abar_prev = schedule.alpha_bar(t_prev);
    let sigma = ddim_sigma(schedule, t, t_prev, eta);
    let mut dir2 = 1.0 - abar_prev - sigma * sigma;
    if dir2 < 0.0 {
        if dir2 < -1e-12 {
            return Err(Error::InvalidArgument(format!(
                "sigma^2 = {} exceeds 1 - abar_prev = {}",
                sigma * sigma,
                1.0 - abar_prev
            )));
        }
        dir2 = 0.0;
    }
    let mut out = &x0 * abar_prev.sqrt();
    if dir2 > 0.0 {
        out.scaled_add(dir2.sqrt(), &eps);
    }
    if sigma > 0.0 {
        out.scaled_add(sigma, &noise.normal_grid(x0.dim()));
    }
    Ok(out)
}

/// DDIM step `t -> t_prev` (non-adjacent steps allowed).
#[allow(clippy::too_many_arguments)]
pub fn ddim_step<D: Denoiser + ?Sized>(
    x_t: ArrayView2<'_, f64>,
    t: usize,
    t_prev: usize,
    denoiser: &D,
    schedule: &NoiseSchedule,
    eta: f64,
    noise: &mut impl NoiseSource,
) -> Result<Array2<f64>> {
    let eps = denoiser.eps(x_t, t, schedule)?;
    let x0 = x0_from_eps(x_t, eps.view(), t, schedule)?;
    ddim_update(x0.view(), eps.view(), t, t_prev, schedule, eta, noise)
}

/// Re-noises a clean estimate to level `t`:
/// `sqrt(abar_t) x0 + sqrt(1 - abar_t) z`. Returns `x0` unchanged when
/// `abar_t = 1`.
pub fn renoise(x0: Array2<f64>, t: usize, schedule: &NoiseSchedule, noise: &mut impl NoiseSource) -> Array2<f64> {
    let abar = schedule.alpha_bar(t);
    if abar >= 1.0 {
        return x0;
    }
    let z = noise.normal_grid(x0.dim());
    let mut out = x0 * abar.sqrt();
    out.scaled_add((1.0 - abar).sqrt(), &z);
    out
}

/// Starting state of PPN: the zero-filled image noised to level `s`.
pub fn ppn_init(
    y: &Measurement,
    s: usize,
    schedule: &NoiseSchedule,
    noise: &mut impl NoiseSource,
) -> Result<Array2<f64>> {
    if s == 0 || s > schedule.steps() {
        return Err(Error::InvalidArgument(format!("start step must be in 1..={}, got {s}", schedule.steps())));
    }
    Ok(renoise(zero_filled(y).into_array(), s, schedule, noise))
}

/// Output of one predictor-projector-noisor step.
#[derive(Debug, Clone)]
pub struct PpnStep {
    /// `x_{t_prev}`.
    pub next: Array2<f64>,
    /// The projected clean estimate `P_y(x_{0|t})`.
    pub projected: Array2<f64>,
}

/// Predict `x_{0|t}`, project onto the measurement, re-noise to `t_prev`.
/// Exactly one denoiser evaluation.
#[allow(clippy::too_many_arguments)]
pub fn ppn_step<D: Denoiser + ?Sized>(
    x_t: ArrayView2<'_, f64>,
    t: usize,
    t_prev: usize,
    y: &Measurement,
    denoiser: &D,
    schedule: &NoiseSchedule,
    noise: &mut impl NoiseSource,
) -> Result<PpnStep> {
    if t_prev >= t {
        return Err(Error::InvalidArgument(format!("PPN step needs t > t_prev, got {t} -> {t_prev}")));
    }
    let x0 = predict_x0(x_t, t, denoiser, schedule)?;
    let projected = project_array(x0.view(), y)?;
    let next = renoise(projected.clone(), t_prev, schedule, noise);
    Ok(PpnStep { next, projected })
}

/// Noised measurement `y_t = sqrt(abar_t) y + sqrt(1 - abar_t) M F z` for a
/// real standard-normal image `z`.
pub fn noised_measurement(
    y: &Measurement,
    t: usize,
    schedule: &NoiseSchedule,
    noise: &mut impl NoiseSource,
) -> crate::kspace::KSpace {
    let abar = schedule.alpha_bar(t);
    let mut k = y.kspace() * num_complex::Complex64::new(abar.sqrt(), 0.0);
    if abar < 1.0 {
        let z = noise.normal_grid(y.shape());
        let fz = fft2c_array(z.view());
        let scale = (1.0 - abar).sqrt();
        for j in y.mask().kept_columns() {
            let mut col = k.column_mut(j);
            col.scaled_add(num_complex::Complex64::new(scale, 0.0), &fz.column(j));
        }
    }
    k
}

/// Blends kept columns of `x` toward `target`:
/// `Re F^-1 (lambda M target + (1 - lambda) M F x + (I - M) F x)`.
pub fn blend_project(
    x: ArrayView2<'_, f64>,
    target: &crate::kspace::KSpace,
    y: &Measurement,
    lambda: f64,
) -> Array2<f64> {
    let mut k = fft2c_array(x);
    for j in y.mask().kept_columns() {
        for (cur, &tgt) in k.column_mut(j).iter_mut().zip(target.column(j)) {
            *cur = tgt * lambda + *cur * (1.0 - lambda);
        }
    }
    ifft2c_array(k.view())
}

/// Gradient of `||y - M F x_{0|t}(x_t)||^2` with respect to `x_t`, together
/// with the residual norm `||M F x_{0|t} - y||`.
///
/// `grad = (2 / sqrt(abar_t)) (g - sqrt(1 - abar_t) J_eps^T g)` with
/// `g = Re F^-1 M (M F x_{0|t} - y)`.
pub fn guidance_gradient<D: Denoiser + ?Sized>(
    x_t: ArrayView2<'_, f64>,
    t: usize,
    y: &Measurement,
    denoiser: &D,
    schedule: &NoiseSchedule,
) -> Result<(Array2<f64>, f64)> {
    let eps = denoiser.eps(x_t, t, schedule)?;
    let x0 = x0_from_eps(x_t, eps.view(), t, schedule)?;
    let r = kspace_residual(x0.view(), y)?;
    let norm = r.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    Ok((guidance_from_residual(x_t, t, &r, denoiser, schedule)?, norm))
}

pub(crate) fn guidance_from_residual<D: Denoiser + ?Sized>(
    x_t: ArrayView2<'_, f64>,
    t: usize,
    residual: &crate::kspace::KSpace,
    denoiser: &D,
    schedule: &NoiseSchedule,
) -> Result<Array2<f64>> {
    let (a, b) = noise_levels(schedule, t)?;
    let g = ifft2c_array(residual.view());
    let jt = denoiser.vjp(x_t, t, g.view(), schedule)?;
    Ok((g - jt * b) * (2.0 / a))
}
