use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::SSIM_WINDOW;

pub const MIN_PHANTOM_SIZE: usize = 32;

/// Modified Shepp-Logan ellipses:
/// `(intensity, semi-axis a, semi-axis b, x0, y0, angle in degrees)`
/// on the `[-1, 1]^2` field of view, `y` pointing up.
pub const SHEPP_LOGAN: [[f64; 6]; 10] = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
    [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
];

/// Randomly perturbed Shepp-Logan phantom.
///
/// Each ellipse parameter gets an independent uniform perturbation in
/// `[-j, j]`: centers move by `center_jitter` (field-of-view half-widths),
/// axes and intensities scale by `1 + axis_jitter * u` and
/// `1 + intensity_jitter * u`, angles shift by `rotation_jitter * 180` degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomSpec {
    pub size: usize,
    pub center_jitter: f64,
    pub axis_jitter: f64,
    pub rotation_jitter: f64,
    pub intensity_jitter: f64,
    pub seed: u64,
}

impl PhantomSpec {
    /// The unperturbed phantom.
    pub fn canonical(size: usize) -> Self {
        Self { size, center_jitter: 0.0, axis_jitter: 0.0, rotation_jitter: 0.0, intensity_jitter: 0.0, seed: 0 }
    }

    /// Default perturbation used for training and test ensembles.
    pub fn jittered(size: usize, seed: u64) -> Self {
        Self { size, center_jitter: 0.02, axis_jitter: 0.08, rotation_jitter: 0.03, intensity_jitter: 0.25, seed }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn ellipses(&self) -> Vec<[f64; 6]> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut u = || rng.random_range(-1.0..=1.0);
        SHEPP_LOGAN
            .iter()
            .map(|&[amp, a, b, x0, y0, phi]| {
                [
                    amp * (1.0 + self.intensity_jitter * u()),
                    a * (1.0 + self.axis_jitter * u()),
                    b * (1.0 + self.axis_jitter * u()),
                    x0 + self.center_jitter * u(),
                    y0 + self.center_jitter * u(),
                    phi + 180.0 * self.rotation_jitter * u(),
                ]
            })
            .collect()
    }
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Image> {
    let n = spec.size;
    if n < MIN_PHANTOM_SIZE.max(SSIM_WINDOW) {
        return Err(Error::InvalidArgument(format!("phantom size must be >= {MIN_PHANTOM_SIZE}, got {n}")));
    }
    let half = (n as f64 - 1.0) / 2.0;
    let mut img = Array2::<f64>::zeros((n, n));
    for [amp, a, b, x0, y0, phi] in spec.ellipses() {
        let (sin, cos) = phi.to_radians().sin_cos();
        for ((row, col), v) in img.indexed_iter_mut() {
            let x = (col as f64 - half) / half;
            let y = (half - row as f64) / half;
            let (dx, dy) = (x - x0, y - y0);
            let u = dx * cos + dy * sin;
            let w = dy * cos - dx * sin;
            if u * u / (a * a) + w * w / (b * b) <= 1.0 {
                *v += amp;
            }
        }
    }
    img.mapv_inplace(|v| v.clamp(0.0, 1.0));
    Image::new(img)
}

/// Phantoms for consecutive seeds `seeds`, generated in parallel.
pub fn phantom_ensemble(base: &PhantomSpec, seeds: std::ops::Range<u64>) -> Result<Vec<Image>> {
    seeds.into_par_iter().map(|s| generate_phantom(&base.with_seed(s))).collect()
}
