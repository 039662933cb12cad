use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{noise_levels, Denoiser, DENOM_FLOOR};
use crate::error::{check_shape, Error, Result};
use crate::image::Image;
use crate::schedule::NoiseSchedule;

/// Gaussian prior `N(mu, U diag(lambda) U^T + floor * I)` over images.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    mean: Array2<f64>,
    // One flattened eigen-image per row.
    basis: Array2<f64>,
    eigvals: Vec<f64>,
    floor: f64,
}

impl GaussianPrior {
    pub fn new(mean: Array2<f64>, basis: Vec<Array2<f64>>, eigvals: Vec<f64>, floor: f64) -> Result<Self> {
        let n = mean.len();
        if basis.len() != eigvals.len() {
            return Err(Error::Prior(format!("{} eigen-images but {} eigenvalues", basis.len(), eigvals.len())));
        }
        let mut rows = Array2::zeros((basis.len(), n));
        for (i, b) in basis.iter().enumerate() {
            check_shape(mean.dim(), b.dim())?;
            rows.row_mut(i).assign(&Array1::from_iter(b.iter().copied()));
        }
        Self::from_rows(mean, rows, eigvals, floor)
    }

    fn from_rows(mean: Array2<f64>, basis: Array2<f64>, eigvals: Vec<f64>, floor: f64) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::Prior("prior mean has no pixels".into()));
        }
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(Error::Prior(format!("floor must be > 0, got {floor}")));
        }
        if let Some(l) = eigvals.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return Err(Error::Prior(format!("eigenvalue {l} is negative or non-finite")));
        }
        let gram = basis.dot(&basis.t());
        for ((i, j), g) in gram.indexed_iter() {
            let expected = if i == j { 1.0 } else { 0.0 };
            if (g - expected).abs() > 1e-10 {
                return Err(Error::Prior(format!("basis is not orthonormal: <u{i}, u{j}> = {g}")));
            }
        }
        Ok(Self { mean, basis, eigvals, floor })
    }

    /// `N(mean, variance * I)`.
    pub fn isotropic(mean: Array2<f64>, variance: f64) -> Result<Self> {
        let n = mean.len();
        Self::from_rows(mean, Array2::zeros((0, n)), Vec::new(), variance)
    }

    pub fn mean(&self) -> &Array2<f64> {
        &self.mean
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mean.dim()
    }

    pub fn rank(&self) -> usize {
        self.eigvals.len()
    }

    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// The `i`-th eigen-image.
    pub fn eigen_image(&self, i: usize) -> Array2<f64> {
        self.basis.row(i).to_owned().into_shape_with_order(self.mean.dim()).expect("basis rows match the mean's size")
    }

    pub fn basis_rows(&self) -> ArrayView2<'_, f64> {
        self.basis.view()
    }

    /// Applies `g(total variance)` along each eigen-direction and
    /// `g(floor)` on the orthogonal complement.
    fn apply_spectral(&self, v: ArrayView1<'_, f64>, g: impl Fn(f64) -> f64) -> Array1<f64> {
        let g_perp = g(self.floor);
        let coeffs = self.basis.dot(&v);
        let mut out = v.mapv(|e| e * g_perp);
        for (i, (&c, &l)) in coeffs.iter().zip(&self.eigvals).enumerate() {
            let w = (g(l + self.floor) - g_perp) * c;
            out.scaled_add(w, &self.basis.row(i));
        }
        out
    }

    /// Posterior mean `E[x_0 | x_t] = mu + a Sigma (a^2 Sigma + b^2 I)^-1 (x_t - a mu)`.
    pub fn posterior_mean(&self, x_t: ArrayView2<'_, f64>, t: usize, schedule: &NoiseSchedule) -> Result<Array2<f64>> {
        check_shape(self.mean.dim(), x_t.dim())?;
        let (a, b) = noise_levels(schedule, t)?;
        let flat_mean = self.flat(self.mean.view());
        let d = &self.flat(x_t) - &(&flat_mean * a);
        let gain = |var: f64| a * var / (a * a * var + b * b).max(DENOM_FLOOR);
        let m = flat_mean + self.apply_spectral(d.view(), gain);
        Ok(self.unflat(m))
    }

    /// Posterior mean of `x` given the linear constraint that its Fourier
    /// samples on the mask's kept columns equal the measurement.
    ///
    /// Solves `E[x | A x = y] = mu + Sigma A^T (A Sigma A^T)^-1 (y - A mu)`
    /// with `A` the real-valued restriction of the centered orthonormal
    /// Fourier transform to the kept columns; `Sigma` is applied through the
    /// eigenbasis and the system is solved by conjugate gradients.
    pub fn constrained_mean(&self, y: &crate::kspace::Measurement, tol: f64) -> Result<Array2<f64>> {
        use crate::kspace::{fft2c_array, ifft2c_array, kspace_residual};

        check_shape(self.mean.dim(), y.shape())?;
        let shape = self.mean.dim();
        // A^T A restricted to real images is the orthogonal projector
        // Q = Re F^-1 M F, so work with the image-domain residual
        // Q (x - mu) = zf(y) - Q mu and solve Q Sigma Q z = r for z in range(Q).
        let q = |v: &Array2<f64>| -> Array2<f64> {
            let mut k = fft2c_array(v.view());
            crate::kspace::apply_mask(&mut k, y.mask());
            ifft2c_array(k.view())
        };
        let sigma = |v: &Array2<f64>| -> Array2<f64> {
            self.unflat(self.apply_spectral(self.flat(v.view()).view(), |var| var))
        };
        let mut neg_r = kspace_residual(self.mean.view(), y)?;
        neg_r.mapv_inplace(|c| -c);
        let rhs = ifft2c_array(neg_r.view());

        let op = |v: &Array2<f64>| q(&sigma(&q(v)));
        let mut z = Array2::<f64>::zeros(shape);
        let mut r = rhs.clone();
        let mut p = r.clone();
        let mut rs = (&r * &r).sum();
        let target = tol * tol * rs.max(f64::MIN_POSITIVE);
        for _ in 0..10 * self.mean.len() {
            if rs <= target {
                break;
            }
            let ap = op(&p);
            let alpha = rs / (&p * &ap).sum();
            z.scaled_add(alpha, &p);
            r.scaled_add(-alpha, &ap);
            let rs_new = (&r * &r).sum();
            p = &r + &(&p * (rs_new / rs));
            rs = rs_new;
        }
        Ok(&self.mean + &sigma(&q(&z)))
    }

    /// `(d m / d x_t) v`; the Jacobian is symmetric.
    fn mean_jacobian_apply(&self, v: ArrayView2<'_, f64>, a: f64, b: f64) -> Array2<f64> {
        let gain = |var: f64| a * var / (a * a * var + b * b).max(DENOM_FLOOR);
        self.unflat(self.apply_spectral(self.flat(v).view(), gain))
    }

    fn flat(&self, v: ArrayView2<'_, f64>) -> Array1<f64> {
        Array1::from_iter(v.iter().copied())
    }

    fn unflat(&self, v: Array1<f64>) -> Array2<f64> {
        v.into_shape_with_order(self.mean.dim()).expect("flattened grid matches the prior's size")
    }
}

impl Denoiser for GaussianPrior {
    fn eps(&self, x_t: ArrayView2<'_, f64>, t: usize, schedule: &NoiseSchedule) -> Result<Array2<f64>> {
        let (a, b) = noise_levels(schedule, t)?;
        let m = self.posterior_mean(x_t, t, schedule)?;
        Ok((&x_t - &(m * a)) / b)
    }

    fn vjp(
        &self,
        x_t: ArrayView2<'_, f64>,
        t: usize,
        v: ArrayView2<'_, f64>,
        schedule: &NoiseSchedule,
    ) -> Result<Array2<f64>> {
        check_shape(self.mean.dim(), x_t.dim())?;
        check_shape(self.mean.dim(), v.dim())?;
        let (a, b) = noise_levels(schedule, t)?;
        let jm = self.mean_jacobian_apply(v, a, b);
        Ok((&v - &(jm * a)) / b)
    }
}

/// Fits a rank-`rank` PCA prior with sample covariance (divisor `N - 1`).
///
/// Directions with no variance in the ensemble keep an eigenvalue of zero and
/// an arbitrary orthonormal completion of the basis.
pub fn fit_gaussian_prior(ensemble: &[Image], rank: usize, floor: f64) -> Result<GaussianPrior> {
    let count = ensemble.len();
    if count < rank + 1 || count < 2 {
        return Err(Error::Prior(format!("rank {rank} needs at least {} images, got {count}", (rank + 1).max(2))));
    }
    let shape = ensemble[0].shape();
    let n = shape.0 * shape.1;
    if rank > n {
        return Err(Error::Prior(format!("rank {rank} exceeds pixel count {n}")));
    }
    let mut data = Array2::<f64>::zeros((count, n));
    for (i, img) in ensemble.iter().enumerate() {
        check_shape(shape, img.shape())?;
        data.row_mut(i).assign(&Array1::from_iter(img.iter().copied()));
    }
    let mean = data.mean_axis(Axis(0)).expect("ensemble is nonempty");
    data -= &mean;

    // Eigen-decompose the N x N Gram matrix instead of the n x n covariance.
    let gram = data.dot(&data.t()) / (count - 1) as f64;
    let eig = SymmetricEigen::new(DMatrix::from_fn(count, count, |i, j| gram[(i, j)]));
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let scale = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let tiny = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut basis = Array2::<f64>::zeros((rank, n));
    let mut eigvals = Vec::with_capacity(rank);
    let mut filled = 0;
    for &k in order.iter().take(rank) {
        let lambda = eig.eigenvalues[k];
        if lambda <= tiny {
            break;
        }
        let v = Array1::from_iter(eig.eigenvectors.column(k).iter().copied());
        let u = data.t().dot(&v);
        if orthonormalize_into(&mut basis, filled, u) {
            eigvals.push(lambda);
            filled += 1;
        }
    }
    if filled < rank {
        log::warn!(
            "ensemble spans only {filled} of {rank} requested directions; padding with zero-variance components"
        );
        let mut probe = 0;
        while filled < rank {
            let mut e = Array1::zeros(n);
            e[probe % n] = 1.0;
            probe += 1;
            if orthonormalize_into(&mut basis, filled, e) {
                eigvals.push(0.0);
                filled += 1;
            }
        }
    }
    let mean = mean.into_shape_with_order(shape).expect("mean has the ensemble's size");
    GaussianPrior::from_rows(mean, basis, eigvals, floor)
}

/// Gram-Schmidt (two passes) of `u` against rows `0..filled`, storing it in
/// row `filled`. Returns false if `u` is numerically dependent.
fn orthonormalize_into(basis: &mut Array2<f64>, filled: usize, mut u: Array1<f64>) -> bool {
    let start = u.dot(&u).sqrt();
    if start == 0.0 {
        return false;
    }
    for _ in 0..2 {
        for j in 0..filled {
            let row = basis.row(j);
            let c = row.dot(&u);
            u.scaled_add(-c, &row);
        }
    }
    let norm = u.dot(&u).sqrt();
    if norm <= 1e-8 * start {
        return false;
    }
    basis.row_mut(filled).assign(&(u / norm));
    true
}
