use ndarray::{Array2, ArrayView2, Zip};

use super::{noise_levels, Denoiser, DENOM_FLOOR};
use crate::error::{check_shape, Error, Result};
use crate::schedule::NoiseSchedule;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: Array2<f64>,
    /// Isotropic variance `s_k^2`.
    pub variance: f64,
}

/// Mixture of isotropic Gaussians over images.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmPrior {
    components: Vec<GmmComponent>,
}

/// Per-component quantities at a given `(x_t, t)`.
struct Evaluation {
    resp: Vec<f64>,
    /// Component posterior means `m_k`.
    means: Vec<Array2<f64>>,
    /// Component gains `a s_k^2 / (a^2 s_k^2 + b^2)`.
    gains: Vec<f64>,
    /// Marginal variances `a^2 s_k^2 + b^2`.
    marginal_vars: Vec<f64>,
}

impl GmmPrior {
    pub fn new(components: Vec<GmmComponent>) -> Result<Self> {
        let first = components.first().ok_or_else(|| Error::Prior("mixture needs at least one component".into()))?;
        let shape = first.mean.dim();
        for c in &components {
            check_shape(shape, c.mean.dim())?;
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::Prior(format!("component weight {} must be > 0", c.weight)));
            }
            if !(c.variance > 0.0 && c.variance.is_finite()) {
                return Err(Error::Prior(format!("component variance {} must be > 0", c.variance)));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Prior(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    pub fn shape(&self) -> (usize, usize) {
        self.components[0].mean.dim()
    }

    fn evaluate(&self, x_t: ArrayView2<'_, f64>, a: f64, b: f64) -> Evaluation {
        let n = x_t.len() as f64;
        let k = self.components.len();
        let mut log_w = Vec::with_capacity(k);
        let mut means = Vec::with_capacity(k);
        let mut gains = Vec::with_capacity(k);
        let mut marginal_vars = Vec::with_capacity(k);
        for c in &self.components {
            let var = (a * a * c.variance + b * b).max(DENOM_FLOOR);
            let d = &x_t - &(&c.mean * a);
            let dist2 = d.iter().map(|v| v * v).sum::<f64>();
            log_w.push(c.weight.ln() - 0.5 * n * (2.0 * std::f64::consts::PI * var).ln() - dist2 / (2.0 * var));
            let gain = a * c.variance / var;
            means.push(&c.mean + &(d * gain));
            gains.push(gain);
            marginal_vars.push(var);
        }
        let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = log_w.iter().map(|l| (l - max).exp()).sum();
        let log_norm = max + sum.ln();
        let resp = log_w.iter().map(|l| (l - log_norm).exp()).collect();
        Evaluation { resp, means, gains, marginal_vars }
    }

    /// Responsibilities `w_k(x_t)` of each component at step `t`.
    pub fn responsibilities(&self, x_t: ArrayView2<'_, f64>, t: usize, schedule: &NoiseSchedule) -> Result<Vec<f64>> {
        check_shape(self.shape(), x_t.dim())?;
        let (a, b) = noise_levels(schedule, t)?;
        Ok(self.evaluate(x_t, a, b).resp)
    }

    pub fn posterior_mean(&self, x_t: ArrayView2<'_, f64>, t: usize, schedule: &NoiseSchedule) -> Result<Array2<f64>> {
        check_shape(self.shape(), x_t.dim())?;
        let (a, b) = noise_levels(schedule, t)?;
        let ev = self.evaluate(x_t, a, b);
        let mut m = Array2::zeros(x_t.dim());
        for (w, mk) in ev.resp.iter().zip(&ev.means) {
            m.scaled_add(*w, mk);
        }
        Ok(m)
    }
}

impl Denoiser for GmmPrior {
    fn eps(&self, x_t: ArrayView2<'_, f64>, t: usize, schedule: &NoiseSchedule) -> Result<Array2<f64>> {
        let (a, b) = noise_levels(schedule, t)?;
        let m = self.posterior_mean(x_t, t, schedule)?;
        Ok((&x_t - &(m * a)) / b)
    }

    /// Exact product through `m = sum_k w_k m_k`, using
    /// `grad w_k = w_k (g_k - sum_j w_j g_j)` with `g_k = -(x - a mu_k) / v_k`.
    fn vjp(
        &self,
        x_t: ArrayView2<'_, f64>,
        t: usize,
        v: ArrayView2<'_, f64>,
        schedule: &NoiseSchedule,
    ) -> Result<Array2<f64>> {
        check_shape(self.shape(), x_t.dim())?;
        check_shape(self.shape(), v.dim())?;
        let (a, b) = noise_levels(schedule, t)?;
        let ev = self.evaluate(x_t, a, b);

        let scores: Vec<Array2<f64>> =
            self.components.iter().zip(&ev.marginal_vars).map(|(c, var)| (&(&c.mean * a) - &x_t) / *var).collect();
        let mut mean_score = Array2::zeros(x_t.dim());
        for (w, g) in ev.resp.iter().zip(&scores) {
            mean_score.scaled_add(*w, g);
        }

        let diag: f64 = ev.resp.iter().zip(&ev.gains).map(|(w, g)| w * g).sum();
        let mut jm_v = &v * diag;
        for ((w, mk), g) in ev.resp.iter().zip(&ev.means).zip(&scores) {
            let proj = (mk * &v).sum();
            Zip::from(&mut jm_v).and(g).and(&mean_score).for_each(|o, &gk, &gbar| *o += w * proj * (gk - gbar));
        }
        Ok((&v - &(jm_v * a)) / b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{finite_difference_vjp, GaussianPrior};
    use crate::schedule::build_cosine_schedule;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_grid(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((h, w), |_| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn single_component_matches_isotropic_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mean = random_grid(5, 5, &mut rng);
        let gmm = GmmPrior::new(vec![GmmComponent { weight: 1.0, mean: mean.clone(), variance: 0.4 }]).unwrap();
        let gauss = GaussianPrior::isotropic(mean, 0.4).unwrap();
        let s = build_cosine_schedule(200, 0.008).unwrap();
        for &t in &[1usize, 50, 199] {
            let x = random_grid(5, 5, &mut rng);
            let a = gmm.eps(x.view(), t, &s).unwrap();
            let b = gauss.eps(x.view(), t, &s).unwrap();
            for (u, v) in a.iter().zip(b.iter()) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_components_give_zero_mean_at_origin() {
        let mu = Array2::from_elem((3, 3), 0.8);
        let gmm = GmmPrior::new(vec![
            GmmComponent { weight: 0.5, mean: mu.clone(), variance: 0.1 },
            GmmComponent { weight: 0.5, mean: -mu, variance: 0.1 },
        ])
        .unwrap();
        let s = build_cosine_schedule(100, 0.008).unwrap();
        let m = gmm.posterior_mean(Array2::zeros((3, 3)).view(), 30, &s).unwrap();
        assert!(m.iter().all(|v| v.abs() < 1e-15));
        let w = gmm.responsibilities(Array2::zeros((3, 3)).view(), 30, &s).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_mixture_matches_quadrature() {
        let gmm = GmmPrior::new(vec![
            GmmComponent { weight: 0.3, mean: Array2::from_elem((1, 1), -1.0), variance: 0.2 },
            GmmComponent { weight: 0.7, mean: Array2::from_elem((1, 1), 1.5), variance: 0.05 },
        ])
        .unwrap();
        let s = build_cosine_schedule(100, 0.008).unwrap();
        let t = 45;
        let (a, b) = noise_levels(&s, t).unwrap();
        let density = |x0: f64| {
            gmm.components()
                .iter()
                .map(|c| {
                    let m = c.mean[(0, 0)];
                    c.weight * (-(x0 - m).powi(2) / (2.0 * c.variance)).exp()
                        / (2.0 * std::f64::consts::PI * c.variance).sqrt()
                })
                .sum::<f64>()
        };
        for &xt in &[-1.2, 0.1, 0.9, 2.0] {
            // Composite Simpson over [-8, 8].
            let n = 20_000;
            let (lo, hi) = (-8.0, 8.0);
            let h = (hi - lo) / n as f64;
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..=n {
                let x0 = lo + i as f64 * h;
                let wgt = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let lik = (-(xt - a * x0).powi(2) / (2.0 * b * b)).exp();
                let f = wgt * density(x0) * lik;
                num += f * x0;
                den += f;
            }
            let quad = num / den;
            let m = gmm.posterior_mean(Array2::from_elem((1, 1), xt).view(), t, &s).unwrap()[(0, 0)];
            assert!((m - quad).abs() < 1e-6, "xt={xt}: {m} vs {quad}");
        }
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gmm = GmmPrior::new(vec![
            GmmComponent { weight: 0.4, mean: random_grid(4, 4, &mut rng) * 0.3, variance: 0.3 },
            GmmComponent { weight: 0.6, mean: random_grid(4, 4, &mut rng) * 0.3, variance: 0.5 },
        ])
        .unwrap();
        let s = build_cosine_schedule(100, 0.008).unwrap();
        for &t in &[20usize, 60] {
            let x = random_grid(4, 4, &mut rng) * 0.5;
            let v = random_grid(4, 4, &mut rng);
            let exact = gmm.vjp(x.view(), t, v.view(), &s).unwrap();
            let fd = finite_difference_vjp(&gmm, x.view(), t, v.view(), &s).unwrap();
            let err = (&exact - &fd).iter().map(|e| e * e).sum::<f64>().sqrt();
            let norm = exact.iter().map(|e| e * e).sum::<f64>().sqrt();
            assert!(err / norm < 1e-6, "t={t}: rel err {}", err / norm);
        }
    }

    #[test]
    fn rejects_bad_components() {
        let m = Array2::zeros((2, 2));
        assert!(GmmPrior::new(vec![]).is_err());
        assert!(GmmPrior::new(vec![GmmComponent { weight: 0.5, mean: m.clone(), variance: 1.0 }]).is_err());
        assert!(GmmPrior::new(vec![GmmComponent { weight: 1.0, mean: m.clone(), variance: 0.0 }]).is_err());
        let g = GmmPrior::new(vec![GmmComponent { weight: 1.0, mean: m.clone(), variance: 1.0 }]).unwrap();
        let s = build_cosine_schedule(10, 0.008).unwrap();
        assert!(g.eps(m.view(), 0, &s).is_err());
    }
}
