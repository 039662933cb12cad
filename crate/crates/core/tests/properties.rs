use ndarray::Array2;
use proptest::prelude::*;

use ppn_core::kspace::{fft2c_array, forward, ifft2c_array, make_uniform_mask, max_kspace_residual, project_array};
use ppn_core::metrics::{psnr, ssim, summarize};
use ppn_core::schedule::{build_cosine_schedule, make_time_grid, GridStrategy};
use ppn_core::Image;

fn grid(h: usize, w: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-2.0f64..2.0, h * w).prop_map(move |v| Array2::from_shape_vec((h, w), v).unwrap())
}

fn sized_pair() -> impl Strategy<Value = (Array2<f64>, Array2<f64>)> {
    (2usize..20, 2usize..20).prop_flat_map(|(h, w)| (grid(h, w), grid(h, w)))
}

fn max_abs(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_idempotent_and_consistent(
        (x, truth) in sized_pair(),
        accel in 1usize..6,
        acs in 0.0f64..0.3,
    ) {
        let w = x.ncols();
        let mask = make_uniform_mask(w, accel.min(w), acs).unwrap();
        let y = forward(&Image::new(truth).unwrap(), &mask).unwrap();
        let p = project_array(x.view(), &y).unwrap();
        let pp = project_array(p.view(), &y).unwrap();
        prop_assert!(max_abs(&p, &pp) <= 1e-12);
        prop_assert!(max_kspace_residual(p.view(), &y).unwrap() <= 1e-10);
    }

    #[test]
    fn fft_preserves_energy_and_inverts((x, _) in sized_pair()) {
        let k = fft2c_array(x.view());
        let ex: f64 = x.iter().map(|v| v * v).sum();
        let ek: f64 = k.iter().map(|c| c.norm_sqr()).sum();
        prop_assert!((ex - ek).abs() <= 1e-10 * ex.max(1.0));
        prop_assert!(max_abs(&ifft2c_array(k.view()), &x) <= 1e-12);
    }

    #[test]
    fn uniform_masks_are_conjugate_symmetric(w in 1usize..200, accel in 1usize..16, acs in 0.0f64..0.5) {
        let mask = make_uniform_mask(w, accel.min(w), acs).unwrap();
        prop_assert!(mask.is_conjugate_symmetric());
        prop_assert!(mask.is_kept(w / 2));
    }

    #[test]
    fn ssim_is_bounded_and_symmetric(
        a in grid(12, 14).prop_map(|g| g.mapv(|v| v.abs() / 2.0)),
        b in grid(12, 14).prop_map(|g| g.mapv(|v| v.abs() / 2.0)),
    ) {
        let (a, b) = (Image::new(a).unwrap(), Image::new(b).unwrap());
        let ab = ssim(&a, &b, 1.0).unwrap();
        prop_assert!((-1.0..=1.0).contains(&ab));
        prop_assert!((ab - ssim(&b, &a, 1.0).unwrap()).abs() <= 1e-12);
        prop_assert_eq!(ssim(&a, &a, 1.0).unwrap(), 1.0);
        if a != b {
            prop_assert!(ab < 1.0);
        }
    }

    #[test]
    fn psnr_is_infinite_only_for_identical_images(a in grid(6, 6), i in 0usize..36, d in 1e-6f64..1.0) {
        let x = Image::new(a.clone()).unwrap();
        prop_assert_eq!(psnr(&x, &x, 1.0).unwrap(), f64::INFINITY);
        let mut b = a;
        b[(i / 6, i % 6)] += d;
        prop_assert!(psnr(&Image::new(b).unwrap(), &x, 1.0).unwrap().is_finite());
    }

    #[test]
    fn summarize_matches_two_pass(values in prop::collection::vec(-1e3f64..1e3, 2..200)) {
        let s = summarize(&values).unwrap();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        prop_assert!((s.mean - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        prop_assert!((s.std - var.sqrt()).abs() <= 1e-12 * var.sqrt().max(1.0));
    }

    #[test]
    fn time_grids_strictly_decrease(steps in 1usize..400, frac in 0.0f64..1.0, uniform in any::<bool>()) {
        let s = build_cosine_schedule(steps, 0.008).unwrap();
        let count = 1 + ((steps - 1) as f64 * frac) as usize;
        let strategy = if uniform { GridStrategy::Uniform } else { GridStrategy::Trailing };
        let g = make_time_grid(&s, count, strategy).unwrap();
        prop_assert!(g.steps().windows(2).all(|w| w[0] > w[1]));
        prop_assert!(g.steps().iter().all(|&t| (1..=steps).contains(&t)));
        if !uniform {
            prop_assert_eq!(g.len(), count);
        }
    }
}

#[test]
fn cosine_alpha_bar_is_decreasing_and_positive() {
    let s = build_cosine_schedule(1000, 0.008).unwrap();
    let ab = s.alpha_bars();
    assert!(ab.windows(2).all(|w| w[1] < w[0]));
    assert!(ab.iter().all(|&v| v > 0.0 && v <= 1.0));
}
