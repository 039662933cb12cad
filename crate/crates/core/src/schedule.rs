//! Diffusion noise schedules and the reduced time grids used for accelerated
//! sampling.
//!
//! A schedule stores the per-step retention factors `alpha[t]` for
//! `t = 1..=T` and their running products `alpha_bar[t]` for `t = 0..=T`,
//! with `alpha_bar[0] = 1`. Keeping the `t = 0` entry exactly one means the
//! last reverse step of any sampler lands on a noise-free estimate.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Per-step beta ceiling used by the cosine schedule.
pub const MAX_BETA: f64 = 0.999;

/// Default offset `s` of the cosine schedule.
pub const COSINE_OFFSET: f64 = 0.008;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    // alpha[0] is unused padding so that alpha[t] reads naturally.
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Builds a schedule from per-step retention factors `alpha_1..alpha_T`,
    /// each strictly inside (0, 1).
    pub fn from_alphas(alphas: &[f64]) -> Result<Self> {
        if let Some((i, a)) = alphas.iter().enumerate().find(|(_, a)| !(a.is_finite() && **a > 0.0 && **a < 1.0)) {
            return Err(Error::Schedule(format!("alpha_{} = {a} is outside (0, 1)", i + 1)));
        }
        Self::from_alphas_unchecked(alphas)
    }

    /// Like [`NoiseSchedule::from_alphas`] but admits `alpha_t = 1`
    /// (noise-free steps). Only useful for constructing degenerate test
    /// schedules.
    pub fn from_alphas_unchecked(alphas: &[f64]) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::Schedule("schedule needs at least one step".into()));
        }
        if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a > 0.0 && **a <= 1.0)) {
            return Err(Error::Schedule(format!("alpha {a} is outside (0, 1]")));
        }
        let mut alpha = Vec::with_capacity(alphas.len() + 1);
        let mut alpha_bar = Vec::with_capacity(alphas.len() + 1);
        alpha.push(1.0);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for &a in alphas {
            acc *= a;
            alpha.push(a);
            alpha_bar.push(acc);
        }
        Ok(Self { alpha, alpha_bar })
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.alpha.len() - 1
    }

    /// `alpha_t` for `t` in `1..=T`.
    pub fn alpha(&self, t: usize) -> f64 {
        assert!(t >= 1 && t <= self.steps(), "alpha index {t} out of range");
        self.alpha[t]
    }

    /// `alpha_bar_t` for `t` in `0..=T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn beta(&self, t: usize) -> f64 {
        1.0 - self.alpha(t)
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Writes `t,alpha,alpha_bar` rows for `t = 0..=T` (alpha_0 reported as 1).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "alpha", "alpha_bar"])?;
        for t in 0..=self.steps() {
            w.write_record([t.to_string(), format!("{:e}", self.alpha[t]), format!("{:e}", self.alpha_bar[t])])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Cosine schedule: `alpha_bar_t = f(t) / f(0)` with
/// `f(t) = cos^2(((t/T + s) / (1 + s)) * pi/2)`, converted to per-step betas
/// that are clamped to [`MAX_BETA`].
pub fn build_cosine_schedule(steps: usize, offset: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::Schedule("T must be at least 1".into()));
    }
    if !(offset > 0.0 && offset.is_finite()) {
        return Err(Error::Schedule(format!("cosine offset must be > 0, got {offset}")));
    }
    let f = |t: usize| {
        let u = (t as f64 / steps as f64 + offset) / (1.0 + offset);
        (u * FRAC_PI_2).cos().powi(2)
    };
    let alphas: Vec<f64> = (1..=steps)
        .map(|t| {
            let beta = (1.0 - f(t) / f(t - 1)).min(MAX_BETA);
            1.0 - beta
        })
        .collect();
    NoiseSchedule::from_alphas(&alphas)
}

/// Linear beta schedule from `beta_first` to `beta_last`.
pub fn build_linear_schedule(steps: usize, beta_first: f64, beta_last: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::Schedule("T must be at least 1".into()));
    }
    if !(beta_first > 0.0 && beta_first <= beta_last && beta_last < 1.0) {
        return Err(Error::Schedule(format!("need 0 < beta_1 <= beta_T < 1, got {beta_first}, {beta_last}")));
    }
    let alphas: Vec<f64> = (0..steps)
        .map(|i| {
            let frac = if steps == 1 { 0.0 } else { i as f64 / (steps - 1) as f64 };
            1.0 - (beta_first + (beta_last - beta_first) * frac)
        })
        .collect();
    NoiseSchedule::from_alphas(&alphas)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridStrategy {
    /// The last `S` consecutive steps: `S, S-1, ..., 1`.
    Trailing,
    /// `S` roughly equispaced steps starting at `T`.
    Uniform,
}

impl fmt::Display for GridStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridStrategy::Trailing => "trailing",
            GridStrategy::Uniform => "uniform",
        })
    }
}

impl FromStr for GridStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trailing" => Ok(GridStrategy::Trailing),
            "uniform" => Ok(GridStrategy::Uniform),
            other => Err(Error::InvalidArgument(format!("unknown grid strategy '{other}'"))),
        }
    }
}

/// A strictly decreasing sequence of diffusion steps visited by a sampler.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeGrid {
    steps: Vec<usize>,
    strategy: GridStrategy,
}

impl TimeGrid {
    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn strategy(&self) -> GridStrategy {
        self.strategy
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn first(&self) -> usize {
        self.steps[0]
    }

    /// `(t, t_prev)` transitions; the final transition always targets 0.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.steps.iter().enumerate().map(move |(i, &t)| (t, self.steps.get(i + 1).copied().unwrap_or(0)))
    }
}

/// Rounds to the nearest integer, breaking exact ties downward.
fn round_half_down(v: f64) -> usize {
    let floor = v.floor();
    if v - floor > 0.5 {
        floor as usize + 1
    } else {
        floor as usize
    }
}

pub fn make_time_grid(schedule: &NoiseSchedule, count: usize, strategy: GridStrategy) -> Result<TimeGrid> {
    let total = schedule.steps();
    if count == 0 || count > total {
        return Err(Error::TimeGrid(format!("step count must be in 1..={total}, got {count}")));
    }
    let steps = match strategy {
        GridStrategy::Trailing => (1..=count).rev().collect(),
        GridStrategy::Uniform => {
            let stride = total as f64 / count as f64;
            let mut steps: Vec<usize> =
                (0..count).map(|i| round_half_down(total as f64 - i as f64 * stride).max(1)).collect();
            steps.dedup();
            steps
        }
    };
    Ok(TimeGrid { steps, strategy })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_rejects_bad_arguments() {
        assert!(build_cosine_schedule(0, 0.008).is_err());
        assert!(build_cosine_schedule(10, 0.0).is_err());
        assert!(build_cosine_schedule(10, -1.0).is_err());
    }

    #[test]
    fn cosine_alpha_bar_zero_is_one() {
        let s = build_cosine_schedule(1000, COSINE_OFFSET).unwrap();
        assert_eq!(s.alpha_bar(0), 1.0);
    }

    #[test]
    fn cosine_midpoint_matches_scalar_formula() {
        let s = build_cosine_schedule(1000, COSINE_OFFSET).unwrap();
        // Direct evaluation of f(500) / f(0).
        let f = |u: f64| ((u + 0.008) / 1.008 * std::f64::consts::FRAC_PI_2).cos().powi(2);
        let expected = f(0.5) / f(0.0);
        assert!((s.alpha_bar(500) - expected).abs() < 1e-12);
        assert!((s.alpha_bar(500) - 0.493_843_590_440_6).abs() < 1e-12);
        assert!(s.alpha_bar(1000) < 1e-3);
    }

    #[test]
    fn linear_examples() {
        let s = build_linear_schedule(1, 0.1, 0.1).unwrap();
        assert!((s.alpha(1) - 0.9).abs() < 1e-15);
        assert!((s.alpha_bar(1) - 0.9).abs() < 1e-15);

        let s = build_linear_schedule(2, 0.1, 0.2).unwrap();
        assert!((s.alpha_bar(2) - 0.72).abs() < 1e-15);

        let s = build_linear_schedule(1000, 1e-4, 0.02).unwrap();
        assert!(s.alpha_bars().windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn linear_rejects_bad_betas() {
        assert!(build_linear_schedule(10, 0.0, 0.1).is_err());
        assert!(build_linear_schedule(10, 0.2, 0.1).is_err());
        assert!(build_linear_schedule(10, 0.1, 1.0).is_err());
        assert!(build_linear_schedule(0, 0.1, 0.2).is_err());
    }

    #[test]
    fn grid_examples() {
        let s = build_cosine_schedule(1000, COSINE_OFFSET).unwrap();
        let g = make_time_grid(&s, 3, GridStrategy::Trailing).unwrap();
        assert_eq!(g.steps(), &[3, 2, 1]);

        let g = make_time_grid(&s, 1000, GridStrategy::Uniform).unwrap();
        assert_eq!(g.steps(), (1..=1000).rev().collect::<Vec<_>>().as_slice());

        let g = make_time_grid(&s, 4, GridStrategy::Uniform).unwrap();
        assert_eq!(g.steps(), &[1000, 750, 500, 250]);

        assert!(make_time_grid(&s, 0, GridStrategy::Uniform).is_err());
        assert!(make_time_grid(&s, 1001, GridStrategy::Trailing).is_err());
    }

    #[test]
    fn uniform_ties_round_down() {
        let s = build_linear_schedule(10, 0.01, 0.02).unwrap();
        let g = make_time_grid(&s, 4, GridStrategy::Uniform).unwrap();
        // 10, 7.5, 5, 2.5
        assert_eq!(g.steps(), &[10, 7, 5, 2]);
    }

    #[test]
    fn transitions_end_at_zero() {
        let s = build_linear_schedule(10, 0.01, 0.02).unwrap();
        let g = make_time_grid(&s, 3, GridStrategy::Trailing).unwrap();
        let tr: Vec<_> = g.transitions().collect();
        assert_eq!(tr, vec![(3, 2), (2, 1), (1, 0)]);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let s = build_linear_schedule(2, 0.1, 0.2).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,alpha,alpha_bar");
        assert_eq!(lines.len(), 4);
    }
}
