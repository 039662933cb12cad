//! Reverse processes: unconditional DDPM/DDIM, the predictor-projector-noisor
//! (PPN) sampler, and three measurement-guided baselines.
//!
//! | kind       | per step                                                        | default grid |
//! |------------|-----------------------------------------------------------------|--------------|
//! | `ppn`      | predict `x_{0|t}`, project onto `y`, re-noise with fresh noise  | trailing     |
//! | `ddnm`     | predict, project, stochastic DDIM update from the projection   | uniform      |
//! | `medscore` | DDIM update, then blend kept k-space toward a noised `y_{t-1}`  | uniform      |
//! | `dps`      | DDIM update, then a residual-normalized gradient step          | uniform      |
//!
//! Every run makes exactly one `eps` evaluation per visited step.

mod noise;
mod steps;

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;

pub use noise::{Draw, FixedNoise, NoiseSource, NoiseStreams, ZeroNoise};
pub use steps::{
    blend_project, ddim_sigma, ddim_step, ddim_update, ddpm_step, guidance_gradient, noised_measurement, ppn_init,
    ppn_step, predict_x0, renoise, x0_from_eps, PpnStep,
};

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::kspace::{data_fidelity_array, kspace_residual, project_array, Measurement};
use crate::schedule::{make_time_grid, GridStrategy, NoiseSchedule, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SamplerKind {
    Ddpm,
    Ddim,
    Ppn,
    Ddnm,
    MedScore,
    Dps,
}

impl SamplerKind {
    pub const CONDITIONAL: [SamplerKind; 4] =
        [SamplerKind::Ppn, SamplerKind::Ddnm, SamplerKind::MedScore, SamplerKind::Dps];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Ddpm => "ddpm",
            SamplerKind::Ddim => "ddim",
            SamplerKind::Ppn => "ppn",
            SamplerKind::Ddnm => "ddnm",
            SamplerKind::MedScore => "medscore",
            SamplerKind::Dps => "dps",
        }
    }

    pub fn is_conditional(self) -> bool {
        !matches!(self, SamplerKind::Ddpm | SamplerKind::Ddim)
    }

    pub fn default_grid(self) -> GridStrategy {
        match self {
            SamplerKind::Ppn => GridStrategy::Trailing,
            SamplerKind::Ddpm => GridStrategy::Trailing,
            _ => GridStrategy::Uniform,
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ddpm" => SamplerKind::Ddpm,
            "ddim" => SamplerKind::Ddim,
            "ppn" => SamplerKind::Ppn,
            "ddnm" => SamplerKind::Ddnm,
            "medscore" => SamplerKind::MedScore,
            "dps" => SamplerKind::Dps,
            other => return Err(Error::InvalidArgument(format!("unknown sampler '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// Number of visited steps, i.e. denoiser evaluations.
    pub steps: usize,
    pub eta: f64,
    /// Weight of the noised measurement in the MedScore blend.
    pub lambda: f64,
    /// DPS guidance scale.
    pub zeta: f64,
    pub seed: u64,
    pub grid: GridStrategy,
}

impl SamplerConfig {
    /// Defaults: `eta = 1` (0 for `ddim`), `lambda = 1`, `zeta = 10`, the
    /// kind's default grid and seed 0.
    pub fn new(kind: SamplerKind, steps: usize) -> Self {
        Self {
            kind,
            steps,
            eta: if kind == SamplerKind::Ddim { 0.0 } else { 1.0 },
            lambda: 1.0,
            zeta: 10.0,
            seed: 0,
            grid: kind.default_grid(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_grid(mut self, grid: GridStrategy) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_zeta(mut self, zeta: f64) -> Self {
        self.zeta = zeta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("step count must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::Config(format!("eta must be in [0, 1], got {}", self.eta)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda must be in [0, 1], got {}", self.lambda)));
        }
        if !(self.zeta >= 0.0 && self.zeta.is_finite()) {
            return Err(Error::Config(format!("zeta must be >= 0, got {}", self.zeta)));
        }
        Ok(())
    }

    fn grid(&self, schedule: &NoiseSchedule) -> Result<TimeGrid> {
        self.validate()?;
        make_time_grid(schedule, self.steps, self.grid)
    }
}

/// Diagnostics for one visited step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    /// `||y - M F x||` of the step's data estimate; `None` without a
    /// measurement.
    pub fidelity: Option<f64>,
    pub millis: f64,
    /// DPS only: the guidance term was not applied (zero residual or
    /// `zeta = 0`).
    pub guidance_skipped: bool,
}

#[derive(Debug, Clone)]
pub struct ReconResult {
    pub image: Image,
    pub diagnostics: Vec<StepRecord>,
    /// Denoiser `eps` evaluations.
    pub nfe: usize,
    /// Vector-Jacobian products (DPS only).
    pub vjp_evals: usize,
    pub seed: u64,
}

impl ReconResult {
    /// Writes `t,fidelity,ms` rows.
    pub fn write_diagnostics_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "fidelity", "ms"])?;
        for r in &self.diagnostics {
            w.write_record([
                r.t.to_string(),
                r.fidelity.map(|f| format!("{f:e}")).unwrap_or_default(),
                format!("{:.4}", r.millis),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Trajectory {
    records: Vec<StepRecord>,
    nfe: usize,
    vjp_evals: usize,
    seed: u64,
}

impl Trajectory {
    fn new(seed: u64, capacity: usize) -> Self {
        Self { records: Vec::with_capacity(capacity), nfe: 0, vjp_evals: 0, seed }
    }

    fn finish(self, x: Array2<f64>) -> Result<ReconResult> {
        Ok(ReconResult {
            image: Image::new(x)?,
            diagnostics: self.records,
            nfe: self.nfe,
            vjp_evals: self.vjp_evals,
            seed: self.seed,
        })
    }
}

fn check_kind(config: &SamplerConfig, expected: SamplerKind) -> Result<()> {
    if config.kind != expected {
        return Err(Error::Config(format!("expected a {expected} configuration, got {}", config.kind)));
    }
    Ok(())
}

/// Dispatches a measurement-guided run on `config.kind`.
pub fn reconstruct<D: Denoiser + ?Sized>(
    y: &Measurement,
    config: &SamplerConfig,
    denoiser: &D,
    schedule: &NoiseSchedule,
) -> Result<ReconResult> {
    match config.kind {
        SamplerKind::Ppn => run_ppn(y, config, denoiser, schedule),
        SamplerKind::Ddnm => run_ddnm(y, config, denoiser, schedule),
        SamplerKind::MedScore => run_medscore(y, config, denoiser, schedule),
        SamplerKind::Dps => run_dps(y, config, denoiser, schedule),
        kind => Err(Error::Config(format!("{kind} does not use a measurement"))),
    }
}

/// Predictor-projector-noisor sampling.
///
/// Starts from the zero-filled image noised to the first grid level, then at
/// each step predicts the clean image, replaces its acquired k-space columns
/// with the measurement and re-noises the result to the next level with
/// fresh Gaussian noise. The last step lands on `abar_0 = 1`, so the output
/// is the projected prediction itself.
pub fn run_ppn<D: Denoiser + ?Sized>(
    y: &Measurement,
    config: &SamplerConfig,
    denoiser: &D,
    schedule: &NoiseSchedule,
) -> Result<ReconResult> {
    check_kind(config, SamplerKind::Ppn)?;
    let grid = config.grid(schedule)?;
    let streams = NoiseStreams::new(config.seed);
    let mut traj = Trajectory::new(config.seed, grid.len());

    let mut x = ppn_init(y, grid.first(), schedule, &mut streams.stream(grid.first(), Draw::Init))?;
    for (t, t_prev) in grid.transitions() {
        let start = Instant::now();
        let step = ppn_step(x.view(), t, t_prev, y, denoiser, schedule, &mut streams.stream(t, Draw::Step))?;
        traj.nfe += 1;
        let fidelity = data_fidelity_array(step.projected.view(), y)?;
        x = step.next;
        traj.records.push(StepRecord {
            t,
            fidelity: Some(fidelity),
            millis: start.elapsed().as_secs_f64() * 1e3,
            guidance_skipped: false,
        });
    }
    traj.finish(x)
}

fn gaussian_start(streams: &NoiseStreams, grid: &TimeGrid, shape: (usize, usize)) -> Array2<f64> {
    streams.normal_grid(grid.first(), Draw::Init, shape)
}

/// Projection baseline: the PPN prediction and projection, followed by a
/// stochastic DDIM update (`eta`, default 1) from the projected estimate
/// instead of the fresh-noise re-noising. Starts from pure Gaussian noise.
pub fn run_ddnm<D: Denoiser + ?Sized>(
    y: &Measurement,
    config: &SamplerConfig,
    denoiser: &D,
    schedule: &NoiseSchedule,
) -> Result<ReconResult> {
    check_kind(config, SamplerKind::Ddnm)?;
    let grid = config.grid(schedule)?;
    let streams = NoiseStreams::new(config.seed);
    let mut traj = Trajectory::new(config.seed, grid.len());

    let mut x = gaussian_start(&streams, &grid, y.shape());
    for (t, t_prev) in grid.transitions() {
        let start = Instant::now();
        let eps = denoiser.eps(x.view(), t, schedule)?;
        traj.nfe += 1;
        let x0 = x0_from_eps(x.view(), eps.view(), t, schedule)?;
        let projected = project_array(x0.view(), y)?;
        let fidelity = data_fidelity_array(projected.view(), y)?;
        x = ddim_update(
            projected.view(),
            eps.view(),
            t,
            t_prev,
            schedule,
            config.eta,
            &mut streams.stream(t, Draw::Step),
        )?;
        traj.records.push(StepRecord {
            t,
            fidelity: Some(fidelity),
            millis: start.elapsed().as_secs_f64() * 1e3,
            guidance_skipped: false,
        });
    }
    traj.finish(x)
}

/// Projection at `x_t`: an unconditional DDIM update, then the kept k-space
/// columns are blended toward the noised measurement
/// `y_{t_prev} = sqrt(abar) y + sqrt(1 - abar) M F z` with weight `lambda`.
pub fn run_medscore<D: Denoiser + ?Sized>(
    y: &Measurement,
    config: &SamplerConfig,
    denoiser: &D,
    schedule: &NoiseSchedule,
) -> Result<ReconResult> {
    check_kind(config, SamplerKind::MedScore)?;
    let grid = config.grid(schedule)?;
    let streams = NoiseStreams::new(config.seed);
    let mut traj = Trajectory::new(config.seed, grid.len());

    let mut x = gaussian_start(&streams, &grid, y.shape());
    for (t, t_prev) in grid.transitions() {
        let start = Instant::now();
        let eps = denoiser.eps(x.view(), t, schedule)?;
        traj.nfe += 1;
        let x0 = x0_from_eps(x.view(), eps.view(), t, schedule)?;
        x = ddim_update(x0.view(), eps.view(), t, t_prev, schedule, config.eta, &mut streams.stream(t, Draw::Step))?;
        if config.lambda > 0.0 {
            let y_prev = noised_measurement(y, t_prev, schedule, &mut streams.stream(t, Draw::Measurement));
            x = blend_project(x.view(), &y_prev, y, config.lambda);
        }
        traj.records.push(StepRecord {
            t,
            fidelity: Some(data_fidelity_array(x.view(), y)?),
            millis: start.elapsed().as_secs_f64() * 1e3,
            guidance_skipped: false,
        });
    }
    traj.finish(x)
}

/// Gradient guidance: an unconditional DDIM update followed by
/// `x -= zeta / ||r|| * grad_{x_t} ||y - M F x_{0|t}(x_t)||^2`.
pub fn run_dps<D: Denoiser + ?Sized>(
    y: &Measurement,
    config: &SamplerConfig,
    denoiser: &D,
    schedule: &NoiseSchedule,
) -> Result<ReconResult> {
    check_kind(config, SamplerKind::Dps)?;
    let grid = config.grid(schedule)?;
    let streams = NoiseStreams::new(config.seed);
    let mut traj = Trajectory::new(config.seed, grid.len());

    let mut x = gaussian_start(&streams, &grid, y.shape());
    for (t, t_prev) in grid.transitions() {
        let start = Instant::now();
        let eps = denoiser.eps(x.view(), t, schedule)?;
        traj.nfe += 1;
        let x0 = x0_from_eps(x.view(), eps.view(), t, schedule)?;
        let residual = kspace_residual(x0.view(), y)?;
        let norm = residual.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();

        let mut next =
            ddim_update(x0.view(), eps.view(), t, t_prev, schedule, config.eta, &mut streams.stream(t, Draw::Step))?;
        let skipped = norm == 0.0 || config.zeta == 0.0;
        if !skipped {
            let grad = steps::guidance_from_residual(x.view(), t, &residual, denoiser, schedule)?;
            traj.vjp_evals += 1;
            next.scaled_add(-config.zeta / norm, &grad);
        }
        x = next;
        traj.records.push(StepRecord {
            t,
            fidelity: Some(norm),
            millis: start.elapsed().as_secs_f64() * 1e3,
            guidance_skipped: skipped,
        });
    }
    traj.finish(x)
}

/// Unconditional generation from `x_T ~ N(0, I)` (or the first grid level).
///
/// `ddpm` applies the ancestral step and so requires the full grid
/// (`steps == T`); `ddim` accepts any grid.
pub fn run_unconditional<D: Denoiser + ?Sized>(
    config: &SamplerConfig,
    denoiser: &D,
    schedule: &NoiseSchedule,
    shape: (usize, usize),
) -> Result<ReconResult> {
    let grid = config.grid(schedule)?;
    let streams = NoiseStreams::new(config.seed);
    let mut traj = Trajectory::new(config.seed, grid.len());
    match config.kind {
        SamplerKind::Ddpm if config.steps != schedule.steps() => {
            return Err(Error::Config(format!("ddpm visits every step; use steps = {} or ddim", schedule.steps())))
        }
        SamplerKind::Ddpm | SamplerKind::Ddim => {}
        kind => return Err(Error::Config(format!("{kind} needs a measurement"))),
    }

    let mut x = gaussian_start(&streams, &grid, shape);
    for (t, t_prev) in grid.transitions() {
        let start = Instant::now();
        let mut rng = streams.stream(t, Draw::Step);
        x = match config.kind {
            SamplerKind::Ddpm => ddpm_step(x.view(), t, denoiser, schedule, &mut rng)?,
            _ => ddim_step(x.view(), t, t_prev, denoiser, schedule, config.eta, &mut rng)?,
        };
        traj.nfe += 1;
        traj.records.push(StepRecord {
            t,
            fidelity: None,
            millis: start.elapsed().as_secs_f64() * 1e3,
            guidance_skipped: false,
        });
    }
    traj.finish(x)
}
