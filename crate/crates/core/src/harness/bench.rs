use std::collections::BTreeMap;
use std::io::Write;
use std::ops::Range;
use std::time::Instant;

use rayon::prelude::*;

use super::phantom::{generate_phantom, phantom_ensemble, PhantomSpec};
use super::plan::{ExperimentPlan, PriorSettings};
use crate::denoiser::{fit_gaussian_prior, GaussianPrior};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::kspace::{add_noise, forward, make_uniform_mask, max_kspace_residual, zero_filled, Measurement};
use crate::metrics::{psnr, ssim, summarize, Summary};
use crate::samplers::{reconstruct, SamplerConfig, SamplerKind};
use crate::schedule::NoiseSchedule;

/// Pseudo-method name of the zero-filled baseline.
pub const ZERO_FILLED: &str = "zf";

/// A Gaussian prior together with the phantom seeds it was fitted on.
#[derive(Debug, Clone)]
pub struct FittedPrior {
    pub prior: GaussianPrior,
    pub train_seeds: Range<u64>,
}

/// Fits the PCA prior on jittered phantoms with the settings' seed range.
pub fn fit_phantom_prior(size: usize, settings: &PriorSettings) -> Result<FittedPrior> {
    let seeds = settings.train_seeds();
    let ensemble = phantom_ensemble(&PhantomSpec::jittered(size, 0), seeds.clone())?;
    Ok(FittedPrior { prior: fit_gaussian_prior(&ensemble, settings.rank, settings.floor)?, train_seeds: seeds })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub method: String,
    pub accel: usize,
    /// 0 for zero-filled rows.
    pub nfe: usize,
    pub trial: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub seconds: f64,
    /// `max |M F x - y|` of the unclipped reconstruction.
    pub residual: f64,
    pub error: Option<String>,
}

impl BenchmarkRow {
    fn sort_key(&self) -> (String, usize, usize, usize) {
        (self.method.clone(), self.accel, self.nfe, self.trial)
    }

    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub method: String,
    pub accel: usize,
    pub nfe: usize,
    pub psnr: Summary,
    pub ssim: Summary,
    pub seconds: Summary,
    pub failures: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchmarkResults {
    /// Sorted by method, acceleration, NFE and trial.
    pub rows: Vec<BenchmarkRow>,
}

fn fmt_float(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.6}")
    }
}

impl BenchmarkResults {
    /// Writes `method,R,S,trial,psnr,ssim,seconds,residual,error`.
    /// Without timing the `seconds` column is omitted, which makes the output
    /// a deterministic function of the plan.
    pub fn write_csv<W: Write>(&self, out: W, with_timing: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["method", "R", "S", "trial", "psnr", "ssim"];
        if with_timing {
            header.push("seconds");
        }
        header.extend(["residual", "error"]);
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.method.clone(), r.accel.to_string(), r.nfe.to_string(), r.trial.to_string()];
            if r.failed() {
                rec.extend([String::new(), String::new()]);
            } else {
                rec.extend([fmt_float(r.psnr), fmt_float(r.ssim)]);
            }
            if with_timing {
                rec.push(format!("{:.6}", r.seconds));
            }
            rec.push(if r.failed() { String::new() } else { format!("{:e}", r.residual) });
            rec.push(r.error.clone().unwrap_or_default());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Mean and standard deviation per (method, R, S) over successful rows.
    pub fn aggregate(&self) -> Result<Vec<CellSummary>> {
        let mut cells: BTreeMap<(String, usize, usize), Vec<&BenchmarkRow>> = BTreeMap::new();
        for r in &self.rows {
            cells.entry((r.method.clone(), r.accel, r.nfe)).or_default().push(r);
        }
        let mut out = Vec::with_capacity(cells.len());
        for ((method, accel, nfe), rows) in cells {
            let ok: Vec<&BenchmarkRow> = rows.iter().copied().filter(|r| !r.failed()).collect();
            if ok.is_empty() {
                continue;
            }
            let col = |f: fn(&BenchmarkRow) -> f64| summarize(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
            out.push(CellSummary {
                psnr: col(|r| r.psnr)?,
                ssim: col(|r| r.ssim)?,
                seconds: col(|r| r.seconds)?,
                failures: rows.len() - ok.len(),
                method,
                accel,
                nfe,
            });
        }
        Ok(out)
    }

    pub fn select<'a>(&'a self, method: &'a str, accel: usize, nfe: usize) -> impl Iterator<Item = &'a BenchmarkRow> {
        self.rows.iter().filter(move |r| r.method == method && r.accel == accel && r.nfe == nfe)
    }
}

fn mix_seed(base: u64, accel: usize, trial: usize) -> u64 {
    let h = (accel as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (trial as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    base ^ h.rotate_left(17)
}

/// The test phantom and its measurement for one (acceleration, trial).
pub fn benchmark_instance(plan: &ExperimentPlan, accel: usize, trial: usize) -> Result<(Image, Measurement)> {
    let truth = generate_phantom(&PhantomSpec::jittered(plan.size, plan.test_seed + trial as u64))?;
    let mask = make_uniform_mask(plan.size, accel, plan.acs_fraction)?;
    let mut y = forward(&truth, &mask)?;
    if plan.sigma_e > 0.0 {
        y = add_noise(&y, plan.sigma_e, mix_seed(plan.seed, accel, trial))?;
    }
    Ok((truth, y))
}

/// Sampler configuration of one benchmark cell.
pub fn cell_config(plan: &ExperimentPlan, kind: SamplerKind, nfe: usize, trial: usize) -> SamplerConfig {
    SamplerConfig::new(kind, nfe)
        .with_lambda(plan.lambda)
        .with_zeta(plan.zeta)
        .with_seed(plan.seed.wrapping_add(trial as u64))
}

#[derive(Debug, Clone, Copy)]
enum Task {
    ZeroFilled { accel: usize, trial: usize },
    Sampler { kind: SamplerKind, accel: usize, nfe: usize, trial: usize },
}

fn run_task(plan: &ExperimentPlan, prior: &GaussianPrior, schedule: &NoiseSchedule, task: Task) -> BenchmarkRow {
    let (method, accel, nfe, trial) = match task {
        Task::ZeroFilled { accel, trial } => (ZERO_FILLED.to_string(), accel, 0, trial),
        Task::Sampler { kind, accel, nfe, trial } => (kind.to_string(), accel, nfe, trial),
    };
    let mut row = BenchmarkRow {
        method,
        accel,
        nfe,
        trial,
        psnr: f64::NAN,
        ssim: f64::NAN,
        seconds: 0.0,
        residual: f64::NAN,
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let (truth, y) = benchmark_instance(plan, accel, trial)?;
        let start = Instant::now();
        let recon = match task {
            Task::ZeroFilled { .. } => zero_filled(&y),
            Task::Sampler { kind, .. } => reconstruct(&y, &cell_config(plan, kind, nfe, trial), prior, schedule)?.image,
        };
        row.seconds = start.elapsed().as_secs_f64();
        row.residual = max_kspace_residual(recon.view(), &y)?;
        let clipped = recon.clipped(0.0, 1.0);
        row.psnr = psnr(&clipped, &truth, 1.0)?;
        row.ssim = ssim(&clipped, &truth, 1.0)?;
        Ok(())
    })();
    if let Err(e) = outcome {
        log::warn!("{} R={} S={} trial={} failed: {e}", row.method, accel, nfe, trial);
        row.error = Some(e.to_string());
    }
    row
}

fn check_split(plan: &ExperimentPlan, prior: &FittedPrior) -> Result<()> {
    let (test, train) = (plan.test_seeds(), &prior.train_seeds);
    if test.start < train.end && train.start < test.end {
        return Err(Error::Config(format!("test phantom seeds {test:?} overlap the prior's training seeds {train:?}")));
    }
    if prior.prior.shape() != (plan.size, plan.size) {
        return Err(Error::Shape { expected: (plan.size, plan.size), got: prior.prior.shape() });
    }
    Ok(())
}

/// Runs every cell of `plan` on a worker pool. Failed runs are recorded in
/// their row's `error` column.
pub fn run_benchmark(plan: &ExperimentPlan, prior: &FittedPrior, schedule: &NoiseSchedule) -> Result<BenchmarkResults> {
    plan.validate()?;
    check_split(plan, prior)?;
    let mut tasks = Vec::with_capacity(plan.total_runs() + plan.accelerations.len() * plan.trials);
    for &accel in &plan.accelerations {
        for trial in 0..plan.trials {
            if plan.zero_filled {
                tasks.push(Task::ZeroFilled { accel, trial });
            }
            for &kind in &plan.methods {
                for &nfe in &plan.nfes {
                    tasks.push(Task::Sampler { kind, accel, nfe, trial });
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let mut rows: Vec<BenchmarkRow> =
        pool.install(|| tasks.par_iter().map(|&t| run_task(plan, &prior.prior, schedule, t)).collect());
    rows.sort_by_key(BenchmarkRow::sort_key);
    Ok(BenchmarkResults { rows })
}
