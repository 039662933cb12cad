use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use ppn_core::denoiser::fit_gaussian_prior;
use ppn_core::harness::{
    export_report, fit_phantom_prior, generate_phantom, run_benchmark, sweep_nfe, ExperimentPlan, PhantomSpec,
    SweepMetric,
};
use ppn_core::io::{
    read_image, read_mask, read_measurement, read_prior, write_image, write_mask, write_measurement, write_png,
    write_prior,
};
use ppn_core::kspace::{add_noise, forward, make_uniform_mask};
use ppn_core::metrics::MetricReport;
use ppn_core::samplers::{reconstruct, SamplerConfig, SamplerKind};
use ppn_core::schedule::{build_cosine_schedule, build_linear_schedule, make_time_grid, GridStrategy, NoiseSchedule};
use ppn_core::Image;

#[derive(Parser)]
#[command(name = "ppn", version, about = "Projected noise sampling for undersampled MRI")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleKind {
    Cosine,
    Linear,
}

#[derive(clap::Args)]
struct ScheduleArgs {
    #[arg(long, value_enum, default_value = "cosine")]
    schedule: ScheduleKind,
    /// Number of diffusion steps.
    #[arg(long = "T", default_value_t = 1000)]
    t: usize,
}

impl ScheduleArgs {
    fn build(&self) -> Result<NoiseSchedule> {
        Ok(match self.schedule {
            ScheduleKind::Cosine => build_cosine_schedule(self.t, 0.008)?,
            ScheduleKind::Linear => build_linear_schedule(self.t, 1e-4, 0.02)?,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the noise schedule as CSV (t, alpha, alpha_bar).
    Schedule {
        #[command(flatten)]
        schedule: ScheduleArgs,
        /// Also print the sampling grid for this many steps.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value = "trailing")]
        grid: GridStrategy,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a Shepp-Logan phantom, or a directory of jittered ones.
    Phantom {
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Jitter seed; omit for the canonical phantom.
        #[arg(long)]
        seed: Option<u64>,
        /// Write this many jittered phantoms (seeds seed, seed+1, ...) into `out` as a directory.
        #[arg(long)]
        count: Option<u64>,
        /// `.grd` or `.png` file, or a directory with `--count`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a low-rank Gaussian prior to every `.grd` image in a directory.
    FitPrior {
        #[arg(long)]
        ensemble_dir: PathBuf,
        #[arg(long, default_value_t = 32)]
        rank: usize,
        #[arg(long, default_value_t = ppn_core::harness::DEFAULT_FLOOR)]
        floor: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a Cartesian column mask.
    Mask {
        #[arg(long)]
        width: usize,
        #[arg(long)]
        accel: usize,
        #[arg(long, default_value_t = 0.04)]
        acs: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate an undersampled measurement of an image.
    Simulate {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct an image from a measurement.
    Recon {
        #[arg(long, default_value = "ppn")]
        method: SamplerKind,
        #[arg(long, default_value_t = 50)]
        nfe: usize,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        zeta: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override the method's default grid.
        #[arg(long)]
        grid: Option<GridStrategy>,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[arg(long)]
        measurement: PathBuf,
        #[arg(long)]
        prior: PathBuf,
        /// `.grd` or `.png`.
        #[arg(long)]
        out: PathBuf,
        /// Per-step diagnostics CSV.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Print `psnr,ssim` for a reconstruction against a reference.
    Eval {
        #[arg(long)]
        recon: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        range: f64,
        /// Clip the reconstruction to [0, range] first.
        #[arg(long)]
        clip: bool,
    },
    /// Run a benchmark plan and write rows, timings and a markdown report.
    Bench {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value = "bench-out")]
        out_dir: PathBuf,
    },
    /// Run an NFE sweep and write curves as CSV and SVG.
    Sweep {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value = "sweep-out")]
        out_dir: PathBuf,
    },
}

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn save_image(path: &Path, image: &Image) -> Result<()> {
    if is_png(path) {
        write_png(path, image, 0.0, 1.0)?;
    } else {
        write_image(path, image)?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn load_plan(path: &Path) -> Result<ExperimentPlan> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ExperimentPlan::parse(&text)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Schedule { schedule, steps, grid, out } => {
            let s = schedule.build()?;
            match out {
                Some(path) => s.write_csv(create(&path)?)?,
                None => s.write_csv(io::stdout().lock())?,
            }
            if let Some(count) = steps {
                let g = make_time_grid(&s, count, grid)?;
                let list: Vec<String> = g.steps().iter().map(|t| t.to_string()).collect();
                eprintln!("grid: {}", list.join(","));
            }
        }
        Command::Phantom { size, seed, count, out } => match count {
            Some(n) => {
                fs::create_dir_all(&out)?;
                let first = seed.unwrap_or(0);
                for s in first..first + n {
                    let img = generate_phantom(&PhantomSpec::jittered(size, s))?;
                    write_image(&out.join(format!("phantom_{s:06}.grd")), &img)?;
                }
                info!("wrote {n} phantoms to {}", out.display());
            }
            None => {
                let spec = seed.map_or(PhantomSpec::canonical(size), |s| PhantomSpec::jittered(size, s));
                save_image(&out, &generate_phantom(&spec)?)?;
            }
        },
        Command::FitPrior { ensemble_dir, rank, floor, out } => {
            let mut paths: Vec<PathBuf> = fs::read_dir(&ensemble_dir)
                .with_context(|| format!("reading {}", ensemble_dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "grd"))
                .collect();
            paths.sort();
            if paths.is_empty() {
                bail!("no .grd images in {}", ensemble_dir.display());
            }
            let images = paths.iter().map(|p| read_image(p)).collect::<ppn_core::Result<Vec<_>>>()?;
            let prior = fit_gaussian_prior(&images, rank, floor)?;
            write_prior(&out, &prior)?;
            info!("fitted rank-{} prior from {} images", prior.rank(), images.len());
        }
        Command::Mask { width, accel, acs, out } => {
            let mask = make_uniform_mask(width, accel, acs)?;
            write_mask(&out, &mask)?;
            info!("kept {} of {width} columns", mask.kept_count());
        }
        Command::Simulate { image, mask, sigma, seed, out } => {
            let x = read_image(&image)?;
            let y = forward(&x, &read_mask(&mask)?)?;
            let y = if sigma > 0.0 { add_noise(&y, sigma, seed)? } else { y };
            write_measurement(&out, &y)?;
        }
        Command::Recon {
            method,
            nfe,
            eta,
            lambda,
            zeta,
            seed,
            grid,
            schedule,
            measurement,
            prior,
            out,
            diagnostics,
        } => {
            let s = schedule.build()?;
            let y = read_measurement(&measurement)?;
            let prior = read_prior(&prior)?;
            let mut cfg = SamplerConfig::new(method, nfe).with_seed(seed);
            if let Some(g) = grid {
                cfg = cfg.with_grid(g);
            }
            if let Some(v) = eta {
                cfg = cfg.with_eta(v);
            }
            if let Some(v) = lambda {
                cfg = cfg.with_lambda(v);
            }
            if let Some(v) = zeta {
                cfg = cfg.with_zeta(v);
            }
            let result = reconstruct(&y, &cfg, &prior, &s)?;
            save_image(&out, &result.image)?;
            if let Some(path) = diagnostics {
                result.write_diagnostics_csv(create(&path)?)?;
            }
            info!("{method}: {} denoiser evaluations", result.nfe);
        }
        Command::Eval { recon, truth, range, clip } => {
            let mut x = read_image(&recon)?;
            if clip {
                x = Image::new(x.as_array().mapv(|v| v.clamp(0.0, range)))?;
            }
            let m = MetricReport::evaluate(&x, &read_image(&truth)?, range)?;
            println!("{},{}", m.psnr_db, m.ssim);
        }
        Command::Bench { plan, out_dir } => {
            let plan = load_plan(&plan)?;
            fs::create_dir_all(&out_dir)?;
            let prior = fit_phantom_prior(plan.size, &plan.prior)?;
            let s = build_cosine_schedule(plan.prior.diffusion_steps, 0.008)?;
            let results = run_benchmark(&plan, &prior, &s)?;
            results.write_csv(create(&out_dir.join("results.csv"))?, false)?;
            results.write_csv(create(&out_dir.join("timing.csv"))?, true)?;
            let report = export_report(&results)?;
            fs::write(out_dir.join("report.md"), &report)?;
            print!("{report}");
        }
        Command::Sweep { plan, out_dir } => {
            let plan = load_plan(&plan)?;
            fs::create_dir_all(&out_dir)?;
            let prior = fit_phantom_prior(plan.size, &plan.prior)?;
            let s = build_cosine_schedule(plan.prior.diffusion_steps, 0.008)?;
            let sweep = sweep_nfe(&plan, &prior, &s)?;
            sweep.results.write_csv(create(&out_dir.join("results.csv"))?, false)?;
            sweep.write_csv(create(&out_dir.join("sweep.csv"))?)?;
            fs::write(out_dir.join("psnr.svg"), sweep.svg(SweepMetric::Psnr))?;
            fs::write(out_dir.join("ssim.svg"), sweep.svg(SweepMetric::Ssim))?;
            info!("wrote sweep to {}", out_dir.display());
        }
    }
    io::stdout().flush()?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    run(Cli::parse())
}
