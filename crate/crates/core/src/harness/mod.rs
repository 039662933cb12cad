//! Phantom synthesis, benchmark grids, NFE sweeps and reports.

mod bench;
mod phantom;
mod plan;
mod report;

pub use bench::{
    benchmark_instance, cell_config, fit_phantom_prior, run_benchmark, BenchmarkResults, BenchmarkRow, CellSummary,
    FittedPrior, ZERO_FILLED,
};
pub use phantom::{generate_phantom, phantom_ensemble, PhantomSpec, MIN_PHANTOM_SIZE, SHEPP_LOGAN};
pub use plan::{ExperimentPlan, PriorSettings, DEFAULT_FLOOR};
pub use report::{export_report, format_mean_std, sweep_nfe, Sweep, SweepMetric};
