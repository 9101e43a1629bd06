//! Monte Carlo experiments: size sweeps over prefix lengths, coverage
//! checks, the higher-order table and output writers.

mod bench;
mod config;
mod output;
mod sweep;

pub use bench::{bench, BenchRow};
pub use config::{BoundForm, ExperimentConfig, Method, SystemSpec};
pub use output::{emit_outputs, parse_csv, to_csv, to_gnuplot, to_svg, OutputFormat};
pub use sweep::{
    bound_params, dmr_bound_at, eoa_bound_at, fit_shrinkage_rate, run_coverage, run_size_sweep,
    run_size_sweep_detailed, run_table, simulate_trial, SizeRow, SizeTable, SweepResult, TableRow,
    DMR_NU,
};
