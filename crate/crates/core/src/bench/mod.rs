//! Scenario sweeps and codec microbenchmarks, both emitting CSV.
//!
//! Sweep rows follow [`SWEEP_SCHEMA_VERSION`]; codec rows follow
//! [`CODEC_SCHEMA_VERSION`]. Every row carries its schema version as the
//! first column.

mod codec_bench;
mod scenario;
mod sweep;

pub use codec_bench::{
    lt_trial, rlnc_trial, run_codec_bench, CodecBenchConfig, CodecBenchRow, TrialResult, CODEC_SCHEMA_VERSION,
};
pub use scenario::{Scenario, ScenarioError, Sweep, SweepVariable, PRESETS};
pub use sweep::{cmd_sweep, plan, run_sweep, write_csv, SweepPoint, SweepRow, SWEEP_SCHEMA_VERSION};

use std::io::Write;

use crate::exec::Execution;

/// Runs the codec benchmark and writes its CSV to `out`.
pub fn cmd_codec_bench<W: Write>(cfg: &CodecBenchConfig, exec: Execution, out: W) -> csv::Result<Vec<CodecBenchRow>> {
    let rows = run_codec_bench(cfg, exec);
    write_csv(&rows, out)?;
    Ok(rows)
}
