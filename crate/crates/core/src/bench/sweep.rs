//! Scenario sweeps: one simulation per (sweep value, protocol, repetition).

use std::io::Write;

use serde::Serialize;

use super::scenario::{Scenario, SweepVariable};
use crate::exec::Execution;
use crate::netsim::{simulate, LinkConfig, Metrics, Protocol, RunSpec, SimOptions};
use crate::Micros;

/// Bumped whenever a sweep column is added, removed, renamed or reordered.
pub const SWEEP_SCHEMA_VERSION: u32 = 1;

/// One CSV row: the run's coordinates followed by its [`Metrics`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub schema_version: u32,
    pub scenario: String,
    pub protocol: &'static str,
    pub sweep_variable: &'static str,
    pub sweep_value: f64,
    pub repetition: usize,
    pub seed: u64,
    pub links: usize,
    pub path_loss: f64,
    pub coding_window: usize,
    pub coding_window_bytes: usize,
    pub mss: usize,
    pub diff_threshold_factor: f64,
    /// Empty for an unlimited CPU.
    pub cpu_ops_per_sec: Option<f64>,
    pub workload_bytes: usize,
    /// Empty on success, a diagnostic otherwise.
    pub error: String,
    pub completed: bool,
    pub duration_us: Micros,
    pub delivered_bytes: u64,
    pub goodput: f64,
    pub latency_samples: u64,
    pub latency_mean_us: f64,
    pub latency_p50_us: f64,
    pub latency_p95_us: f64,
    pub generations: u64,
    pub first_decode_mean_us: f64,
    pub full_decode_mean_us: f64,
    pub packets_sent: u64,
    pub data_packets_sent: u64,
    pub ack_packets_sent: u64,
    pub packets_lost: u64,
    pub packets_dropped: u64,
    pub recovery_symbols: u64,
    pub timeouts: u64,
    pub final_ratio: f64,
    pub final_cwnd: f64,
    pub decode_ops: u64,
    pub trace_digest: u64,
}

/// A fully resolved run of a sweep.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub protocol: Protocol,
    pub value: f64,
    pub repetition: usize,
    pub spec: RunSpec,
    pub path_loss: f64,
}

/// Expands `scenario` into runs, ordered by sweep value, then protocol,
/// then repetition.
pub fn plan(scenario: &Scenario) -> Vec<SweepPoint> {
    let mut out = Vec::new();
    for &value in &scenario.sweep.values {
        let mut transport = scenario.transport.clone();
        let mut links = scenario.links.clone();
        match scenario.sweep.variable {
            SweepVariable::LossRate => {
                let per_link = LinkConfig::split_path_loss(value, links.len());
                for l in &mut links {
                    l.loss_rate = per_link;
                }
            }
            SweepVariable::CodingWindowBytes => transport.coding_window = (value as usize / transport.mss).max(1),
            SweepVariable::GenerationSize => transport.coding_window = value as usize,
        }
        let path_loss = 1.0 - links.iter().map(|l| 1.0 - l.loss_rate).product::<f64>();
        for &protocol in &scenario.protocols {
            for (repetition, &seed) in scenario.seeds.iter().enumerate() {
                let opts = SimOptions {
                    seed,
                    cpu: scenario.cpu,
                    // the time limit bounds a sweep run; a stall is reported, not aborted
                    stall_limit_us: Micros::MAX,
                    record_trace: false,
                    keep_output: false,
                };
                let spec = RunSpec {
                    protocol,
                    transport: transport.clone(),
                    links: links.clone(),
                    opts,
                    workload_bytes: scenario.workload_bytes,
                    time_limit_us: (scenario.time_limit_s * 1e6).round() as Micros,
                };
                out.push(SweepPoint { protocol, value, repetition, spec, path_loss });
            }
        }
    }
    out
}

fn row(scenario: &Scenario, point: &SweepPoint) -> SweepRow {
    let (metrics, error) = match simulate(&point.spec) {
        Ok(run) => (run.metrics, String::new()),
        Err(e) => (Metrics::default(), e.to_string()),
    };
    let t = &point.spec.transport;
    let m = metrics;
    SweepRow {
        schema_version: SWEEP_SCHEMA_VERSION,
        scenario: scenario.name.clone(),
        protocol: point.protocol.name(),
        sweep_variable: scenario.sweep.variable.name(),
        sweep_value: point.value,
        repetition: point.repetition,
        seed: point.spec.opts.seed,
        links: point.spec.links.len(),
        path_loss: point.path_loss,
        coding_window: t.coding_window,
        coding_window_bytes: t.coding_window * t.mss,
        mss: t.mss,
        diff_threshold_factor: t.diff_threshold_factor,
        cpu_ops_per_sec: scenario.cpu.ops_per_sec(),
        workload_bytes: point.spec.workload_bytes,
        error,
        completed: m.completed,
        duration_us: m.duration_us,
        delivered_bytes: m.delivered_bytes,
        goodput: m.goodput,
        latency_samples: m.latency_samples,
        latency_mean_us: m.latency_mean_us,
        latency_p50_us: m.latency_p50_us,
        latency_p95_us: m.latency_p95_us,
        generations: m.generations,
        first_decode_mean_us: m.first_decode_mean_us,
        full_decode_mean_us: m.full_decode_mean_us,
        packets_sent: m.packets_sent,
        data_packets_sent: m.data_packets_sent,
        ack_packets_sent: m.ack_packets_sent,
        packets_lost: m.packets_lost,
        packets_dropped: m.packets_dropped,
        recovery_symbols: m.recovery_symbols,
        timeouts: m.timeouts,
        final_ratio: m.final_ratio,
        final_cwnd: m.final_cwnd,
        decode_ops: m.decode_ops,
        trace_digest: m.trace_digest,
    }
}

/// Runs every point of `scenario`; rows come back in [`plan`] order.
pub fn run_sweep(scenario: &Scenario, exec: Execution) -> Vec<SweepRow> {
    let points = plan(scenario);
    exec.map(points, |p| row(scenario, &p))
}

/// Writes rows as CSV with a header line.
pub fn write_csv<W: Write, T: Serialize>(rows: &[T], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs `scenario` and writes its CSV to `out`.
pub fn cmd_sweep<W: Write>(scenario: &Scenario, exec: Execution, out: W) -> csv::Result<Vec<SweepRow>> {
    let rows = run_sweep(scenario, exec);
    write_csv(&rows, out)?;
    Ok(rows)
}
