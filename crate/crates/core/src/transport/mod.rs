//! Sender and receiver state machines.
//!
//! Both endpoints are sans-IO: they consume datagrams and timer wake-ups and
//! emit datagrams, and never touch a socket or a clock themselves. The same
//! code runs under [`netsim`](crate::netsim) and the real
//! [`datagram`](crate::datagram) runner.

mod codec;
mod receiver;
mod redundancy;
mod sender;
mod vegas;

use serde::{Deserialize, Serialize};

use crate::soliton::{DEFAULT_C, DEFAULT_DELTA};
use crate::Micros;

pub use codec::CodecKind;
pub use receiver::{ReceiverState, ReceiverStats};
pub use redundancy::RedundancyEstimator;
pub use sender::{diff_value, AckEffects, GenerationSummary, PushOutcome, SegmentTimer, SenderState, SenderStats};
pub use vegas::{vegas_diff, vegas_update, RttEstimator, VegasWindow, MIN_CWND};

/// How Diff-threshold crossings feed `n_timeout`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TimeoutCounting {
    /// One increment per evaluation round with at least one crossing.
    #[default]
    PerRound,
    /// One increment per crossing segment.
    PerSegment,
}

/// Tunables shared by both endpoints.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportConfig {
    pub codec: CodecKind,
    /// Segment (and symbol) payload size in bytes.
    pub mss: usize,
    /// Coding window size N in segments.
    pub coding_window: usize,
    /// Fraction of the window slid after each generation (`floor(N * f)`,
    /// at least one segment).
    pub slide_fraction: f64,
    pub soliton_c: f64,
    pub soliton_delta: f64,
    pub vegas_alpha: f64,
    pub vegas_beta: f64,
    pub initial_cwnd: f64,
    pub max_cwnd: f64,
    pub initial_ratio: f64,
    pub ratio_floor: f64,
    pub ratio_cap: f64,
    pub warmup_segments: u64,
    pub timeout_counting: TimeoutCounting,
    /// Diff threshold as a multiple of `coding window bytes / base_rtt`.
    pub diff_threshold_factor: f64,
    /// With no segment entering the window for this many smoothed RTTs the
    /// Diff formula cannot cross; a stall round is forced instead.
    pub stall_rtts: f64,
    /// Most segments covered by one recovery generation.
    pub max_recovery_segments: usize,
    pub min_rto_us: Micros,
    pub initial_rtt_us: Micros,
    /// Segments the coding buffer holds before pushing back.
    pub coding_buffer_cap: usize,
    /// Bytes of not-yet-segmented application data accepted.
    pub app_buffer_cap: usize,
    /// Buffered symbols per generation, as a multiple of its size.
    pub pending_factor: usize,
    /// Decoded segments kept below the delivery point for seeding
    /// overlapping generations.
    pub receiver_history: u32,
    pub max_open_generations: usize,
    pub isn: u32,
    pub seed: u64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            codec: CodecKind::Lt,
            mss: 1200,
            coding_window: 16,
            slide_fraction: 0.5,
            soliton_c: DEFAULT_C,
            soliton_delta: DEFAULT_DELTA,
            vegas_alpha: 2.0,
            vegas_beta: 4.0,
            initial_cwnd: 2.0,
            max_cwnd: 4096.0,
            initial_ratio: 1.25,
            ratio_floor: 1.05,
            ratio_cap: 4.0,
            warmup_segments: 100,
            timeout_counting: TimeoutCounting::PerRound,
            diff_threshold_factor: 0.5,
            stall_rtts: 2.0,
            max_recovery_segments: 64,
            min_rto_us: 2_000,
            initial_rtt_us: 200_000,
            coding_buffer_cap: 8192,
            app_buffer_cap: 256 << 20,
            pending_factor: crate::lt_codec::DEFAULT_PENDING_FACTOR,
            receiver_history: 4096,
            max_open_generations: 512,
            isn: 0,
            seed: 0,
        }
    }
}

impl TransportConfig {
    /// Slide distance after a generation of `n` segments.
    pub fn slide_for(&self, n: usize) -> usize {
        ((n as f64 * self.slide_fraction).floor() as usize).clamp(1, n.max(1))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.mss == 0 || self.mss > u16::MAX as usize {
            return Err("mss must be in 1..=65535".into());
        }
        if self.coding_window == 0 || self.coding_window > u16::MAX as usize {
            return Err("coding_window must be in 1..=65535".into());
        }
        if !(self.slide_fraction > 0.0 && self.slide_fraction <= 1.0) {
            return Err("slide_fraction must lie in (0, 1]".into());
        }
        if !(self.ratio_floor >= 1.0 && self.ratio_cap >= self.ratio_floor) {
            return Err("ratio bounds must satisfy 1 <= floor <= cap".into());
        }
        if self.initial_ratio < 1.0 {
            return Err("initial_ratio must be at least 1".into());
        }
        if self.vegas_alpha > self.vegas_beta {
            return Err("vegas_alpha must not exceed vegas_beta".into());
        }
        crate::soliton::DistributionParams::new(1, self.soliton_c, self.soliton_delta).map_err(|e| e.to_string())?;
        Ok(())
    }
}

/// Per-segment and per-generation happenings reported to the host for
/// metrics. `at` is `None` when the host should stamp the event itself
/// (with the arrival time for `GenerationFirstPacket`, otherwise with the
/// time processing finished).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EndpointEvent {
    /// A segment entered the coding window (or was first transmitted).
    SegmentStarted {
        seq: u32,
        at: Micros,
    },
    /// A segment became available at the receiver for the first time.
    SegmentDecoded {
        seq: u32,
    },
    GenerationFirstPacket {
        generation_id: u32,
    },
    GenerationFirstDecode {
        generation_id: u32,
    },
    GenerationComplete {
        generation_id: u32,
    },
}

/// Counters common to every endpoint kind.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EndpointReport {
    pub data_packets_sent: u64,
    pub control_packets_sent: u64,
    pub recovery_symbols: u64,
    pub timeouts: u64,
    pub final_ratio: f64,
    pub final_cwnd: f64,
    pub acks_sent: u64,
    pub acks_received: u64,
    pub malformed: u64,
    pub delivered_bytes: u64,
}

/// The network-facing contract of an endpoint.
pub trait Endpoint: Send {
    fn on_datagram(&mut self, now: Micros, bytes: &[u8], out: &mut Vec<Vec<u8>>);
    fn on_wakeup(&mut self, now: Micros, out: &mut Vec<Vec<u8>>);
    /// Earliest time the endpoint wants `on_wakeup`.
    fn next_wakeup(&self) -> Option<Micros>;
    /// The connection finished and the endpoint has nothing left to send.
    fn is_done(&self) -> bool;
    /// Codec byte-operations performed so far.
    fn decode_ops(&self) -> u64 {
        0
    }
    fn take_events(&mut self) -> Vec<EndpointEvent> {
        Vec::new()
    }
    /// Offers application bytes; returns how many were accepted.
    fn write(&mut self, _bytes: &[u8]) -> usize {
        0
    }
    /// No more application data will be written.
    fn close(&mut self) {}
    /// In-order application bytes delivered since the last call.
    fn read(&mut self) -> Vec<u8> {
        Vec::new()
    }
    fn report(&self) -> EndpointReport;
}
