//! LT peeling versus RLNC elimination on a single generation.
//!
//! Symbols arrive at a fixed interval. Each is decoded on a modeled CPU as
//! soon as it arrives and the CPU is free, so decode times include both the
//! wait for symbols and the codec's own work.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::exec::Execution;
use crate::lt_codec::{self, DecoderState, Generation};
use crate::netsim::CpuModel;
use crate::rlnc_codec::{self, EliminationState};
use crate::soliton::{robust_soliton, DegreeDistribution, DistributionParams};
use crate::Micros;

/// Bumped whenever a codec-bench column changes.
pub const CODEC_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct CodecBenchConfig {
    pub sizes: Vec<usize>,
    /// Symbols sent up front as a multiple of the generation size; more
    /// follow one at a time until the generation decodes.
    pub overhead: f64,
    pub repetitions: usize,
    pub symbol_len: usize,
    pub cpu: CpuModel,
    pub arrival_interval_us: Micros,
    pub seed: u64,
    pub soliton_c: f64,
    pub soliton_delta: f64,
}

impl Default for CodecBenchConfig {
    fn default() -> Self {
        CodecBenchConfig {
            sizes: vec![1, 2, 4, 8, 16, 32, 64, 128],
            overhead: 1.25,
            repetitions: 100,
            symbol_len: 1200,
            cpu: CpuModel::Pc,
            arrival_interval_us: 1_000,
            seed: 1,
            soliton_c: crate::soliton::DEFAULT_C,
            soliton_delta: crate::soliton::DEFAULT_DELTA,
        }
    }
}

/// Per-size averages over all repetitions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CodecBenchRow {
    pub schema_version: u32,
    pub generation_size: usize,
    pub symbol_len: usize,
    pub overhead: f64,
    pub repetitions: usize,
    pub cpu_ops_per_sec: Option<f64>,
    pub arrival_interval_us: Micros,
    /// Repetitions that decoded before the symbol cap.
    pub lt_completed: usize,
    pub lt_symbols_mean: f64,
    pub lt_ops_mean: f64,
    pub lt_first_decode_us: f64,
    pub lt_all_decode_us: f64,
    pub lt_wall_us: f64,
    pub rlnc_completed: usize,
    pub rlnc_symbols_mean: f64,
    pub rlnc_ops_mean: f64,
    pub rlnc_first_decode_us: f64,
    pub rlnc_all_decode_us: f64,
    pub rlnc_wall_us: f64,
    /// `rlnc_ops_mean / lt_ops_mean`.
    pub ops_ratio: f64,
}

/// Outcome of decoding one generation with one codec.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrialResult {
    pub completed: bool,
    pub symbols: usize,
    pub ops: u64,
    pub first_decode_us: Micros,
    pub all_decode_us: Micros,
    pub wall_us: f64,
}

/// Modeled receive timeline: symbol `i` arrives at `i * interval` and is
/// processed when the CPU is free.
struct Timeline {
    cpu: CpuModel,
    interval: Micros,
    busy_until: Micros,
}

impl Timeline {
    fn process(&mut self, index: usize, ops: u64) -> Micros {
        let arrive = index as Micros * self.interval;
        let start = arrive.max(self.busy_until);
        let cost = match self.cpu.ops_per_sec() {
            Some(rate) => (ops as f64 * 1e6 / rate).ceil() as Micros,
            None => 0,
        };
        self.busy_until = start + cost;
        self.busy_until
    }
}

fn symbol_cap(n: usize) -> usize {
    10 * n + 64
}

fn generation(n: usize, symbol_len: usize, rng: &mut ChaCha8Rng) -> Generation {
    let payloads = (0..n)
        .map(|_| {
            let mut p = vec![0u8; symbol_len];
            rng.fill(&mut p[..]);
            p
        })
        .collect();
    Generation::new(0, 0, payloads).expect("non-empty uniform payloads")
}

fn distribution(n: usize, c: f64, delta: f64) -> DegreeDistribution {
    DistributionParams::new(n, c, delta)
        .and_then(robust_soliton)
        .or_else(|_| robust_soliton(DistributionParams::with_defaults(n)?))
        .expect("defaults valid for all k")
}

/// Feeds LT symbols from the sender's generation policy into a peeling
/// decoder until every segment is known.
pub fn lt_trial(cfg: &CodecBenchConfig, n: usize, seed: u64) -> TrialResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gen = generation(n, cfg.symbol_len, &mut rng);
    let dist = distribution(n, cfg.soliton_c, cfg.soliton_delta);
    let budget = (n as f64 * cfg.overhead).ceil() as usize;
    let mut symbols = lt_codec::encode_generation(&gen, &dist, budget, &mut rng);
    while symbols.len() < symbol_cap(n) {
        symbols.push(lt_codec::encode_symbol(&gen, &dist, &mut rng));
    }

    let mut dec = DecoderState::for_generation(&gen);
    dec.set_max_pending(symbol_cap(n));
    let mut tl = Timeline { cpu: cfg.cpu, interval: cfg.arrival_interval_us, busy_until: 0 };
    let mut res = TrialResult::default();
    let mut first = None;
    let wall = Instant::now();
    for (i, sym) in symbols.iter().enumerate() {
        let before = dec.xor_ops();
        dec.ingest_symbol(sym).expect("symbol belongs to the generation");
        let done = tl.process(i, dec.xor_ops() - before + cfg.symbol_len as u64);
        res.symbols = i + 1;
        if first.is_none() && dec.known_count() > 0 {
            first = Some(done);
        }
        if dec.is_complete() {
            res.completed = true;
            res.all_decode_us = done;
            break;
        }
    }
    res.wall_us = wall.elapsed().as_secs_f64() * 1e6;
    res.first_decode_us = first.unwrap_or_default();
    res.ops = dec.xor_ops();
    if res.completed {
        let out = dec.drain_decoded();
        debug_assert!(out.iter().all(|s| s.payload == gen.segments[s.seq as usize]));
    }
    res
}

/// Feeds dense random combinations into an elimination decoder until it
/// reaches full rank. Nothing decodes before then.
pub fn rlnc_trial(cfg: &CodecBenchConfig, n: usize, seed: u64) -> TrialResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gen = generation(n, cfg.symbol_len, &mut rng);
    let packets: Vec<_> = (0..symbol_cap(n)).map(|_| rlnc_codec::rlnc_encode(&gen, &mut rng)).collect();

    let mut dec = EliminationState::new(0, 0, n, cfg.symbol_len);
    let mut tl = Timeline { cpu: cfg.cpu, interval: cfg.arrival_interval_us, busy_until: 0 };
    let mut res = TrialResult::default();
    let wall = Instant::now();
    for (i, pkt) in packets.iter().enumerate() {
        let before = dec.ops();
        dec.ingest(pkt).expect("packet belongs to the generation");
        let done = tl.process(i, dec.ops() - before + cfg.symbol_len as u64);
        res.symbols = i + 1;
        if dec.is_full_rank() {
            res.completed = true;
            res.first_decode_us = done;
            res.all_decode_us = done;
            break;
        }
    }
    res.wall_us = wall.elapsed().as_secs_f64() * 1e6;
    res.ops = dec.ops();
    if res.completed {
        debug_assert_eq!(dec.decoded().expect("full rank"), &gen.segments[..]);
    }
    res
}

fn trial_seed(base: u64, n: usize, rep: usize) -> u64 {
    let mut sm = lt_codec::SplitMix64::new(base ^ ((n as u64) << 32) ^ rep as u64);
    sm.next_u64()
}

struct Summary {
    completed: usize,
    symbols: f64,
    ops: f64,
    first: f64,
    all: f64,
    wall: f64,
}

fn summarize(results: &[TrialResult]) -> Summary {
    let len = results.len().max(1) as f64;
    let done: Vec<&TrialResult> = results.iter().filter(|r| r.completed).collect();
    let dlen = done.len().max(1) as f64;
    Summary {
        completed: done.len(),
        symbols: results.iter().map(|r| r.symbols as f64).sum::<f64>() / len,
        ops: results.iter().map(|r| r.ops as f64).sum::<f64>() / len,
        first: done.iter().map(|r| r.first_decode_us as f64).sum::<f64>() / dlen,
        all: done.iter().map(|r| r.all_decode_us as f64).sum::<f64>() / dlen,
        wall: results.iter().map(|r| r.wall_us).sum::<f64>() / len,
    }
}

/// Runs both codecs for every configured size. Sizes of zero are skipped.
pub fn run_codec_bench(cfg: &CodecBenchConfig, exec: Execution) -> Vec<CodecBenchRow> {
    let sizes: Vec<usize> = cfg.sizes.iter().copied().filter(|&n| n > 0).collect();
    sizes
        .into_iter()
        .map(|n| {
            let seeds: Vec<u64> = (0..cfg.repetitions).map(|r| trial_seed(cfg.seed, n, r)).collect();
            let lt = exec.map(seeds.clone(), |s| lt_trial(cfg, n, s));
            let rlnc = exec.map(seeds, |s| rlnc_trial(cfg, n, s));
            let (l, r) = (summarize(&lt), summarize(&rlnc));
            CodecBenchRow {
                schema_version: CODEC_SCHEMA_VERSION,
                generation_size: n,
                symbol_len: cfg.symbol_len,
                overhead: cfg.overhead,
                repetitions: cfg.repetitions,
                cpu_ops_per_sec: cfg.cpu.ops_per_sec(),
                arrival_interval_us: cfg.arrival_interval_us,
                lt_completed: l.completed,
                lt_symbols_mean: l.symbols,
                lt_ops_mean: l.ops,
                lt_first_decode_us: l.first,
                lt_all_decode_us: l.all,
                lt_wall_us: l.wall,
                rlnc_completed: r.completed,
                rlnc_symbols_mean: r.symbols,
                rlnc_ops_mean: r.ops,
                rlnc_first_decode_us: r.first,
                rlnc_all_decode_us: r.all,
                rlnc_wall_us: r.wall,
                ops_ratio: if l.ops > 0.0 { r.ops / l.ops } else { f64::INFINITY },
            }
        })
        .collect()
}
