//! The sending endpoint.
//!
//! Application bytes are cut into MSS-sized segments and admitted into the
//! coding buffer while the Vegas window allows. Each admission earns `ratio`
//! credits. Generations of up to `N` segments are taken from the coding
//! window, encoded into `ceil(n * ratio)` symbols and parked in the sending
//! buffer, which releases one symbol per credit. After each generation the
//! window slides `floor(n/2)` segments, so consecutive generations overlap.
//!
//! ACKs name a single decoded segment. The segment leaves the coding buffer
//! and the Vegas handler sees the smallest unacknowledged sequence number
//! instead. Lost progress is repaired by recovery generations built from the
//! overdue segments that already left the window; these bypass the credit
//! ledger.

use std::collections::{BTreeMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::codec::{encode_generation, DistCache, OutSymbol};
use super::redundancy::RedundancyEstimator;
use super::vegas::{RttEstimator, VegasWindow};
use super::{Endpoint, EndpointEvent, EndpointReport, TimeoutCounting, TransportConfig};
use crate::lt_codec::Generation;
use crate::wire::{
    decode_packet, encode_packet, AckPacket, ControlKind, ControlPacket, GenerationMeta, LtFrame, Packet, RlncFrame,
};
use crate::Micros;

/// `Diff_p = W / min_elapsed - size_p / elapsed_p`, all in bytes and
/// seconds.
pub fn diff_value(window_bytes: f64, min_elapsed_s: f64, segment_bytes: f64, elapsed_s: f64) -> f64 {
    window_bytes / min_elapsed_s - segment_bytes / elapsed_s
}

/// Time a segment has spent in the coding window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SegmentTimer {
    pub seq: u32,
    pub enqueue_time: Micros,
    pub size: usize,
}

#[derive(Clone, Debug)]
struct SegmentEntry {
    payload: Vec<u8>,
    acked: bool,
    /// Entry into the coding window; reset by recovery.
    timer: Option<Micros>,
    /// Last time a symbol covering the segment was generated or sent.
    last_coded: Micros,
}

#[derive(Clone, Debug)]
enum QueuedKind {
    Meta(GenerationMeta),
    Symbol(OutSymbol),
}

#[derive(Clone, Debug)]
struct Queued {
    kind: QueuedKind,
    gen_base: u32,
    gen_len: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Idle,
    Connecting,
    Established,
    Closing,
    Closed,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SenderStats {
    /// Symbols released through the credit ledger.
    pub symbols_released: u64,
    pub meta_sent: u64,
    pub recovery_symbols: u64,
    pub recovery_generations: u64,
    /// Evaluation rounds with a Diff crossing or a stall.
    pub timeout_rounds: u64,
    pub stall_rounds: u64,
    pub generations: u64,
    pub acks_received: u64,
    pub duplicate_acks: u64,
    pub unknown_generation_acks: u64,
    pub control_sent: u64,
    /// Unreleased symbols dropped because a newer generation replaced them
    /// or all their segments were acknowledged.
    pub superseded_symbols: u64,
    /// Sum of the ratio in force at each admission.
    pub credits_earned: f64,
    pub segments_admitted: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PushOutcome {
    /// Bytes taken into the application buffer.
    pub accepted_bytes: usize,
    /// Segments admitted into the coding buffer by this call.
    pub admitted_segments: usize,
    /// Data is waiting on the congestion window or buffer space.
    pub backpressure: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AckEffects {
    /// Segment removed from the coding buffer, `None` for duplicates.
    pub removed_seq: Option<u32>,
    /// Sequence number handed to the congestion controller.
    pub translated_seq: Option<u32>,
    pub cwnd_after: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenerationSummary {
    pub generation_id: u32,
    pub base_seq: u32,
    pub size: usize,
    pub symbols: usize,
    pub slide: usize,
}

pub struct SenderState {
    cfg: TransportConfig,
    phase: Phase,
    app: VecDeque<u8>,
    app_closed: bool,
    next_seq: u32,
    una: u32,
    buffer: BTreeMap<u32, SegmentEntry>,
    window_start: u32,
    window: VegasWindow,
    rtt: RttEstimator,
    credits: f64,
    queue: VecDeque<Queued>,
    redundancy: RedundancyEstimator,
    next_generation_id: u32,
    rng: ChaCha8Rng,
    dists: DistCache,
    next_eval: Option<Micros>,
    control_deadline: Option<Micros>,
    /// Recovery generation ids by `(lo, hi)` range, so repeated rounds over
    /// the same range add to one decoder at the receiver.
    recovery_ids: BTreeMap<(u32, u32), u32>,
    last_translated: u32,
    events: Vec<EndpointEvent>,
    stats: SenderStats,
}

impl SenderState {
    /// A sender that opens the connection with a handshake.
    pub fn new(cfg: TransportConfig) -> Self {
        let rtt = RttEstimator::new(cfg.initial_rtt_us, cfg.vegas_alpha, cfg.vegas_beta);
        let window = VegasWindow::new(cfg.initial_cwnd, cfg.max_cwnd);
        let redundancy = RedundancyEstimator {
            n_segments: 0,
            n_timeout: 0,
            floor: cfg.ratio_floor,
            cap: cfg.ratio_cap,
            initial: cfg.initial_ratio,
            warmup_segments: cfg.warmup_segments,
        };
        SenderState {
            phase: Phase::Idle,
            app: VecDeque::new(),
            app_closed: false,
            next_seq: cfg.isn,
            una: cfg.isn,
            buffer: BTreeMap::new(),
            window_start: cfg.isn,
            window,
            rtt,
            credits: 0.0,
            queue: VecDeque::new(),
            redundancy,
            next_generation_id: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            dists: DistCache::new(cfg.soliton_c, cfg.soliton_delta),
            next_eval: None,
            control_deadline: None,
            recovery_ids: BTreeMap::new(),
            last_translated: cfg.isn,
            events: Vec::new(),
            stats: SenderStats::default(),
            cfg,
        }
    }

    /// A sender whose connection is already open (no handshake).
    pub fn established(cfg: TransportConfig) -> Self {
        let mut s = Self::new(cfg);
        s.phase = Phase::Established;
        s
    }

    pub fn config(&self) -> &TransportConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &SenderStats {
        &self.stats
    }

    pub fn cwnd(&self) -> f64 {
        self.window.cwnd
    }

    /// Overrides the congestion window (tests and experiments).
    pub fn set_cwnd(&mut self, cwnd: f64) {
        self.window.cwnd = cwnd;
    }

    pub fn credits(&self) -> f64 {
        self.credits
    }

    pub fn ratio(&self) -> f64 {
        self.redundancy.ratio()
    }

    pub fn redundancy(&self) -> &RedundancyEstimator {
        &self.redundancy
    }

    pub fn rtt(&self) -> &RttEstimator {
        &self.rtt
    }

    /// Smallest unacknowledged sequence number (left edge of the congestion
    /// window).
    pub fn una(&self) -> u32 {
        self.una
    }

    pub fn next_seq(&self) -> u32 {
        self.next_seq
    }

    pub fn window_start(&self) -> u32 {
        self.window_start
    }

    /// Sequence numbers still in the coding buffer (admitted, unacknowledged).
    pub fn coding_buffer(&self) -> Vec<u32> {
        self.buffer.iter().filter(|(_, e)| !e.acked).map(|(&s, _)| s).collect()
    }

    /// Symbols waiting in the sending buffer.
    pub fn queued_symbols(&self) -> usize {
        self.queue.iter().filter(|q| matches!(q.kind, QueuedKind::Symbol(_))).count()
    }

    pub fn segment_timers(&self) -> Vec<SegmentTimer> {
        self.buffer
            .iter()
            .filter(|(_, e)| !e.acked)
            .filter_map(|(&seq, e)| e.timer.map(|t| SegmentTimer { seq, enqueue_time: t, size: e.payload.len() }))
            .collect()
    }

    pub fn is_established(&self) -> bool {
        self.phase == Phase::Established
    }

    /// All data written so far has been acknowledged.
    pub fn all_acked(&self) -> bool {
        self.app.is_empty() && self.una == self.next_seq
    }

    /// Queues application bytes and admits as many segments as the window
    /// allows.
    pub fn push_app_data(&mut self, bytes: &[u8]) -> PushOutcome {
        let room = self.cfg.app_buffer_cap.saturating_sub(self.app.len());
        let accepted = bytes.len().min(room);
        self.app.extend(&bytes[..accepted]);
        let admitted = self.admit();
        PushOutcome {
            accepted_bytes: accepted,
            admitted_segments: admitted,
            backpressure: !self.app.is_empty() || accepted < bytes.len(),
        }
    }

    /// No more application data; a trailing partial segment may be cut.
    pub fn close(&mut self) {
        self.app_closed = true;
        self.admit();
    }

    fn can_admit(&self) -> bool {
        self.phase == Phase::Established
            && self.next_seq.wrapping_sub(self.una) < self.window.segments()
            && self.buffer.len() < self.cfg.coding_buffer_cap
            && (self.app.len() >= self.cfg.mss || (self.app_closed && !self.app.is_empty()))
    }

    fn admit(&mut self) -> usize {
        let mut n = 0;
        while self.can_admit() {
            let take = self.app.len().min(self.cfg.mss);
            let payload: Vec<u8> = self.app.drain(..take).collect();
            self.buffer.insert(self.next_seq, SegmentEntry { payload, acked: false, timer: None, last_coded: 0 });
            self.next_seq = self.next_seq.wrapping_add(1);
            let ratio = self.redundancy.ratio();
            self.credits += ratio;
            self.stats.credits_earned += ratio;
            self.stats.segments_admitted += 1;
            n += 1;
        }
        n
    }

    fn skip_acked_prefix(&mut self) {
        while self.window_start < self.next_seq
            && (self.window_start < self.una || self.buffer.get(&self.window_start).is_none_or(|e| e.acked))
        {
            self.window_start += 1;
        }
    }

    /// A new generation is due once a full window of segments is available
    /// past the slide, or when the sending buffer ran dry.
    fn generation_due(&mut self) -> bool {
        self.skip_acked_prefix();
        let avail = (self.next_seq - self.window_start) as usize;
        avail > 0 && (avail >= self.cfg.coding_window || self.queue.is_empty())
    }

    /// Drops queued symbols whose segments are all acknowledged.
    fn purge_stale(&mut self) {
        let una = self.una;
        let buffer = &self.buffer;
        let before = self.queue.len();
        self.queue.retain(|q| {
            (q.gen_base..q.gen_base + q.gen_len).any(|s| s >= una && buffer.get(&s).is_some_and(|e| !e.acked))
        });
        self.stats.superseded_symbols += (before - self.queue.len()) as u64;
    }

    /// Forms the next generation from the coding window, queues its
    /// symbols in place of any unreleased ones and slides the window.
    pub fn generate_symbols(&mut self, now: Micros) -> Option<GenerationSummary> {
        self.skip_acked_prefix();
        let avail = self.next_seq - self.window_start;
        if avail == 0 {
            return None;
        }
        self.stats.superseded_symbols += self.queued_symbols() as u64;
        self.queue.clear();
        let n = (avail as usize).min(self.cfg.coding_window);
        let base = self.window_start;
        let mut payloads = Vec::with_capacity(n);
        let mut must_cover = Vec::with_capacity(n);
        let mut entered = 0;
        for seq in base..base + n as u32 {
            let e = self.buffer.get_mut(&seq).expect("segments at or above una are buffered");
            payloads.push(e.payload.clone());
            must_cover.push(!e.acked);
            if e.timer.is_none() && !e.acked {
                e.timer = Some(now);
                entered += 1;
                self.events.push(EndpointEvent::SegmentStarted { seq, at: now });
            }
            e.last_coded = now;
        }
        self.redundancy.record_segments(entered);

        let generation_id = self.next_generation_id;
        self.next_generation_id += 1;
        let gen = Generation::new(generation_id, base, payloads).expect("non-empty, bounded by mss");
        let ratio = self.redundancy.ratio();
        let budget = (n as f64 * ratio).ceil() as usize;
        let symbols = encode_generation(self.cfg.codec, &gen, budget, &must_cover, &mut self.dists, &mut self.rng);
        let count = symbols.len();
        let meta = GenerationMeta {
            generation_id,
            base_seq: base,
            symbol_len: gen.symbol_len as u16,
            orig_lens: gen.orig_lens.clone(),
            send_timestamp: 0,
        };
        self.queue.push_back(Queued { kind: QueuedKind::Meta(meta), gen_base: base, gen_len: n as u32 });
        for s in symbols {
            self.queue.push_back(Queued { kind: QueuedKind::Symbol(s), gen_base: base, gen_len: n as u32 });
        }
        let slide = self.cfg.slide_for(n);
        self.window_start = base + slide as u32;
        self.stats.generations += 1;
        Some(GenerationSummary { generation_id, base_seq: base, size: n, symbols: count, slide })
    }

    /// Releases queued symbols while credits are positive, one credit each.
    /// Metadata frames ride along without cost.
    pub fn release_to_network(&mut self, now: Micros) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        while let Some(front) = self.queue.front() {
            let is_meta = matches!(front.kind, QueuedKind::Meta(_));
            if !is_meta && self.credits <= 0.0 {
                break;
            }
            let q = self.queue.pop_front().expect("front exists");
            let packet = match q.kind {
                QueuedKind::Meta(mut m) => {
                    m.send_timestamp = now;
                    self.stats.meta_sent += 1;
                    Packet::Meta(m)
                }
                QueuedKind::Symbol(sym) => {
                    self.credits -= 1.0;
                    self.stats.symbols_released += 1;
                    for seq in q.gen_base..q.gen_base + q.gen_len {
                        if let Some(e) = self.buffer.get_mut(&seq) {
                            e.last_coded = now;
                        }
                    }
                    symbol_packet(sym, now)
                }
            };
            out.push(encode_packet(&packet).expect("sender builds in-range frames"));
        }
        out
    }

    /// Handles one ACK: removes the decoded segment, translates the ACK to
    /// the smallest unacknowledged sequence number and lets the Vegas
    /// handler react to the RTT sample.
    pub fn on_ack(&mut self, now: Micros, ack: &AckPacket) -> AckEffects {
        self.stats.acks_received += 1;
        let sample = now.saturating_sub(ack.echo_timestamp);
        if ack.generation_id >= self.next_generation_id {
            self.stats.unknown_generation_acks += 1;
            return AckEffects { removed_seq: None, translated_seq: None, cwnd_after: self.window.cwnd };
        }
        let seq = ack.decoded_seq;
        let fresh = seq >= self.una && seq < self.next_seq && self.buffer.get(&seq).is_some_and(|e| !e.acked);
        if !fresh {
            self.stats.duplicate_acks += 1;
            self.rtt.observe(sample);
            return AckEffects { removed_seq: None, translated_seq: None, cwnd_after: self.window.cwnd };
        }
        if let Some(e) = self.buffer.get_mut(&seq) {
            e.acked = true;
            e.timer = None;
        }
        while self.una < self.next_seq && self.buffer.get(&self.una).is_some_and(|e| e.acked) {
            self.buffer.remove(&self.una);
            self.una += 1;
        }
        let translated = self.una;
        debug_assert!(translated >= self.last_translated);
        self.last_translated = translated;
        if let Some(round_min) = self.rtt.sample(now, sample) {
            self.window.on_round(&mut self.rtt, round_min);
        }
        AckEffects { removed_seq: Some(seq), translated_seq: Some(translated), cwnd_after: self.window.cwnd }
    }

    fn diff_threshold(&self) -> f64 {
        let base = self.rtt.base_rtt.unwrap_or(self.rtt.srtt).max(1) as f64 / 1e6;
        self.cfg.diff_threshold_factor * self.window_bytes() / base
    }

    fn window_bytes(&self) -> f64 {
        (self.cfg.coding_window * self.cfg.mss) as f64
    }

    /// Evaluates `Diff_p` for every segment in the coding buffer. On a
    /// crossing (or when nothing has entered the window for `stall_rtts`
    /// RTTs, where the formula cannot cross) a timeout is recorded and the
    /// overdue segments before the coding window are re-encoded into a
    /// recovery generation sent straight to the network.
    pub fn check_diff_timeout(&mut self, now: Micros) -> Vec<Vec<u8>> {
        let tracked: Vec<(u32, Micros, usize)> = self
            .buffer
            .iter()
            .filter(|(_, e)| !e.acked)
            .filter_map(|(&s, e)| e.timer.map(|t| (s, now.saturating_sub(t).max(1), e.payload.len())))
            .collect();
        if tracked.is_empty() {
            return Vec::new();
        }
        let min_elapsed = tracked.iter().map(|t| t.1).min().expect("non-empty");
        let threshold = self.diff_threshold();
        let w = self.window_bytes();
        let crossings = tracked
            .iter()
            .filter(|&&(_, e, size)| diff_value(w, min_elapsed as f64 / 1e6, size as f64, e as f64 / 1e6) > threshold)
            .count();
        let stalled = crossings == 0 && min_elapsed as f64 >= self.cfg.stall_rtts * self.rtt.srtt as f64;
        if crossings == 0 && !stalled {
            return Vec::new();
        }
        self.stats.timeout_rounds += 1;
        if stalled {
            self.stats.stall_rounds += 1;
        }
        match self.cfg.timeout_counting {
            TimeoutCounting::PerRound => self.redundancy.record_timeout(),
            TimeoutCounting::PerSegment => {
                for _ in 0..crossings.max(1) {
                    self.redundancy.record_timeout();
                }
            }
        }

        let rto = self.rtt.rto(self.cfg.min_rto_us);
        let window_start = self.window_start;
        let candidates: Vec<u32> = tracked
            .iter()
            .map(|t| t.0)
            .filter(|&s| stalled || s < window_start)
            .filter(|s| now.saturating_sub(self.buffer[s].last_coded) >= rto)
            .take(self.cfg.max_recovery_segments)
            .collect();
        let (Some(&lo), Some(&hi)) = (candidates.first(), candidates.last()) else {
            return Vec::new();
        };
        self.recovery_generation(now, lo, hi, &candidates)
    }

    fn recovery_generation(&mut self, now: Micros, lo: u32, hi: u32, candidates: &[u32]) -> Vec<Vec<u8>> {
        let n = (hi - lo + 1) as usize;
        let mut payloads = Vec::with_capacity(n);
        let mut must_cover = vec![false; n];
        for (i, seq) in (lo..=hi).enumerate() {
            let e = self.buffer.get_mut(&seq).expect("segments at or above una are buffered");
            payloads.push(e.payload.clone());
            if !e.acked {
                must_cover[i] = true;
                e.last_coded = now;
            }
        }
        for &c in candidates {
            self.buffer.get_mut(&c).expect("candidate buffered").timer = Some(now);
        }
        // every unacknowledged segment in the range still sits in the coding buffer
        let m = must_cover.iter().filter(|&&c| c).count();
        let una = self.una;
        self.recovery_ids.retain(|&(l, _), _| l >= una);
        let generation_id = match self.recovery_ids.get(&(lo, hi)) {
            Some(&id) => id,
            None => {
                let id = self.next_generation_id;
                self.next_generation_id += 1;
                self.recovery_ids.insert((lo, hi), id);
                id
            }
        };
        let gen = Generation::new(generation_id, lo, payloads).expect("non-empty");
        let budget = (m as f64 * self.redundancy.ratio()).ceil() as usize;
        let symbols = encode_generation(self.cfg.codec, &gen, budget, &must_cover, &mut self.dists, &mut self.rng);

        let mut out = Vec::with_capacity(symbols.len() + 1);
        let meta = GenerationMeta {
            generation_id,
            base_seq: lo,
            symbol_len: gen.symbol_len as u16,
            orig_lens: gen.orig_lens.clone(),
            send_timestamp: now,
        };
        out.push(encode_packet(&Packet::Meta(meta)).expect("in range"));
        self.stats.meta_sent += 1;
        self.stats.recovery_symbols += symbols.len() as u64;
        self.stats.recovery_generations += 1;
        for s in symbols {
            out.push(encode_packet(&symbol_packet(s, now)).expect("in range"));
        }
        out
    }

    fn control(&mut self, kind: ControlKind, isn: u32, now: Micros) -> Vec<u8> {
        self.stats.control_sent += 1;
        let pkt = ControlPacket { kind, isn, mss: self.cfg.mss as u16, timestamp: now };
        encode_packet(&Packet::Control(pkt)).expect("fixed layout")
    }

    /// Runs admission, generation, release, timeout checks and connection
    /// management.
    fn drive(&mut self, now: Micros, out: &mut Vec<Vec<u8>>) {
        match self.phase {
            Phase::Idle => {
                out.push(self.control(ControlKind::Hello, self.cfg.isn, now));
                self.phase = Phase::Connecting;
                self.control_deadline = Some(now + self.rtt.rto(self.cfg.min_rto_us));
                return;
            }
            Phase::Connecting | Phase::Closing => {
                if self.control_deadline.is_some_and(|d| now >= d) {
                    let (kind, isn) = if self.phase == Phase::Connecting {
                        (ControlKind::Hello, self.cfg.isn)
                    } else {
                        (ControlKind::Fin, self.next_seq)
                    };
                    out.push(self.control(kind, isn, now));
                    self.control_deadline = Some(now + self.rtt.rto(self.cfg.min_rto_us));
                }
                return;
            }
            Phase::Closed => return,
            Phase::Established => {}
        }

        loop {
            self.admit();
            self.purge_stale();
            let mut progressed = self.generation_due() && self.generate_symbols(now).is_some();
            let sent = self.release_to_network(now);
            progressed |= !sent.is_empty();
            out.extend(sent);
            if !progressed {
                break;
            }
        }

        if self.next_eval.is_none_or(|t| now >= t) {
            out.extend(self.check_diff_timeout(now));
            self.next_eval = Some(now + self.rtt.srtt.max(self.cfg.min_rto_us / 2).max(1));
        }

        if self.app_closed && self.all_acked() {
            self.queue.clear();
            out.push(self.control(ControlKind::Fin, self.next_seq, now));
            self.phase = Phase::Closing;
            self.control_deadline = Some(now + self.rtt.rto(self.cfg.min_rto_us));
        }
    }
}

fn symbol_packet(sym: OutSymbol, now: Micros) -> Packet {
    match sym {
        OutSymbol::Lt(symbol) => Packet::Lt(LtFrame { symbol, send_timestamp: now }),
        OutSymbol::Rlnc(packet) => Packet::Rlnc(RlncFrame { packet, send_timestamp: now }),
    }
}

impl Endpoint for SenderState {
    fn on_datagram(&mut self, now: Micros, bytes: &[u8], out: &mut Vec<Vec<u8>>) {
        match decode_packet(bytes) {
            Ok(Packet::Ack(ack)) => {
                if self.phase == Phase::Established || self.phase == Phase::Closing {
                    self.on_ack(now, &ack);
                }
            }
            Ok(Packet::Control(c)) => match (c.kind, self.phase) {
                (ControlKind::HelloAck, Phase::Connecting) => {
                    self.rtt.observe(now.saturating_sub(c.timestamp));
                    self.phase = Phase::Established;
                    self.control_deadline = None;
                    out.push(self.control(ControlKind::HandshakeAck, self.cfg.isn, now));
                }
                (ControlKind::FinAck, Phase::Closing) => {
                    self.phase = Phase::Closed;
                    self.control_deadline = None;
                    self.next_eval = None;
                }
                _ => {}
            },
            _ => {}
        }
        self.drive(now, out);
    }

    fn on_wakeup(&mut self, now: Micros, out: &mut Vec<Vec<u8>>) {
        self.drive(now, out);
    }

    fn next_wakeup(&self) -> Option<Micros> {
        match self.phase {
            Phase::Idle => Some(0),
            Phase::Connecting | Phase::Closing => self.control_deadline,
            Phase::Closed => None,
            Phase::Established => {
                if self.una < self.next_seq {
                    self.next_eval
                } else {
                    None
                }
            }
        }
    }

    fn is_done(&self) -> bool {
        self.phase == Phase::Closed
    }

    fn take_events(&mut self) -> Vec<EndpointEvent> {
        std::mem::take(&mut self.events)
    }

    fn write(&mut self, bytes: &[u8]) -> usize {
        self.push_app_data(bytes).accepted_bytes
    }

    fn close(&mut self) {
        SenderState::close(self);
    }

    fn report(&self) -> EndpointReport {
        EndpointReport {
            data_packets_sent: self.stats.symbols_released + self.stats.recovery_symbols + self.stats.meta_sent,
            control_packets_sent: self.stats.control_sent,
            recovery_symbols: self.stats.recovery_symbols,
            timeouts: self.stats.timeout_rounds,
            final_ratio: self.redundancy.ratio(),
            final_cwnd: self.window.cwnd,
            acks_sent: 0,
            acks_received: self.stats.acks_received,
            malformed: 0,
            delivered_bytes: 0,
        }
    }
}
