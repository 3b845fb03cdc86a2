//! Deterministic discrete-event network simulator.
//!
//! Two endpoints sit at the ends of a tandem chain of store-and-forward
//! links. Each link direction has its own serializer (bandwidth), tail-drop
//! queue, propagation delay and Bernoulli loss stream. Events run in
//! `(time, insertion)` order, so a run is a pure function of its inputs.
//!
//! The receiving endpoint has a CPU: decoding work reported through
//! [`Endpoint::decode_ops`] keeps it busy for `ops / ops_per_sec`, delaying
//! both its replies and the processing of later arrivals.

mod arq;
mod events;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::hash::{Hash, Hasher};

use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lt_codec::SplitMix64;
use crate::transport::{CodecKind, Endpoint, EndpointReport, ReceiverState, SenderState, TransportConfig};
use crate::Micros;

pub use arq::{ArqReceiver, ArqSender, ArqSenderStats};
pub use events::EventLog;

/// IPv4 + UDP header bytes added to every datagram on the wire.
pub const IP_UDP_OVERHEAD: usize = 28;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("topology needs at least one link")]
    EmptyTopology,
    #[error("link {index}: {reason}")]
    BadLink { index: usize, reason: &'static str },
    #[error("no application progress for {stalled_for_us} us at t={now_us} us\n{dump}")]
    Livelock { now_us: Micros, stalled_for_us: Micros, dump: String },
    #[error("endpoints not attached")]
    NotAttached,
}

/// One hop of the tandem chain; used in both directions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub loss_rate: f64,
    pub one_way_delay_us: Micros,
    /// Bytes per second.
    pub bandwidth: f64,
    /// Packets held, including the one being serialized.
    pub queue_capacity: usize,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig { loss_rate: 0.0, one_way_delay_us: 10_000, bandwidth: 1.25e6, queue_capacity: 64 }
    }
}

impl LinkConfig {
    pub fn validate(&self, index: usize) -> Result<(), SimError> {
        if !(0.0..1.0).contains(&self.loss_rate) {
            return Err(SimError::BadLink { index, reason: "loss_rate must lie in [0, 1)" });
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(SimError::BadLink { index, reason: "bandwidth must be positive" });
        }
        if self.queue_capacity == 0 {
            return Err(SimError::BadLink { index, reason: "queue_capacity must be at least 1" });
        }
        Ok(())
    }

    /// Per-link loss that yields end-to-end loss `path_loss` over `links`
    /// independent hops.
    pub fn split_path_loss(path_loss: f64, links: usize) -> f64 {
        1.0 - (1.0 - path_loss).powf(1.0 / links.max(1) as f64)
    }

    fn tx_time(&self, bytes: usize) -> Micros {
        ((bytes + IP_UDP_OVERHEAD) as f64 * 1e6 / self.bandwidth).ceil() as Micros
    }
}

/// Decode throughput of the receiving host in codec byte-operations per
/// second.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CpuModel {
    /// Decoding takes no time.
    Unlimited,
    /// A desktop-class core.
    #[default]
    Pc,
    /// A single-board computer, roughly 50x slower.
    Embedded,
    Custom(f64),
}

impl CpuModel {
    pub fn ops_per_sec(&self) -> Option<f64> {
        match *self {
            CpuModel::Unlimited => None,
            CpuModel::Pc => Some(2.0e9),
            CpuModel::Embedded => Some(4.0e7),
            CpuModel::Custom(r) => Some(r),
        }
    }

    fn busy_time(&self, ops: u64) -> Micros {
        match self.ops_per_sec() {
            Some(rate) if ops > 0 => (ops as f64 * 1e6 / rate).ceil() as Micros,
            _ => 0,
        }
    }
}

/// Transport protocol under test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    TcpForward,
    TcpNcBaseline,
    ArqBaseline,
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::TcpForward => "tcp-forward",
            Protocol::TcpNcBaseline => "tcp-nc-baseline",
            Protocol::ArqBaseline => "arq-baseline",
        }
    }

    /// Sender and receiver endpoints for this protocol.
    pub fn endpoints(&self, cfg: &TransportConfig) -> (Box<dyn Endpoint>, Box<dyn Endpoint>) {
        let mut cfg = cfg.clone();
        match self {
            Protocol::TcpForward | Protocol::TcpNcBaseline => {
                cfg.codec = if *self == Protocol::TcpForward { CodecKind::Lt } else { CodecKind::Rlnc };
                (Box::new(SenderState::new(cfg.clone())), Box::new(ReceiverState::new(cfg)))
            }
            Protocol::ArqBaseline => (Box::new(ArqSender::new(cfg.clone())), Box::new(ArqReceiver::new(cfg))),
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tcp-forward" => Ok(Protocol::TcpForward),
            "tcp-nc-baseline" => Ok(Protocol::TcpNcBaseline),
            "arq-baseline" => Ok(Protocol::ArqBaseline),
            other => Err(format!("unknown protocol `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Sender,
    Receiver,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dir {
    /// Sender towards receiver.
    Forward,
    Reverse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Fate {
    Delivered,
    Lost,
    Dropped,
}

/// One packet entering one link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TraceRecord {
    pub time: Micros,
    pub dir: Dir,
    pub hop: usize,
    pub len: usize,
    pub fate: Fate,
}

/// Counters of one link direction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub sent: u64,
    pub delivered: u64,
    pub lost: u64,
    pub dropped: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Metrics {
    pub completed: bool,
    pub duration_us: Micros,
    pub delivered_bytes: u64,
    /// Bytes per second.
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

struct Link {
    cfg: LinkConfig,
    rng: ChaCha8Rng,
    busy_until: Micros,
    /// Finish times of packets queued or being serialized.
    backlog: VecDeque<Micros>,
    stats: LinkStats,
}

enum EventKind {
    Emit { side: Side, bytes: Vec<u8> },
    Arrive { dir: Dir, hop: usize, bytes: Vec<u8> },
    Wakeup { side: Side },
}

struct Event {
    time: Micros,
    order: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.order) == (other.time, other.order)
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // reversed: BinaryHeap pops the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.order).cmp(&(self.time, self.order))
    }
}

/// Knobs of one simulation run.
#[derive(Clone, Debug)]
pub struct SimOptions {
    pub seed: u64,
    pub cpu: CpuModel,
    /// Abort when no byte is delivered for this long.
    pub stall_limit_us: Micros,
    pub record_trace: bool,
    /// Keep the delivered byte stream for inspection.
    pub keep_output: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { seed: 0, cpu: CpuModel::Pc, stall_limit_us: 600_000_000, record_trace: false, keep_output: true }
    }
}

pub struct Simulation {
    forward: Vec<Link>,
    reverse: Vec<Link>,
    sender: Option<Box<dyn Endpoint>>,
    receiver: Option<Box<dyn Endpoint>>,
    opts: SimOptions,
    heap: BinaryHeap<Event>,
    order: u64,
    now: Micros,
    cpu_busy: Micros,
    wakeups: HashMap<Side, Micros>,
    output: Vec<u8>,
    delivered: u64,
    last_progress: Micros,
    trace: Vec<TraceRecord>,
    hasher: FnvHasher,
    injected: [u64; 2],
    events: EventLog,
}

impl Simulation {
    /// A tandem chain of `links.len()` hops (`links.len() + 1` nodes).
    pub fn build_topology(links: &[LinkConfig], opts: SimOptions) -> Result<Self, SimError> {
        if links.is_empty() {
            return Err(SimError::EmptyTopology);
        }
        for (i, l) in links.iter().enumerate() {
            l.validate(i)?;
        }
        let mut seeds = SplitMix64::new(opts.seed);
        let mut make = |cfg: &LinkConfig| Link {
            cfg: cfg.clone(),
            rng: ChaCha8Rng::seed_from_u64(seeds.next_u64()),
            busy_until: 0,
            backlog: VecDeque::new(),
            stats: LinkStats::default(),
        };
        let forward = links.iter().map(&mut make).collect();
        let reverse = links.iter().map(&mut make).collect();
        Ok(Simulation {
            forward,
            reverse,
            sender: None,
            receiver: None,
            opts,
            heap: BinaryHeap::new(),
            order: 0,
            now: 0,
            cpu_busy: 0,
            wakeups: HashMap::new(),
            output: Vec::new(),
            delivered: 0,
            last_progress: 0,
            trace: Vec::new(),
            hasher: FnvHasher::default(),
            injected: [0, 0],
            events: EventLog::default(),
        })
    }

    pub fn attach(&mut self, sender: Box<dyn Endpoint>, receiver: Box<dyn Endpoint>) {
        self.sender = Some(sender);
        self.receiver = Some(receiver);
        self.reschedule(Side::Sender);
        self.reschedule(Side::Receiver);
    }

    /// Hands the whole workload to the sending application and closes it.
    pub fn offer(&mut self, bytes: &[u8]) -> usize {
        let s = self.sender.as_mut().expect("attach first");
        let n = s.write(bytes);
        s.close();
        self.reschedule(Side::Sender);
        n
    }

    /// Injects a raw datagram from `side` at the current time.
    pub fn inject(&mut self, side: Side, bytes: Vec<u8>) {
        self.push(self.now, EventKind::Emit { side, bytes });
    }

    pub fn now(&self) -> Micros {
        self.now
    }

    pub fn output(&self) -> &[u8] {
        &self.output
    }

    pub fn delivered_bytes(&self) -> u64 {
        self.delivered
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn link_stats(&self, dir: Dir, hop: usize) -> LinkStats {
        match dir {
            Dir::Forward => self.forward[hop].stats,
            Dir::Reverse => self.reverse[hop].stats,
        }
    }

    pub fn hops(&self) -> usize {
        self.forward.len()
    }

    pub fn sender(&self) -> Option<&dyn Endpoint> {
        self.sender.as_deref()
    }

    pub fn receiver(&self) -> Option<&dyn Endpoint> {
        self.receiver.as_deref()
    }

    fn push(&mut self, time: Micros, kind: EventKind) {
        self.order += 1;
        self.heap.push(Event { time, order: self.order, kind });
    }

    fn endpoint(&mut self, side: Side) -> &mut Box<dyn Endpoint> {
        match side {
            Side::Sender => self.sender.as_mut().expect("attached"),
            Side::Receiver => self.receiver.as_mut().expect("attached"),
        }
    }

    fn reschedule(&mut self, side: Side) {
        let want = self.endpoint(side).next_wakeup();
        match want {
            Some(t) if self.wakeups.get(&side) != Some(&t) => {
                self.wakeups.insert(side, t);
                let at = t.max(self.now);
                self.push(at, EventKind::Wakeup { side });
            }
            Some(_) => {}
            None => {
                self.wakeups.remove(&side);
            }
        }
    }

    fn enter_link(&mut self, dir: Dir, hop: usize, bytes: Vec<u8>) {
        let now = self.now;
        let link = match dir {
            Dir::Forward => &mut self.forward[hop],
            Dir::Reverse => &mut self.reverse[hop],
        };
        while link.backlog.front().is_some_and(|&f| f <= now) {
            link.backlog.pop_front();
        }
        link.stats.sent += 1;
        let len = bytes.len();
        let (fate, arrive) = if link.backlog.len() >= link.cfg.queue_capacity {
            link.stats.dropped += 1;
            (Fate::Dropped, None)
        } else {
            let start = now.max(link.busy_until);
            let finish = start + link.cfg.tx_time(len);
            link.busy_until = finish;
            link.backlog.push_back(finish);
            if link.cfg.loss_rate > 0.0 && link.rng.gen_bool(link.cfg.loss_rate) {
                link.stats.lost += 1;
                (Fate::Lost, None)
            } else {
                (Fate::Delivered, Some(finish + link.cfg.one_way_delay_us))
            }
        };
        let rec = TraceRecord { time: now, dir, hop, len, fate };
        rec.hash(&mut self.hasher);
        bytes.hash(&mut self.hasher);
        if self.opts.record_trace {
            self.trace.push(rec);
        }
        if let Some(t) = arrive {
            self.push(t, EventKind::Arrive { dir, hop, bytes });
        }
    }

    fn emit(&mut self, side: Side, bytes: Vec<u8>) {
        match side {
            Side::Sender => {
                self.injected[0] += 1;
                self.enter_link(Dir::Forward, 0, bytes);
            }
            Side::Receiver => {
                self.injected[1] += 1;
                let last = self.forward.len() - 1;
                self.enter_link(Dir::Reverse, last, bytes);
            }
        }
    }

    fn deliver(&mut self, side: Side, bytes: Vec<u8>) {
        let now = self.now;
        let mut out = Vec::new();
        let (start, finish) = match side {
            Side::Sender => {
                self.endpoint(side).on_datagram(now, &bytes, &mut out);
                (now, now)
            }
            Side::Receiver => {
                let start = now.max(self.cpu_busy);
                let ep = self.endpoint(side);
                let before = ep.decode_ops();
                ep.on_datagram(start, &bytes, &mut out);
                let ops = ep.decode_ops() - before;
                let finish = start + self.opts.cpu.busy_time(ops);
                self.cpu_busy = finish;
                (start, finish)
            }
        };
        self.after_call(side, now, start.max(finish), out);
    }

    /// Routes outputs and events produced by an endpoint call that started
    /// at `now` and finished at `finish`.
    fn after_call(&mut self, side: Side, arrival: Micros, finish: Micros, out: Vec<Vec<u8>>) {
        for bytes in out {
            if finish > self.now {
                self.push(finish, EventKind::Emit { side, bytes });
            } else {
                self.emit(side, bytes);
            }
        }
        let events = self.endpoint(side).take_events();
        for ev in events {
            self.events.record(ev, arrival, finish);
        }
        let data = self.endpoint(side).read();
        if !data.is_empty() {
            self.delivered += data.len() as u64;
            self.last_progress = finish;
            if self.opts.keep_output {
                self.output.extend_from_slice(&data);
            }
        }
        self.reschedule(side);
    }

    fn step(&mut self, ev: Event) {
        self.now = ev.time;
        match ev.kind {
            EventKind::Emit { side, bytes } => self.emit(side, bytes),
            EventKind::Arrive { dir, hop, bytes } => {
                match dir {
                    Dir::Forward => self.forward[hop].stats.delivered += 1,
                    Dir::Reverse => self.reverse[hop].stats.delivered += 1,
                }
                match dir {
                    Dir::Forward if hop + 1 == self.forward.len() => self.deliver(Side::Receiver, bytes),
                    Dir::Forward => self.enter_link(Dir::Forward, hop + 1, bytes),
                    Dir::Reverse if hop == 0 => self.deliver(Side::Sender, bytes),
                    Dir::Reverse => self.enter_link(Dir::Reverse, hop - 1, bytes),
                }
            }
            EventKind::Wakeup { side } => {
                let Some(&want) = self.wakeups.get(&side) else { return };
                if want > self.now {
                    return;
                }
                self.wakeups.remove(&side);
                let mut out = Vec::new();
                let now = self.now;
                self.endpoint(side).on_wakeup(now, &mut out);
                self.after_call(side, now, now, out);
            }
        }
    }

    fn both_done(&self) -> bool {
        self.sender.as_ref().is_some_and(|s| s.is_done()) && self.receiver.as_ref().is_some_and(|r| r.is_done())
    }

    /// Runs until `end_time`, until `byte_goal` bytes have been delivered,
    /// until both endpoints finished, or until no events remain.
    pub fn run_until(&mut self, end_time: Micros, byte_goal: Option<u64>) -> Result<Metrics, SimError> {
        if self.sender.is_none() || self.receiver.is_none() {
            return Err(SimError::NotAttached);
        }
        let mut goal_time = None;
        while let Some(ev) = self.heap.peek() {
            if ev.time > end_time {
                self.now = end_time;
                break;
            }
            let ev = self.heap.pop().expect("peeked");
            self.step(ev);
            if goal_time.is_none() && byte_goal.is_some_and(|g| self.delivered >= g) {
                goal_time = Some(self.last_progress);
                break;
            }
            if self.both_done() {
                break;
            }
            if self.now.saturating_sub(self.last_progress) > self.opts.stall_limit_us {
                return Err(SimError::Livelock {
                    now_us: self.now,
                    stalled_for_us: self.now - self.last_progress,
                    dump: self.dump(),
                });
            }
        }
        let completed = byte_goal.map_or(self.both_done(), |g| self.delivered >= g);
        let duration = match (goal_time, completed) {
            (Some(t), _) => t,
            (None, true) => self.last_progress,
            (None, false) => self.now,
        }
        .max(1);
        Ok(self.metrics(completed, duration))
    }

    fn dump(&self) -> String {
        let s = self.sender.as_ref().map(|s| s.report()).unwrap_or_default();
        let r = self.receiver.as_ref().map(|r| r.report()).unwrap_or_default();
        format!(
            "delivered={} pending_events={} sender={s:?}\nreceiver={r:?}\nforward={:?}\nreverse={:?}",
            self.delivered,
            self.heap.len(),
            self.forward.iter().map(|l| l.stats).collect::<Vec<_>>(),
            self.reverse.iter().map(|l| l.stats).collect::<Vec<_>>(),
        )
    }

    fn metrics(&self, completed: bool, duration: Micros) -> Metrics {
        let s: EndpointReport = self.sender.as_ref().map(|s| s.report()).unwrap_or_default();
        let links = self.forward.iter().chain(&self.reverse);
        let (lost, dropped) = links.fold((0, 0), |(l, d), k| (l + k.stats.lost, d + k.stats.dropped));
        let mut m = Metrics {
            completed,
            duration_us: duration,
            delivered_bytes: self.delivered,
            goodput: self.delivered as f64 * 1e6 / duration as f64,
            packets_sent: self.injected[0] + self.injected[1],
            data_packets_sent: self.injected[0],
            ack_packets_sent: self.injected[1],
            packets_lost: lost,
            packets_dropped: dropped,
            recovery_symbols: s.recovery_symbols,
            timeouts: s.timeouts,
            final_ratio: s.final_ratio,
            final_cwnd: s.final_cwnd,
            decode_ops: self.receiver.as_ref().map_or(0, |r| r.decode_ops()),
            trace_digest: self.hasher.finish(),
            ..Metrics::default()
        };
        self.events.apply(&mut m);
        m
    }
}

/// Everything needed to run one protocol over one topology.
#[derive(Clone, Debug)]
pub struct RunSpec {
    pub protocol: Protocol,
    pub transport: TransportConfig,
    pub links: Vec<LinkConfig>,
    pub opts: SimOptions,
    pub workload_bytes: usize,
    pub time_limit_us: Micros,
}

/// Deterministic workload bytes for `seed`.
pub fn workload(len: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_DA7A);
    let mut v = vec![0u8; len];
    rng.fill(&mut v[..]);
    v
}

pub struct RunOutput {
    pub metrics: Metrics,
    pub input: Vec<u8>,
    pub output: Vec<u8>,
    pub trace: Vec<TraceRecord>,
}

/// Builds, runs and tears down one simulation.
pub fn simulate(spec: &RunSpec) -> Result<RunOutput, SimError> {
    let mut sim = Simulation::build_topology(&spec.links, spec.opts.clone())?;
    let mut cfg = spec.transport.clone();
    cfg.seed = spec.opts.seed;
    let (s, r) = spec.protocol.endpoints(&cfg);
    sim.attach(s, r);
    let input = workload(spec.workload_bytes, spec.opts.seed);
    sim.offer(&input);
    let metrics = sim.run_until(spec.time_limit_us, Some(spec.workload_bytes as u64))?;
    let output = std::mem::take(&mut sim.output);
    let trace = std::mem::take(&mut sim.trace);
    Ok(RunOutput { metrics, input, output, trace })
}
