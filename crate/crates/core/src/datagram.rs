//! Runs one transport endpoint over a real UDP socket.
//!
//! One datagram carries exactly one wire packet. The clock is wall time in
//! microseconds since the runner started. Impairment (loss and a fixed
//! delay) applies to inbound datagrams only, so a single impaired endpoint
//! is enough to exercise recovery.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, UdpSocket};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::netsim::{EventLog, Metrics, Protocol};
use crate::transport::{Endpoint, TransportConfig};
use crate::Micros;

const MAX_DATAGRAM: usize = 65_536;
const READ_CHUNK: usize = 64 * 1024;
/// Longest a single blocking receive waits, so timers stay responsive.
const MAX_POLL: Duration = Duration::from_millis(20);

#[derive(Clone, Debug)]
pub struct RunnerConfig {
    pub local: SocketAddr,
    /// Required for the sender. A receiver without one answers the first
    /// peer it hears from.
    pub remote: Option<SocketAddr>,
    /// Probability of discarding an inbound datagram, in `[0, 1)`.
    pub impair_loss: f64,
    /// Fixed extra delay applied to every inbound datagram.
    pub impair_delay: Duration,
    /// Abort after hearing nothing from the peer for this long.
    pub deadline: Duration,
    /// After finishing, a receiver keeps answering retransmitted finish
    /// messages for this long.
    pub linger: Duration,
    /// Seeds the impairment draws.
    pub seed: u64,
    pub protocol: Protocol,
    pub transport: TransportConfig,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        RunnerConfig {
            local: SocketAddr::from(([127, 0, 0, 1], 0)),
            remote: None,
            impair_loss: 0.0,
            impair_delay: Duration::ZERO,
            deadline: Duration::from_secs(10),
            linger: Duration::from_millis(500),
            seed: 0,
            protocol: Protocol::TcpForward,
            transport: TransportConfig::default(),
        }
    }
}

impl RunnerConfig {
    pub fn validate(&self) -> Result<(), RunnerError> {
        if !(0.0..1.0).contains(&self.impair_loss) {
            return Err(RunnerError::Config("impair_loss must lie in [0, 1)".into()));
        }
        if self.deadline.is_zero() {
            return Err(RunnerError::Config("deadline must be positive".into()));
        }
        self.transport.validate().map_err(RunnerError::Config)
    }
}

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("invalid runner configuration: {0}")]
    Config(String),
    #[error("socket error: {0}")]
    Io(#[from] io::Error),
    #[error("no datagram from the peer for {silent_for:?}; {state}")]
    Deadline { silent_for: Duration, state: String },
}

/// Which end of the connection this runner plays, with its byte stream.
pub enum Role<'a> {
    Sender(&'a mut dyn Read),
    Receiver(&'a mut dyn Write),
}

/// Outcome of a finished transfer.
#[derive(Clone, Debug)]
pub struct ExitReport {
    pub metrics: Metrics,
    pub peer: Option<SocketAddr>,
    /// Bytes read from the source (sender) or written to the sink
    /// (receiver).
    pub bytes: u64,
    pub datagrams_received: u64,
    pub datagrams_impaired: u64,
    /// Event timestamps relative to the runner's start.
    pub events: EventLog,
}

/// A bound socket waiting to run.
pub struct Runner {
    cfg: RunnerConfig,
    socket: UdpSocket,
}

impl Runner {
    pub fn bind(cfg: RunnerConfig) -> Result<Self, RunnerError> {
        cfg.validate()?;
        let socket = UdpSocket::bind(cfg.local)?;
        Ok(Runner { cfg, socket })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }

    /// Runs the transfer to completion. `origin` is the zero of the clock;
    /// sharing it between two runners puts their events on one timeline.
    pub fn run(self, role: Role<'_>, origin: Instant) -> Result<ExitReport, RunnerError> {
        let is_sender = matches!(role, Role::Sender(_));
        if is_sender && self.cfg.remote.is_none() {
            return Err(RunnerError::Config("the sender needs a remote address".into()));
        }
        let (tx, rx) = self.cfg.protocol.endpoints(&self.cfg.transport);
        let ep = if is_sender { tx } else { rx };
        Loop::new(self, ep, origin).run(role)
    }
}

/// Binds and runs in one step with a fresh clock.
pub fn serve(cfg: RunnerConfig, role: Role<'_>) -> Result<ExitReport, RunnerError> {
    Runner::bind(cfg)?.run(role, Instant::now())
}

struct Loop {
    cfg: RunnerConfig,
    socket: UdpSocket,
    ep: Box<dyn Endpoint>,
    origin: Instant,
    peer: Option<SocketAddr>,
    rng: ChaCha8Rng,
    delayed: BinaryHeap<Reverse<(Micros, u64, Vec<u8>)>>,
    order: u64,
    last_heard: Micros,
    log: EventLog,
    sent: [u64; 2],
    received: u64,
    impaired: u64,
    bytes: u64,
    last_progress: Micros,
}

impl Loop {
    fn new(r: Runner, ep: Box<dyn Endpoint>, origin: Instant) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(r.cfg.seed);
        let peer = r.cfg.remote;
        let mut l = Loop {
            cfg: r.cfg,
            socket: r.socket,
            ep,
            origin,
            peer,
            rng,
            delayed: BinaryHeap::new(),
            order: 0,
            last_heard: 0,
            log: EventLog::default(),
            sent: [0, 0],
            received: 0,
            impaired: 0,
            bytes: 0,
            last_progress: 0,
        };
        l.last_heard = l.now();
        l
    }

    fn now(&self) -> Micros {
        self.origin.elapsed().as_micros() as Micros
    }

    fn run(mut self, mut role: Role<'_>) -> Result<ExitReport, RunnerError> {
        let mut pending: Vec<u8> = Vec::new();
        let mut offset = 0;
        let mut eof = false;
        let mut done_at: Option<Micros> = None;
        let mut buf = vec![0u8; MAX_DATAGRAM];
        let mut out = Vec::new();

        loop {
            if let Role::Sender(src) = &mut role {
                while !eof {
                    if offset == pending.len() {
                        pending.resize(READ_CHUNK, 0);
                        let n = src.read(&mut pending)?;
                        pending.truncate(n);
                        offset = 0;
                        self.bytes += n as u64;
                        if n == 0 {
                            eof = true;
                            self.ep.close();
                            break;
                        }
                    }
                    let n = self.ep.write(&pending[offset..]);
                    offset += n;
                    if n == 0 {
                        break;
                    }
                }
            }

            let now = self.now();
            if self.ep.next_wakeup().is_some_and(|w| w <= now) {
                self.ep.on_wakeup(now, &mut out);
                self.flush(&mut out, &mut role, now, now)?;
            }
            while let Some(Reverse((t, _, _))) = self.delayed.peek() {
                if *t > now {
                    break;
                }
                let Reverse((_, _, bytes)) = self.delayed.pop().expect("peeked");
                self.ep.on_datagram(now, &bytes, &mut out);
                self.flush(&mut out, &mut role, now, self.now())?;
            }

            if self.ep.is_done() {
                let at = *done_at.get_or_insert(now);
                if is_sender(&role) || now.saturating_sub(at) >= self.cfg.linger.as_micros() as Micros {
                    break;
                }
            }
            let silent = now.saturating_sub(self.last_heard);
            if silent > self.cfg.deadline.as_micros() as Micros {
                return Err(RunnerError::Deadline {
                    silent_for: Duration::from_micros(silent),
                    state: format!("peer={:?} progress={} bytes report={:?}", self.peer, self.bytes, self.ep.report()),
                });
            }

            let mut wait = MAX_POLL;
            if let Some(w) = self.ep.next_wakeup() {
                wait = wait.min(Duration::from_micros(w.saturating_sub(now)));
            }
            if let Some(Reverse((t, _, _))) = self.delayed.peek() {
                wait = wait.min(Duration::from_micros(t.saturating_sub(now)));
            }
            self.socket.set_read_timeout(Some(wait.max(Duration::from_micros(100))))?;
            match self.socket.recv_from(&mut buf) {
                Ok((n, from)) => {
                    if self.peer.is_none() {
                        self.peer = Some(from);
                    }
                    if self.peer != Some(from) {
                        continue;
                    }
                    let now = self.now();
                    self.received += 1;
                    self.last_heard = now;
                    if self.cfg.impair_loss > 0.0 && self.rng.gen_bool(self.cfg.impair_loss) {
                        self.impaired += 1;
                        continue;
                    }
                    if self.cfg.impair_delay.is_zero() {
                        self.ep.on_datagram(now, &buf[..n], &mut out);
                        self.flush(&mut out, &mut role, now, self.now())?;
                    } else {
                        self.order += 1;
                        let at = now + self.cfg.impair_delay.as_micros() as Micros;
                        self.delayed.push(Reverse((at, self.order, buf[..n].to_vec())));
                    }
                }
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(self.finish(&role))
    }

    /// Sends queued datagrams and hands events and delivered bytes to the
    /// host side.
    fn flush(
        &mut self,
        out: &mut Vec<Vec<u8>>,
        role: &mut Role<'_>,
        arrival: Micros,
        finish: Micros,
    ) -> io::Result<()> {
        for bytes in out.drain(..) {
            if let Some(peer) = self.peer {
                self.socket.send_to(&bytes, peer)?;
                self.sent[usize::from(!is_sender(role))] += 1;
            }
        }
        for ev in self.ep.take_events() {
            self.log.record(ev, arrival, finish);
        }
        let data = self.ep.read();
        if let Role::Receiver(sink) = role {
            if !data.is_empty() {
                sink.write_all(&data)?;
                self.bytes += data.len() as u64;
                self.last_progress = finish;
            }
        }
        Ok(())
    }

    fn finish(self, role: &Role<'_>) -> ExitReport {
        let now = self.now();
        let report = self.ep.report();
        let duration = if is_sender(role) { now } else { self.last_progress }.max(1);
        let delivered = if is_sender(role) { report.delivered_bytes.max(self.bytes) } else { self.bytes };
        let mut metrics = Metrics {
            completed: self.ep.is_done(),
            duration_us: duration,
            delivered_bytes: delivered,
            goodput: delivered as f64 * 1e6 / duration as f64,
            packets_sent: self.sent[0] + self.sent[1],
            data_packets_sent: self.sent[0],
            ack_packets_sent: self.sent[1],
            packets_lost: self.impaired,
            recovery_symbols: report.recovery_symbols,
            timeouts: report.timeouts,
            final_ratio: report.final_ratio,
            final_cwnd: report.final_cwnd,
            decode_ops: self.ep.decode_ops(),
            ..Metrics::default()
        };
        self.log.apply(&mut metrics);
        ExitReport {
            metrics,
            peer: self.peer,
            bytes: self.bytes,
            datagrams_received: self.received,
            datagrams_impaired: self.impaired,
            events: self.log,
        }
    }
}

fn is_sender(role: &Role<'_>) -> bool {
    matches!(role, Role::Sender(_))
}

/// Transfers `data` between two runners on loopback threads and returns
/// `(sender report, receiver report, received bytes)`. The receiver's
/// latency figures include the sender's segment start times.
pub fn loopback_transfer(
    data: &[u8],
    sender: RunnerConfig,
    receiver: RunnerConfig,
) -> Result<(ExitReport, ExitReport, Vec<u8>), RunnerError> {
    let rx = Runner::bind(receiver)?;
    let mut tx_cfg = sender;
    tx_cfg.remote = Some(rx.local_addr()?);
    let tx = Runner::bind(tx_cfg)?;
    let origin = Instant::now();
    let (tx_res, rx_res) = std::thread::scope(|s| {
        let h = s.spawn(move || {
            let mut sink = Vec::new();
            rx.run(Role::Receiver(&mut sink), origin).map(|r| (r, sink))
        });
        let mut src = data;
        let tx_res = tx.run(Role::Sender(&mut src), origin);
        (tx_res, h.join().expect("receiver thread panicked"))
    });
    let tx_rep = tx_res?;
    let (mut rx_rep, received) = rx_res?;
    rx_rep.events.merge_started(&tx_rep.events);
    rx_rep.events.apply(&mut rx_rep.metrics);
    Ok((tx_rep, rx_rep, received))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let bad = RunnerConfig { impair_loss: 1.0, ..Default::default() };
        assert!(matches!(bad.validate(), Err(RunnerError::Config(_))));
        assert!(RunnerConfig::default().validate().is_ok());
    }

    #[test]
    fn sender_needs_remote() {
        let r = Runner::bind(RunnerConfig::default()).unwrap();
        let mut src: &[u8] = b"x";
        assert!(matches!(r.run(Role::Sender(&mut src), Instant::now()), Err(RunnerError::Config(_))));
    }

    #[test]
    fn small_loopback_transfer() {
        let data = crate::netsim::workload(50_000, 3);
        let (tx, rx, got) = loopback_transfer(&data, RunnerConfig::default(), RunnerConfig::default()).unwrap();
        assert_eq!(got, data);
        assert!(tx.metrics.completed && rx.metrics.completed);
        assert_eq!(rx.metrics.delivered_bytes, 50_000);
        assert!(rx.metrics.latency_samples > 0);
    }
}
