//! Loss-driven ARQ baseline: Go-back-N with cumulative ACKs, Reno-style
//! window halving on triple duplicate ACKs and exponential RTO backoff.

use std::collections::{BTreeMap, VecDeque};

use crate::transport::{Endpoint, EndpointEvent, EndpointReport, TransportConfig};
use crate::wire::{decode_packet, encode_packet, ArqAck, ArqData, ControlKind, ControlPacket, Packet};
use crate::Micros;

const DUP_ACK_THRESHOLD: u32 = 3;
const MAX_BACKOFF: u64 = 64;
const MAX_RTO_US: Micros = 60_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Idle,
    Connecting,
    Established,
    Closing,
    Closed,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ArqSenderStats {
    pub data_sent: u64,
    pub retransmissions: u64,
    pub fast_retransmits: u64,
    pub timeouts: u64,
    pub acks_received: u64,
    pub control_sent: u64,
}

pub struct ArqSender {
    cfg: TransportConfig,
    phase: Phase,
    app: VecDeque<u8>,
    app_closed: bool,
    /// Cut segments from `una` upwards.
    segments: BTreeMap<u32, Vec<u8>>,
    una: u32,
    next_send: u32,
    /// One past the highest sequence number ever transmitted.
    high_sent: u32,
    cut_end: u32,
    cwnd: f64,
    ssthresh: f64,
    dup_acks: u32,
    recover: u32,
    srtt: Option<Micros>,
    rttvar: Micros,
    backoff: u64,
    rto_deadline: Option<Micros>,
    control_deadline: Option<Micros>,
    events: Vec<EndpointEvent>,
    stats: ArqSenderStats,
}

impl ArqSender {
    pub fn new(cfg: TransportConfig) -> Self {
        ArqSender {
            phase: Phase::Idle,
            app: VecDeque::new(),
            app_closed: false,
            segments: BTreeMap::new(),
            una: cfg.isn,
            next_send: cfg.isn,
            high_sent: cfg.isn,
            cut_end: cfg.isn,
            cwnd: cfg.initial_cwnd.max(1.0),
            ssthresh: cfg.max_cwnd,
            dup_acks: 0,
            recover: cfg.isn,
            srtt: None,
            rttvar: cfg.initial_rtt_us / 2,
            backoff: 1,
            rto_deadline: None,
            control_deadline: None,
            events: Vec::new(),
            stats: ArqSenderStats::default(),
            cfg,
        }
    }

    /// A sender that skips the handshake.
    pub fn established(cfg: TransportConfig) -> Self {
        let mut s = Self::new(cfg);
        s.phase = Phase::Established;
        s
    }

    pub fn stats(&self) -> &ArqSenderStats {
        &self.stats
    }

    pub fn cwnd(&self) -> f64 {
        self.cwnd
    }

    pub fn una(&self) -> u32 {
        self.una
    }

    fn rto(&self) -> Micros {
        let base = match self.srtt {
            Some(s) => s + 4 * self.rttvar,
            None => 3 * self.cfg.initial_rtt_us,
        };
        (base.max(self.cfg.min_rto_us) * self.backoff).min(MAX_RTO_US)
    }

    fn observe_rtt(&mut self, sample: Micros) {
        match self.srtt {
            None => {
                self.srtt = Some(sample);
                self.rttvar = sample / 2;
            }
            Some(s) => {
                let err = s.abs_diff(sample);
                self.rttvar = (3 * self.rttvar + err) / 4;
                self.srtt = Some((7 * s + sample) / 8);
            }
        }
    }

    fn cut_segment(&mut self) -> bool {
        if self.app.len() >= self.cfg.mss || (self.app_closed && !self.app.is_empty()) {
            let take = self.app.len().min(self.cfg.mss);
            self.segments.insert(self.cut_end, self.app.drain(..take).collect());
            self.cut_end += 1;
            true
        } else {
            false
        }
    }

    fn transmit(&mut self, now: Micros, out: &mut Vec<Vec<u8>>) {
        while (self.next_send - self.una) < self.cwnd.floor().max(1.0) as u32 {
            if self.next_send == self.cut_end && !self.cut_segment() {
                break;
            }
            let seq = self.next_send;
            let payload = self.segments[&seq].clone();
            if seq >= self.high_sent {
                self.high_sent = seq + 1;
                self.events.push(EndpointEvent::SegmentStarted { seq, at: now });
            } else {
                self.stats.retransmissions += 1;
            }
            out.push(encode_packet(&Packet::ArqData(ArqData { seq, send_timestamp: now, payload })).expect("mss fits"));
            self.stats.data_sent += 1;
            self.next_send += 1;
            if self.rto_deadline.is_none() {
                self.rto_deadline = Some(now + self.rto());
            }
        }
    }

    fn on_ack(&mut self, now: Micros, ack: &ArqAck) {
        self.stats.acks_received += 1;
        if ack.ack_seq > self.una && ack.ack_seq <= self.high_sent {
            let newly = (ack.ack_seq - self.una) as f64;
            self.segments = self.segments.split_off(&ack.ack_seq);
            self.una = ack.ack_seq;
            self.next_send = self.next_send.max(self.una);
            self.observe_rtt(now.saturating_sub(ack.echo_timestamp).max(1));
            if self.cwnd < self.ssthresh {
                self.cwnd += newly;
            } else {
                self.cwnd += newly / self.cwnd;
            }
            self.cwnd = self.cwnd.min(self.cfg.max_cwnd);
            self.dup_acks = 0;
            self.backoff = 1;
            self.rto_deadline = (self.una < self.high_sent).then(|| now + self.rto());
        } else if ack.ack_seq == self.una && self.una < self.high_sent {
            self.dup_acks += 1;
            if self.dup_acks == DUP_ACK_THRESHOLD && self.una >= self.recover {
                self.ssthresh = (self.cwnd / 2.0).max(2.0);
                self.cwnd = self.ssthresh;
                self.next_send = self.una;
                self.recover = self.high_sent;
                self.stats.fast_retransmits += 1;
            }
        }
    }

    fn on_timeout(&mut self, now: Micros) {
        self.stats.timeouts += 1;
        self.ssthresh = (self.cwnd / 2.0).max(2.0);
        self.cwnd = 1.0;
        self.next_send = self.una;
        self.recover = self.high_sent;
        self.dup_acks = 0;
        self.backoff = (self.backoff * 2).min(MAX_BACKOFF);
        self.rto_deadline = Some(now + self.rto());
    }

    fn control(&mut self, kind: ControlKind, isn: u32, now: Micros) -> Vec<u8> {
        self.stats.control_sent += 1;
        let pkt = ControlPacket { kind, isn, mss: self.cfg.mss as u16, timestamp: now };
        encode_packet(&Packet::Control(pkt)).expect("fixed layout")
    }

    fn drive(&mut self, now: Micros, out: &mut Vec<Vec<u8>>) {
        match self.phase {
            Phase::Idle => {
                out.push(self.control(ControlKind::Hello, self.cfg.isn, now));
                self.phase = Phase::Connecting;
                self.control_deadline = Some(now + self.rto());
            }
            Phase::Connecting | Phase::Closing => {
                if self.control_deadline.is_some_and(|d| now >= d) {
                    let (kind, isn) = if self.phase == Phase::Connecting {
                        (ControlKind::Hello, self.cfg.isn)
                    } else {
                        (ControlKind::Fin, self.cut_end)
                    };
                    out.push(self.control(kind, isn, now));
                    self.control_deadline = Some(now + self.rto());
                }
            }
            Phase::Closed => {}
            Phase::Established => {
                if self.rto_deadline.is_some_and(|d| now >= d) && self.una < self.high_sent {
                    self.on_timeout(now);
                }
                self.transmit(now, out);
                if self.app_closed && self.app.is_empty() && self.una == self.cut_end {
                    self.rto_deadline = None;
                    out.push(self.control(ControlKind::Fin, self.cut_end, now));
                    self.phase = Phase::Closing;
                    self.control_deadline = Some(now + self.rto());
                }
            }
        }
    }
}

impl Endpoint for ArqSender {
    fn on_datagram(&mut self, now: Micros, bytes: &[u8], out: &mut Vec<Vec<u8>>) {
        match decode_packet(bytes) {
            Ok(Packet::ArqAck(a)) if self.phase == Phase::Established => self.on_ack(now, &a),
            Ok(Packet::Control(c)) => match (c.kind, self.phase) {
                (ControlKind::HelloAck, Phase::Connecting) => {
                    self.observe_rtt(now.saturating_sub(c.timestamp).max(1));
                    self.phase = Phase::Established;
                    self.control_deadline = None;
                    out.push(self.control(ControlKind::HandshakeAck, self.cfg.isn, now));
                }
                (ControlKind::FinAck, Phase::Closing) => {
                    self.phase = Phase::Closed;
                    self.control_deadline = None;
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
            Phase::Established => self.rto_deadline,
            Phase::Closed => None,
        }
    }

    fn is_done(&self) -> bool {
        self.phase == Phase::Closed
    }

    fn take_events(&mut self) -> Vec<EndpointEvent> {
        std::mem::take(&mut self.events)
    }

    fn write(&mut self, bytes: &[u8]) -> usize {
        let room = self.cfg.app_buffer_cap.saturating_sub(self.app.len());
        let n = bytes.len().min(room);
        self.app.extend(&bytes[..n]);
        n
    }

    fn close(&mut self) {
        self.app_closed = true;
    }

    fn report(&self) -> EndpointReport {
        EndpointReport {
            data_packets_sent: self.stats.data_sent,
            control_packets_sent: self.stats.control_sent,
            timeouts: self.stats.timeouts,
            final_ratio: 1.0,
            final_cwnd: self.cwnd,
            acks_received: self.stats.acks_received,
            ..EndpointReport::default()
        }
    }
}

/// In-order-only receiver: anything but the expected segment is dropped and
/// answered with a duplicate cumulative ACK.
pub struct ArqReceiver {
    cfg: TransportConfig,
    phase: Phase,
    expected: u32,
    delivered: Vec<u8>,
    delivered_bytes: u64,
    acks_sent: u64,
    control_sent: u64,
    malformed: u64,
    events: Vec<EndpointEvent>,
}

impl ArqReceiver {
    pub fn new(cfg: TransportConfig) -> Self {
        ArqReceiver {
            phase: Phase::Idle,
            expected: cfg.isn,
            delivered: Vec::new(),
            delivered_bytes: 0,
            acks_sent: 0,
            control_sent: 0,
            malformed: 0,
            events: Vec::new(),
            cfg,
        }
    }

    pub fn established(cfg: TransportConfig) -> Self {
        let mut r = Self::new(cfg);
        r.phase = Phase::Established;
        r
    }

    pub fn expected(&self) -> u32 {
        self.expected
    }

    fn control(&mut self, kind: ControlKind, isn: u32, timestamp: Micros) -> Vec<u8> {
        self.control_sent += 1;
        let pkt = ControlPacket { kind, isn, mss: self.cfg.mss as u16, timestamp };
        encode_packet(&Packet::Control(pkt)).expect("fixed layout")
    }
}

impl Endpoint for ArqReceiver {
    fn on_datagram(&mut self, _now: Micros, bytes: &[u8], out: &mut Vec<Vec<u8>>) {
        match decode_packet(bytes) {
            Ok(Packet::ArqData(d)) if self.phase != Phase::Idle => {
                if d.seq == self.expected {
                    self.expected += 1;
                    self.delivered_bytes += d.payload.len() as u64;
                    self.delivered.extend_from_slice(&d.payload);
                    self.events.push(EndpointEvent::SegmentDecoded { seq: d.seq });
                }
                self.acks_sent += 1;
                let ack = ArqAck { ack_seq: self.expected, echo_timestamp: d.send_timestamp };
                out.push(encode_packet(&Packet::ArqAck(ack)).expect("fixed layout"));
            }
            Ok(Packet::Control(c)) => match c.kind {
                ControlKind::Hello => {
                    if self.phase == Phase::Idle {
                        self.expected = c.isn;
                        self.phase = Phase::Established;
                    }
                    out.push(self.control(ControlKind::HelloAck, c.isn, c.timestamp));
                }
                ControlKind::Fin if self.phase != Phase::Idle && self.expected >= c.isn => {
                    self.phase = Phase::Closed;
                    out.push(self.control(ControlKind::FinAck, c.isn, c.timestamp));
                }
                _ => {}
            },
            Ok(_) => {}
            Err(_) => self.malformed += 1,
        }
    }

    fn on_wakeup(&mut self, _now: Micros, _out: &mut Vec<Vec<u8>>) {}

    fn next_wakeup(&self) -> Option<Micros> {
        None
    }

    fn is_done(&self) -> bool {
        self.phase == Phase::Closed
    }

    fn take_events(&mut self) -> Vec<EndpointEvent> {
        std::mem::take(&mut self.events)
    }

    fn read(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.delivered)
    }

    fn report(&self) -> EndpointReport {
        EndpointReport {
            control_packets_sent: self.control_sent,
            acks_sent: self.acks_sent,
            malformed: self.malformed,
            delivered_bytes: self.delivered_bytes,
            ..EndpointReport::default()
        }
    }
}
