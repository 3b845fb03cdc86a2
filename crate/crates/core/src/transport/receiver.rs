//! The receiving endpoint.
//!
//! Every generation gets its own decoder. A segment decoded anywhere is
//! pushed into every other open decoder that covers it, which may unlock
//! further peeling there. Each decoded segment is acknowledged on its own as
//! soon as its true length is known (from the generation metadata) and then
//! waits in the reorder buffer until everything before it has arrived.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::codec::{GenDecoder, InSymbol};
use super::{Endpoint, EndpointEvent, EndpointReport, TransportConfig};
use crate::wire::{
    decode_packet, encode_packet, AckPacket, ControlKind, ControlPacket, GenerationMeta, Packet, ACK_FLAG_REPEAT,
};
use crate::Micros;

const REACK_PER_SYMBOL: u32 = 4;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReceiverStats {
    pub symbols_received: u64,
    /// Symbols for generations that were already complete.
    pub redundant_symbols: u64,
    pub meta_received: u64,
    pub malformed: u64,
    pub segments_decoded: u64,
    pub acks_sent: u64,
    pub repeat_acks: u64,
    pub delivered_bytes: u64,
    pub generations_opened: u64,
    pub generations_completed: u64,
    pub generations_evicted: u64,
    pub control_sent: u64,
}

struct Slot {
    decoder: GenDecoder,
    first_decoded: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Idle,
    Established,
    Finished,
}

pub struct ReceiverState {
    cfg: TransportConfig,
    phase: Phase,
    decoders: BTreeMap<u32, Slot>,
    /// Recently completed generations: id -> (base, size, re-ACK cursor).
    completed: BTreeMap<u32, (u32, u32, u32)>,
    completed_order: VecDeque<u32>,
    /// Decoded payloads (padded) from `next_deliver - history` upwards.
    known: BTreeMap<u32, Vec<u8>>,
    lengths: BTreeMap<u32, u16>,
    /// Decoded segments waiting for their length: seq -> (generation, echo).
    decoded_unacked: BTreeMap<u32, (u32, Micros)>,
    reorder: BTreeMap<u32, Vec<u8>>,
    next_deliver: u32,
    delivered: Vec<u8>,
    retired_ops: u64,
    events: Vec<EndpointEvent>,
    stats: ReceiverStats,
}

impl ReceiverState {
    /// A receiver waiting for the sender's handshake.
    pub fn new(cfg: TransportConfig) -> Self {
        ReceiverState {
            phase: Phase::Idle,
            decoders: BTreeMap::new(),
            completed: BTreeMap::new(),
            completed_order: VecDeque::new(),
            known: BTreeMap::new(),
            lengths: BTreeMap::new(),
            decoded_unacked: BTreeMap::new(),
            reorder: BTreeMap::new(),
            next_deliver: cfg.isn,
            delivered: Vec::new(),
            retired_ops: 0,
            events: Vec::new(),
            stats: ReceiverStats::default(),
            cfg,
        }
    }

    /// A receiver whose connection is already open at `cfg.isn`.
    pub fn established(cfg: TransportConfig) -> Self {
        let mut r = Self::new(cfg);
        r.phase = Phase::Established;
        r
    }

    pub fn stats(&self) -> &ReceiverStats {
        &self.stats
    }

    /// Next sequence number the application is waiting for.
    pub fn next_deliver_seq(&self) -> u32 {
        self.next_deliver
    }

    pub fn open_generations(&self) -> usize {
        self.decoders.len()
    }

    /// Segments decoded and acknowledged but not yet deliverable in order.
    pub fn reorder_len(&self) -> usize {
        self.reorder.len()
    }

    pub fn is_decoded(&self, seq: u32) -> bool {
        self.known.contains_key(&seq) || seq < self.next_deliver
    }

    /// Takes the in-order bytes released so far.
    pub fn take_delivered(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.delivered)
    }

    /// Handles one data-plane packet (symbol or metadata) and returns the
    /// ACKs it triggers.
    pub fn on_packet(&mut self, packet: &Packet) -> Vec<AckPacket> {
        let mut acks = Vec::new();
        match packet {
            Packet::Lt(f) => self.on_symbol(InSymbol::Lt(&f.symbol), f.send_timestamp, &mut acks),
            Packet::Rlnc(f) => self.on_symbol(InSymbol::Rlnc(&f.packet), f.send_timestamp, &mut acks),
            Packet::Meta(m) => self.on_meta(m, &mut acks),
            _ => {}
        }
        acks
    }

    fn on_symbol(&mut self, sym: InSymbol<'_>, echo: Micros, acks: &mut Vec<AckPacket>) {
        self.stats.symbols_received += 1;
        let (gen_id, base, size, symbol_len) = match sym {
            InSymbol::Lt(s) => (s.generation_id, s.base_seq, s.gen_size, s.payload.len()),
            InSymbol::Rlnc(p) => (p.generation_id, p.base_seq, p.gen_size, p.payload.len()),
        };
        if self.completed.contains_key(&gen_id) {
            self.stats.redundant_symbols += 1;
            self.reack_completed(gen_id, echo, acks);
            return;
        }
        if !self.decoders.contains_key(&gen_id) && !self.open_generation(sym, echo, acks) {
            return;
        }
        let slot = self.decoders.get_mut(&gen_id).expect("opened above");
        let d = &slot.decoder;
        if d.base_seq() != base || d.gen_size() != size || d.symbol_len() != symbol_len {
            self.stats.malformed += 1;
            return;
        }
        let before = slot.decoder.ops();
        let ok = slot.decoder.ingest(sym);
        self.retired_ops += slot.decoder.ops() - before;
        if !ok {
            self.stats.malformed += 1;
            return;
        }
        let fresh = slot.decoder.drain();
        self.absorb(gen_id, fresh, echo, acks);
    }

    /// Creates the decoder for a new generation, seeded with everything
    /// already decoded in its range. Returns `false` if the generation turned
    /// out to be fully known.
    fn open_generation(&mut self, sym: InSymbol<'_>, echo: Micros, acks: &mut Vec<AckPacket>) -> bool {
        let (gen_id, base, size, symbol_len) = match sym {
            InSymbol::Lt(s) => (s.generation_id, s.base_seq, s.gen_size, s.payload.len()),
            InSymbol::Rlnc(p) => (p.generation_id, p.base_seq, p.gen_size, p.payload.len()),
        };
        if size == 0 || symbol_len == 0 {
            self.stats.malformed += 1;
            return false;
        }
        while self.decoders.len() >= self.cfg.max_open_generations.max(1) {
            let (&oldest, _) = self.decoders.iter().next().expect("non-empty");
            self.decoders.remove(&oldest);
            self.stats.generations_evicted += 1;
        }
        let mut decoder = GenDecoder::new(sym.kind(), gen_id, base, size, symbol_len, self.cfg.pending_factor);
        for seq in base..base.saturating_add(size as u32) {
            if let Some(p) = self.known.get(&seq) {
                decoder.seed_known(seq, p.clone());
                // the earlier ACK may have been lost
                self.ack_or_hold(seq, gen_id, echo, true, acks);
            }
        }
        decoder.drain();
        self.retired_ops += decoder.ops();
        self.stats.generations_opened += 1;
        if decoder.is_complete() {
            self.mark_completed(gen_id, base, size as u32);
            return false;
        }
        self.events.push(EndpointEvent::GenerationFirstPacket { generation_id: gen_id });
        self.decoders.insert(gen_id, Slot { decoder, first_decoded: false });
        true
    }

    fn on_meta(&mut self, meta: &GenerationMeta, acks: &mut Vec<AckPacket>) {
        self.stats.meta_received += 1;
        for (i, &len) in meta.orig_lens.iter().enumerate() {
            let seq = meta.base_seq.wrapping_add(i as u32);
            if seq >= self.next_deliver {
                self.lengths.insert(seq, len);
            }
        }
        let end = meta.base_seq.saturating_add(meta.orig_lens.len() as u32);
        let waiting: Vec<(u32, (u32, Micros))> =
            self.decoded_unacked.range(meta.base_seq..end).map(|(&s, &v)| (s, v)).collect();
        for (seq, (gen, _)) in waiting {
            self.decoded_unacked.remove(&seq);
            self.ack_or_hold(seq, gen, meta.send_timestamp, false, acks);
        }
    }

    /// Records newly decoded segments, propagates them into overlapping
    /// decoders and acknowledges them.
    fn absorb(&mut self, gen_id: u32, fresh: Vec<(u32, Vec<u8>)>, echo: Micros, acks: &mut Vec<AckPacket>) {
        let mut work: Vec<(u32, u32, Vec<u8>)> = Vec::new();
        self.note_decodes(gen_id, fresh, &mut work);
        let mut touched = BTreeSet::from([gen_id]);
        while let Some((g, seq, payload)) = work.pop() {
            if self.known.contains_key(&seq) {
                continue;
            }
            let others: Vec<u32> =
                self.decoders.iter().filter(|(&id, s)| id != g && s.decoder.contains(seq)).map(|(&id, _)| id).collect();
            for id in others {
                let slot = self.decoders.get_mut(&id).expect("listed above");
                let before = slot.decoder.ops();
                slot.decoder.seed_known(seq, payload.clone());
                self.retired_ops += slot.decoder.ops() - before;
                let more = slot.decoder.drain();
                touched.insert(id);
                self.note_decodes(id, more, &mut work);
            }
            self.known.insert(seq, payload);
            self.stats.segments_decoded += 1;
            self.events.push(EndpointEvent::SegmentDecoded { seq });
            self.ack_or_hold(seq, g, echo, false, acks);
        }
        for id in touched {
            if self.decoders.get(&id).is_some_and(|s| s.decoder.is_complete()) {
                let slot = self.decoders.remove(&id).expect("checked");
                self.mark_completed(id, slot.decoder.base_seq(), slot.decoder.gen_size() as u32);
                self.events.push(EndpointEvent::GenerationComplete { generation_id: id });
                self.stats.generations_completed += 1;
            }
        }
        self.prune();
    }

    fn note_decodes(&mut self, gen_id: u32, fresh: Vec<(u32, Vec<u8>)>, work: &mut Vec<(u32, u32, Vec<u8>)>) {
        if fresh.is_empty() {
            return;
        }
        if let Some(slot) = self.decoders.get_mut(&gen_id) {
            if !slot.first_decoded {
                slot.first_decoded = true;
                self.events.push(EndpointEvent::GenerationFirstDecode { generation_id: gen_id });
            }
        }
        // reversed so the worklist pops in decode order
        work.extend(fresh.into_iter().rev().map(|(s, p)| (gen_id, s, p)));
    }

    fn mark_completed(&mut self, gen_id: u32, base: u32, size: u32) {
        if self.completed.insert(gen_id, (base, size, 0)).is_none() {
            self.completed_order.push_back(gen_id);
        }
        let cap = 4 * self.cfg.max_open_generations.max(1);
        while self.completed_order.len() > cap {
            let old = self.completed_order.pop_front().expect("non-empty");
            self.completed.remove(&old);
        }
    }

    /// A symbol for a completed generation means the sender has not seen
    /// some of its ACKs; repeat a few, round-robin over the range.
    fn reack_completed(&mut self, gen_id: u32, echo: Micros, acks: &mut Vec<AckPacket>) {
        let Some(&(base, size, cursor)) = self.completed.get(&gen_id) else { return };
        let mut sent = 0;
        let mut next = cursor;
        for step in 0..size {
            let offset = (cursor + step) % size;
            next = (offset + 1) % size;
            let seq = base + offset;
            if self.is_decoded(seq) && (seq < self.next_deliver || self.lengths.contains_key(&seq)) {
                self.ack_or_hold(seq, gen_id, echo, true, acks);
                sent += 1;
                if sent == REACK_PER_SYMBOL {
                    break;
                }
            }
        }
        if let Some(entry) = self.completed.get_mut(&gen_id) {
            entry.2 = next;
        }
    }

    /// ACKs `seq` once its length is known (or it was already delivered);
    /// otherwise parks it until the metadata arrives.
    fn ack_or_hold(&mut self, seq: u32, gen_id: u32, echo: Micros, repeat: bool, acks: &mut Vec<AckPacket>) {
        let flags = if repeat { ACK_FLAG_REPEAT } else { 0 };
        if seq < self.next_deliver {
            self.push_ack(AckPacket { flags, decoded_seq: seq, generation_id: gen_id, echo_timestamp: echo }, acks);
            return;
        }
        let Some(&len) = self.lengths.get(&seq) else {
            self.decoded_unacked.entry(seq).or_insert((gen_id, echo));
            return;
        };
        self.push_ack(AckPacket { flags, decoded_seq: seq, generation_id: gen_id, echo_timestamp: echo }, acks);
        if !self.reorder.contains_key(&seq) {
            let mut data = self.known.get(&seq).cloned().unwrap_or_default();
            data.resize(len as usize, 0);
            self.reorder.insert(seq, data);
        }
        while let Some(data) = self.reorder.remove(&self.next_deliver) {
            self.stats.delivered_bytes += data.len() as u64;
            self.delivered.extend_from_slice(&data);
            self.next_deliver += 1;
        }
    }

    fn push_ack(&mut self, ack: AckPacket, acks: &mut Vec<AckPacket>) {
        self.stats.acks_sent += 1;
        if ack.flags & ACK_FLAG_REPEAT != 0 {
            self.stats.repeat_acks += 1;
        }
        acks.push(ack);
    }

    fn prune(&mut self) {
        let floor = self.next_deliver.saturating_sub(self.cfg.receiver_history);
        self.known = self.known.split_off(&floor);
        self.lengths = self.lengths.split_off(&self.next_deliver);
    }

    fn control(&mut self, kind: ControlKind, isn: u32, timestamp: Micros) -> Vec<u8> {
        self.stats.control_sent += 1;
        let pkt = ControlPacket { kind, isn, mss: self.cfg.mss as u16, timestamp };
        encode_packet(&Packet::Control(pkt)).expect("fixed layout")
    }
}

impl Endpoint for ReceiverState {
    fn on_datagram(&mut self, _now: Micros, bytes: &[u8], out: &mut Vec<Vec<u8>>) {
        let packet = match decode_packet(bytes) {
            Ok(p) => p,
            Err(_) => {
                self.stats.malformed += 1;
                return;
            }
        };
        match &packet {
            Packet::Control(c) => match c.kind {
                ControlKind::Hello => {
                    if self.phase == Phase::Idle {
                        self.next_deliver = c.isn;
                        self.phase = Phase::Established;
                    }
                    out.push(self.control(ControlKind::HelloAck, c.isn, c.timestamp));
                }
                ControlKind::Fin if self.phase != Phase::Idle && self.next_deliver >= c.isn => {
                    self.phase = Phase::Finished;
                    out.push(self.control(ControlKind::FinAck, c.isn, c.timestamp));
                }
                _ => {}
            },
            Packet::Lt(_) | Packet::Rlnc(_) | Packet::Meta(_) if self.phase != Phase::Idle => {
                for ack in self.on_packet(&packet) {
                    out.push(encode_packet(&Packet::Ack(ack)).expect("fixed layout"));
                }
            }
            _ => {}
        }
    }

    fn on_wakeup(&mut self, _now: Micros, _out: &mut Vec<Vec<u8>>) {}

    fn next_wakeup(&self) -> Option<Micros> {
        None
    }

    fn is_done(&self) -> bool {
        self.phase == Phase::Finished
    }

    fn decode_ops(&self) -> u64 {
        self.retired_ops
    }

    fn take_events(&mut self) -> Vec<EndpointEvent> {
        std::mem::take(&mut self.events)
    }

    fn read(&mut self) -> Vec<u8> {
        self.take_delivered()
    }

    fn report(&self) -> EndpointReport {
        EndpointReport {
            control_packets_sent: self.stats.control_sent,
            acks_sent: self.stats.acks_sent,
            malformed: self.stats.malformed,
            delivered_bytes: self.stats.delivered_bytes,
            ..EndpointReport::default()
        }
    }
}
