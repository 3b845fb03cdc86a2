//! Turns endpoint events into latency and decode-delay samples.

use std::collections::HashMap;

use super::Metrics;
use crate::transport::EndpointEvent;
use crate::Micros;

/// Timestamps of endpoint events from one or both sides of a connection,
/// all on a common clock.
#[derive(Clone, Debug, Default)]
pub struct EventLog {
    started: HashMap<u32, Micros>,
    /// First decode time per segment, in decode order.
    decoded: Vec<(u32, Micros)>,
    decoded_seen: HashMap<u32, ()>,
    gen_first_packet: HashMap<u32, Micros>,
    first_decode: Vec<Micros>,
    full_decode: Vec<Micros>,
}

impl EventLog {
    /// Records `ev` from a call that received its input at `arrival` and
    /// finished at `finish`.
    pub fn record(&mut self, ev: EndpointEvent, arrival: Micros, finish: Micros) {
        match ev {
            EndpointEvent::SegmentStarted { seq, at } => {
                self.started.entry(seq).or_insert(at);
            }
            EndpointEvent::SegmentDecoded { seq } => {
                if self.decoded_seen.insert(seq, ()).is_none() {
                    self.decoded.push((seq, finish));
                }
            }
            EndpointEvent::GenerationFirstPacket { generation_id } => {
                self.gen_first_packet.insert(generation_id, arrival);
            }
            EndpointEvent::GenerationFirstDecode { generation_id } => {
                if let Some(&t) = self.gen_first_packet.get(&generation_id) {
                    self.first_decode.push(finish.saturating_sub(t));
                }
            }
            EndpointEvent::GenerationComplete { generation_id } => {
                if let Some(t) = self.gen_first_packet.remove(&generation_id) {
                    self.full_decode.push(finish.saturating_sub(t));
                }
            }
        }
    }

    /// Adopts the segment start times seen by the other side.
    pub fn merge_started(&mut self, other: &EventLog) {
        for (&seq, &at) in &other.started {
            self.started.entry(seq).or_insert(at);
        }
    }

    /// Sorted end-to-end latencies of segments with both a start and a
    /// decode time; never zero.
    pub fn latencies(&self) -> Vec<Micros> {
        let mut lat: Vec<Micros> = self
            .decoded
            .iter()
            .filter_map(|(seq, t)| self.started.get(seq).map(|s| t.saturating_sub(*s).max(1)))
            .collect();
        lat.sort_unstable();
        lat
    }

    /// Fills the latency and generation fields of `m`.
    pub fn apply(&self, m: &mut Metrics) {
        let lat = self.latencies();
        m.latency_samples = lat.len() as u64;
        m.latency_mean_us = mean(&lat);
        m.latency_p50_us = percentile(&lat, 0.50);
        m.latency_p95_us = percentile(&lat, 0.95);
        m.generations = self.first_decode.len() as u64;
        m.first_decode_mean_us = mean(&self.first_decode);
        m.full_decode_mean_us = mean(&self.full_decode);
    }
}

fn mean(xs: &[Micros]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().map(|&x| x as f64).sum::<f64>() / xs.len() as f64
    }
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[Micros], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1] as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latency_pairs_first_start_with_first_decode() {
        let mut log = EventLog::default();
        log.record(EndpointEvent::SegmentStarted { seq: 1, at: 100 }, 0, 0);
        log.record(EndpointEvent::SegmentStarted { seq: 1, at: 500 }, 0, 0);
        log.record(EndpointEvent::SegmentDecoded { seq: 1 }, 0, 400);
        log.record(EndpointEvent::SegmentDecoded { seq: 1 }, 0, 900);
        log.record(EndpointEvent::SegmentDecoded { seq: 2 }, 0, 900);
        assert_eq!(log.latencies(), vec![300]);
    }

    #[test]
    fn merged_sides() {
        let mut tx = EventLog::default();
        tx.record(EndpointEvent::SegmentStarted { seq: 7, at: 10 }, 0, 0);
        let mut rx = EventLog::default();
        rx.record(EndpointEvent::SegmentDecoded { seq: 7 }, 0, 10);
        assert!(rx.latencies().is_empty());
        rx.merge_started(&tx);
        assert_eq!(rx.latencies(), vec![1]);
    }

    #[test]
    fn generation_delays() {
        let mut log = EventLog::default();
        log.record(EndpointEvent::GenerationFirstPacket { generation_id: 3 }, 50, 60);
        log.record(EndpointEvent::GenerationFirstDecode { generation_id: 3 }, 50, 60);
        log.record(EndpointEvent::GenerationComplete { generation_id: 3 }, 90, 150);
        let mut m = Metrics::default();
        log.apply(&mut m);
        assert_eq!(m.generations, 1);
        assert_eq!(m.first_decode_mean_us, 10.0);
        assert_eq!(m.full_decode_mean_us, 100.0);
        assert_eq!(percentile(&[1, 2, 3, 4], 0.5), 2.0);
    }
}
