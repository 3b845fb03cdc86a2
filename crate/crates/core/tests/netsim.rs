use std::sync::{Arc, Mutex};

use tcp_forward::netsim::{
    simulate, ArqReceiver, CpuModel, Dir, Fate, LinkConfig, Protocol, RunSpec, Side, SimOptions, Simulation,
};
use tcp_forward::transport::{Endpoint, EndpointReport, TransportConfig};
use tcp_forward::wire::{decode_packet, encode_packet, ArqData, Packet};
use tcp_forward::Micros;

/// Records arrival times; optionally burns `ops_per_packet` decode
/// operations and echoes every datagram back.
#[derive(Default)]
struct Probe {
    arrivals: Arc<Mutex<Vec<Micros>>>,
    echo: bool,
    ops_per_packet: u64,
    ops: u64,
}

impl Endpoint for Probe {
    fn on_datagram(&mut self, now: Micros, bytes: &[u8], out: &mut Vec<Vec<u8>>) {
        self.arrivals.lock().unwrap().push(now);
        self.ops += self.ops_per_packet;
        if self.echo {
            out.push(bytes.to_vec());
        }
    }
    fn on_wakeup(&mut self, _now: Micros, _out: &mut Vec<Vec<u8>>) {}
    fn next_wakeup(&self) -> Option<Micros> {
        None
    }
    fn is_done(&self) -> bool {
        false
    }
    fn decode_ops(&self) -> u64 {
        self.ops
    }
    fn report(&self) -> EndpointReport {
        EndpointReport::default()
    }
}

fn link(loss: f64, delay: Micros, bandwidth: f64) -> LinkConfig {
    LinkConfig { loss_rate: loss, one_way_delay_us: delay, bandwidth, queue_capacity: 1 << 20 }
}

type Arrivals = Arc<Mutex<Vec<Micros>>>;

fn probes(echo: bool, ops: u64) -> (Probe, Probe, Arrivals, Arrivals) {
    let s = Probe::default();
    let r = Probe { echo, ops_per_packet: ops, ..Default::default() };
    let (sa, ra) = (s.arrivals.clone(), r.arrivals.clone());
    (s, r, sa, ra)
}

#[test]
fn delays_add_along_the_chain() {
    // 72 payload bytes + 28 header bytes at 1e6 B/s serialize in 100 us per hop
    let links = [link(0.0, 10_000, 1e6), link(0.0, 5_000, 1e6), link(0.0, 2_000, 1e6)];
    let mut sim = Simulation::build_topology(&links, SimOptions::default()).unwrap();
    let (s, r, sa, ra) = probes(true, 0);
    sim.attach(Box::new(s), Box::new(r));
    sim.inject(Side::Sender, vec![0; 72]);
    sim.run_until(1_000_000, None).unwrap();
    assert_eq!(*ra.lock().unwrap(), vec![17_300]);
    assert_eq!(*sa.lock().unwrap(), vec![2 * 17_300]);
}

#[test]
fn serialization_queues_back_to_back_packets() {
    let mut sim = Simulation::build_topology(&[link(0.0, 1_000, 1e6)], SimOptions::default()).unwrap();
    let (s, r, _, ra) = probes(false, 0);
    sim.attach(Box::new(s), Box::new(r));
    for _ in 0..3 {
        sim.inject(Side::Sender, vec![0; 972]);
    }
    sim.run_until(1_000_000, None).unwrap();
    assert_eq!(*ra.lock().unwrap(), vec![2_000, 3_000, 4_000]);
}

#[test]
fn full_queue_drops_tail() {
    let mut l = link(0.0, 1_000, 1e6);
    l.queue_capacity = 2;
    let mut sim = Simulation::build_topology(&[l], SimOptions::default()).unwrap();
    let (s, r, _, ra) = probes(false, 0);
    sim.attach(Box::new(s), Box::new(r));
    for _ in 0..5 {
        sim.inject(Side::Sender, vec![0; 972]);
    }
    sim.run_until(1_000_000, None).unwrap();
    assert_eq!(ra.lock().unwrap().len(), 2);
    let st = sim.link_stats(Dir::Forward, 0);
    assert_eq!((st.sent, st.delivered, st.dropped, st.lost), (5, 2, 3, 0));
}

#[test]
fn receiver_cpu_delays_its_replies() {
    let links = [link(0.0, 1_000, 1e9)];
    let opts = SimOptions { cpu: CpuModel::Custom(1e6), ..Default::default() };
    let mut sim = Simulation::build_topology(&links, opts).unwrap();
    // 2000 ops at 1e6 ops/s keep the receiver busy for 2 ms per packet
    let (s, r, sa, ra) = probes(true, 2_000);
    sim.attach(Box::new(s), Box::new(r));
    sim.inject(Side::Sender, vec![0; 72]);
    sim.inject(Side::Sender, vec![0; 72]);
    sim.run_until(1_000_000, None).unwrap();
    assert_eq!(*ra.lock().unwrap(), vec![1_001, 3_001]);
    assert_eq!(*sa.lock().unwrap(), vec![4_002, 6_002]);
}

fn bernoulli_losses(loss: f64, hops: usize, packets: usize, seed: u64) -> u64 {
    let links = vec![link(loss, 100, 1e12); hops];
    let mut sim = Simulation::build_topology(&links, SimOptions { seed, ..Default::default() }).unwrap();
    let (s, r, _, ra) = probes(false, 0);
    sim.attach(Box::new(s), Box::new(r));
    for _ in 0..packets {
        sim.inject(Side::Sender, vec![1; 8]);
    }
    sim.run_until(Micros::MAX, None).unwrap();
    let received = ra.lock().unwrap().len() as u64;
    packets as u64 - received
}

#[test]
fn loss_is_bernoulli_within_three_sigma() {
    let n = 100_000;
    for (p, hops) in [(0.3, 1), (0.05, 1), (LinkConfig::split_path_loss(0.5, 2), 2)] {
        let path = 1.0 - (1.0 - p).powi(hops as i32);
        let lost = bernoulli_losses(p, hops, n, 11) as f64;
        let mean = n as f64 * path;
        let sigma = (n as f64 * path * (1.0 - path)).sqrt();
        assert!((lost - mean).abs() <= 3.0 * sigma, "p={p} hops={hops}: {lost} vs {mean}");
    }
    assert!((LinkConfig::split_path_loss(0.5, 2) - (1.0 - 0.5f64.sqrt())).abs() < 1e-15);
}

fn spec(protocol: Protocol, path_loss: f64, seed: u64, bytes: usize) -> RunSpec {
    let per_link = LinkConfig::split_path_loss(path_loss, 2);
    RunSpec {
        protocol,
        transport: TransportConfig::default(),
        links: vec![LinkConfig { loss_rate: per_link, ..Default::default() }; 2],
        opts: SimOptions { seed, record_trace: true, stall_limit_us: Micros::MAX, ..Default::default() },
        workload_bytes: bytes,
        time_limit_us: 600_000_000,
    }
}

#[test]
fn runs_are_deterministic() {
    for protocol in [Protocol::TcpForward, Protocol::TcpNcBaseline, Protocol::ArqBaseline] {
        let a = simulate(&spec(protocol, 0.2, 9, 100_000)).unwrap();
        let b = simulate(&spec(protocol, 0.2, 9, 100_000)).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.output, b.output);
        let c = simulate(&spec(protocol, 0.2, 10, 100_000)).unwrap();
        assert_ne!(a.metrics.trace_digest, c.metrics.trace_digest);
    }
}

#[test]
fn packets_are_conserved_on_every_link() {
    let s = spec(Protocol::TcpForward, 0.2, 3, 200_000);
    let mut links = s.links.clone();
    links[1].queue_capacity = 8;
    let mut sim = Simulation::build_topology(&links, s.opts.clone()).unwrap();
    let (tx, rx) = Protocol::TcpForward.endpoints(&s.transport);
    sim.attach(tx, rx);
    sim.offer(&tcp_forward::netsim::workload(s.workload_bytes, 3));
    let m = sim.run_until(s.time_limit_us, None).unwrap();
    assert!(m.completed);
    let mut total_lost = 0;
    let mut total_dropped = 0;
    for dir in [Dir::Forward, Dir::Reverse] {
        for hop in 0..sim.hops() {
            let st = sim.link_stats(dir, hop);
            let recs: Vec<_> = sim.trace().iter().filter(|r| r.dir == dir && r.hop == hop).collect();
            assert_eq!(recs.len() as u64, st.sent);
            assert_eq!(recs.iter().filter(|r| r.fate == Fate::Lost).count() as u64, st.lost);
            assert_eq!(recs.iter().filter(|r| r.fate == Fate::Dropped).count() as u64, st.dropped);
            assert!(st.delivered + st.lost + st.dropped <= st.sent);
            total_lost += st.lost;
            total_dropped += st.dropped;
        }
        // a packet leaving one hop enters the next
        let (up, down) = match dir {
            Dir::Forward => (0, 1),
            Dir::Reverse => (1, 0),
        };
        assert_eq!(sim.link_stats(dir, up).delivered, sim.link_stats(dir, down).sent);
    }
    assert_eq!(m.packets_lost, total_lost);
    assert_eq!(m.packets_dropped, total_dropped);
    assert_eq!(m.data_packets_sent, sim.link_stats(Dir::Forward, 0).sent);
    assert_eq!(m.ack_packets_sent, sim.link_stats(Dir::Reverse, 1).sent);
}

#[test]
fn every_protocol_delivers_exactly() {
    for protocol in [Protocol::TcpForward, Protocol::TcpNcBaseline, Protocol::ArqBaseline] {
        for loss in [0.0, 0.1, 0.4] {
            let out = simulate(&spec(protocol, loss, 21, 150_000)).unwrap();
            assert!(out.metrics.completed, "{protocol:?} at {loss}");
            assert_eq!(out.output, out.input, "{protocol:?} at {loss}");
        }
    }
}

#[test]
fn tcp_forward_is_live_at_thirty_percent_loss() {
    for seed in 0..200 {
        let out = simulate(&spec(Protocol::TcpForward, 0.3, seed, 24_000)).unwrap();
        assert!(out.metrics.completed, "seed {seed}");
        assert_eq!(out.output, out.input, "seed {seed}");
    }
}

#[test]
fn arq_receiver_is_go_back_n() {
    let cfg = TransportConfig { mss: 4, ..Default::default() };
    let mut rx = ArqReceiver::established(cfg);
    let mut feed = |seq: u32| {
        let d = Packet::ArqData(ArqData { seq, send_timestamp: 0, payload: vec![seq as u8; 4] });
        let mut out = Vec::new();
        rx.on_datagram(0, &encode_packet(&d).unwrap(), &mut out);
        match decode_packet(&out[0]).unwrap() {
            Packet::ArqAck(a) => a.ack_seq,
            other => panic!("unexpected {other:?}"),
        }
    };
    assert_eq!(feed(1), 0);
    assert_eq!(feed(2), 0);
    assert_eq!(feed(0), 1);
    assert_eq!(feed(2), 1);
    assert_eq!(feed(1), 2);
    assert_eq!(feed(0), 2);
    assert_eq!(rx.expected(), 2);
    assert_eq!(rx.read(), vec![0, 0, 0, 0, 1, 1, 1, 1]);
}

#[test]
fn bad_links_are_rejected() {
    for l in [
        LinkConfig { loss_rate: 1.0, ..Default::default() },
        LinkConfig { loss_rate: -0.1, ..Default::default() },
        LinkConfig { bandwidth: 0.0, ..Default::default() },
        LinkConfig { queue_capacity: 0, ..Default::default() },
    ] {
        assert!(Simulation::build_topology(&[l], SimOptions::default()).is_err());
    }
    assert!(Simulation::build_topology(&[], SimOptions::default()).is_err());
}
