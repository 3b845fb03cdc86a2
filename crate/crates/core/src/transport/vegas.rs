//! RTT estimation and the Vegas window rule.

use crate::Micros;

/// RTT bookkeeping for one connection.
#[derive(Clone, Debug)]
pub struct RttEstimator {
    /// Minimum RTT ever observed.
    pub base_rtt: Option<Micros>,
    pub last_rtt: Option<Micros>,
    /// Smoothed RTT and mean deviation (RFC 6298 gains).
    pub srtt: Micros,
    pub rttvar: Micros,
    pub alpha: f64,
    pub beta: f64,
    round_min: Option<Micros>,
    round_end: Micros,
}

impl RttEstimator {
    pub fn new(initial_rtt: Micros, alpha: f64, beta: f64) -> Self {
        RttEstimator {
            base_rtt: None,
            last_rtt: None,
            srtt: initial_rtt,
            rttvar: initial_rtt / 2,
            alpha,
            beta,
            round_min: None,
            round_end: 0,
        }
    }

    /// Records a sample. Returns the minimum sample of the round if a
    /// Vegas round ended with it.
    pub fn sample(&mut self, now: Micros, rtt: Micros) -> Option<Micros> {
        let rtt = rtt.max(1);
        self.observe(rtt);
        self.round_min = Some(self.round_min.map_or(rtt, |m| m.min(rtt)));
        if now >= self.round_end {
            self.round_end = now + self.srtt;
            self.round_min.take()
        } else {
            None
        }
    }

    /// Updates `base_rtt`, `last_rtt` and the smoothed estimate without
    /// touching the Vegas round.
    pub fn observe(&mut self, rtt: Micros) {
        let rtt = rtt.max(1);
        if self.last_rtt.is_none() {
            self.srtt = rtt;
            self.rttvar = rtt / 2;
        } else {
            let err = self.srtt.abs_diff(rtt);
            self.rttvar = (3 * self.rttvar + err) / 4;
            self.srtt = (7 * self.srtt + rtt) / 8;
        }
        self.base_rtt = Some(self.base_rtt.map_or(rtt, |b| b.min(rtt)));
        self.last_rtt = Some(rtt);
    }

    /// Retransmission-style timeout `srtt + 4 * rttvar`, at least `floor`.
    pub fn rto(&self, floor: Micros) -> Micros {
        (self.srtt + 4 * self.rttvar).max(floor)
    }
}

/// Expected-minus-actual backlog in segments:
/// `cwnd * (1/base - 1/sample) * base`.
pub fn vegas_diff(cwnd: f64, base_rtt: Micros, sample: Micros) -> f64 {
    let base = base_rtt as f64;
    cwnd * (1.0 / base - 1.0 / sample as f64) * base
}

/// Smallest window the Vegas rule will produce.
pub const MIN_CWND: f64 = 2.0;

/// One Vegas step: folds `sample` into `base_rtt`, then grows the window by
/// one segment below `alpha`, shrinks it by one above `beta`.
pub fn vegas_update(rtt: &mut RttEstimator, cwnd: f64, sample: Micros) -> f64 {
    let sample = sample.max(1);
    let base = rtt.base_rtt.map_or(sample, |b| b.min(sample));
    rtt.base_rtt = Some(base);
    let diff = vegas_diff(cwnd, base, sample);
    let next = if diff < rtt.alpha {
        cwnd + 1.0
    } else if diff > rtt.beta {
        cwnd - 1.0
    } else {
        cwnd
    };
    next.max(MIN_CWND)
}

/// Congestion window with Vegas slow start (doubling per round until the
/// backlog first exceeds `alpha`) followed by the linear rule.
#[derive(Clone, Debug)]
pub struct VegasWindow {
    pub cwnd: f64,
    pub max_cwnd: f64,
    pub slow_start: bool,
}

impl VegasWindow {
    pub fn new(initial: f64, max_cwnd: f64) -> Self {
        VegasWindow { cwnd: initial, max_cwnd, slow_start: true }
    }

    /// Applies the end-of-round rule for the round's minimum RTT.
    pub fn on_round(&mut self, rtt: &mut RttEstimator, round_min: Micros) {
        if self.slow_start {
            let base = rtt.base_rtt.unwrap_or(round_min).min(round_min);
            if vegas_diff(self.cwnd, base, round_min) > rtt.alpha {
                self.slow_start = false;
            } else {
                self.cwnd = (self.cwnd * 2.0).max(MIN_CWND);
            }
        } else {
            self.cwnd = vegas_update(rtt, self.cwnd, round_min);
        }
        self.cwnd = self.cwnd.min(self.max_cwnd);
    }

    /// Whole segments the window admits.
    pub fn segments(&self) -> u32 {
        self.cwnd.max(0.0).floor() as u32
    }
}
