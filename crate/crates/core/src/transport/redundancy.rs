//! Adaptive redundancy ratio.

/// Tracks segments pushed into the coding window and Diff-timeout
/// crossings, and derives the symbols-per-segment ratio
/// `n_segments / (n_segments - n_timeout)` clamped to `[floor, cap]`.
#[derive(Clone, Debug)]
pub struct RedundancyEstimator {
    pub n_segments: u64,
    pub n_timeout: u64,
    pub floor: f64,
    pub cap: f64,
    /// Ratio used until `n_segments` reaches `warmup_segments`.
    pub initial: f64,
    pub warmup_segments: u64,
}

impl Default for RedundancyEstimator {
    fn default() -> Self {
        RedundancyEstimator { n_segments: 0, n_timeout: 0, floor: 1.05, cap: 4.0, initial: 1.25, warmup_segments: 100 }
    }
}

impl RedundancyEstimator {
    pub fn record_segments(&mut self, n: u64) {
        self.n_segments += n;
    }

    pub fn record_timeout(&mut self) {
        self.n_timeout += 1;
    }

    /// The clamped counter formula, ignoring warm-up. Saturates at `cap`
    /// when timeouts reach the segment count.
    pub fn formula_ratio(&self) -> f64 {
        if self.n_segments <= self.n_timeout {
            return self.cap;
        }
        let r = self.n_segments as f64 / (self.n_segments - self.n_timeout) as f64;
        r.clamp(self.floor, self.cap)
    }

    pub fn ratio(&self) -> f64 {
        if self.n_segments < self.warmup_segments {
            self.initial
        } else {
            self.formula_ratio()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_then_formula() {
        let mut r = RedundancyEstimator::default();
        r.record_segments(50);
        r.record_timeout();
        assert_eq!(r.ratio(), 1.25);
        r.record_segments(150);
        for _ in 0..39 {
            r.record_timeout();
        }
        // 200 / (200 - 40)
        assert_eq!(r.ratio(), 1.25);
        r.record_segments(200);
        assert!((r.ratio() - 400.0 / 360.0).abs() < 1e-12);
    }

    #[test]
    fn clamps() {
        let mut r = RedundancyEstimator { warmup_segments: 0, ..Default::default() };
        r.record_segments(1000);
        assert_eq!(r.ratio(), 1.05);
        for _ in 0..900 {
            r.record_timeout();
        }
        assert_eq!(r.ratio(), 4.0);
        for _ in 0..200 {
            r.record_timeout();
        }
        assert_eq!(r.ratio(), 4.0);
    }
}
