//! Ideal and Robust Soliton degree distributions.
//!
//! A [`DegreeDistribution`] is tabulated once per generation size and then
//! sampled by inverse CDF, so drawing a degree costs `O(log k)`.

use rand::RngCore;
use thiserror::Error;

/// Robust constant used when none is configured.
pub const DEFAULT_C: f64 = 0.1;
/// Decode-failure bound used when none is configured.
pub const DEFAULT_DELTA: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("generation size k must be at least 1")]
    ZeroK,
    #[error("robust constant c must be positive and finite, got {0}")]
    BadC(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    BadDelta(f64),
    #[error("k/R = {ratio:.4} rounds below 1; k = {k} is too small for the chosen c and delta")]
    SpikeBelowOne { k: usize, ratio: f64 },
    #[error("spike mass R*ln(R/delta)/k is negative (R = {r_const:.4} < delta)")]
    NegativeSpike { r_const: f64 },
}

/// Parameters of the Robust Soliton distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistributionParams {
    pub k: usize,
    pub c: f64,
    pub delta: f64,
}

impl DistributionParams {
    pub fn new(k: usize, c: f64, delta: f64) -> Result<Self, DistributionError> {
        let p = DistributionParams { k, c, delta };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with the default `c` and `delta`.
    pub fn with_defaults(k: usize) -> Result<Self, DistributionError> {
        Self::new(k, DEFAULT_C, DEFAULT_DELTA)
    }

    pub fn validate(&self) -> Result<(), DistributionError> {
        if self.k == 0 {
            return Err(DistributionError::ZeroK);
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(DistributionError::BadC(self.c));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(DistributionError::BadDelta(self.delta));
        }
        Ok(())
    }

    /// The Soliton constant `R = c * ln(k/delta) * sqrt(k)`.
    pub fn r_const(&self) -> f64 {
        let k = self.k as f64;
        self.c * (k / self.delta).ln() * k.sqrt()
    }
}

/// Ideal Soliton masses `rho(1..=k)`, stored zero-indexed.
///
/// The rounding residue is folded into `rho(1)` so the table sums to one.
pub fn ideal_soliton(k: usize) -> Result<Vec<f64>, DistributionError> {
    if k == 0 {
        return Err(DistributionError::ZeroK);
    }
    let mut rho: Vec<f64> = (1..=k)
        .map(|i| {
            if i == 1 {
                1.0 / k as f64
            } else {
                let i = i as f64;
                1.0 / (i * (i - 1.0))
            }
        })
        .collect();
    fold_residue(&mut rho);
    Ok(rho)
}

/// Sets entry 0 to `1 - sum(rest)`, summing the tail smallest-first.
fn fold_residue(p: &mut [f64]) {
    let tail: f64 = p[1..].iter().rev().sum();
    p[0] = 1.0 - tail;
}

/// A tabulated Robust Soliton distribution for one generation size.
#[derive(Clone, Debug)]
pub struct DegreeDistribution {
    pub params: DistributionParams,
    pub rho: Vec<f64>,
    pub tau: Vec<f64>,
    pub beta: f64,
    pub mu: Vec<f64>,
    /// 1-based position of the `tau` spike, `round(k/R)` clamped to `[1, k]`.
    pub spike_index: usize,
    pub r_const: f64,
    cdf: Vec<f64>,
}

/// Builds the Robust Soliton distribution `mu = (rho + tau) / beta`.
pub fn robust_soliton(params: DistributionParams) -> Result<DegreeDistribution, DistributionError> {
    params.validate()?;
    let k = params.k;
    let kf = k as f64;
    let r_const = params.r_const();
    let ratio = kf / r_const;
    let rounded = ratio.round();
    if rounded.is_nan() || rounded < 1.0 {
        return Err(DistributionError::SpikeBelowOne { k, ratio });
    }
    let spike_index = (rounded as usize).clamp(1, k);
    let spike_mass = r_const * (r_const / params.delta).ln() / kf;
    if spike_mass < 0.0 {
        return Err(DistributionError::NegativeSpike { r_const });
    }

    let rho = ideal_soliton(k)?;
    let tau: Vec<f64> = (1..=k)
        .map(|i| match i.cmp(&spike_index) {
            std::cmp::Ordering::Less => r_const / (i as f64 * kf),
            std::cmp::Ordering::Equal => spike_mass,
            std::cmp::Ordering::Greater => 0.0,
        })
        .collect();
    let beta: f64 = rho.iter().zip(&tau).map(|(r, t)| r + t).sum();
    let mut mu: Vec<f64> = rho.iter().zip(&tau).map(|(r, t)| (r + t) / beta).collect();
    fold_residue(&mut mu);

    let mut cdf = Vec::with_capacity(k);
    let mut acc = 0.0;
    for &m in &mu {
        acc += m;
        cdf.push(acc);
    }
    *cdf.last_mut().expect("k >= 1") = 1.0;

    Ok(DegreeDistribution { params, rho, tau, beta, mu, spike_index, r_const, cdf })
}

impl DegreeDistribution {
    pub fn k(&self) -> usize {
        self.params.k
    }

    /// Draws a degree in `[1, k]` with `Pr[d = i] = mu(i)`.
    pub fn sample_degree<R: RngCore + ?Sized>(&self, rng: &mut R) -> usize {
        let u = unit_f64(rng.next_u64());
        // first index whose cumulative mass exceeds u
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.cdf.len() - 1) + 1
    }

    /// Mean degree `sum(i * mu(i))`.
    pub fn mean_degree(&self) -> f64 {
        self.mu.iter().enumerate().map(|(i, m)| (i + 1) as f64 * m).sum()
    }
}

/// Maps 64 random bits to `[0, 1)` using the top 53 bits.
pub(crate) fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ideal_small_cases() {
        assert_eq!(ideal_soliton(1).unwrap(), vec![1.0]);
        assert_eq!(ideal_soliton(2).unwrap(), vec![0.5, 0.5]);
        let r4 = ideal_soliton(4).unwrap();
        let want = [0.25, 0.5, 1.0 / 6.0, 1.0 / 12.0];
        for (a, b) in r4.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(ideal_soliton(0), Err(DistributionError::ZeroK));
    }

    #[test]
    fn ideal_tail_strictly_decreasing() {
        let rho = ideal_soliton(500).unwrap();
        assert!(rho[1..].windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn k_one_is_point_mass() {
        let d = robust_soliton(DistributionParams::with_defaults(1).unwrap()).unwrap();
        assert_eq!(d.mu, vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..100).all(|_| d.sample_degree(&mut rng) == 1));
    }

    #[test]
    fn k10_worked_example() {
        // mpmath reference: R = 0.94733372445052139214, spike = round(10.556) = 10
        let d = robust_soliton(DistributionParams::new(10, 0.1, 0.5).unwrap()).unwrap();
        assert!((d.r_const - 0.947_333_724_450_521_4).abs() < 1e-12);
        assert!((d.tau[0] - 0.094_733_372_445_052_14).abs() < 1e-12);
        assert_eq!(d.spike_index, 10);
        assert!((d.beta - 1.328_536_433_447_287).abs() < 1e-12);
        assert!((d.mu[1] - 0.412_007_282_933_309_35).abs() < 1e-12);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(matches!(DistributionParams::new(0, 0.1, 0.05), Err(DistributionError::ZeroK)));
        assert!(matches!(DistributionParams::new(4, 0.0, 0.05), Err(DistributionError::BadC(_))));
        assert!(matches!(DistributionParams::new(4, 0.1, 1.0), Err(DistributionError::BadDelta(_))));
        // large c pushes R far above k
        let p = DistributionParams::new(4, 50.0, 0.05).unwrap();
        assert!(matches!(robust_soliton(p), Err(DistributionError::SpikeBelowOne { .. })));
        // R below delta makes the spike mass negative
        let p = DistributionParams::new(1, 0.01, 0.9).unwrap();
        assert!(matches!(robust_soliton(p), Err(DistributionError::NegativeSpike { .. })));
    }

    #[test]
    fn robust_bias_over_ideal() {
        for k in 6..=1024 {
            let d = robust_soliton(DistributionParams::with_defaults(k).unwrap()).unwrap();
            assert!(d.tau[0] > 0.0);
            assert!(d.mu[0] > d.rho[0], "k={k}");
        }
    }

    #[test]
    fn tiny_k_spike_outweighs_bias() {
        // k=2: R = 0.52, spike mass 0.61 pushes beta to 1.87 and mu(1) to 0.41
        let d = robust_soliton(DistributionParams::with_defaults(2).unwrap()).unwrap();
        assert!(d.tau[0] > 0.0);
        assert!(d.mu[0] < d.rho[0]);
    }

    #[test]
    fn same_seed_same_degrees() {
        let d = robust_soliton(DistributionParams::with_defaults(10).unwrap()).unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            (0..200).map(|_| d.sample_degree(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
