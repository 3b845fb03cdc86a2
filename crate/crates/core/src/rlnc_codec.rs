//! Random linear network coding over GF(2^8).
//!
//! Coded packets carry their coefficient vector explicitly. The receiver
//! keeps an [`EliminationState`] in row-echelon form and back-substitutes
//! once the rank reaches the generation size.

use rand::RngCore;
use thiserror::Error;

use crate::gf256;
use crate::lt_codec::{DecodedSegment, EncodedSymbol, Generation};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RlncError {
    #[error("packet has {got} coefficients, decoder expects {expected}")]
    CoefficientCount { expected: usize, got: usize },
    #[error("payload is {got} bytes, expected {expected}")]
    PayloadLength { expected: usize, got: usize },
    #[error("packet for generation {got} fed to decoder of generation {expected}")]
    GenerationMismatch { expected: u32, got: u32 },
    #[error("coefficient vector is all zero")]
    ZeroVector,
    #[error("segment index {index} outside generation of size {gen_size}")]
    BadIndex { index: usize, gen_size: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodedPacket {
    pub generation_id: u32,
    pub base_seq: u32,
    pub gen_size: usize,
    pub coefficients: Vec<u8>,
    pub payload: Vec<u8>,
}

/// Combines the generation's segments with the given coefficients.
pub fn encode_with_coefficients(gen: &Generation, coefficients: Vec<u8>) -> Result<CodedPacket, RlncError> {
    if coefficients.len() != gen.size() {
        return Err(RlncError::CoefficientCount { expected: gen.size(), got: coefficients.len() });
    }
    if coefficients.iter().all(|&c| c == 0) {
        return Err(RlncError::ZeroVector);
    }
    let mut payload = vec![0u8; gen.symbol_len];
    for (seg, &c) in gen.segments.iter().zip(&coefficients) {
        gf256::mul_add_slice(&mut payload, seg, c);
    }
    Ok(CodedPacket {
        generation_id: gen.generation_id,
        base_seq: gen.base_seq,
        gen_size: gen.size(),
        coefficients,
        payload,
    })
}

/// Encodes one packet with uniform coefficients, rejecting the zero vector.
pub fn rlnc_encode<R: RngCore + ?Sized>(gen: &Generation, rng: &mut R) -> CodedPacket {
    let mut coefficients = vec![0u8; gen.size()];
    loop {
        rng.fill_bytes(&mut coefficients);
        if coefficients.iter().any(|&c| c != 0) {
            break;
        }
    }
    encode_with_coefficients(gen, coefficients).expect("shape and non-zero checked")
}

#[derive(Clone, Debug)]
struct Row {
    pivot: usize,
    coefficients: Vec<u8>,
    payload: Vec<u8>,
}

/// Incremental Gaussian elimination for one generation.
#[derive(Clone, Debug)]
pub struct EliminationState {
    pub generation_id: u32,
    pub base_seq: u32,
    pub gen_size: usize,
    pub symbol_len: usize,
    /// Sorted by strictly increasing pivot; each pivot entry is 1.
    rows: Vec<Row>,
    seeded: Vec<bool>,
    decoded: Option<Vec<Vec<u8>>>,
    reported: bool,
    orig_lens: Option<Vec<u16>>,
    ops: u64,
}

impl EliminationState {
    pub fn new(generation_id: u32, base_seq: u32, gen_size: usize, symbol_len: usize) -> Self {
        EliminationState {
            generation_id,
            base_seq,
            gen_size,
            symbol_len,
            rows: Vec::new(),
            seeded: vec![false; gen_size],
            decoded: None,
            reported: false,
            orig_lens: None,
            ops: 0,
        }
    }

    pub fn set_orig_lens(&mut self, lens: Vec<u16>) {
        self.orig_lens = Some(lens);
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn is_full_rank(&self) -> bool {
        self.rows.len() == self.gen_size
    }

    /// Field operations performed so far (one per multiply-add or scale of
    /// a coefficient or payload byte).
    pub fn ops(&self) -> u64 {
        self.ops
    }

    /// Reduces `pkt` into the basis. Returns 1 if the rank grew.
    pub fn ingest(&mut self, pkt: &CodedPacket) -> Result<usize, RlncError> {
        if pkt.generation_id != self.generation_id {
            return Err(RlncError::GenerationMismatch { expected: self.generation_id, got: pkt.generation_id });
        }
        self.ingest_row(pkt.coefficients.clone(), pkt.payload.clone())
    }

    /// Reduces a raw `(coefficients, payload)` row into the basis.
    pub fn ingest_row(&mut self, mut coefficients: Vec<u8>, mut payload: Vec<u8>) -> Result<usize, RlncError> {
        if coefficients.len() != self.gen_size {
            return Err(RlncError::CoefficientCount { expected: self.gen_size, got: coefficients.len() });
        }
        if payload.len() != self.symbol_len {
            return Err(RlncError::PayloadLength { expected: self.symbol_len, got: payload.len() });
        }
        if self.is_full_rank() {
            return Ok(0);
        }
        let width = (self.gen_size + self.symbol_len) as u64;
        for row in &self.rows {
            let c = coefficients[row.pivot];
            if c != 0 {
                gf256::mul_add_slice(&mut coefficients, &row.coefficients, c);
                gf256::mul_add_slice(&mut payload, &row.payload, c);
                self.ops += width;
            }
        }
        let Some(pivot) = coefficients.iter().position(|&c| c != 0) else {
            return Ok(0);
        };
        let inv = gf256::inv(coefficients[pivot]);
        gf256::scale_slice(&mut coefficients, inv);
        gf256::scale_slice(&mut payload, inv);
        self.ops += width;
        let at = self.rows.partition_point(|r| r.pivot < pivot);
        self.rows.insert(at, Row { pivot, coefficients, payload });
        if self.is_full_rank() {
            self.back_substitute();
        }
        Ok(1)
    }

    /// Adds a segment known from elsewhere as a unit row. It is not
    /// reported by [`drain_decoded`](Self::drain_decoded).
    pub fn seed_known(&mut self, index: usize, mut payload: Vec<u8>) -> Result<usize, RlncError> {
        if index >= self.gen_size {
            return Err(RlncError::BadIndex { index, gen_size: self.gen_size });
        }
        if self.seeded[index] || self.decoded.is_some() {
            return Ok(0);
        }
        self.seeded[index] = true;
        payload.resize(self.symbol_len, 0);
        let mut coefficients = vec![0u8; self.gen_size];
        coefficients[index] = 1;
        self.ingest_row(coefficients, payload)
    }

    fn back_substitute(&mut self) {
        let n = self.gen_size;
        let width = (n + self.symbol_len) as u64;
        for i in (0..n).rev() {
            let (upper, lower) = self.rows.split_at_mut(i);
            let src = &lower[0];
            debug_assert_eq!(src.pivot, i);
            for row in upper.iter_mut() {
                let c = row.coefficients[i];
                if c != 0 {
                    gf256::mul_add_slice(&mut row.coefficients, &src.coefficients, c);
                    gf256::mul_add_slice(&mut row.payload, &src.payload, c);
                    self.ops += width;
                }
            }
        }
        self.decoded = Some(self.rows.iter().map(|r| r.payload.clone()).collect());
    }

    /// All padded segments once the rank is full.
    pub fn decoded(&self) -> Option<&[Vec<u8>]> {
        self.decoded.as_deref()
    }

    /// Segments recovered by the completing ingest, excluding seeded ones.
    /// Returns an empty list before full rank and after the first drain.
    pub fn drain_decoded(&mut self) -> Vec<DecodedSegment> {
        let Some(segs) = self.decoded.as_ref() else { return Vec::new() };
        if self.reported {
            return Vec::new();
        }
        self.reported = true;
        segs.iter()
            .enumerate()
            .filter(|(i, _)| !self.seeded[*i])
            .map(|(i, p)| {
                let true_len = self.orig_lens.as_ref().map(|l| l[i] as usize);
                let mut payload = p.clone();
                if let Some(len) = true_len {
                    payload.truncate(len);
                }
                DecodedSegment { seq: self.base_seq.wrapping_add(i as u32), payload, true_len }
            })
            .collect()
    }

    /// Checks the echelon invariants.
    pub fn is_echelon(&self) -> bool {
        self.rows.windows(2).all(|w| w[0].pivot < w[1].pivot)
            && self
                .rows
                .iter()
                .all(|r| r.coefficients[r.pivot] == 1 && r.coefficients[..r.pivot].iter().all(|&c| c == 0))
    }
}

/// Solves the binary system defined by LT symbols' neighbor sets with
/// Gaussian elimination. Returns the padded segments if the system has
/// full rank.
pub fn solve_binary(gen_size: usize, symbol_len: usize, symbols: &[EncodedSymbol]) -> Option<Vec<Vec<u8>>> {
    let mut state = EliminationState::new(0, 0, gen_size, symbol_len);
    for s in symbols {
        let mut coefficients = vec![0u8; gen_size];
        for n in s.neighbors().ok()? {
            coefficients[n] = 1;
        }
        state.ingest_row(coefficients, s.payload.clone()).ok()?;
        if state.is_full_rank() {
            break;
        }
    }
    state.decoded().map(<[Vec<u8>]>::to_vec)
}
