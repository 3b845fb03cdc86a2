//! Codec selection shared by sender and receiver.

use std::collections::HashMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::lt_codec::{self, DecoderState, EncodedSymbol, Generation};
use crate::rlnc_codec::{self, CodedPacket, EliminationState};
use crate::soliton::{robust_soliton, DegreeDistribution, DistributionParams};

/// Erasure code used for generations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodecKind {
    /// LT codes with the Robust Soliton distribution.
    #[default]
    Lt,
    /// Dense random linear coding over GF(2^8).
    Rlnc,
}

#[derive(Clone, Debug)]
pub(crate) enum OutSymbol {
    Lt(EncodedSymbol),
    Rlnc(CodedPacket),
}

/// Tabulated degree distributions, one per generation size.
#[derive(Debug, Default)]
pub(crate) struct DistCache {
    c: f64,
    delta: f64,
    tables: HashMap<usize, DegreeDistribution>,
}

impl DistCache {
    pub(crate) fn new(c: f64, delta: f64) -> Self {
        DistCache { c, delta, tables: HashMap::new() }
    }

    pub(crate) fn get(&mut self, k: usize) -> &DegreeDistribution {
        let (c, delta) = (self.c, self.delta);
        self.tables.entry(k).or_insert_with(|| {
            let params = DistributionParams::new(k, c, delta).expect("validated with config");
            robust_soliton(params).unwrap_or_else(|_| {
                // parameters too aggressive for this k; fall back to defaults
                robust_soliton(DistributionParams::with_defaults(k).expect("k >= 1")).expect("defaults valid for all k")
            })
        })
    }
}

/// Encodes `budget` symbols for `gen`. For LT the first symbol has degree
/// one and every segment flagged in `must_cover` appears at least once.
pub(crate) fn encode_generation<R: RngCore>(
    kind: CodecKind,
    gen: &Generation,
    budget: usize,
    must_cover: &[bool],
    dists: &mut DistCache,
    rng: &mut R,
) -> Vec<OutSymbol> {
    match kind {
        CodecKind::Lt => {
            let dist = dists.get(gen.size());
            lt_codec::encode_generation_masked(gen, dist, budget, must_cover, rng)
                .into_iter()
                .map(OutSymbol::Lt)
                .collect()
        }
        CodecKind::Rlnc => (0..budget).map(|_| OutSymbol::Rlnc(rlnc_codec::rlnc_encode(gen, rng))).collect(),
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum InSymbol<'a> {
    Lt(&'a EncodedSymbol),
    Rlnc(&'a CodedPacket),
}

impl InSymbol<'_> {
    pub(crate) fn kind(&self) -> CodecKind {
        match self {
            InSymbol::Lt(_) => CodecKind::Lt,
            InSymbol::Rlnc(_) => CodecKind::Rlnc,
        }
    }
}

pub(crate) enum GenDecoder {
    Lt(DecoderState),
    Rlnc(EliminationState),
}

impl GenDecoder {
    pub(crate) fn new(
        kind: CodecKind,
        generation_id: u32,
        base_seq: u32,
        gen_size: usize,
        symbol_len: usize,
        pending_factor: usize,
    ) -> Self {
        match kind {
            CodecKind::Lt => {
                let mut d = DecoderState::new(generation_id, base_seq, gen_size, symbol_len);
                d.set_max_pending(pending_factor * gen_size);
                GenDecoder::Lt(d)
            }
            CodecKind::Rlnc => GenDecoder::Rlnc(EliminationState::new(generation_id, base_seq, gen_size, symbol_len)),
        }
    }

    pub(crate) fn base_seq(&self) -> u32 {
        match self {
            GenDecoder::Lt(d) => d.base_seq,
            GenDecoder::Rlnc(d) => d.base_seq,
        }
    }

    pub(crate) fn gen_size(&self) -> usize {
        match self {
            GenDecoder::Lt(d) => d.gen_size,
            GenDecoder::Rlnc(d) => d.gen_size,
        }
    }

    pub(crate) fn symbol_len(&self) -> usize {
        match self {
            GenDecoder::Lt(d) => d.symbol_len,
            GenDecoder::Rlnc(d) => d.symbol_len,
        }
    }

    pub(crate) fn contains(&self, seq: u32) -> bool {
        seq.wrapping_sub(self.base_seq()) < self.gen_size() as u32
    }

    pub(crate) fn ops(&self) -> u64 {
        match self {
            GenDecoder::Lt(d) => d.xor_ops(),
            GenDecoder::Rlnc(d) => d.ops(),
        }
    }

    /// Feeds one received symbol; `false` when it does not fit this
    /// decoder.
    pub(crate) fn ingest(&mut self, sym: InSymbol<'_>) -> bool {
        match (self, sym) {
            (GenDecoder::Lt(d), InSymbol::Lt(s)) => d.ingest_symbol(s).is_ok(),
            (GenDecoder::Rlnc(d), InSymbol::Rlnc(p)) => d.ingest(p).is_ok(),
            _ => false,
        }
    }

    /// Marks `seq` as known. The payload is padded or cut to this
    /// generation's symbol length.
    pub(crate) fn seed_known(&mut self, seq: u32, mut payload: Vec<u8>) {
        let idx = seq.wrapping_sub(self.base_seq()) as usize;
        payload.resize(self.symbol_len(), 0);
        let _ = match self {
            GenDecoder::Lt(d) => d.seed_known(idx, payload).map(drop).map_err(drop),
            GenDecoder::Rlnc(d) => d.seed_known(idx, payload).map(drop).map_err(drop),
        };
    }

    /// Newly decoded `(seq, padded payload)` pairs.
    pub(crate) fn drain(&mut self) -> Vec<(u32, Vec<u8>)> {
        let segs = match self {
            GenDecoder::Lt(d) => d.drain_decoded(),
            GenDecoder::Rlnc(d) => d.drain_decoded(),
        };
        segs.into_iter().map(|s| (s.seq, s.payload)).collect()
    }

    pub(crate) fn is_complete(&self) -> bool {
        match self {
            GenDecoder::Lt(d) => d.is_complete(),
            GenDecoder::Rlnc(d) => d.is_full_rank(),
        }
    }
}
