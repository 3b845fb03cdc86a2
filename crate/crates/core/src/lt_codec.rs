//! LT encoder and incremental peeling decoder.
//!
//! Sender and receiver agree on the XOR participants of a symbol through
//! `(neighbor_seed, gen_size, degree)`: [`select_neighbors`] expands the seed
//! with SplitMix64 and a partial Fisher-Yates shuffle, so the neighbor set
//! is reproducible bit for bit on any platform.

use std::collections::{HashSet, VecDeque};

use rand::RngCore;
use thiserror::Error;

use crate::gf256::xor_slice;
use crate::soliton::DegreeDistribution;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LtError {
    #[error("generation must contain at least one segment")]
    EmptyGeneration,
    #[error("segment of {len} bytes exceeds the 65535-byte symbol limit")]
    SegmentTooLong { len: usize },
    #[error("degree {degree} outside [1, {gen_size}]")]
    BadDegree { degree: usize, gen_size: usize },
    #[error("symbol for generation {got} fed to decoder of generation {expected}")]
    GenerationMismatch { expected: u32, got: u32 },
    #[error("symbol metadata (gen_size {gen_size}, base_seq {base_seq}) disagrees with the decoder")]
    ShapeMismatch { gen_size: usize, base_seq: u32 },
    #[error("payload is {got} bytes, expected {expected}")]
    PayloadLength { expected: usize, got: usize },
    #[error("segment index {index} outside generation of size {gen_size}")]
    BadIndex { index: usize, gen_size: usize },
}

/// SplitMix64, the fixed expansion function behind neighbor selection.
#[derive(Clone, Debug)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform integer in `[0, n)` via the high half of a 64x64 product.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }
}

/// The `degree` distinct segment indices in `[0, gen_size)` named by `seed`,
/// sorted ascending.
pub fn select_neighbors(seed: u64, gen_size: usize, degree: usize) -> Result<Vec<usize>, LtError> {
    if degree == 0 || degree > gen_size {
        return Err(LtError::BadDegree { degree, gen_size });
    }
    if degree == gen_size {
        return Ok((0..gen_size).collect());
    }
    let mut rng = SplitMix64::new(seed);
    let mut idx: Vec<usize> = (0..gen_size).collect();
    for j in 0..degree {
        let r = j + rng.below(gen_size - j);
        idx.swap(j, r);
    }
    idx.truncate(degree);
    idx.sort_unstable();
    Ok(idx)
}

/// A seed whose single neighbor is `index`.
pub fn seed_for_single(index: usize, gen_size: usize, start: u64) -> u64 {
    let mut s = start;
    loop {
        if gen_size == 1 || SplitMix64::new(s).below(gen_size) == index {
            return s;
        }
        s = s.wrapping_add(1);
    }
}

/// `N` segments encoded together, zero-padded to a common length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Generation {
    pub generation_id: u32,
    pub base_seq: u32,
    /// Padded payloads, each exactly `symbol_len` bytes.
    pub segments: Vec<Vec<u8>>,
    /// True lengths before padding.
    pub orig_lens: Vec<u16>,
    pub symbol_len: usize,
}

impl Generation {
    pub fn new(generation_id: u32, base_seq: u32, payloads: Vec<Vec<u8>>) -> Result<Self, LtError> {
        if payloads.is_empty() {
            return Err(LtError::EmptyGeneration);
        }
        let symbol_len = payloads.iter().map(Vec::len).max().unwrap_or(0);
        if symbol_len > u16::MAX as usize {
            return Err(LtError::SegmentTooLong { len: symbol_len });
        }
        let orig_lens = payloads.iter().map(|p| p.len() as u16).collect();
        let segments = payloads
            .into_iter()
            .map(|mut p| {
                p.resize(symbol_len, 0);
                p
            })
            .collect();
        Ok(Generation { generation_id, base_seq, segments, orig_lens, symbol_len })
    }

    pub fn size(&self) -> usize {
        self.segments.len()
    }
}

/// XOR of `degree` segments of one generation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSymbol {
    pub generation_id: u32,
    pub base_seq: u32,
    pub gen_size: usize,
    pub degree: usize,
    pub neighbor_seed: u64,
    pub payload: Vec<u8>,
}

impl EncodedSymbol {
    pub fn neighbors(&self) -> Result<Vec<usize>, LtError> {
        select_neighbors(self.neighbor_seed, self.gen_size, self.degree)
    }
}

/// Encodes one symbol with an explicit degree and seed.
pub fn encode_with(gen: &Generation, degree: usize, neighbor_seed: u64) -> Result<EncodedSymbol, LtError> {
    let neighbors = select_neighbors(neighbor_seed, gen.size(), degree)?;
    let mut payload = gen.segments[neighbors[0]].clone();
    for &n in &neighbors[1..] {
        xor_slice(&mut payload, &gen.segments[n]);
    }
    Ok(EncodedSymbol {
        generation_id: gen.generation_id,
        base_seq: gen.base_seq,
        gen_size: gen.size(),
        degree,
        neighbor_seed,
        payload,
    })
}

/// Encodes one symbol with a degree drawn from `dist`.
///
/// `dist` must be tabulated for `k = gen.size()`.
pub fn encode_symbol<R: RngCore + ?Sized>(gen: &Generation, dist: &DegreeDistribution, rng: &mut R) -> EncodedSymbol {
    assert_eq!(dist.k(), gen.size(), "distribution built for a different generation size");
    let degree = dist.sample_degree(rng);
    let seed = rng.next_u64();
    encode_with(gen, degree, seed).expect("sampled degree lies in [1, k]")
}

/// Encodes `budget` symbols for one generation such that the first has
/// degree 1 and every segment is covered at least once.
///
/// While the remaining budget can still absorb them, uncovered segments get
/// degree-1 symbols inside the budget; otherwise they are appended past it.
pub fn encode_generation<R: RngCore + ?Sized>(
    gen: &Generation,
    dist: &DegreeDistribution,
    budget: usize,
    rng: &mut R,
) -> Vec<EncodedSymbol> {
    encode_generation_masked(gen, dist, budget, &vec![true; gen.size()], rng)
}

/// [`encode_generation`] where only segments flagged in `must_cover` need
/// coverage and the forced degree-1 symbol picks among them.
pub fn encode_generation_masked<R: RngCore + ?Sized>(
    gen: &Generation,
    dist: &DegreeDistribution,
    budget: usize,
    must_cover: &[bool],
    rng: &mut R,
) -> Vec<EncodedSymbol> {
    let n = gen.size();
    assert_eq!(must_cover.len(), n);
    let targets: Vec<usize> = (0..n).filter(|&i| must_cover[i]).collect();
    let mut covered: Vec<bool> = must_cover.iter().map(|m| !m).collect();
    let mut uncovered = targets.len();
    let mut out = Vec::with_capacity(budget.max(uncovered));

    while out.len() < budget || uncovered > 0 {
        let remaining = budget.saturating_sub(out.len());
        let first = out.is_empty() && !targets.is_empty();
        let (degree, seed) = if first || (uncovered > 0 && uncovered >= remaining) {
            let target = if first {
                targets[((rng.next_u64() as u128 * targets.len() as u128) >> 64) as usize]
            } else {
                covered.iter().position(|c| !c).expect("uncovered > 0")
            };
            (1, seed_for_single(target, n, rng.next_u64()))
        } else {
            (dist.sample_degree(rng), rng.next_u64())
        };
        let sym = encode_with(gen, degree, seed).expect("degree within generation");
        for i in sym.neighbors().expect("validated") {
            if !covered[i] {
                covered[i] = true;
                uncovered -= 1;
            }
        }
        out.push(sym);
    }
    out
}

/// A segment handed out by [`DecoderState::drain_decoded`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodedSegment {
    pub seq: u32,
    /// Truncated to the true length when it is known, padded otherwise.
    pub payload: Vec<u8>,
    pub true_len: Option<usize>,
}

#[derive(Clone, Debug)]
struct Pending {
    residual: Vec<usize>,
    payload: Vec<u8>,
}

/// Default cap on buffered symbols, as a multiple of the generation size.
pub const DEFAULT_PENDING_FACTOR: usize = 4;

/// Peeling decoder for one generation.
#[derive(Clone, Debug)]
pub struct DecoderState {
    pub generation_id: u32,
    pub base_seq: u32,
    pub gen_size: usize,
    pub symbol_len: usize,
    known: Vec<Option<Vec<u8>>>,
    known_count: usize,
    pending: Vec<Option<Pending>>,
    pending_live: usize,
    free_slots: Vec<usize>,
    by_segment: Vec<Vec<usize>>,
    seen: HashSet<(u64, usize)>,
    newly_decoded: VecDeque<usize>,
    orig_lens: Option<Vec<u16>>,
    max_pending: usize,
    xor_ops: u64,
}

impl DecoderState {
    pub fn new(generation_id: u32, base_seq: u32, gen_size: usize, symbol_len: usize) -> Self {
        DecoderState {
            generation_id,
            base_seq,
            gen_size,
            symbol_len,
            known: vec![None; gen_size],
            known_count: 0,
            pending: Vec::new(),
            pending_live: 0,
            free_slots: Vec::new(),
            by_segment: vec![Vec::new(); gen_size],
            seen: HashSet::new(),
            newly_decoded: VecDeque::new(),
            orig_lens: None,
            max_pending: DEFAULT_PENDING_FACTOR * gen_size.max(1),
            xor_ops: 0,
        }
    }

    /// A decoder with true segment lengths already known.
    pub fn for_generation(gen: &Generation) -> Self {
        let mut d = Self::new(gen.generation_id, gen.base_seq, gen.size(), gen.symbol_len);
        d.orig_lens = Some(gen.orig_lens.clone());
        d
    }

    pub fn set_orig_lens(&mut self, lens: Vec<u16>) {
        self.orig_lens = Some(lens);
    }

    pub fn set_max_pending(&mut self, max_pending: usize) {
        self.max_pending = max_pending.max(1);
    }

    /// Feeds one symbol and peels to a fixpoint. Returns the number of
    /// segments decoded as a result.
    pub fn ingest_symbol(&mut self, sym: &EncodedSymbol) -> Result<usize, LtError> {
        if sym.generation_id != self.generation_id {
            return Err(LtError::GenerationMismatch { expected: self.generation_id, got: sym.generation_id });
        }
        if sym.gen_size != self.gen_size || sym.base_seq != self.base_seq {
            return Err(LtError::ShapeMismatch { gen_size: sym.gen_size, base_seq: sym.base_seq });
        }
        if sym.payload.len() != self.symbol_len {
            return Err(LtError::PayloadLength { expected: self.symbol_len, got: sym.payload.len() });
        }
        let neighbors = sym.neighbors()?;
        if !self.seen.insert((sym.neighbor_seed, sym.degree)) {
            return Ok(0);
        }
        if self.is_complete() {
            return Ok(0);
        }

        let mut payload = sym.payload.clone();
        let mut residual = Vec::with_capacity(neighbors.len());
        for n in neighbors {
            match &self.known[n] {
                Some(p) => {
                    xor_slice(&mut payload, p);
                    self.xor_ops += self.symbol_len as u64;
                }
                None => residual.push(n),
            }
        }
        let before = self.newly_decoded.len();
        match residual.len() {
            0 => {}
            1 => self.resolve(residual[0], payload),
            _ => self.add_pending(residual, payload),
        }
        Ok(self.newly_decoded.len() - before)
    }

    /// Records a segment obtained elsewhere (e.g. from an overlapping
    /// generation). It is not reported as newly decoded, but segments it
    /// unlocks are. Returns the number of segments unlocked.
    pub fn seed_known(&mut self, index: usize, mut payload: Vec<u8>) -> Result<usize, LtError> {
        if index >= self.gen_size {
            return Err(LtError::BadIndex { index, gen_size: self.gen_size });
        }
        if self.known[index].is_some() {
            return Ok(0);
        }
        payload.resize(self.symbol_len, 0);
        let before = self.newly_decoded.len();
        self.known[index] = Some(payload);
        self.known_count += 1;
        self.peel_from(index);
        Ok(self.newly_decoded.len() - before)
    }

    fn add_pending(&mut self, residual: Vec<usize>, payload: Vec<u8>) {
        if self.pending_live >= self.max_pending {
            self.evict_highest_degree();
        }
        let slot = match self.free_slots.pop() {
            Some(s) => s,
            None => {
                self.pending.push(None);
                self.pending.len() - 1
            }
        };
        for &n in &residual {
            self.by_segment[n].push(slot);
        }
        self.pending[slot] = Some(Pending { residual, payload });
        self.pending_live += 1;
    }

    fn evict_highest_degree(&mut self) {
        let victim =
            self.pending.iter().enumerate().filter_map(|(i, p)| p.as_ref().map(|p| (p.residual.len(), i))).max();
        if let Some((_, slot)) = victim {
            self.drop_pending(slot);
        }
    }

    fn drop_pending(&mut self, slot: usize) {
        if self.pending[slot].take().is_some() {
            self.pending_live -= 1;
            self.free_slots.push(slot);
        }
    }

    fn resolve(&mut self, index: usize, payload: Vec<u8>) {
        if self.known[index].is_some() {
            return;
        }
        self.known[index] = Some(payload);
        self.known_count += 1;
        self.newly_decoded.push_back(index);
        self.peel_from(index);
    }

    /// Subtracts newly known segments from every pending symbol that
    /// references them, resolving symbols that drop to degree one.
    fn peel_from(&mut self, start: usize) {
        let mut queue = VecDeque::from([start]);
        while let Some(seg) = queue.pop_front() {
            let slots = std::mem::take(&mut self.by_segment[seg]);
            for slot in slots {
                let Some(p) = self.pending[slot].as_mut() else { continue };
                let Some(pos) = p.residual.iter().position(|&r| r == seg) else { continue };
                p.residual.swap_remove(pos);
                let known = self.known[seg].as_ref().expect("segment just became known");
                xor_slice(&mut p.payload, known);
                self.xor_ops += self.symbol_len as u64;
                match p.residual.len() {
                    0 => self.drop_pending(slot),
                    1 => {
                        let target = p.residual[0];
                        let Pending { payload, .. } = self.pending[slot].take().expect("live");
                        self.pending_live -= 1;
                        self.free_slots.push(slot);
                        if self.known[target].is_none() {
                            self.known[target] = Some(payload);
                            self.known_count += 1;
                            self.newly_decoded.push_back(target);
                            queue.push_back(target);
                        }
                    }
                    _ => {}
                }
            }
        }
    }

    /// Segments decoded since the last drain, in decode order.
    pub fn drain_decoded(&mut self) -> Vec<DecodedSegment> {
        let mut out = Vec::with_capacity(self.newly_decoded.len());
        while let Some(i) = self.newly_decoded.pop_front() {
            let mut payload = self.known[i].clone().expect("decoded segment has a payload");
            let true_len = self.orig_lens.as_ref().map(|l| l[i] as usize);
            if let Some(len) = true_len {
                payload.truncate(len);
            }
            out.push(DecodedSegment { seq: self.base_seq.wrapping_add(i as u32), payload, true_len });
        }
        out
    }

    pub fn is_known(&self, index: usize) -> bool {
        self.known.get(index).is_some_and(Option::is_some)
    }

    pub fn known_payload(&self, index: usize) -> Option<&[u8]> {
        self.known.get(index).and_then(|p| p.as_deref())
    }

    pub fn known_count(&self) -> usize {
        self.known_count
    }

    pub fn is_complete(&self) -> bool {
        self.known_count == self.gen_size
    }

    pub fn pending_len(&self) -> usize {
        self.pending_live
    }

    /// Byte-XOR operations performed so far.
    pub fn xor_ops(&self) -> u64 {
        self.xor_ops
    }
}
