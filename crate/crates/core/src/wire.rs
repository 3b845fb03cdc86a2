//! Bit-exact packet formats. All integers are big-endian.
//!
//! Every frame starts with the magic `"FW"` (`0x46 0x57`), a version byte
//! (`1`) and a kind byte:
//!
//! | kind | frame               | layout after the 4-byte preamble                                   |
//! |------|---------------------|---------------------------------------------------------------------|
//! | 1    | LT symbol           | gen u32, base u32, gen_size u16, degree u16, seed u64, symbol_len u16, ts u64, payload |
//! | 2    | RLNC packet         | gen u32, base u32, gen_size u16, symbol_len u16, ts u64, coefficients[gen_size], payload |
//! | 3    | generation metadata | gen u32, base u32, gen_size u16, symbol_len u16, ts u64, orig_len u16 x gen_size |
//! | 4    | ACK                 | flags u8, decoded_seq u32, gen u32, echo_ts u64                     |
//! | 5-9  | control             | isn u32, mss u16, ts u64                                            |
//! | 10   | ARQ data            | seq u32, len u16, ts u64, payload[len]                              |
//! | 11   | ARQ ACK             | ack_seq u32, echo_ts u64                                            |
//!
//! Decoding is strict: trailing bytes, reserved flag bits, zero coefficient
//! vectors and out-of-range degrees are rejected, so each packet has exactly
//! one encoding.

use thiserror::Error;

use crate::lt_codec::EncodedSymbol;
use crate::rlnc_codec::CodedPacket;

pub const MAGIC: [u8; 2] = [0x46, 0x57];
pub const VERSION: u8 = 1;

pub const KIND_LT: u8 = 1;
pub const KIND_RLNC: u8 = 2;
pub const KIND_META: u8 = 3;
pub const KIND_ACK: u8 = 4;
pub const KIND_HELLO: u8 = 5;
pub const KIND_HELLO_ACK: u8 = 6;
pub const KIND_HANDSHAKE_ACK: u8 = 7;
pub const KIND_FIN: u8 = 8;
pub const KIND_FIN_ACK: u8 = 9;
pub const KIND_ARQ_DATA: u8 = 10;
pub const KIND_ARQ_ACK: u8 = 11;

pub const LT_HEADER_LEN: usize = 34;
pub const RLNC_HEADER_LEN: usize = 24;
pub const META_HEADER_LEN: usize = 24;
pub const ACK_LEN: usize = 21;
pub const CONTROL_LEN: usize = 18;
pub const ARQ_DATA_HEADER_LEN: usize = 18;
pub const ARQ_ACK_LEN: usize = 16;

/// ACK flag: the segment had already been decoded before this packet.
pub const ACK_FLAG_REPEAT: u8 = 0x01;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("truncated frame: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("bad magic {0:02x}{1:02x}")]
    BadMagic(u8, u8),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown packet kind {0}")]
    UnknownKind(u8),
    #[error("frame has {extra} trailing bytes")]
    TrailingBytes { extra: usize },
    #[error("field {field} out of range")]
    FieldOverflow { field: &'static str },
    #[error("invalid field {field}")]
    InvalidField { field: &'static str },
}

/// The common header of data-bearing frames (kinds 1-3). `degree` and
/// `neighbor_seed` are only present on the wire for LT symbols.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DataPacketHeader {
    pub kind: u8,
    pub generation_id: u32,
    pub base_seq: u32,
    pub gen_size: u16,
    pub degree: u16,
    pub neighbor_seed: u64,
    pub symbol_len: u16,
    pub send_timestamp: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LtFrame {
    pub symbol: EncodedSymbol,
    pub send_timestamp: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RlncFrame {
    pub packet: CodedPacket,
    pub send_timestamp: u64,
}

/// True segment lengths of one generation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenerationMeta {
    pub generation_id: u32,
    pub base_seq: u32,
    pub symbol_len: u16,
    pub orig_lens: Vec<u16>,
    pub send_timestamp: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AckPacket {
    pub flags: u8,
    pub decoded_seq: u32,
    pub generation_id: u32,
    pub echo_timestamp: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlKind {
    Hello,
    HelloAck,
    HandshakeAck,
    Fin,
    FinAck,
}

impl ControlKind {
    fn code(self) -> u8 {
        match self {
            ControlKind::Hello => KIND_HELLO,
            ControlKind::HelloAck => KIND_HELLO_ACK,
            ControlKind::HandshakeAck => KIND_HANDSHAKE_ACK,
            ControlKind::Fin => KIND_FIN,
            ControlKind::FinAck => KIND_FIN_ACK,
        }
    }

    fn from_code(k: u8) -> Option<Self> {
        Some(match k {
            KIND_HELLO => ControlKind::Hello,
            KIND_HELLO_ACK => ControlKind::HelloAck,
            KIND_HANDSHAKE_ACK => ControlKind::HandshakeAck,
            KIND_FIN => ControlKind::Fin,
            KIND_FIN_ACK => ControlKind::FinAck,
            _ => return None,
        })
    }
}

/// Connection management. `isn` is the first data sequence number (for
/// `Fin`, the sequence number one past the last segment); `mss` the segment
/// size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ControlPacket {
    pub kind: ControlKind,
    pub isn: u32,
    pub mss: u16,
    pub timestamp: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArqData {
    pub seq: u32,
    pub send_timestamp: u64,
    pub payload: Vec<u8>,
}

/// Cumulative ACK: every segment below `ack_seq` has arrived.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArqAck {
    pub ack_seq: u32,
    pub echo_timestamp: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Packet {
    Lt(LtFrame),
    Rlnc(RlncFrame),
    Meta(GenerationMeta),
    Ack(AckPacket),
    Control(ControlPacket),
    ArqData(ArqData),
    ArqAck(ArqAck),
}

fn preamble(out: &mut Vec<u8>, kind: u8) {
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(kind);
}

fn u16_field(v: usize, field: &'static str) -> Result<u16, WireError> {
    u16::try_from(v).map_err(|_| WireError::FieldOverflow { field })
}

/// Serializes a packet.
pub fn encode_packet(packet: &Packet) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::new();
    match packet {
        Packet::Lt(f) => {
            let s = &f.symbol;
            let gen_size = u16_field(s.gen_size, "gen_size")?;
            let degree = u16_field(s.degree, "degree")?;
            let symbol_len = u16_field(s.payload.len(), "symbol_len")?;
            if gen_size == 0 {
                return Err(WireError::InvalidField { field: "gen_size" });
            }
            if degree == 0 || degree > gen_size {
                return Err(WireError::InvalidField { field: "degree" });
            }
            out.reserve(LT_HEADER_LEN + s.payload.len());
            preamble(&mut out, KIND_LT);
            out.extend_from_slice(&s.generation_id.to_be_bytes());
            out.extend_from_slice(&s.base_seq.to_be_bytes());
            out.extend_from_slice(&gen_size.to_be_bytes());
            out.extend_from_slice(&degree.to_be_bytes());
            out.extend_from_slice(&s.neighbor_seed.to_be_bytes());
            out.extend_from_slice(&symbol_len.to_be_bytes());
            out.extend_from_slice(&f.send_timestamp.to_be_bytes());
            out.extend_from_slice(&s.payload);
        }
        Packet::Rlnc(f) => {
            let p = &f.packet;
            let gen_size = u16_field(p.gen_size, "gen_size")?;
            let symbol_len = u16_field(p.payload.len(), "symbol_len")?;
            if gen_size == 0 || p.coefficients.len() != p.gen_size {
                return Err(WireError::InvalidField { field: "gen_size" });
            }
            if p.coefficients.iter().all(|&c| c == 0) {
                return Err(WireError::InvalidField { field: "coefficients" });
            }
            preamble(&mut out, KIND_RLNC);
            out.extend_from_slice(&p.generation_id.to_be_bytes());
            out.extend_from_slice(&p.base_seq.to_be_bytes());
            out.extend_from_slice(&gen_size.to_be_bytes());
            out.extend_from_slice(&symbol_len.to_be_bytes());
            out.extend_from_slice(&f.send_timestamp.to_be_bytes());
            out.extend_from_slice(&p.coefficients);
            out.extend_from_slice(&p.payload);
        }
        Packet::Meta(m) => {
            let gen_size = u16_field(m.orig_lens.len(), "gen_size")?;
            if gen_size == 0 {
                return Err(WireError::InvalidField { field: "gen_size" });
            }
            if m.orig_lens.iter().any(|&l| l > m.symbol_len) {
                return Err(WireError::InvalidField { field: "orig_lens" });
            }
            preamble(&mut out, KIND_META);
            out.extend_from_slice(&m.generation_id.to_be_bytes());
            out.extend_from_slice(&m.base_seq.to_be_bytes());
            out.extend_from_slice(&gen_size.to_be_bytes());
            out.extend_from_slice(&m.symbol_len.to_be_bytes());
            out.extend_from_slice(&m.send_timestamp.to_be_bytes());
            for l in &m.orig_lens {
                out.extend_from_slice(&l.to_be_bytes());
            }
        }
        Packet::Ack(a) => {
            if a.flags & !ACK_FLAG_REPEAT != 0 {
                return Err(WireError::InvalidField { field: "flags" });
            }
            preamble(&mut out, KIND_ACK);
            out.push(a.flags);
            out.extend_from_slice(&a.decoded_seq.to_be_bytes());
            out.extend_from_slice(&a.generation_id.to_be_bytes());
            out.extend_from_slice(&a.echo_timestamp.to_be_bytes());
        }
        Packet::Control(c) => {
            preamble(&mut out, c.kind.code());
            out.extend_from_slice(&c.isn.to_be_bytes());
            out.extend_from_slice(&c.mss.to_be_bytes());
            out.extend_from_slice(&c.timestamp.to_be_bytes());
        }
        Packet::ArqData(d) => {
            let len = u16_field(d.payload.len(), "len")?;
            preamble(&mut out, KIND_ARQ_DATA);
            out.extend_from_slice(&d.seq.to_be_bytes());
            out.extend_from_slice(&len.to_be_bytes());
            out.extend_from_slice(&d.send_timestamp.to_be_bytes());
            out.extend_from_slice(&d.payload);
        }
        Packet::ArqAck(a) => {
            preamble(&mut out, KIND_ARQ_ACK);
            out.extend_from_slice(&a.ack_seq.to_be_bytes());
            out.extend_from_slice(&a.echo_timestamp.to_be_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn need(&self, n: usize) -> Result<(), WireError> {
        if self.buf.len() < self.pos + n {
            Err(WireError::Truncated { need: self.pos + n, have: self.buf.len() })
        } else {
            Ok(())
        }
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        self.need(n)?;
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.bytes(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.bytes(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<(), WireError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            extra => Err(WireError::TrailingBytes { extra }),
        }
    }
}

/// Reads the data header of an LT, RLNC or metadata frame without
/// validating the body.
pub fn peek_data_header(bytes: &[u8]) -> Result<DataPacketHeader, WireError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let kind = read_preamble(&mut r)?;
    let generation_id = r.u32()?;
    let base_seq = r.u32()?;
    let gen_size = r.u16()?;
    let (degree, neighbor_seed) = match kind {
        KIND_LT => (r.u16()?, r.u64()?),
        KIND_RLNC | KIND_META => (0, 0),
        other => return Err(WireError::UnknownKind(other)),
    };
    let symbol_len = r.u16()?;
    let send_timestamp = r.u64()?;
    Ok(DataPacketHeader { kind, generation_id, base_seq, gen_size, degree, neighbor_seed, symbol_len, send_timestamp })
}

fn read_preamble(r: &mut Reader<'_>) -> Result<u8, WireError> {
    let m = r.bytes(2)?;
    if m != MAGIC {
        return Err(WireError::BadMagic(m[0], m[1]));
    }
    let v = r.u8()?;
    if v != VERSION {
        return Err(WireError::BadVersion(v));
    }
    r.u8()
}

/// Parses one frame. Exact inverse of [`encode_packet`].
pub fn decode_packet(bytes: &[u8]) -> Result<Packet, WireError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let kind = read_preamble(&mut r)?;
    let packet = match kind {
        KIND_LT | KIND_RLNC | KIND_META => {
            let h = peek_data_header(bytes)?;
            r.pos = match kind {
                KIND_LT => LT_HEADER_LEN,
                _ => RLNC_HEADER_LEN,
            };
            if h.gen_size == 0 {
                return Err(WireError::InvalidField { field: "gen_size" });
            }
            let gen_size = h.gen_size as usize;
            let symbol_len = h.symbol_len as usize;
            match kind {
                KIND_LT => {
                    if h.degree == 0 || h.degree > h.gen_size {
                        return Err(WireError::InvalidField { field: "degree" });
                    }
                    let payload = r.bytes(symbol_len)?.to_vec();
                    Packet::Lt(LtFrame {
                        symbol: EncodedSymbol {
                            generation_id: h.generation_id,
                            base_seq: h.base_seq,
                            gen_size,
                            degree: h.degree as usize,
                            neighbor_seed: h.neighbor_seed,
                            payload,
                        },
                        send_timestamp: h.send_timestamp,
                    })
                }
                KIND_RLNC => {
                    let coefficients = r.bytes(gen_size)?.to_vec();
                    if coefficients.iter().all(|&c| c == 0) {
                        return Err(WireError::InvalidField { field: "coefficients" });
                    }
                    let payload = r.bytes(symbol_len)?.to_vec();
                    Packet::Rlnc(RlncFrame {
                        packet: CodedPacket {
                            generation_id: h.generation_id,
                            base_seq: h.base_seq,
                            gen_size,
                            coefficients,
                            payload,
                        },
                        send_timestamp: h.send_timestamp,
                    })
                }
                _ => {
                    let mut orig_lens = Vec::with_capacity(gen_size);
                    for _ in 0..gen_size {
                        let l = r.u16()?;
                        if l > h.symbol_len {
                            return Err(WireError::InvalidField { field: "orig_lens" });
                        }
                        orig_lens.push(l);
                    }
                    Packet::Meta(GenerationMeta {
                        generation_id: h.generation_id,
                        base_seq: h.base_seq,
                        symbol_len: h.symbol_len,
                        orig_lens,
                        send_timestamp: h.send_timestamp,
                    })
                }
            }
        }
        KIND_ACK => {
            let flags = r.u8()?;
            if flags & !ACK_FLAG_REPEAT != 0 {
                return Err(WireError::InvalidField { field: "flags" });
            }
            Packet::Ack(AckPacket { flags, decoded_seq: r.u32()?, generation_id: r.u32()?, echo_timestamp: r.u64()? })
        }
        KIND_HELLO..=KIND_FIN_ACK => {
            let kind = ControlKind::from_code(kind).expect("range checked");
            Packet::Control(ControlPacket { kind, isn: r.u32()?, mss: r.u16()?, timestamp: r.u64()? })
        }
        KIND_ARQ_DATA => {
            let seq = r.u32()?;
            let len = r.u16()? as usize;
            let send_timestamp = r.u64()?;
            let payload = r.bytes(len)?.to_vec();
            Packet::ArqData(ArqData { seq, send_timestamp, payload })
        }
        KIND_ARQ_ACK => Packet::ArqAck(ArqAck { ack_seq: r.u32()?, echo_timestamp: r.u64()? }),
        other => return Err(WireError::UnknownKind(other)),
    };
    r.finish()?;
    Ok(packet)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ack_layout() {
        let ack = Packet::Ack(AckPacket { flags: 0, decoded_seq: 4, generation_id: 0, echo_timestamp: 0 });
        let bytes = encode_packet(&ack).unwrap();
        assert_eq!(bytes.len(), ACK_LEN);
        assert_eq!(&bytes[..5], &[0x46, 0x57, 1, 4, 0]);
        assert_eq!(&bytes[5..9], &[0, 0, 0, 4]);
        assert_eq!(decode_packet(&bytes).unwrap(), ack);
    }

    #[test]
    fn lt_header_is_34_bytes() {
        let sym = EncodedSymbol {
            generation_id: 1,
            base_seq: 2,
            gen_size: 3,
            degree: 2,
            neighbor_seed: 9,
            payload: vec![7; 10],
        };
        let bytes = encode_packet(&Packet::Lt(LtFrame { symbol: sym, send_timestamp: 5 })).unwrap();
        assert_eq!(bytes.len(), LT_HEADER_LEN + 10);
        let h = peek_data_header(&bytes).unwrap();
        assert_eq!(h.kind, KIND_LT);
        assert_eq!(h.degree, 2);
        assert_eq!(h.symbol_len, 10);
    }

    #[test]
    fn rejections() {
        let ack = encode_packet(&Packet::ArqAck(ArqAck { ack_seq: 1, echo_timestamp: 2 })).unwrap();
        let mut bad = ack.clone();
        bad[0] = 0;
        bad[1] = 0;
        assert_eq!(decode_packet(&bad), Err(WireError::BadMagic(0, 0)));
        let mut bad = ack.clone();
        bad[2] = 2;
        assert_eq!(decode_packet(&bad), Err(WireError::BadVersion(2)));
        let mut bad = ack.clone();
        bad[3] = 99;
        assert_eq!(decode_packet(&bad), Err(WireError::UnknownKind(99)));
        assert!(matches!(decode_packet(&ack[..ack.len() - 1]), Err(WireError::Truncated { .. })));
        let mut long = ack.clone();
        long.push(0);
        assert_eq!(decode_packet(&long), Err(WireError::TrailingBytes { extra: 1 }));
        assert!(matches!(decode_packet(&[]), Err(WireError::Truncated { .. })));
    }

    #[test]
    fn overflow_rejected() {
        let d = ArqData { seq: 0, send_timestamp: 0, payload: vec![0; 70_000] };
        assert_eq!(encode_packet(&Packet::ArqData(d)), Err(WireError::FieldOverflow { field: "len" }));
        let a = AckPacket { flags: 0x80, decoded_seq: 0, generation_id: 0, echo_timestamp: 0 };
        assert!(encode_packet(&Packet::Ack(a)).is_err());
    }
}
