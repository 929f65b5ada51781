//! Over-the-air packet format.
//!
//! ```text
//! +----------------+-----------------+-------------+---------+-----------------+
//! | preamble (8 B) | bits/symbol (2) | payload len | seq num | payload (len B) |
//! +----------------+-----------------+-------------+---------+-----------------+
//! ```
//!
//! Header fields are big-endian and every byte goes on air MSB first. There is
//! no header checksum; a corrupted header is only caught when its payload
//! length exceeds the configured maximum.
//!
//! The receiver correlates the hard-decision bit stream against the 64-bit
//! preamble. A strongly negative correlation means the demodulator locked with
//! a 180 degree phase ambiguity, and the bits that follow are inverted before
//! parsing.

use alloc::vec::Vec;
use thiserror::Error;

use crate::bits::{bits_to_bytes, extend_bits};

/// 63-chip maximal-length sequence (6-stage Fibonacci LFSR, taps 6 and 1,
/// all-ones seed) followed by one `0` chip. Aperiodic autocorrelation
/// sidelobes are at most 7 out of 64.
pub const PREAMBLE: u64 = 0xFD59_BB49_C5E5_1840;
pub const PREAMBLE_BITS: usize = 64;
pub const PREAMBLE_LEN: usize = 8;
/// bits-per-symbol, payload length and sequence number.
pub const HEADER_FIELDS_LEN: usize = 6;
pub const HEADER_LEN: usize = PREAMBLE_LEN + HEADER_FIELDS_LEN;
pub const DEFAULT_MAX_PAYLOAD: usize = 1472;
pub const DEFAULT_THRESHOLD: u32 = 58;
/// The only modulation implemented here.
pub const BPSK_BITS_PER_SYMBOL: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FramingError {
    #[error("payload of {len} bytes exceeds the {max}-byte maximum")]
    PayloadTooLong { len: usize, max: usize },
    #[error("header declares {payload_len} payload bytes, maximum is {max}")]
    MalformedHeader { payload_len: u16, max: usize },
    #[error("input truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("preamble mismatch")]
    BadPreamble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FramingConfig {
    pub max_payload: usize,
    /// Minimum |correlation| (out of 64) for a preamble hit.
    pub threshold: u32,
}

impl Default for FramingConfig {
    fn default() -> Self {
        Self {
            max_payload: DEFAULT_MAX_PAYLOAD,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Header fields following the preamble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PacketHeader {
    pub bits_per_symbol: u16,
    pub payload_len: u16,
    pub seq_num: u16,
}

impl PacketHeader {
    pub const fn preamble(&self) -> u64 {
        PREAMBLE
    }

    pub fn encode(&self) -> [u8; HEADER_FIELDS_LEN] {
        let mut out = [0u8; HEADER_FIELDS_LEN];
        out[0..2].copy_from_slice(&self.bits_per_symbol.to_be_bytes());
        out[2..4].copy_from_slice(&self.payload_len.to_be_bytes());
        out[4..6].copy_from_slice(&self.seq_num.to_be_bytes());
        out
    }

    /// Parse the six header bytes that follow the preamble.
    pub fn parse(fields: &[u8], max_payload: usize) -> Result<Self, FramingError> {
        if fields.len() < HEADER_FIELDS_LEN {
            return Err(FramingError::Truncated {
                needed: HEADER_FIELDS_LEN,
                available: fields.len(),
            });
        }
        let field = |i: usize| u16::from_be_bytes([fields[i], fields[i + 1]]);
        let header = Self {
            bits_per_symbol: field(0),
            payload_len: field(2),
            seq_num: field(4),
        };
        if usize::from(header.payload_len) > max_payload {
            return Err(FramingError::MalformedHeader {
                payload_len: header.payload_len,
                max: max_payload,
            });
        }
        Ok(header)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Packet {
    pub header: PacketHeader,
    pub payload: Vec<u8>,
}

impl Packet {
    pub fn new(
        payload: Vec<u8>,
        seq_num: u16,
        bits_per_symbol: u16,
        max_payload: usize,
    ) -> Result<Self, FramingError> {
        let max = max_payload.min(usize::from(u16::MAX));
        if payload.len() > max {
            return Err(FramingError::PayloadTooLong {
                len: payload.len(),
                max,
            });
        }
        Ok(Self {
            header: PacketHeader {
                bits_per_symbol,
                payload_len: payload.len() as u16,
                seq_num,
            },
            payload,
        })
    }

    pub fn seq_num(&self) -> u16 {
        self.header.seq_num
    }

    pub fn serialized_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        out.extend_from_slice(&PREAMBLE.to_be_bytes());
        out.extend_from_slice(&self.header.encode());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Append the on-air bits of this packet to `bits`.
    pub fn append_bits(&self, bits: &mut Vec<u8>) {
        extend_bits(bits, &PREAMBLE.to_be_bytes());
        extend_bits(bits, &self.header.encode());
        extend_bits(bits, &self.payload);
    }

    /// Inverse of [`Packet::to_bytes`]; trailing bytes are ignored.
    pub fn from_bytes(bytes: &[u8], max_payload: usize) -> Result<Self, FramingError> {
        if bytes.len() < HEADER_LEN {
            return Err(FramingError::Truncated {
                needed: HEADER_LEN,
                available: bytes.len(),
            });
        }
        if bytes[..PREAMBLE_LEN] != PREAMBLE.to_be_bytes() {
            return Err(FramingError::BadPreamble);
        }
        let header = PacketHeader::parse(&bytes[PREAMBLE_LEN..HEADER_LEN], max_payload)?;
        let end = HEADER_LEN + usize::from(header.payload_len);
        if bytes.len() < end {
            return Err(FramingError::Truncated {
                needed: end,
                available: bytes.len(),
            });
        }
        Ok(Self {
            header,
            payload: bytes[HEADER_LEN..end].to_vec(),
        })
    }
}

/// Serialize `payload` behind a preamble and header.
pub fn build_packet(
    payload: &[u8],
    seq_num: u16,
    bits_per_symbol: u16,
    max_payload: usize,
) -> Result<Vec<u8>, FramingError> {
    Packet::new(payload.to_vec(), seq_num, bits_per_symbol, max_payload).map(|p| p.to_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Normal,
    Inverted,
}

impl Polarity {
    pub fn sign(self) -> i32 {
        match self {
            Polarity::Normal => 1,
            Polarity::Inverted => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreambleHit {
    pub bit_offset: usize,
    pub polarity: Polarity,
    /// Signed correlation in `[-64, 64]`.
    pub correlation: i32,
}

/// Report every window whose antipodal correlation with the preamble reaches
/// `threshold` in magnitude. Hits come out sorted by offset.
///
/// `threshold` is clamped to `1..=64`.
pub fn detect_preambles(bits: &[u8], threshold: u32) -> Vec<PreambleHit> {
    let threshold = threshold.clamp(1, 64) as i32;
    let mut hits = Vec::new();
    let mut window = 0u64;
    for (i, &b) in bits.iter().enumerate() {
        window = (window << 1) | u64::from(b & 1);
        if i + 1 < PREAMBLE_BITS {
            continue;
        }
        let correlation = 64 - 2 * (window ^ PREAMBLE).count_ones() as i32;
        if correlation.abs() >= threshold {
            hits.push(PreambleHit {
                bit_offset: i + 1 - PREAMBLE_BITS,
                polarity: if correlation > 0 {
                    Polarity::Normal
                } else {
                    Polarity::Inverted
                },
                correlation,
            });
        }
    }
    hits
}

/// A packet recovered from the bit stream, with where it was found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceivedPacket {
    pub bit_offset: usize,
    pub polarity: Polarity,
    pub packet: Packet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiscardReason {
    /// Payload length above the configured maximum.
    MalformedHeader,
    /// Header or payload runs past the end of the stream.
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Discard {
    pub bit_offset: usize,
    pub reason: DiscardReason,
    /// Sequence number, when the header could be read.
    pub seq_num: Option<u16>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub packets: Vec<ReceivedPacket>,
    pub discards: Vec<Discard>,
}

impl Extraction {
    pub fn count(&self, reason: DiscardReason) -> usize {
        self.discards.iter().filter(|d| d.reason == reason).count()
    }
}

/// Detect, parse and slice every packet in a hard-decision bit stream.
///
/// Hits are taken greedily in offset order. Once a packet is accepted, hits
/// that start inside it are ignored. Discarded hits do not shadow later ones.
pub fn extract_packets(bits: &[u8], config: &FramingConfig) -> Extraction {
    let mut out = Extraction::default();
    let mut next_free = 0usize;
    for hit in detect_preambles(bits, config.threshold) {
        if hit.bit_offset < next_free {
            continue;
        }
        let invert = hit.polarity == Polarity::Inverted;
        let header_start = hit.bit_offset + PREAMBLE_BITS;
        let header_end = header_start + 8 * HEADER_FIELDS_LEN;
        if header_end > bits.len() {
            out.discards.push(Discard {
                bit_offset: hit.bit_offset,
                reason: DiscardReason::Truncated,
                seq_num: None,
            });
            continue;
        }
        let fields = bits_to_bytes(&bits[header_start..header_end], invert);
        let header = match PacketHeader::parse(&fields, config.max_payload) {
            Ok(h) => h,
            Err(_) => {
                out.discards.push(Discard {
                    bit_offset: hit.bit_offset,
                    reason: DiscardReason::MalformedHeader,
                    seq_num: Some(u16::from_be_bytes([fields[4], fields[5]])),
                });
                continue;
            }
        };
        let payload_end = header_end + 8 * usize::from(header.payload_len);
        if payload_end > bits.len() {
            out.discards.push(Discard {
                bit_offset: hit.bit_offset,
                reason: DiscardReason::Truncated,
                seq_num: Some(header.seq_num),
            });
            continue;
        }
        let payload = bits_to_bytes(&bits[header_end..payload_end], invert);
        out.packets.push(ReceivedPacket {
            bit_offset: hit.bit_offset,
            polarity: hit.polarity,
            packet: Packet { header, payload },
        });
        next_free = payload_end;
    }
    out
}
