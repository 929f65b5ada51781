//! Packet logs.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! header:  "NLPK" | version u32 (1) | session id length u16 | session id (UTF-8)
//! record:  direction u8 | bits_per_symbol u16 | capture_index u64 |
//!          seq_num u16 | payload_len u16 | blob_len u32 | blob
//! ```
//!
//! Directions are 0 transmitted, 1 received, 2 discarded with a malformed
//! header, 3 discarded as truncated. For transmitted packets the capture index
//! is the packet's position in the transmit order; for everything else it is
//! the bit offset of the preamble in the demodulated stream. Discards carry no
//! blob, and their `seq_num` is zero when the header was never read.
//!
//! A CSV summary (`direction,capture_index,seq_num,payload_len,payload_hex`)
//! is available for inspection.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use lowvhf_core::framing::{Discard, DiscardReason, Packet, PacketHeader, ReceivedPacket};

use crate::error::{read_exact, read_exact_or_eof, FormatError};

pub const MAGIC: &[u8; 4] = b"NLPK";
pub const VERSION: u32 = 1;
const RECORD_HEADER_LEN: usize = 19;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Tx = 0,
    Rx = 1,
    DiscardMalformed = 2,
    DiscardTruncated = 3,
}

impl Direction {
    fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => Self::Tx,
            1 => Self::Rx,
            2 => Self::DiscardMalformed,
            3 => Self::DiscardTruncated,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Tx => "tx",
            Self::Rx => "rx",
            Self::DiscardMalformed => "discard-malformed",
            Self::DiscardTruncated => "discard-truncated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub direction: Direction,
    pub bits_per_symbol: u16,
    pub capture_index: u64,
    pub seq_num: u16,
    pub payload_len: u16,
    pub blob: Vec<u8>,
}

impl LogRecord {
    pub fn tx(index: u64, packet: &Packet) -> Self {
        Self::from_packet(Direction::Tx, index, packet)
    }

    pub fn rx(received: &ReceivedPacket) -> Self {
        Self::from_packet(Direction::Rx, received.bit_offset as u64, &received.packet)
    }

    pub fn discard(discard: &Discard) -> Self {
        Self {
            direction: match discard.reason {
                DiscardReason::MalformedHeader => Direction::DiscardMalformed,
                DiscardReason::Truncated => Direction::DiscardTruncated,
            },
            bits_per_symbol: 0,
            capture_index: discard.bit_offset as u64,
            seq_num: discard.seq_num.unwrap_or(0),
            payload_len: 0,
            blob: Vec::new(),
        }
    }

    fn from_packet(direction: Direction, capture_index: u64, p: &Packet) -> Self {
        Self {
            direction,
            bits_per_symbol: p.header.bits_per_symbol,
            capture_index,
            seq_num: p.header.seq_num,
            payload_len: p.header.payload_len,
            blob: p.payload.clone(),
        }
    }

    /// The logged packet, for tx and rx records.
    pub fn packet(&self) -> Option<Packet> {
        matches!(self.direction, Direction::Tx | Direction::Rx).then(|| Packet {
            header: PacketHeader {
                bits_per_symbol: self.bits_per_symbol,
                payload_len: self.payload_len,
                seq_num: self.seq_num,
            },
            payload: self.blob.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PacketLog {
    pub session_id: String,
    pub records: Vec<LogRecord>,
}

impl PacketLog {
    pub fn new(session_id: &str) -> Self {
        Self {
            session_id: session_id.into(),
            records: Vec::new(),
        }
    }

    pub fn packets(&self, direction: Direction) -> Vec<Packet> {
        self.records
            .iter()
            .filter(|r| r.direction == direction)
            .filter_map(LogRecord::packet)
            .collect()
    }

    pub fn count(&self, direction: Direction) -> usize {
        self.records.iter().filter(|r| r.direction == direction).count()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        let id = self.session_id.as_bytes();
        let id_len = u16::try_from(id.len())
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "session id longer than 65535 bytes"))?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&id_len.to_le_bytes())?;
        w.write_all(id)?;
        for r in &self.records {
            let blob_len = u32::try_from(r.blob.len())
                .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "blob too long"))?;
            let mut head = [0u8; RECORD_HEADER_LEN];
            head[0] = r.direction as u8;
            head[1..3].copy_from_slice(&r.bits_per_symbol.to_le_bytes());
            head[3..11].copy_from_slice(&r.capture_index.to_le_bytes());
            head[11..13].copy_from_slice(&r.seq_num.to_le_bytes());
            head[13..15].copy_from_slice(&r.payload_len.to_le_bytes());
            head[15..19].copy_from_slice(&blob_len.to_le_bytes());
            w.write_all(&head)?;
            w.write_all(&r.blob)?;
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, FormatError> {
        let mut head = [0u8; 10];
        read_exact(&mut r, &mut head, 0, "packet log header")?;
        if &head[0..4] != MAGIC {
            return Err(FormatError::BadMagic {
                offset: 0,
                expected: "NLPK",
            });
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(FormatError::Version {
                offset: 4,
                found: version,
            });
        }
        let id_len = usize::from(u16::from_le_bytes([head[8], head[9]]));
        let mut id = vec![0u8; id_len];
        read_exact(&mut r, &mut id, 10, "session id")?;
        let session_id = String::from_utf8(id).map_err(|_| FormatError::Invalid {
            offset: 10,
            what: "session id is not UTF-8".into(),
        })?;

        let mut offset = 10 + id_len as u64;
        let mut records = Vec::new();
        let mut rec = [0u8; RECORD_HEADER_LEN];
        while read_exact_or_eof(&mut r, &mut rec, offset, "record header")? {
            let direction = Direction::from_u8(rec[0]).ok_or_else(|| FormatError::Invalid {
                offset,
                what: format!("direction {}", rec[0]),
            })?;
            let blob_len = u32::from_le_bytes(rec[15..19].try_into().unwrap()) as usize;
            let mut blob = vec![0u8; blob_len];
            read_exact(&mut r, &mut blob, offset + RECORD_HEADER_LEN as u64, "record blob")?;
            records.push(LogRecord {
                direction,
                bits_per_symbol: u16::from_le_bytes([rec[1], rec[2]]),
                capture_index: u64::from_le_bytes(rec[3..11].try_into().unwrap()),
                seq_num: u16::from_le_bytes([rec[11], rec[12]]),
                payload_len: u16::from_le_bytes([rec[13], rec[14]]),
                blob,
            });
            offset += (RECORD_HEADER_LEN + blob_len) as u64;
        }
        Ok(Self { session_id, records })
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["direction", "capture_index", "seq_num", "payload_len", "payload_hex"])?;
        for r in &self.records {
            out.write_record([
                r.direction.name().to_string(),
                r.capture_index.to_string(),
                r.seq_num.to_string(),
                r.payload_len.to_string(),
                hex::encode(&r.blob),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}
