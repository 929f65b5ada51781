//! Complex baseband sample files.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "NLIQ"
//!      4     4  version, u32 LE (1)
//!      8     8  sample rate in Hz, f64 LE
//!     16    16  reserved, zero
//!     32     -  samples: I then Q, f32 LE each
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use lowvhf_core::modem::IqBuffer;
use lowvhf_core::Complex64;

use crate::error::{read_exact, read_exact_or_eof, FormatError};

pub const MAGIC: &[u8; 4] = b"NLIQ";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;
const SAMPLE_LEN: usize = 8;

/// Streaming writer; samples are narrowed to `f32`.
pub struct IqWriter<W: Write> {
    inner: W,
    samples: u64,
}

impl<W: Write> IqWriter<W> {
    pub fn new(mut inner: W, sample_rate: f64) -> io::Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        header[0..4].copy_from_slice(MAGIC);
        header[4..8].copy_from_slice(&VERSION.to_le_bytes());
        header[8..16].copy_from_slice(&sample_rate.to_le_bytes());
        inner.write_all(&header)?;
        Ok(Self { inner, samples: 0 })
    }

    pub fn write(&mut self, samples: &[Complex64]) -> io::Result<()> {
        let mut buf = Vec::with_capacity(samples.len() * SAMPLE_LEN);
        for s in samples {
            buf.extend_from_slice(&(s.re as f32).to_le_bytes());
            buf.extend_from_slice(&(s.im as f32).to_le_bytes());
        }
        self.inner.write_all(&buf)?;
        self.samples += samples.len() as u64;
        Ok(())
    }

    pub fn samples_written(&self) -> u64 {
        self.samples
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Streaming reader.
pub struct IqReader<R: Read> {
    inner: R,
    sample_rate: f64,
    offset: u64,
}

impl<R: Read> IqReader<R> {
    pub fn new(mut inner: R) -> Result<Self, FormatError> {
        let mut header = [0u8; HEADER_LEN];
        read_exact(&mut inner, &mut header, 0, "IQ header")?;
        if &header[0..4] != MAGIC {
            return Err(FormatError::BadMagic {
                offset: 0,
                expected: "NLIQ",
            });
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(FormatError::Version {
                offset: 4,
                found: version,
            });
        }
        let sample_rate = f64::from_le_bytes(header[8..16].try_into().unwrap());
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(FormatError::Invalid {
                offset: 8,
                what: format!("sample rate {sample_rate}"),
            });
        }
        Ok(Self {
            inner,
            sample_rate,
            offset: HEADER_LEN as u64,
        })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Up to `max` samples; empty at end of file.
    pub fn read_block(&mut self, max: usize) -> Result<Vec<Complex64>, FormatError> {
        let mut out = Vec::with_capacity(max);
        let mut raw = [0u8; SAMPLE_LEN];
        while out.len() < max {
            if !read_exact_or_eof(&mut self.inner, &mut raw, self.offset, "IQ sample")? {
                break;
            }
            let i = f32::from_le_bytes(raw[0..4].try_into().unwrap());
            let q = f32::from_le_bytes(raw[4..8].try_into().unwrap());
            out.push(Complex64::new(f64::from(i), f64::from(q)));
            self.offset += SAMPLE_LEN as u64;
        }
        Ok(out)
    }

    pub fn read_all(mut self) -> Result<IqBuffer, FormatError> {
        let mut samples = Vec::new();
        loop {
            let block = self.read_block(1 << 16)?;
            if block.is_empty() {
                break;
            }
            samples.extend(block);
        }
        let sample_rate = self.sample_rate;
        IqBuffer::new(samples, sample_rate).map_err(|e| FormatError::Invalid {
            offset: 0,
            what: e.to_string(),
        })
    }
}

pub fn write_iq_file(path: &Path, iq: &IqBuffer) -> io::Result<()> {
    let mut w = IqWriter::new(BufWriter::new(File::create(path)?), iq.sample_rate)?;
    w.write(&iq.samples)?;
    w.finish()?;
    Ok(())
}

pub fn read_iq_file(path: &Path) -> Result<IqBuffer, FormatError> {
    IqReader::new(BufReader::new(File::open(path)?))?.read_all()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_exact() {
        let w = IqWriter::new(Vec::new(), 500e3).unwrap();
        let bytes = w.finish().unwrap();
        assert_eq!(bytes.len(), 32);
        assert_eq!(&bytes[0..8], b"NLIQ\x01\x00\x00\x00");
        assert_eq!(&bytes[8..16], &500e3f64.to_le_bytes());
        assert!(bytes[16..].iter().all(|&b| b == 0));
    }

    #[test]
    fn samples_interleave_i_then_q() {
        let mut w = IqWriter::new(Vec::new(), 1.0).unwrap();
        w.write(&[Complex64::new(1.0, -2.5)]).unwrap();
        let bytes = w.finish().unwrap();
        assert_eq!(&bytes[32..36], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[36..40], &(-2.5f32).to_le_bytes());
    }

    #[test]
    fn round_trip_in_blocks() {
        let samples: Vec<Complex64> = (0..1000).map(|i| Complex64::new(i as f64 * 0.5, -(i as f64))).collect();
        let mut w = IqWriter::new(Vec::new(), 250e3).unwrap();
        for block in samples.chunks(77) {
            w.write(block).unwrap();
        }
        assert_eq!(w.samples_written(), 1000);
        let bytes = w.finish().unwrap();
        let mut r = IqReader::new(bytes.as_slice()).unwrap();
        assert_eq!(r.sample_rate(), 250e3);
        let first = r.read_block(10).unwrap();
        assert_eq!(first, samples[..10]);
        let rest = r.read_all().unwrap();
        assert_eq!(rest.samples, samples[10..]);
    }

    #[test]
    fn errors_report_offsets() {
        let mut w = IqWriter::new(Vec::new(), 1.0).unwrap();
        w.write(&[Complex64::new(1.0, 1.0); 2]).unwrap();
        let bytes = w.finish().unwrap();

        match IqReader::new(&bytes[..bytes.len() - 3]).unwrap().read_all() {
            Err(FormatError::Truncated { offset, .. }) => assert_eq!(offset, 45),
            other => panic!("{other:?}"),
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(IqReader::new(bad.as_slice()), Err(FormatError::BadMagic { offset: 0, .. })));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(IqReader::new(bad.as_slice()), Err(FormatError::Version { offset: 4, found: 9 })));
        assert!(matches!(IqReader::new(&bytes[..20]), Err(FormatError::Truncated { offset: 20, .. })));
    }
}
