use std::io;

use thiserror::Error;

/// Problems reading one of the on-disk formats. Offsets are in bytes from the
/// start of the file.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic at byte {offset}: expected {expected:?}")]
    BadMagic { offset: u64, expected: &'static str },
    #[error("unsupported version {found} at byte {offset}")]
    Version { offset: u64, found: u32 },
    #[error("file truncated at byte {offset}: {what}")]
    Truncated { offset: u64, what: &'static str },
    #[error("invalid data at byte {offset}: {what}")]
    Invalid { offset: u64, what: String },
}

/// Read exactly `buf.len()` bytes. `Ok(false)` on a clean end of file before
/// the first byte; a partial read is reported as truncation.
pub(crate) fn read_exact_or_eof<R: io::Read>(
    r: &mut R,
    buf: &mut [u8],
    offset: u64,
    what: &'static str,
) -> Result<bool, FormatError> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => {
                return Err(FormatError::Truncated {
                    offset: offset + filled as u64,
                    what,
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(true)
}

pub(crate) fn read_exact<R: io::Read>(
    r: &mut R,
    buf: &mut [u8],
    offset: u64,
    what: &'static str,
) -> Result<(), FormatError> {
    if read_exact_or_eof(r, buf, offset, what)? {
        Ok(())
    } else {
        Err(FormatError::Truncated { offset, what })
    }
}
