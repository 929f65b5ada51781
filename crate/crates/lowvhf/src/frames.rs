//! Frame dumps and PSNR series files.
//!
//! A frame dump is two files: `<stem>.raw`, the planar 8-bit frames back to
//! back, and `<stem>.toml`, a sidecar with the geometry and the frame indices
//! stored in the raw file (absent frames are skipped, so indices may have
//! gaps):
//!
//! ```toml
//! width = 320
//! height = 240
//! channels = 1
//! fps = 15.0
//! n_frames = 3
//! indices = [0, 1, 3]
//! ```

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use lowvhf_core::video::{FramePsnr, FrameStream, VideoFrame};
use serde::{Deserialize, Serialize};

use crate::error::{read_exact, FormatError};
use crate::report::{format_opt, parse_opt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub fps: f64,
    pub n_frames: usize,
    pub indices: Vec<u32>,
}

pub fn raw_path(stem: &Path) -> PathBuf {
    stem.with_extension("raw")
}

pub fn sidecar_path(stem: &Path) -> PathBuf {
    stem.with_extension("toml")
}

/// Write `stream` to `<stem>.raw` and `<stem>.toml`. An empty stream needs
/// its geometry from `fallback`.
pub fn write_frames(stem: &Path, stream: &FrameStream, fallback: (usize, usize, usize)) -> io::Result<()> {
    let (width, height, channels) = stream
        .frames()
        .first()
        .map_or(fallback, |f| (f.width, f.height, f.channels));
    let sidecar = Sidecar {
        width,
        height,
        channels,
        fps: stream.frame_rate,
        n_frames: stream.len(),
        indices: stream.frames().iter().map(|f| f.frame_index).collect(),
    };
    let text = toml::to_string(&sidecar).map_err(io::Error::other)?;
    fs::write(sidecar_path(stem), text)?;
    let mut raw = BufWriter::new(File::create(raw_path(stem))?);
    for f in stream.frames() {
        raw.write_all(&f.pixels)?;
    }
    raw.flush()
}

pub fn read_frames(stem: &Path) -> Result<FrameStream, FormatError> {
    let text = fs::read_to_string(sidecar_path(stem))?;
    let sidecar: Sidecar = toml::from_str(&text).map_err(|e| FormatError::Invalid {
        offset: e.span().map_or(0, |s| s.start as u64),
        what: format!("frame sidecar: {}", e.message()),
    })?;
    if sidecar.indices.len() != sidecar.n_frames {
        return Err(FormatError::Invalid {
            offset: 0,
            what: "frame sidecar: indices do not match n_frames".into(),
        });
    }
    let frame_len = sidecar.width * sidecar.height * sidecar.channels;
    let mut raw = BufReader::new(File::open(raw_path(stem))?);
    let mut frames = Vec::with_capacity(sidecar.n_frames);
    for (k, &index) in sidecar.indices.iter().enumerate() {
        let mut pixels = vec![0u8; frame_len];
        read_exact(&mut raw, &mut pixels, (k * frame_len) as u64, "frame data")?;
        let frame = VideoFrame::new(sidecar.width, sidecar.height, sidecar.channels, index, pixels).map_err(|e| {
            FormatError::Invalid {
                offset: (k * frame_len) as u64,
                what: e.to_string(),
            }
        })?;
        frames.push(frame);
    }
    let trailing = raw.read(&mut [0u8; 1])?;
    if trailing != 0 {
        return Err(FormatError::Invalid {
            offset: (sidecar.n_frames * frame_len) as u64,
            what: "trailing bytes after the last frame".into(),
        });
    }
    FrameStream::new(frames, sidecar.fps).map_err(|e| FormatError::Invalid {
        offset: 0,
        what: e.to_string(),
    })
}

/// `frame_index,psnr_db,present_flag`; absent frames have `undefined` PSNR.
pub fn write_psnr_csv<W: Write>(w: W, series: &[FramePsnr]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["frame_index", "psnr_db", "present_flag"])?;
    for p in series {
        out.write_record([
            p.frame_index.to_string(),
            format_opt(p.psnr_db),
            u8::from(p.psnr_db.is_some()).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_psnr_csv<R: Read>(r: R) -> anyhow::Result<Vec<FramePsnr>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut series = Vec::new();
    for row in rdr.records() {
        let row = row?;
        anyhow::ensure!(row.len() == 3, "PSNR row with {} fields", row.len());
        series.push(FramePsnr {
            frame_index: row[0].parse()?,
            psnr_db: parse_opt(&row[1])?,
        });
    }
    Ok(series)
}
