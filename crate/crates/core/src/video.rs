//! Raw video frames, their packetization, and PSNR.
//!
//! Frames are 8-bit, stored planar (`channels` planes of `width * height`).
//! Streams are carried uncompressed so that every payload bit error maps to
//! a known pixel error.
//!
//! Each payload starts with a 6-byte chunk prefix:
//!
//! ```text
//! frame_index: u16 BE | chunk_index: u16 BE | CRC-16/IBM-3740 of the first 4 bytes
//! ```
//!
//! followed by up to `payload_size - 6` bytes of the frame, row-major. A chunk
//! whose prefix fails the CRC is dropped and concealed like a lost one.

use alloc::vec::Vec;

use crc::{Crc, CRC_16_IBM_3740};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

pub const DEFAULT_WIDTH: usize = 320;
pub const DEFAULT_HEIGHT: usize = 240;
pub const DEFAULT_FRAME_RATE: f64 = 15.0;
/// Returned for identical frames.
pub const PSNR_CAP_DB: f64 = 100.0;
pub const MAX_COMPONENT: f64 = 255.0;
pub const CHUNK_PREFIX_LEN: usize = 6;
/// Fill value for areas with nothing to conceal from.
pub const CONCEAL_GRAY: u8 = 128;

const PREFIX_CRC: Crc<u16> = Crc::<u16>::new(&CRC_16_IBM_3740);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VideoError {
    #[error("frame geometry must be non-zero, got {width}x{height}x{channels}")]
    EmptyGeometry {
        width: usize,
        height: usize,
        channels: usize,
    },
    #[error("channels must be 1 or 3, got {0}")]
    Channels(usize),
    #[error("pixel buffer holds {got} bytes, expected {expected}")]
    PixelCount { expected: usize, got: usize },
    #[error("frame indices must strictly increase")]
    FrameOrder,
    #[error("frame geometry mismatch")]
    GeometryMismatch,
    #[error("payload size must exceed the {CHUNK_PREFIX_LEN}-byte prefix, got {0}")]
    PayloadSize(usize),
    #[error("frame index {0} does not fit the 16-bit chunk prefix")]
    FrameIndexOverflow(u32),
    #[error("frame {0} cannot be rebuilt: chunks missing")]
    Incomplete(u32),
    #[error("the streams have no frames in common")]
    NoCommonFrames,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoFrame {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub frame_index: u32,
    /// Planar, `channels * height * width` bytes.
    pub pixels: Vec<u8>,
}

impl VideoFrame {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        frame_index: u32,
        pixels: Vec<u8>,
    ) -> Result<Self, VideoError> {
        check_geometry(width, height, channels)?;
        let expected = width * height * channels;
        if pixels.len() != expected {
            return Err(VideoError::PixelCount {
                expected,
                got: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            frame_index,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, frame_index: u32, value: u8) -> Result<Self, VideoError> {
        Self::new(width, height, channels, frame_index, alloc::vec![value; width * height * channels])
    }

    pub fn same_geometry(&self, other: &VideoFrame) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }
}

fn check_geometry(width: usize, height: usize, channels: usize) -> Result<(), VideoError> {
    if width == 0 || height == 0 || channels == 0 {
        return Err(VideoError::EmptyGeometry {
            width,
            height,
            channels,
        });
    }
    if channels != 1 && channels != 3 {
        return Err(VideoError::Channels(channels));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameStream {
    frames: Vec<VideoFrame>,
    pub frame_rate: f64,
}

impl FrameStream {
    pub fn new(frames: Vec<VideoFrame>, frame_rate: f64) -> Result<Self, VideoError> {
        if frames.windows(2).any(|w| w[0].frame_index >= w[1].frame_index) {
            return Err(VideoError::FrameOrder);
        }
        if frames.windows(2).any(|w| !w[0].same_geometry(&w[1])) {
            return Err(VideoError::GeometryMismatch);
        }
        Ok(Self { frames, frame_rate })
    }

    pub fn frames(&self) -> &[VideoFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn get(&self, frame_index: u32) -> Option<&VideoFrame> {
        self.frames
            .binary_search_by_key(&frame_index, |f| f.frame_index)
            .ok()
            .map(|i| &self.frames[i])
    }

    pub fn into_frames(self) -> Vec<VideoFrame> {
        self.frames
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    /// Row-major linear ramp from 0 to 255 over the frame.
    Gradient,
    /// 16-pixel checkerboard.
    Checker,
    /// Bright box on a dark background, moving right 1 px per frame.
    MovingBox,
    /// Independent uniform bytes.
    Noise { seed: u64 },
}

/// Deterministic synthetic video, frames numbered from 0.
pub fn generate_test_pattern(
    kind: Pattern,
    width: usize,
    height: usize,
    channels: usize,
    n_frames: usize,
) -> Result<FrameStream, VideoError> {
    check_geometry(width, height, channels)?;
    let plane = width * height;
    let mut rng = match kind {
        Pattern::Noise { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    let mut frames = Vec::with_capacity(n_frames);
    for k in 0..n_frames {
        let mut pixels = alloc::vec![0u8; plane * channels];
        match kind {
            Pattern::Gradient => {
                let span = (plane - 1).max(1) as u64;
                for (i, p) in pixels[..plane].iter_mut().enumerate() {
                    *p = ((255 * i as u64 + span / 2) / span) as u8;
                }
            }
            Pattern::Checker => {
                for y in 0..height {
                    for x in 0..width {
                        pixels[y * width + x] = if (x / 16 + y / 16) % 2 == 0 { 32 } else { 224 };
                    }
                }
            }
            Pattern::MovingBox => {
                let bw = (width / 4).max(1);
                let bh = (height / 4).max(1);
                let x0 = k % (width - bw + 1);
                let y0 = (height - bh) / 2;
                pixels[..plane].fill(64);
                for y in y0..y0 + bh {
                    pixels[y * width + x0..y * width + x0 + bw].fill(200);
                }
            }
            Pattern::Noise { .. } => {
                rng.as_mut().unwrap().fill_bytes(&mut pixels);
            }
        }
        if !matches!(kind, Pattern::Noise { .. }) {
            let (first, rest) = pixels.split_at_mut(plane);
            for c in rest.chunks_exact_mut(plane) {
                c.copy_from_slice(first);
            }
        }
        frames.push(VideoFrame {
            width,
            height,
            channels,
            frame_index: k as u32,
            pixels,
        });
    }
    FrameStream::new(frames, DEFAULT_FRAME_RATE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkPrefix {
    pub frame_index: u16,
    pub chunk_index: u16,
}

impl ChunkPrefix {
    pub fn encode(&self) -> [u8; CHUNK_PREFIX_LEN] {
        let mut out = [0u8; CHUNK_PREFIX_LEN];
        out[0..2].copy_from_slice(&self.frame_index.to_be_bytes());
        out[2..4].copy_from_slice(&self.chunk_index.to_be_bytes());
        let crc = PREFIX_CRC.checksum(&out[0..4]);
        out[4..6].copy_from_slice(&crc.to_be_bytes());
        out
    }

    /// `None` when the payload is too short or the CRC fails.
    pub fn decode(payload: &[u8]) -> Option<Self> {
        let p = payload.get(..CHUNK_PREFIX_LEN)?;
        if PREFIX_CRC.checksum(&p[0..4]) != u16::from_be_bytes([p[4], p[5]]) {
            return None;
        }
        Some(Self {
            frame_index: u16::from_be_bytes([p[0], p[1]]),
            chunk_index: u16::from_be_bytes([p[2], p[3]]),
        })
    }
}

/// Session-level knowledge the receiver needs to rebuild frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub n_frames: usize,
    pub payload_size: usize,
}

impl Geometry {
    pub fn frame_bytes(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn chunk_data_len(&self) -> usize {
        self.payload_size - CHUNK_PREFIX_LEN
    }

    pub fn chunks_per_frame(&self) -> usize {
        self.frame_bytes().div_ceil(self.chunk_data_len())
    }
}

/// Split each frame row-major into prefixed chunks of at most `payload_size`
/// bytes, frame after frame.
pub fn packetize(stream: &FrameStream, payload_size: usize) -> Result<Vec<Vec<u8>>, VideoError> {
    if payload_size <= CHUNK_PREFIX_LEN {
        return Err(VideoError::PayloadSize(payload_size));
    }
    let data_len = payload_size - CHUNK_PREFIX_LEN;
    let mut out = Vec::new();
    for frame in stream.frames() {
        let frame_index =
            u16::try_from(frame.frame_index).map_err(|_| VideoError::FrameIndexOverflow(frame.frame_index))?;
        for (chunk_index, data) in frame.pixels.chunks(data_len).enumerate() {
            let prefix = ChunkPrefix {
                frame_index,
                chunk_index: chunk_index as u16,
            };
            let mut payload = Vec::with_capacity(CHUNK_PREFIX_LEN + data.len());
            payload.extend_from_slice(&prefix.encode());
            payload.extend_from_slice(data);
            out.push(payload);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedFrame {
    /// Received chunks written over the concealment source.
    pub frame: VideoFrame,
    pub chunks_received: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// One entry per frame of the session, absent ones included.
    pub frames: Vec<ReconstructedFrame>,
    pub chunks_placed: usize,
    /// Bad CRC, out-of-range indices or short payloads.
    pub chunks_rejected: usize,
    pub chunks_duplicate: usize,
    pub frame_rate: f64,
}

impl Reconstruction {
    /// Frames with at least one received chunk.
    pub fn present_stream(&self) -> FrameStream {
        let frames = self
            .frames
            .iter()
            .filter(|f| f.chunks_received > 0)
            .map(|f| f.frame.clone())
            .collect();
        FrameStream {
            frames,
            frame_rate: self.frame_rate,
        }
    }

    /// Indices of frames with no received chunk.
    pub fn absent(&self) -> Vec<u32> {
        self.frames
            .iter()
            .filter(|f| f.chunks_received == 0)
            .map(|f| f.frame.frame_index)
            .collect()
    }
}

/// Rebuild the session's frames from whatever payloads arrived, in arrival
/// order. Missing chunks copy the co-located bytes of the previous frame
/// (mid-gray before the first one). Received chunks are written as-is, so bit
/// errors become pixel errors. The first copy of a duplicated chunk wins.
pub fn reconstruct<'a, I>(payloads: I, geometry: &Geometry, frame_rate: f64) -> Result<Reconstruction, VideoError>
where
    I: IntoIterator<Item = &'a [u8]>,
{
    check_geometry(geometry.width, geometry.height, geometry.channels)?;
    if geometry.payload_size <= CHUNK_PREFIX_LEN {
        return Err(VideoError::PayloadSize(geometry.payload_size));
    }
    let frame_bytes = geometry.frame_bytes();
    let data_len = geometry.chunk_data_len();
    let per_frame = geometry.chunks_per_frame();

    let mut seen = alloc::vec![false; geometry.n_frames * per_frame];
    let mut by_frame: Vec<Vec<(usize, &'a [u8])>> = alloc::vec![Vec::new(); geometry.n_frames];
    let (mut rejected, mut duplicate) = (0, 0);
    for payload in payloads {
        let Some(prefix) = ChunkPrefix::decode(payload) else {
            rejected += 1;
            continue;
        };
        let (f, c) = (usize::from(prefix.frame_index), usize::from(prefix.chunk_index));
        if f >= geometry.n_frames || c >= per_frame {
            rejected += 1;
            continue;
        }
        if core::mem::replace(&mut seen[f * per_frame + c], true) {
            duplicate += 1;
            continue;
        }
        by_frame[f].push((c, &payload[CHUNK_PREFIX_LEN..]));
    }

    let mut canvas = alloc::vec![CONCEAL_GRAY; frame_bytes];
    let mut frames = Vec::with_capacity(geometry.n_frames);
    let mut placed = 0;
    for (f, chunks) in by_frame.into_iter().enumerate() {
        for &(c, data) in &chunks {
            let start = c * data_len;
            let end = (start + data_len).min(frame_bytes);
            let n = data.len().min(end - start);
            canvas[start..start + n].copy_from_slice(&data[..n]);
        }
        placed += chunks.len();
        frames.push(ReconstructedFrame {
            frame: VideoFrame {
                width: geometry.width,
                height: geometry.height,
                channels: geometry.channels,
                frame_index: f as u32,
                pixels: canvas.clone(),
            },
            chunks_received: chunks.len(),
        });
    }
    Ok(Reconstruction {
        frames,
        chunks_placed: placed,
        chunks_rejected: rejected,
        chunks_duplicate: duplicate,
        frame_rate,
    })
}

/// Lossless inverse of [`packetize`]; fails if any chunk is missing.
pub fn depacketize<'a, I>(payloads: I, geometry: &Geometry, frame_rate: f64) -> Result<FrameStream, VideoError>
where
    I: IntoIterator<Item = &'a [u8]>,
{
    let rec = reconstruct(payloads, geometry, frame_rate)?;
    let per_frame = geometry.chunks_per_frame();
    if let Some(f) = rec.frames.iter().find(|f| f.chunks_received != per_frame) {
        return Err(VideoError::Incomplete(f.frame.frame_index));
    }
    Ok(FrameStream {
        frames: rec.frames.into_iter().map(|f| f.frame).collect(),
        frame_rate,
    })
}

/// Sum of squared component differences.
pub fn squared_error(reference: &VideoFrame, test: &VideoFrame) -> Result<u64, VideoError> {
    if !reference.same_geometry(test) {
        return Err(VideoError::GeometryMismatch);
    }
    Ok(reference
        .pixels
        .iter()
        .zip(&test.pixels)
        .map(|(&x, &y)| {
            let d = i64::from(x) - i64::from(y);
            (d * d) as u64
        })
        .sum())
}

/// `10 log10(255^2 * N / sum (X - Y)^2)` over all `N` components, capped at
/// [`PSNR_CAP_DB`].
pub fn psnr(reference: &VideoFrame, test: &VideoFrame) -> Result<f64, VideoError> {
    let sse = squared_error(reference, test)?;
    if sse == 0 {
        return Ok(PSNR_CAP_DB);
    }
    let n = reference.pixels.len() as f64;
    let db = 10.0 * libm::log10(MAX_COMPONENT * MAX_COMPONENT * n / sse as f64);
    Ok(db.min(PSNR_CAP_DB))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramePsnr {
    pub frame_index: u32,
    /// `None` when the frame was not received.
    pub psnr_db: Option<f64>,
}

/// Per-frame PSNR for every reference frame, `None` where `test` lacks it.
pub fn psnr_series(reference: &FrameStream, test: &FrameStream) -> Result<Vec<FramePsnr>, VideoError> {
    reference
        .frames()
        .iter()
        .map(|r| {
            let psnr_db = test.get(r.frame_index).map(|t| psnr(r, t)).transpose()?;
            Ok(FramePsnr {
                frame_index: r.frame_index,
                psnr_db,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApsnrSummary {
    pub apsnr_db: f64,
    pub frames_compared: usize,
    /// Reference frames missing from the test stream.
    pub frames_absent: usize,
}

/// Mean of the defined entries of a PSNR series.
pub fn mean_psnr(series: &[FramePsnr]) -> Option<f64> {
    let values: Vec<f64> = series.iter().filter_map(|p| p.psnr_db).collect();
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Average PSNR over frames present in both streams.
pub fn apsnr(reference: &FrameStream, test: &FrameStream) -> Result<ApsnrSummary, VideoError> {
    let series = psnr_series(reference, test)?;
    let apsnr_db = mean_psnr(&series).ok_or(VideoError::NoCommonFrames)?;
    let frames_compared = series.iter().filter(|p| p.psnr_db.is_some()).count();
    Ok(ApsnrSummary {
        apsnr_db,
        frames_compared,
        frames_absent: series.len() - frames_compared,
    })
}
