//! Signal chain for streaming video over a narrowband BPSK link.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the
//! algorithmic pieces:
//!
//! - [`framing`]: packet construction, preamble correlation and header parsing.
//! - [`modem`]: BPSK mapping, root-raised-cosine shaping and the receive
//!   synchronisation chain (carrier, timing, slicing).
//! - [`channel`]: composable simulated impairments (AWGN, frequency offset,
//!   multipath, burst erasure).
//! - [`video`]: synthetic frame sources, frame packetization, lossy
//!   reconstruction and PSNR.
//! - [`metrics`]: sequence-number packet matching, payload BER and the joint
//!   link report.
//!
//! File formats, session orchestration and the command line live in the
//! companion `lowvhf` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bits;
pub mod channel;
pub mod framing;
pub mod metrics;
pub mod modem;
pub mod noise;
pub mod video;

pub use num_complex::Complex64;
