//! BPSK modem with root-raised-cosine pulse shaping.
//!
//! Transmit: bits are mapped to antipodal symbols, zero-stuffed to
//! `samples_per_symbol` and filtered with [`rrc_taps`]. A run of alternating
//! idle symbols is sent first so the receive loops can settle.
//!
//! Receive ([`Demodulator`]):
//!
//! 1. carrier acquisition: a squaring estimator over the first block of
//!    samples gives the frequency offset, which a free-running oscillator
//!    removes;
//! 2. matched RRC filter;
//! 3. symbol timing: Gardner detector on a piecewise-parabolic interpolator,
//!    two samples per symbol, second-order loop;
//! 4. fine frequency and phase: decision-directed second-order loop at the
//!    symbol rate;
//! 5. hard decision on the real part.
//!
//! The recovered bit stream can carry a 180 degree ambiguity; the framing
//! layer resolves it from the preamble polarity.

mod loops;
mod rrc;
mod rx;
mod tx;

use alloc::vec::Vec;
use num_complex::Complex64;
use thiserror::Error;

pub use loops::{gardner_detector_gain, LoopFilter, LoopGains};
pub use rrc::rrc_taps;
pub use rx::{rx_chain, rx_chain_aided, Demodulator, RxDiagnostics, SyncTruth};
pub use tx::{ramp_bits, tx_chain, Modulator};

/// Complex baseband samples plus their rate.
#[derive(Debug, Clone, PartialEq)]
pub struct IqBuffer {
    pub samples: Vec<Complex64>,
    /// Samples per second.
    pub sample_rate: f64,
}

impl IqBuffer {
    pub fn new(samples: Vec<Complex64>, sample_rate: f64) -> Result<Self, ModemError> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(ModemError::InvalidSampleRate(sample_rate));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean of `|x|^2`; zero for an empty buffer.
    pub fn mean_power(&self) -> f64 {
        mean_power(&self.samples)
    }

    pub fn all_finite(&self) -> bool {
        self.samples.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

pub(crate) fn mean_power(samples: &[Complex64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / samples.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ModemError {
    #[error("sample rate must be positive and finite, got {0}")]
    InvalidSampleRate(f64),
    #[error("samples per symbol must be at least 2, got {0}")]
    SamplesPerSymbol(usize),
    #[error("RRC roll-off must be in (0, 1], got {0}")]
    Rolloff(f64),
    #[error("RRC span must be an even number of symbols >= 4, got {0}")]
    Span(usize),
    #[error("loop bandwidth must be in [0, 0.25), got {0}")]
    LoopBandwidth(f64),
    #[error("loop damping must be positive, got {0}")]
    Damping(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModemConfig {
    pub sample_rate: f64,
    pub samples_per_symbol: usize,
    pub rrc_rolloff: f64,
    /// Filter length in symbols; taps = span * sps + 1.
    pub rrc_span_symbols: usize,
    /// Timing loop noise bandwidth as a fraction of the symbol rate.
    pub timing_loop_bw: f64,
    /// Carrier loop noise bandwidth as a fraction of the symbol rate.
    pub carrier_loop_bw: f64,
    pub loop_damping: f64,
    /// Alternating idle symbols sent ahead of the data.
    pub ramp_symbols: usize,
}

impl Default for ModemConfig {
    fn default() -> Self {
        Self {
            sample_rate: 500_000.0,
            samples_per_symbol: 4,
            rrc_rolloff: 0.35,
            rrc_span_symbols: 32,
            timing_loop_bw: 0.004,
            carrier_loop_bw: 0.002,
            loop_damping: 1.0,
            ramp_symbols: 256,
        }
    }
}

impl ModemConfig {
    pub fn symbol_rate(&self) -> f64 {
        self.sample_rate / self.samples_per_symbol as f64
    }

    pub fn validate(&self) -> Result<(), ModemError> {
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(ModemError::InvalidSampleRate(self.sample_rate));
        }
        if self.samples_per_symbol < 2 {
            return Err(ModemError::SamplesPerSymbol(self.samples_per_symbol));
        }
        if !(self.rrc_rolloff > 0.0 && self.rrc_rolloff <= 1.0) {
            return Err(ModemError::Rolloff(self.rrc_rolloff));
        }
        if self.rrc_span_symbols < 4 || !self.rrc_span_symbols.is_multiple_of(2) {
            return Err(ModemError::Span(self.rrc_span_symbols));
        }
        for bw in [self.timing_loop_bw, self.carrier_loop_bw] {
            if !(0.0..0.25).contains(&bw) {
                return Err(ModemError::LoopBandwidth(bw));
            }
        }
        if !(self.loop_damping > 0.0 && self.loop_damping.is_finite()) {
            return Err(ModemError::Damping(self.loop_damping));
        }
        Ok(())
    }

    pub fn filter_len(&self) -> usize {
        self.rrc_span_symbols * self.samples_per_symbol + 1
    }
}

/// Antipodal mapping: `0 -> -1.0`, `1 -> +1.0`.
pub fn bits_to_symbols(bits: &[u8]) -> Vec<f64> {
    bits.iter().map(|&b| bit_to_symbol(b)).collect()
}

#[inline]
pub fn bit_to_symbol(bit: u8) -> f64 {
    if bit & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Bit error probability of coherent BPSK in AWGN: `0.5 erfc(sqrt(Eb/N0))`.
pub fn ber_vs_ebn0_reference(ebn0_db: f64) -> f64 {
    if ebn0_db == f64::INFINITY {
        return 0.0;
    }
    let ebn0 = libm::pow(10.0, ebn0_db / 10.0);
    0.5 * libm::erfc(libm::sqrt(ebn0))
}
