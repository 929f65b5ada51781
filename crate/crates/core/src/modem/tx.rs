use alloc::vec::Vec;
use num_complex::Complex64;

use super::{bit_to_symbol, rrc_taps, IqBuffer, ModemConfig};

/// Alternating `1, 0, 1, 0, ...` idle pattern used ahead of data.
pub fn ramp_bits(n: usize) -> Vec<u8> {
    (0..n).map(|i| u8::from(i % 2 == 0)).collect()
}

/// Streaming pulse shaper. Output is the full convolution of the
/// zero-stuffed symbol train with the RRC taps, emitted in pieces.
#[derive(Debug, Clone)]
pub struct Modulator {
    sps: usize,
    taps: Vec<f64>,
    /// Most recent symbols, newest last; length = symbols spanned by the filter.
    history: Vec<f64>,
    symbols_in: usize,
}

impl Modulator {
    pub fn new(config: &ModemConfig) -> Self {
        let taps = rrc_taps(config);
        let sps = config.samples_per_symbol;
        let depth = taps.len().div_ceil(sps);
        Self {
            sps,
            taps,
            history: alloc::vec![0.0; depth],
            symbols_in: 0,
        }
    }

    fn push_symbol(&mut self, symbol: f64, out: &mut Vec<Complex64>) {
        self.history.rotate_left(1);
        *self.history.last_mut().unwrap() = symbol;
        self.symbols_in += 1;
        let depth = self.history.len();
        for phase in 0..self.sps {
            let mut acc = 0.0;
            for j in 0..depth {
                let tap = j * self.sps + phase;
                if tap >= self.taps.len() {
                    break;
                }
                acc += self.history[depth - 1 - j] * self.taps[tap];
            }
            out.push(Complex64::new(acc, 0.0));
        }
    }

    /// Shape `bits`, appending `bits.len() * sps` samples to `out`.
    pub fn push_bits(&mut self, bits: &[u8], out: &mut Vec<Complex64>) {
        out.reserve(bits.len() * self.sps);
        for &b in bits {
            self.push_symbol(bit_to_symbol(b), out);
        }
    }

    /// Flush the filter tail (`taps - 1` samples).
    pub fn finish(mut self, out: &mut Vec<Complex64>) {
        let tail = self.taps.len() - 1;
        let start = out.len();
        while out.len() - start < tail {
            self.push_symbol(0.0, out);
        }
        out.truncate(start + tail);
    }
}

/// Shape an idle ramp plus `bits` into a complete baseband burst.
///
/// Output length is `(ramp + bits) * sps + taps - 1`.
pub fn tx_chain(bits: &[u8], config: &ModemConfig) -> IqBuffer {
    let mut m = Modulator::new(config);
    let mut samples = Vec::with_capacity((bits.len() + config.ramp_symbols + config.rrc_span_symbols + 1) * config.samples_per_symbol);
    m.push_bits(&ramp_bits(config.ramp_symbols), &mut samples);
    m.push_bits(bits, &mut samples);
    m.finish(&mut samples);
    IqBuffer {
        samples,
        sample_rate: config.sample_rate,
    }
}
