use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use num_complex::Complex64;

use super::loops::parabolic;
use super::{gardner_detector_gain, rrc_taps, IqBuffer, LoopFilter, LoopGains, ModemConfig};

/// Receiver status after (or during) a run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RxDiagnostics {
    /// Squaring estimate taken during acquisition.
    pub coarse_freq_offset_hz: f64,
    /// Coarse estimate plus the carrier loop's frequency integrator.
    pub freq_offset_estimate_hz: f64,
    /// Mean squared decision-directed phase error (rad^2) after settling.
    pub residual_phase_variance: f64,
    /// `(mean |Re y|)^2 / mean |y|^2` over settled, non-silent symbols:
    /// 1 for a clean eye, about 0.32 for noise alone.
    pub lock_metric: f64,
    /// The lock metric cleared 0.5 after the settling period.
    pub timing_locked: bool,
    pub symbols: usize,
}

/// Known synchronisation state, for genie-aided reception.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SyncTruth {
    pub freq_offset_hz: f64,
    pub phase_rad: f64,
    /// Extra delay of the first symbol peak beyond the filter delay.
    pub timing_offset_samples: f64,
}

const LOCK_THRESHOLD: f64 = 0.5;
const SILENCE_POWER: f64 = 1e-2;
const ACQUIRE_LAG_SYMBOLS: usize = 8;

/// Streaming BPSK receiver. Feed blocks with [`Demodulator::process`], then
/// call [`Demodulator::finish`]. Output does not depend on block sizes.
#[derive(Debug, Clone)]
pub struct Demodulator {
    sps: f64,
    symbol_rate: f64,
    sample_rate: f64,
    taps: Vec<f64>,

    acquire_len: usize,
    pending: Option<Vec<Complex64>>,
    coarse_hz: f64,
    nco_phase: f64,
    nco_step: f64,

    // Doubled delay line so the filter window is always contiguous.
    mf_line: Vec<Complex64>,
    mf_idx: usize,
    mf_out: Vec<Complex64>,
    mf_base: usize,

    pos: f64,
    timing: LoopFilter,
    prev_symbol: Option<Complex64>,

    phase: f64,
    carrier: LoopFilter,

    settle_symbols: usize,
    symbols: usize,
    stat_count: usize,
    sum_abs_re: f64,
    sum_power: f64,
    sum_phase_err2: f64,
}

impl Demodulator {
    pub fn new(config: &ModemConfig) -> Self {
        let kd_timing = gardner_detector_gain(config.rrc_rolloff);
        let timing = LoopGains::second_order(config.timing_loop_bw, config.loop_damping, kd_timing);
        let carrier = LoopGains::second_order(config.carrier_loop_bw, config.loop_damping, 1.0);
        let sps = config.samples_per_symbol as f64;
        let mut d = Self::with_gains(config, timing, carrier);
        d.pos = sps.max(sps / 2.0 + 1.0);
        d
    }

    /// Receiver with both loops frozen at the supplied truth.
    pub fn aided(config: &ModemConfig, truth: SyncTruth) -> Self {
        let mut d = Self::with_gains(config, LoopGains::FROZEN, LoopGains::FROZEN);
        d.pending = None;
        d.set_coarse(truth.freq_offset_hz);
        d.nco_phase = -truth.phase_rad;
        d.pos = (d.taps.len() - 1) as f64 + truth.timing_offset_samples;
        d.settle_symbols = 0;
        d
    }

    fn with_gains(config: &ModemConfig, timing: LoopGains, carrier: LoopGains) -> Self {
        let taps = rrc_taps(config);
        let n = taps.len();
        let sps = config.samples_per_symbol;
        Self {
            sps: sps as f64,
            symbol_rate: config.symbol_rate(),
            sample_rate: config.sample_rate,
            taps,
            acquire_len: config.ramp_symbols.max(16) * sps,
            pending: Some(Vec::new()),
            coarse_hz: 0.0,
            nco_phase: 0.0,
            nco_step: 0.0,
            mf_line: alloc::vec![Complex64::new(0.0, 0.0); 2 * n],
            mf_idx: 0,
            mf_out: Vec::new(),
            mf_base: 0,
            pos: 0.0,
            timing: LoopFilter::new(timing),
            prev_symbol: None,
            phase: 0.0,
            carrier: LoopFilter::new(carrier),
            settle_symbols: config.ramp_symbols,
            symbols: 0,
            stat_count: 0,
            sum_abs_re: 0.0,
            sum_power: 0.0,
            sum_phase_err2: 0.0,
        }
    }

    fn set_coarse(&mut self, hz: f64) {
        self.coarse_hz = hz;
        self.nco_step = -TAU * hz / self.sample_rate;
    }

    /// Demodulate a block, appending hard-decision bits to `bits`.
    pub fn process(&mut self, samples: &[Complex64], bits: &mut Vec<u8>) {
        if let Some(pending) = self.pending.as_mut() {
            pending.extend_from_slice(samples);
            if pending.len() < self.acquire_len {
                return;
            }
            let buffered = self.pending.take().unwrap();
            self.acquire(&buffered);
            self.run(&buffered, bits);
        } else {
            self.run(samples, bits);
        }
    }

    /// Flush buffered samples and the matched-filter tail.
    pub fn finish(mut self, bits: &mut Vec<u8>) -> RxDiagnostics {
        if let Some(buffered) = self.pending.take() {
            self.acquire(&buffered);
            self.run(&buffered, bits);
        }
        let tail = alloc::vec![Complex64::new(0.0, 0.0); self.taps.len() - 1];
        self.run(&tail, bits);
        self.diagnostics()
    }

    pub fn diagnostics(&self) -> RxDiagnostics {
        let n = self.stat_count as f64;
        let (lock_metric, phase_var) = if self.stat_count == 0 {
            (0.0, 0.0)
        } else {
            let mean_abs = self.sum_abs_re / n;
            (mean_abs * mean_abs / (self.sum_power / n), self.sum_phase_err2 / n)
        };
        RxDiagnostics {
            coarse_freq_offset_hz: self.coarse_hz,
            freq_offset_estimate_hz: self.coarse_hz
                + self.carrier.integrator * self.symbol_rate / TAU,
            residual_phase_variance: phase_var,
            lock_metric,
            timing_locked: self.stat_count > 0 && lock_metric > LOCK_THRESHOLD,
            symbols: self.symbols,
        }
    }

    /// Squaring estimator on the matched-filter output: BPSK squared is an
    /// unmodulated tone at twice the offset. The lag of [`ACQUIRE_LAG_SYMBOLS`]
    /// keeps offsets up to 1/32 of the symbol rate unambiguous.
    fn acquire(&mut self, samples: &[Complex64]) {
        let samples = &samples[..samples.len().min(self.acquire_len)];
        let n = self.taps.len();
        let squared: Vec<Complex64> = samples
            .windows(n)
            .map(|w| {
                let y: Complex64 = w.iter().zip(&self.taps).map(|(x, h)| x * h).sum();
                y * y
            })
            .collect();
        let lag = ACQUIRE_LAG_SYMBOLS * self.sps as usize;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in lag..squared.len() {
            acc += squared[k] * squared[k - lag].conj();
        }
        let hz = if acc.norm_sqr() > 0.0 {
            acc.arg() * self.sample_rate / (2.0 * TAU * lag as f64)
        } else {
            0.0
        };
        self.set_coarse(hz);
    }

    fn run(&mut self, samples: &[Complex64], bits: &mut Vec<u8>) {
        let n = self.taps.len();
        self.mf_out.reserve(samples.len());
        for &x in samples {
            let (s, c) = libm::sincos(self.nco_phase);
            let y = x * Complex64::new(c, s);
            self.nco_phase += self.nco_step;
            if self.nco_phase >= PI {
                self.nco_phase -= TAU;
            } else if self.nco_phase < -PI {
                self.nco_phase += TAU;
            }

            self.mf_line[self.mf_idx] = y;
            self.mf_line[self.mf_idx + n] = y;
            self.mf_idx = (self.mf_idx + 1) % n;
            // Window holds the last n inputs, oldest first; taps are symmetric.
            let window = &self.mf_line[self.mf_idx..self.mf_idx + n];
            let mut acc = Complex64::new(0.0, 0.0);
            for (w, h) in window.iter().zip(&self.taps) {
                acc += w * h;
            }
            self.mf_out.push(acc);
        }
        self.recover_symbols(bits);
    }

    fn interpolate(&self, t: f64) -> Complex64 {
        let base = libm::floor(t);
        let start = base as usize - 1 - self.mf_base;
        parabolic(&self.mf_out[start..start + 4], t - base)
    }

    fn recover_symbols(&mut self, bits: &mut Vec<u8>) {
        let half = self.sps / 2.0;
        let end = self.mf_base + self.mf_out.len();
        while (libm::floor(self.pos) as usize) + 2 < end {
            let y = self.interpolate(self.pos);
            let mid = self.interpolate(self.pos - half);

            let (s, c) = libm::sincos(self.phase);
            let rot = y * Complex64::new(c, -s);
            let decision = if rot.re > 0.0 { 1.0 } else { -1.0 };
            // No signal: carrier coasts on its frequency estimate, timing runs
            // at the nominal rate (the sample clocks are shared).
            let silent = y.norm_sqr() + mid.norm_sqr() < SILENCE_POWER;
            self.phase += if silent {
                self.carrier.integrator
            } else {
                self.carrier.update(rot.im * decision)
            };
            if self.phase >= PI {
                self.phase -= TAU;
            } else if self.phase < -PI {
                self.phase += TAU;
            }

            let step = match self.prev_symbol {
                Some(prev) if !silent => {
                    let err = ((prev - y) * mid.conj()).re;
                    self.timing.update(err).clamp(-0.5, 0.5)
                }
                _ => 0.0,
            };
            self.prev_symbol = Some(y);
            self.pos += self.sps * (1.0 + step);

            bits.push(u8::from(rot.re > 0.0));
            self.symbols += 1;
            if self.symbols > self.settle_symbols && rot.norm_sqr() > SILENCE_POWER {
                self.stat_count += 1;
                self.sum_abs_re += rot.re.abs();
                self.sum_power += rot.norm_sqr();
                let e = libm::atan2(rot.im * decision, rot.re * decision);
                self.sum_phase_err2 += e * e;
            }
        }
        // Keep what the next mid-point interpolation can still touch.
        let keep_from = (libm::floor(self.pos - half) as usize).saturating_sub(1);
        if keep_from > self.mf_base + 4096 {
            self.mf_out.drain(..keep_from - self.mf_base);
            self.mf_base = keep_from;
        }
    }
}

/// Demodulate a whole buffer with live synchronisation.
pub fn rx_chain(iq: &IqBuffer, config: &ModemConfig) -> (Vec<u8>, RxDiagnostics) {
    let mut config = *config;
    config.sample_rate = iq.sample_rate;
    let mut d = Demodulator::new(&config);
    let mut bits = Vec::with_capacity(iq.len() / config.samples_per_symbol + 64);
    d.process(&iq.samples, &mut bits);
    let diag = d.finish(&mut bits);
    (bits, diag)
}

/// Demodulate with frozen loops seeded at the true offsets. Bit `k` of the
/// output is symbol `k` of the transmission (ramp included).
pub fn rx_chain_aided(iq: &IqBuffer, config: &ModemConfig, truth: SyncTruth) -> (Vec<u8>, RxDiagnostics) {
    let mut config = *config;
    config.sample_rate = iq.sample_rate;
    let mut d = Demodulator::aided(&config, truth);
    let mut bits = Vec::with_capacity(iq.len() / config.samples_per_symbol + 64);
    d.process(&iq.samples, &mut bits);
    let diag = d.finish(&mut bits);
    (bits, diag)
}
