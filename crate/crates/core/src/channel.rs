//! Simulated channel: an ordered chain of impairment stages.
//!
//! Stages see the output of the previous stage. Noise levels given as Eb/N0
//! or SNR are referenced to the signal power entering the channel, which a
//! streaming [`ChannelRunner`] must be told up front. [`apply`] measures it
//! from the buffer.
//!
//! Each noisy stage draws from its own generator, seeded from the model seed
//! and the stage position, so output is reproducible and independent of how
//! the input is split into blocks.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use num_complex::Complex64;
use thiserror::Error;

use crate::modem::{mean_power, IqBuffer};
use crate::noise::{split_seed, GaussianSource};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLevel {
    EbN0Db(f64),
    SnrDb(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stage {
    /// Wire loopback: output equals input.
    Ideal,
    Awgn(NoiseLevel),
    /// Carrier frequency offset with a starting phase.
    Cfo { offset_hz: f64, initial_phase_rad: f64 },
    /// Tapped delay line of `(delay_samples, gain)` taps.
    Multipath { taps: Vec<(usize, Complex64)> },
    /// Zero the signal over `[start, end)` sample intervals.
    BurstDrop { intervals: Vec<(u64, u64)> },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("signal power is zero; cannot calibrate noise")]
    ZeroPower,
    #[error("stage {stage}: multipath needs taps with the first at delay 0 and nonzero total power")]
    BadMultipath { stage: usize },
    #[error("stage {stage}: drop intervals must be non-empty, sorted and non-overlapping")]
    BadIntervals { stage: usize },
    #[error("stage {stage}: non-finite parameter")]
    NonFinite { stage: usize },
    #[error("samples per symbol and bits per symbol must be positive")]
    BadReference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    pub stages: Vec<Stage>,
    pub rng_seed: u64,
    /// Needed to convert Eb/N0 into a per-sample noise level.
    pub samples_per_symbol: usize,
    pub bits_per_symbol: u32,
}

impl ChannelModel {
    pub fn new(stages: Vec<Stage>, rng_seed: u64) -> Self {
        Self {
            stages,
            rng_seed,
            samples_per_symbol: 4,
            bits_per_symbol: 1,
        }
    }

    pub fn ideal() -> Self {
        Self::new(alloc::vec![Stage::Ideal], 0)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.samples_per_symbol == 0 || self.bits_per_symbol == 0 {
            return Err(ChannelError::BadReference);
        }
        for (stage, s) in self.stages.iter().enumerate() {
            match s {
                Stage::Ideal => {}
                Stage::Awgn(NoiseLevel::EbN0Db(db) | NoiseLevel::SnrDb(db)) => {
                    // +inf dB is a valid "no noise" level.
                    if db.is_nan() || *db == f64::NEG_INFINITY {
                        return Err(ChannelError::NonFinite { stage });
                    }
                }
                Stage::Cfo {
                    offset_hz,
                    initial_phase_rad,
                } => {
                    if !offset_hz.is_finite() || !initial_phase_rad.is_finite() {
                        return Err(ChannelError::NonFinite { stage });
                    }
                }
                Stage::Multipath { taps } => {
                    let power: f64 = taps.iter().map(|(_, g)| g.norm_sqr()).sum();
                    let ok = taps.first().is_some_and(|(d, _)| *d == 0)
                        && taps.iter().all(|(_, g)| g.re.is_finite() && g.im.is_finite())
                        && power > 0.0;
                    if !ok {
                        return Err(ChannelError::BadMultipath { stage });
                    }
                }
                Stage::BurstDrop { intervals } => {
                    let ordered = intervals.iter().all(|(a, b)| a < b)
                        && intervals.windows(2).all(|w| w[0].1 <= w[1].0);
                    if !ordered {
                        return Err(ChannelError::BadIntervals { stage });
                    }
                }
            }
        }
        Ok(())
    }

    /// Largest multipath delay over all stages (summed along the chain).
    pub fn max_delay(&self) -> usize {
        self.stages
            .iter()
            .map(|s| match s {
                Stage::Multipath { taps } => taps.iter().map(|(d, _)| *d).max().unwrap_or(0),
                _ => 0,
            })
            .sum()
    }
}

/// Per-component noise variance `sigma^2` giving the requested Eb/N0 for a
/// signal of mean power `signal_power`:
/// `sigma^2 = P * sps / (2 * bits_per_symbol * 10^(ebn0/10))`.
///
/// Each of I and Q receives `N(0, sigma^2)`, so `N0 = 2 sigma^2`.
pub fn awgn_variance(
    signal_power: f64,
    ebn0_db: f64,
    bits_per_symbol: u32,
    samples_per_symbol: usize,
) -> Result<f64, ChannelError> {
    if !(signal_power > 0.0) {
        return Err(ChannelError::ZeroPower);
    }
    let ebn0 = libm::pow(10.0, ebn0_db / 10.0);
    Ok(signal_power * samples_per_symbol as f64 / (2.0 * f64::from(bits_per_symbol) * ebn0))
}

/// [`awgn_variance`] with the power measured over `iq`.
pub fn calibrate_awgn(
    iq: &IqBuffer,
    ebn0_db: f64,
    bits_per_symbol: u32,
    samples_per_symbol: usize,
) -> Result<f64, ChannelError> {
    awgn_variance(iq.mean_power(), ebn0_db, bits_per_symbol, samples_per_symbol)
}

#[derive(Debug, Clone)]
enum StageState {
    Pass,
    Noise {
        source: GaussianSource,
        sigma2: f64,
    },
    Rotate {
        step: f64,
        initial: f64,
        n: u64,
    },
    Taps {
        taps: Vec<(usize, Complex64)>,
        // history[i] = x[n - 1 - i]
        history: Vec<Complex64>,
    },
    Drop {
        intervals: Vec<(u64, u64)>,
        next: usize,
        n: u64,
    },
}

impl StageState {
    fn process(&mut self, input: Vec<Complex64>) -> Vec<Complex64> {
        match self {
            StageState::Pass => input,
            StageState::Noise { source, sigma2 } => {
                let mut out = input;
                if *sigma2 > 0.0 {
                    for z in &mut out {
                        *z += source.complex(*sigma2);
                    }
                }
                out
            }
            StageState::Rotate { step, initial, n } => {
                let mut out = input;
                for z in &mut out {
                    let (s, c) = libm::sincos(*initial + *step * *n as f64);
                    *z *= Complex64::new(c, s);
                    *n += 1;
                }
                out
            }
            StageState::Taps { taps, history } => {
                let mut out = Vec::with_capacity(input.len());
                for x in input {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for &(d, g) in taps.iter() {
                        acc += g * if d == 0 { x } else { history[d - 1] };
                    }
                    if !history.is_empty() {
                        history.rotate_right(1);
                        history[0] = x;
                    }
                    out.push(acc);
                }
                out
            }
            StageState::Drop { intervals, next, n } => {
                let mut out = input;
                for z in &mut out {
                    while *next < intervals.len() && intervals[*next].1 <= *n {
                        *next += 1;
                    }
                    if *next < intervals.len() && intervals[*next].0 <= *n {
                        *z = Complex64::new(0.0, 0.0);
                    }
                    *n += 1;
                }
                out
            }
        }
    }

    fn flush(&mut self) -> Vec<Complex64> {
        match self {
            StageState::Taps { history, .. } => {
                let zeros = alloc::vec![Complex64::new(0.0, 0.0); history.len()];
                self.process(zeros)
            }
            _ => Vec::new(),
        }
    }
}

/// Streaming channel. Output is `max_delay` samples longer than the input
/// once [`ChannelRunner::finish`] has been called.
#[derive(Debug, Clone)]
pub struct ChannelRunner {
    stages: Vec<StageState>,
}

impl ChannelRunner {
    pub fn new(model: &ChannelModel, sample_rate: f64, signal_power: f64) -> Result<Self, ChannelError> {
        model.validate()?;
        let mut stages = Vec::with_capacity(model.stages.len());
        for (i, s) in model.stages.iter().enumerate() {
            let state = match s {
                Stage::Ideal => StageState::Pass,
                Stage::Awgn(level) => {
                    let sigma2 = match *level {
                        NoiseLevel::EbN0Db(db) => awgn_variance(
                            signal_power,
                            db,
                            model.bits_per_symbol,
                            model.samples_per_symbol,
                        )?,
                        NoiseLevel::SnrDb(db) => {
                            if !(signal_power > 0.0) {
                                return Err(ChannelError::ZeroPower);
                            }
                            signal_power / (2.0 * libm::pow(10.0, db / 10.0))
                        }
                    };
                    StageState::Noise {
                        source: GaussianSource::new(split_seed(model.rng_seed, i as u64)),
                        sigma2,
                    }
                }
                Stage::Cfo {
                    offset_hz,
                    initial_phase_rad,
                } => StageState::Rotate {
                    step: TAU * offset_hz / sample_rate,
                    initial: *initial_phase_rad,
                    n: 0,
                },
                Stage::Multipath { taps } => {
                    let depth = taps.iter().map(|(d, _)| *d).max().unwrap_or(0);
                    StageState::Taps {
                        taps: taps.clone(),
                        history: alloc::vec![Complex64::new(0.0, 0.0); depth],
                    }
                }
                Stage::BurstDrop { intervals } => StageState::Drop {
                    intervals: intervals.clone(),
                    next: 0,
                    n: 0,
                },
            };
            stages.push(state);
        }
        Ok(Self { stages })
    }

    pub fn process(&mut self, block: &[Complex64]) -> Vec<Complex64> {
        let mut buf = block.to_vec();
        for s in &mut self.stages {
            buf = s.process(buf);
        }
        buf
    }

    /// Drain delay lines; each stage's tail passes through the stages after it.
    pub fn finish(mut self) -> Vec<Complex64> {
        let mut buf = Vec::new();
        for s in &mut self.stages {
            buf = s.process(buf);
            buf.extend(s.flush());
        }
        buf
    }
}

/// Run `iq` through `model`, referencing noise levels to the measured input
/// power.
pub fn apply(model: &ChannelModel, iq: &IqBuffer) -> Result<IqBuffer, ChannelError> {
    let mut runner = ChannelRunner::new(model, iq.sample_rate, mean_power(&iq.samples))?;
    let mut samples = runner.process(&iq.samples);
    samples.extend(runner.finish());
    Ok(IqBuffer {
        samples,
        sample_rate: iq.sample_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modem::{rx_chain_aided, tx_chain, ModemConfig, SyncTruth};
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use std::vec::Vec;

    fn test_signal(n: usize, seed: u64) -> IqBuffer {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let samples = (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        IqBuffer::new(samples, 500e3).unwrap()
    }

    #[test]
    fn ideal_is_identity() {
        let iq = test_signal(1000, 1);
        assert_eq!(apply(&ChannelModel::ideal(), &iq).unwrap(), iq);
        let empty = ChannelModel::new(vec![], 3);
        assert_eq!(apply(&empty, &iq).unwrap(), iq);
    }

    #[test]
    fn unit_tap_is_ideal() {
        let iq = test_signal(1000, 2);
        let m = ChannelModel::new(
            vec![Stage::Multipath {
                taps: vec![(0, Complex64::new(1.0, 0.0))],
            }],
            0,
        );
        assert_eq!(apply(&m, &iq).unwrap(), iq);
    }

    #[test]
    fn multipath_output_length_and_values() {
        let iq = test_signal(100, 3);
        let g1 = Complex64::new(0.5, -0.25);
        let m = ChannelModel::new(
            vec![Stage::Multipath {
                taps: vec![(0, Complex64::new(1.0, 0.0)), (7, g1)],
            }],
            0,
        );
        let out = apply(&m, &iq).unwrap();
        assert_eq!(out.len(), 107);
        for n in 0..107 {
            let a = if n < 100 { iq.samples[n] } else { Complex64::new(0.0, 0.0) };
            let b = if (7..107).contains(&n) { iq.samples[n - 7] } else { Complex64::new(0.0, 0.0) };
            assert!((out.samples[n] - (a + g1 * b)).norm() < 1e-15);
        }
    }

    #[test]
    fn calibration_values() {
        assert_eq!(awgn_variance(1.0, 0.0, 1, 4).unwrap(), 2.0);
        assert_eq!(awgn_variance(1.0, f64::INFINITY, 1, 4).unwrap(), 0.0);
        let a = awgn_variance(0.3, 5.0, 1, 4).unwrap();
        let b = awgn_variance(0.6, 5.0, 1, 4).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-15);
        assert_eq!(awgn_variance(0.0, 5.0, 1, 4), Err(ChannelError::ZeroPower));
        let zeros = IqBuffer::new(vec![Complex64::new(0.0, 0.0); 10], 1.0).unwrap();
        assert_eq!(calibrate_awgn(&zeros, 3.0, 1, 4), Err(ChannelError::ZeroPower));
        let ones = IqBuffer::new(vec![Complex64::new(1.0, 0.0); 10], 1.0).unwrap();
        assert_eq!(calibrate_awgn(&ones, 0.0, 1, 4).unwrap(), 2.0);
    }

    #[test]
    fn awgn_noise_moments() {
        let n = 1_000_000;
        let iq = IqBuffer::new(vec![Complex64::new(1.0, 0.0); n], 1.0).unwrap();
        let m = ChannelModel::new(vec![Stage::Awgn(NoiseLevel::SnrDb(0.0))], 77);
        let out = apply(&m, &iq).unwrap();
        let sigma2: f64 = 0.5; // P / (2 snr)
        for part in [|z: &Complex64| z.re - 1.0, |z: &Complex64| z.im] {
            let vals: Vec<f64> = out.samples.iter().map(part).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            assert!(mean.abs() < 4.0 * sigma2.sqrt() / (n as f64).sqrt(), "{mean}");
            assert!((var / sigma2 - 1.0).abs() < 0.01, "{var}");
        }
    }

    #[test]
    fn seeded_and_block_invariant() {
        let iq = test_signal(5000, 4);
        let m = ChannelModel::new(
            vec![
                Stage::Multipath {
                    taps: vec![(0, Complex64::new(0.9, 0.1)), (3, Complex64::new(0.2, 0.0))],
                },
                Stage::Cfo {
                    offset_hz: 123.0,
                    initial_phase_rad: 0.4,
                },
                Stage::Awgn(NoiseLevel::EbN0Db(3.0)),
                Stage::BurstDrop {
                    intervals: vec![(10, 20), (4000, 4500)],
                },
            ],
            9,
        );
        let a = apply(&m, &iq).unwrap();
        assert_eq!(a, apply(&m, &iq).unwrap());
        let mut r = ChannelRunner::new(&m, iq.sample_rate, iq.mean_power()).unwrap();
        let mut b = Vec::new();
        for chunk in iq.samples.chunks(129) {
            b.extend(r.process(chunk));
        }
        b.extend(r.finish());
        assert_eq!(a.samples, b);
        let other = ChannelModel { rng_seed: 10, ..m };
        assert_ne!(a, apply(&other, &iq).unwrap());
    }

    #[test]
    fn stage_order_is_honored() {
        let n = 256;
        let x = Complex64::new(1.0, 0.0);
        let iq = IqBuffer::new(vec![x; n], 1000.0).unwrap();
        let cfo = Stage::Cfo {
            offset_hz: 50.0,
            initial_phase_rad: 0.0,
        };
        let awgn = Stage::Awgn(NoiseLevel::SnrDb(10.0));
        let sigma2 = 1.0 / (2.0 * 10.0);
        let rot = |k: usize| Complex64::from_polar(1.0, TAU * 50.0 * k as f64 / 1000.0);

        let noise_then_rotate = apply(&ChannelModel::new(vec![awgn.clone(), cfo.clone()], 5), &iq).unwrap();
        let rotate_then_noise = apply(&ChannelModel::new(vec![cfo, awgn], 5), &iq).unwrap();

        let mut g0 = GaussianSource::new(split_seed(5, 0));
        let mut g1 = GaussianSource::new(split_seed(5, 1));
        for k in 0..n {
            let a = (x + g0.complex(sigma2)) * rot(k);
            let b = x * rot(k) + g1.complex(sigma2);
            assert!((noise_then_rotate.samples[k] - a).norm() < 1e-12);
            assert!((rotate_then_noise.samples[k] - b).norm() < 1e-12);
        }
        assert_ne!(noise_then_rotate, rotate_then_noise);
    }

    #[test]
    fn burst_drop_zeroes_intervals() {
        let iq = test_signal(100, 6);
        let m = ChannelModel::new(
            vec![Stage::BurstDrop {
                intervals: vec![(0, 5), (50, 60), (95, 200)],
            }],
            0,
        );
        let out = apply(&m, &iq).unwrap();
        for (n, z) in out.samples.iter().enumerate() {
            let dropped = n < 5 || (50..60).contains(&n) || n >= 95;
            assert_eq!(*z == Complex64::new(0.0, 0.0), dropped, "{n}");
        }
    }

    #[test]
    fn invalid_models_rejected() {
        let bad = [
            Stage::Multipath { taps: vec![] },
            Stage::Multipath {
                taps: vec![(2, Complex64::new(1.0, 0.0))],
            },
            Stage::Multipath {
                taps: vec![(0, Complex64::new(0.0, 0.0))],
            },
            Stage::BurstDrop {
                intervals: vec![(10, 5)],
            },
            Stage::BurstDrop {
                intervals: vec![(0, 10), (5, 20)],
            },
            Stage::Cfo {
                offset_hz: f64::NAN,
                initial_phase_rad: 0.0,
            },
            Stage::Awgn(NoiseLevel::EbN0Db(f64::NAN)),
        ];
        for s in bad {
            assert!(ChannelModel::new(vec![s.clone()], 0).validate().is_err(), "{s:?}");
        }
    }

    #[test]
    fn awgn_ber_matches_theory_with_aided_sync() {
        let cfg = ModemConfig::default();
        let mut rng = rand::rngs::StdRng::seed_from_u64(12);
        let n = 200_000;
        let bits: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        let tx = tx_chain(&bits, &cfg);
        let m = ChannelModel::new(vec![Stage::Awgn(NoiseLevel::EbN0Db(4.0))], 21);
        let rx = apply(&m, &tx).unwrap();
        let (out, _) = rx_chain_aided(&rx, &cfg, SyncTruth::default());
        let errors = bits
            .iter()
            .zip(&out[cfg.ramp_symbols..])
            .filter(|(a, b)| a != b)
            .count();
        let ber = errors as f64 / n as f64;
        let p = crate::modem::ber_vs_ebn0_reference(4.0);
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((ber - p).abs() < 3.0 * sigma, "ber {ber} vs {p}");
    }
}
