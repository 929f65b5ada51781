use alloc::vec::Vec;
use core::f64::consts::PI;

use super::ModemConfig;

/// Root-raised-cosine taps, `span * sps + 1` long, even-symmetric and scaled
/// to unit energy.
pub fn rrc_taps(config: &ModemConfig) -> Vec<f64> {
    let sps = config.samples_per_symbol;
    let beta = config.rrc_rolloff;
    let n = config.filter_len();
    let center = (n - 1) as f64 / 2.0;
    let mut taps: Vec<f64> = (0..n)
        .map(|i| rrc_impulse((i as f64 - center) / sps as f64, beta))
        .collect();
    // Force exact symmetry; the formula is symmetric up to rounding.
    for i in 0..n / 2 {
        let avg = 0.5 * (taps[i] + taps[n - 1 - i]);
        taps[i] = avg;
        taps[n - 1 - i] = avg;
    }
    let energy = libm::sqrt(taps.iter().map(|h| h * h).sum::<f64>());
    taps.iter_mut().for_each(|h| *h /= energy);
    taps
}

/// Continuous RRC impulse response, `t` in symbol periods (unnormalized).
fn rrc_impulse(t: f64, beta: f64) -> f64 {
    if t.abs() < 1e-12 {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    let singular = 1.0 / (4.0 * beta);
    if (t.abs() - singular).abs() < 1e-9 {
        let a = PI / (4.0 * beta);
        return beta / core::f64::consts::SQRT_2
            * ((1.0 + 2.0 / PI) * libm::sin(a) + (1.0 - 2.0 / PI) * libm::cos(a));
    }
    let num = libm::sin(PI * t * (1.0 - beta)) + 4.0 * beta * t * libm::cos(PI * t * (1.0 + beta));
    let den = PI * t * (1.0 - (4.0 * beta * t) * (4.0 * beta * t));
    num / den
}
