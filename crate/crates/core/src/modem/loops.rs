use core::f64::consts::PI;

use num_complex::Complex64;

/// Proportional and integral gains of a second-order loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopGains {
    pub proportional: f64,
    pub integral: f64,
}

impl LoopGains {
    /// Gains for noise bandwidth `bn_t` (normalized to the update rate),
    /// damping `zeta` and detector gain `kd`.
    pub fn second_order(bn_t: f64, zeta: f64, kd: f64) -> Self {
        let theta = bn_t / (zeta + 0.25 / zeta);
        let d = 1.0 + 2.0 * zeta * theta + theta * theta;
        Self {
            proportional: 4.0 * zeta * theta / d / kd,
            integral: 4.0 * theta * theta / d / kd,
        }
    }

    pub const FROZEN: LoopGains = LoopGains {
        proportional: 0.0,
        integral: 0.0,
    };
}

/// Proportional-plus-integrator loop filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopFilter {
    pub gains: LoopGains,
    pub integrator: f64,
}

impl LoopFilter {
    pub fn new(gains: LoopGains) -> Self {
        Self {
            gains,
            integrator: 0.0,
        }
    }

    /// Feed one error sample; returns the control output.
    pub fn update(&mut self, error: f64) -> f64 {
        self.integrator += self.gains.integral * error;
        self.gains.proportional * error + self.integrator
    }
}

fn raised_cosine(t: f64, beta: f64) -> f64 {
    let sinc = if t.abs() < 1e-12 {
        1.0
    } else {
        libm::sin(PI * t) / (PI * t)
    };
    let d = 1.0 - (2.0 * beta * t) * (2.0 * beta * t);
    if d.abs() < 1e-9 {
        return PI / 4.0 * sinc_at(1.0 / (2.0 * beta));
    }
    sinc * libm::cos(PI * beta * t) / d
}

fn sinc_at(x: f64) -> f64 {
    libm::sin(PI * x) / (PI * x)
}

/// Slope of the Gardner S-curve at zero error for unit-amplitude antipodal
/// symbols through a raised-cosine channel, per symbol of timing offset.
pub fn gardner_detector_gain(rolloff: f64) -> f64 {
    let mean_error = |tau: f64| -> f64 {
        (-64..=64)
            .map(|n| {
                let n = n as f64;
                (raised_cosine(-1.0 - n + tau, rolloff) - raised_cosine(-n + tau, rolloff))
                    * raised_cosine(-0.5 - n + tau, rolloff)
            })
            .sum()
    };
    let h = 1e-5;
    -(mean_error(h) - mean_error(-h)) / (2.0 * h)
}

/// Piecewise-parabolic (Farrow, alpha = 1/2) interpolation between `x[1]`
/// and `x[2]` of a four-sample window, `mu` in `[0, 1)`.
#[inline]
pub(crate) fn parabolic(x: &[Complex64], mu: f64) -> Complex64 {
    let (xm1, x0, x1, x2) = (x[0], x[1], x[2], x[3]);
    let v2 = (x2 - x1 - x0 + xm1) * 0.5;
    let v1 = -x2 * 0.5 + x1 * 1.5 - x0 * 0.5 - xm1 * 0.5;
    (v2 * mu + v1) * mu + x0
}
