//! Discretized Gaussian probabilities and their derivatives.
//!
//! A quantized symbol `v` modelled by `N(mean, scale)` has mass
//! `Phi((v + 0.5 - mean) / scale) - Phi((v - 0.5 - mean) / scale)`. The mass is
//! evaluated on the lower tail of the distribution (via `|v - mean|`) so it
//! keeps full relative precision far from the mean.

use std::f64::consts::{LN_2, SQRT_2};

/// Lower bound on every predicted scale.
pub const SCALE_FLOOR: f64 = 0.11;

/// Lower bound on every symbol probability before taking logarithms (2^-15).
pub const PROB_FLOOR: f64 = 1.0 / 32768.0;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF.
#[inline]
pub fn std_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t / SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn std_pdf(t: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * t * t).exp()
}

/// Probability mass of `N(mean, scale)` on `[value - 0.5, value + 0.5)`.
#[inline]
pub fn interval_mass(value: f64, mean: f64, scale: f64) -> f64 {
    let a = (value - mean).abs();
    std_cdf((0.5 - a) / scale) - std_cdf((-0.5 - a) / scale)
}

/// Code length in bits of `value` under the floored discretized Gaussian.
#[inline]
pub fn symbol_bits(value: f64, mean: f64, scale: f64) -> f64 {
    -interval_mass(value, mean, scale).max(PROB_FLOOR).log2()
}

/// Partial derivatives of [`symbol_bits`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BitsGrad {
    pub bits: f64,
    pub d_value: f64,
    pub d_mean: f64,
    pub d_scale: f64,
}

/// [`symbol_bits`] together with its gradient. Below [`PROB_FLOOR`] the
/// gradient still flows (as if the floor were not there) so that badly
/// mispredicted symbols keep pulling the parameters toward them.
#[inline]
pub fn symbol_bits_grad(value: f64, mean: f64, scale: f64) -> BitsGrad {
    let d = value - mean;
    let a = d.abs();
    let upper = (0.5 - a) / scale;
    let lower = (-0.5 - a) / scale;
    let mass = std_cdf(upper) - std_cdf(lower);
    let clamped = mass.max(PROB_FLOOR);
    let (pu, pl) = (std_pdf(upper), std_pdf(lower));
    // d mass / d a and d mass / d scale
    let dm_da = (pl - pu) / scale;
    let dm_ds = -(pu * upper - pl * lower) / scale;
    let dm_dd = if d < 0.0 { -dm_da } else { dm_da };
    let coeff = -1.0 / (clamped * LN_2);
    BitsGrad {
        bits: -clamped.log2(),
        d_value: coeff * dm_dd,
        d_mean: -coeff * dm_dd,
        d_scale: coeff * dm_ds,
    }
}

/// `softplus(raw)` bounded below by [`SCALE_FLOOR`].
#[inline]
pub fn bounded_scale(raw: f64) -> f64 {
    softplus(raw).max(SCALE_FLOOR)
}

/// Backward of [`bounded_scale`]. The bound passes gradients that would
/// raise the scale back above the floor.
#[inline]
pub fn bounded_scale_backward(raw: f64, d_scale: f64) -> f64 {
    let s = softplus(raw);
    if s >= SCALE_FLOOR || d_scale < 0.0 {
        d_scale * sigmoid(raw)
    } else {
        0.0
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
