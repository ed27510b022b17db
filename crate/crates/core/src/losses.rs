//! Rate estimates and the three training objectives.
//!
//! * `loss_lic`   : `R(y) + R(z) + λ·mse(x, x̂)`
//! * `loss_saicm` : `R(y) + R(z) + λ·mse(x ⊙ m, x̂ ⊙ m)`
//! * `loss_enh`   : `R(ya) + R(za) + λ·mse(x, x̂)`
//!
//! Rates are in bits. The masked distortion averages over *all* elements, so
//! masked-out positions contribute zeros to the mean.

use crate::error::{Error, Result};
use crate::gaussian::{symbol_bits, SCALE_FLOOR};
use crate::mask::BinaryMask;
use crate::model::{EntropyParams, FactorizedPrior};
use crate::tensor::Tensor;

/// `-Σ log2 P(v)` under the per-element discretized Gaussians in `params`.
pub fn estimated_rate(symbols: &Tensor, params: &EntropyParams) -> Result<f64> {
    symbols.expect_same_shape(&params.mean)?;
    symbols.expect_same_shape(&params.scale)?;
    if !params.mean.is_finite() || !params.scale.is_finite() {
        return Err(Error::NonFinite("entropy parameters"));
    }
    if params.scale.data().iter().any(|&s| s < SCALE_FLOOR) {
        return Err(Error::Config(format!("scale below floor {SCALE_FLOOR}")));
    }
    Ok(symbols
        .data()
        .iter()
        .zip(params.mean.data())
        .zip(params.scale.data())
        .map(|((&v, &m), &s)| symbol_bits(v, m, s))
        .sum())
}

/// Rate of a hyper latent under the learned factorized prior.
pub fn factorized_rate(symbols: &Tensor, prior: &FactorizedPrior) -> Result<f64> {
    if symbols.channels() != prior.channels() {
        return Err(Error::Dimension(format!(
            "prior has {} channels, hyper latent {}",
            prior.channels(),
            symbols.channels()
        )));
    }
    let plane = symbols.plane_len();
    Ok(symbols
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let (m, s) = prior.channel_params(i / plane);
            symbol_bits(v, m, s)
        })
        .sum())
}

pub fn mse(x: &Tensor, x_hat: &Tensor) -> Result<f64> {
    x.expect_same_shape(x_hat)?;
    if x.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = x.data().iter().zip(x_hat.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / x.len() as f64)
}

fn check_mask(x: &Tensor, mask: &BinaryMask) -> Result<()> {
    if (mask.height(), mask.width()) != (x.height(), x.width()) {
        return Err(Error::Dimension(format!(
            "mask {}x{} vs image {}x{}",
            mask.height(),
            mask.width(),
            x.height(),
            x.width()
        )));
    }
    Ok(())
}

/// `mse(x ⊙ m, x̂ ⊙ m)` with the mask broadcast over channels.
pub fn masked_mse(x: &Tensor, x_hat: &Tensor, mask: &BinaryMask) -> Result<f64> {
    x.expect_same_shape(x_hat)?;
    check_mask(x, mask)?;
    let plane = x.plane_len();
    let sum: f64 = x
        .data()
        .iter()
        .zip(x_hat.data())
        .enumerate()
        .filter(|(i, _)| mask.data()[i % plane] == 1)
        .map(|(_, (a, b))| (a - b) * (a - b))
        .sum();
    Ok(sum / x.len() as f64)
}

/// `d masked_mse / d x̂`; zero wherever the mask is zero.
pub fn masked_mse_grad(x: &Tensor, x_hat: &Tensor, mask: &BinaryMask) -> Result<Tensor> {
    x.expect_same_shape(x_hat)?;
    check_mask(x, mask)?;
    let plane = x.plane_len();
    let n = x.len() as f64;
    let mut g = Tensor::zeros(x.channels(), x.height(), x.width());
    for (i, (gv, (a, b))) in g.data_mut().iter_mut().zip(x.data().iter().zip(x_hat.data())).enumerate() {
        if mask.data()[i % plane] == 1 {
            *gv = 2.0 * (b - a) / n;
        }
    }
    Ok(g)
}

/// Components of one rate–distortion objective evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub rate_y: f64,
    pub rate_z: f64,
    pub distortion: f64,
    pub total: f64,
    pub lambda: f64,
}

impl LossBreakdown {
    pub fn new(rate_y: f64, rate_z: f64, distortion: f64, lambda: f64) -> Self {
        Self {
            rate_y,
            rate_z,
            distortion,
            total: rate_y + rate_z + lambda * distortion,
            lambda,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.rate_y.is_finite() && self.rate_z.is_finite() && self.distortion.is_finite()
    }
}

pub fn loss_lic(x: &Tensor, x_hat: &Tensor, rate_y: f64, rate_z: f64, lambda: f64) -> Result<LossBreakdown> {
    Ok(LossBreakdown::new(rate_y, rate_z, mse(x, x_hat)?, lambda))
}

pub fn loss_saicm(
    x: &Tensor,
    x_hat: &Tensor,
    mask: &BinaryMask,
    rate_y: f64,
    rate_z: f64,
    lambda: f64,
) -> Result<LossBreakdown> {
    Ok(LossBreakdown::new(rate_y, rate_z, masked_mse(x, x_hat, mask)?, lambda))
}

/// Enhancement objective; the rates must cover `ya` / `za` only.
pub fn loss_enh(x: &Tensor, x_hat: &Tensor, rate_ya: f64, rate_za: f64, lambda: f64) -> Result<LossBreakdown> {
    loss_lic(x, x_hat, rate_ya, rate_za, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::std_pdf;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(mean: f64, scale: f64, len: usize) -> EntropyParams {
        EntropyParams::new(Tensor::filled(1, 1, len, mean), Tensor::filled(1, 1, len, scale)).unwrap()
    }

    /// Midpoint-rule mass of a unit Gaussian on [-0.5, 0.5).
    fn oracle_bits_unit_zero() -> f64 {
        let steps = 100_000;
        let h = 1.0 / steps as f64;
        let mass: f64 = (0..steps).map(|i| std_pdf(-0.5 + (i as f64 + 0.5) * h) * h).sum();
        -mass.log2()
    }

    #[test]
    fn unit_gaussian_zero_symbol() {
        let r = estimated_rate(&Tensor::zeros(1, 1, 1), &params(0.0, 1.0, 1)).unwrap();
        assert!((r - oracle_bits_unit_zero()).abs() < 1e-8);
        assert!((r - 1.385).abs() < 1e-3);
    }

    #[test]
    fn tail_symbol_is_bounded() {
        let r = estimated_rate(&Tensor::filled(1, 1, 1, 120.0), &params(0.0, 0.11, 1)).unwrap();
        assert!(r.is_finite() && r > 10.0 && r <= 15.0 + 1e-12);
    }

    #[test]
    fn independent_symbols_add() {
        let s = Tensor::from_vec(1, 1, 2, vec![1.0, -2.0]).unwrap();
        let p = EntropyParams::new(
            Tensor::from_vec(1, 1, 2, vec![0.3, -1.0]).unwrap(),
            Tensor::from_vec(1, 1, 2, vec![0.8, 2.0]).unwrap(),
        )
        .unwrap();
        let a = estimated_rate(&Tensor::filled(1, 1, 1, 1.0), &params(0.3, 0.8, 1)).unwrap();
        let b = estimated_rate(&Tensor::filled(1, 1, 1, -2.0), &params(-1.0, 2.0, 1)).unwrap();
        assert!((estimated_rate(&s, &p).unwrap() - (a + b)).abs() < 1e-12);
    }

    #[test]
    fn rate_rejects_bad_params() {
        let s = Tensor::zeros(1, 1, 2);
        assert!(estimated_rate(&s, &params(0.0, 1.0, 3)).is_err());
        let bad = EntropyParams {
            mean: Tensor::filled(1, 1, 2, f64::NAN),
            scale: Tensor::filled(1, 1, 2, 1.0),
        };
        assert!(matches!(estimated_rate(&s, &bad), Err(Error::NonFinite(_))));
    }

    #[test]
    fn masked_mse_cases() {
        let x = Tensor::filled(3, 2, 4, 1.0);
        let xh = Tensor::zeros(3, 2, 4);
        let ones = BinaryMask::filled(2, 4, true);
        let zeros = BinaryMask::filled(2, 4, false);
        let half = BinaryMask::from_fn(2, 4, |_, x| x < 2);
        assert_eq!(masked_mse(&x, &xh, &ones).unwrap(), mse(&x, &xh).unwrap());
        assert_eq!(masked_mse(&x, &xh, &zeros).unwrap(), 0.0);
        assert_eq!(masked_mse(&x, &xh, &half).unwrap(), 0.5);
        assert!(masked_mse(&x, &xh, &BinaryMask::filled(2, 3, true)).is_err());
    }

    #[test]
    fn masked_gradient_vanishes_outside_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::from_fn(3, 3, 3, |_, _, _| rng.gen());
        let xh = Tensor::from_fn(3, 3, 3, |_, _, _| rng.gen());
        let mask = BinaryMask::from_fn(3, 3, |y, x| (x + y) % 2 == 0);
        let g = masked_mse_grad(&x, &xh, &mask).unwrap();
        for c in 0..3 {
            for yy in 0..3 {
                for xx in 0..3 {
                    if !mask.get(yy, xx) {
                        assert_eq!(g.at(c, yy, xx), 0.0);
                    }
                }
            }
        }
        // central differences on one masked-in element
        let eps = 1e-6;
        let idx = 0;
        let mut p = xh.clone();
        p.data_mut()[idx] += eps;
        let mut m = xh.clone();
        m.data_mut()[idx] -= eps;
        let fd = (masked_mse(&x, &p, &mask).unwrap() - masked_mse(&x, &m, &mask).unwrap()) / (2.0 * eps);
        assert!((fd - g.data()[idx]).abs() < 1e-9);
    }

    #[test]
    fn lic_examples() {
        let x = Tensor::filled(3, 2, 2, 0.4);
        assert_eq!(loss_lic(&x, &x, 0.0, 0.0, 0.05).unwrap().total, 0.0);
        let xh = Tensor::filled(3, 2, 2, 0.6);
        let l = loss_lic(&x, &xh, 3.0, 1.0, 0.0).unwrap();
        assert_eq!(l.total, 4.0);
        let b = LossBreakdown::new(2.0, 1.0, 0.5, 4.0);
        assert_eq!(b.total, 5.0);
    }

    #[test]
    fn saicm_limits() {
        let x = Tensor::filled(3, 2, 2, 0.9);
        let xh = Tensor::filled(3, 2, 2, 0.1);
        let zero = loss_saicm(&x, &xh, &BinaryMask::filled(2, 2, false), 1.5, 0.5, 10.0).unwrap();
        assert_eq!(zero.distortion, 0.0);
        assert_eq!(zero.total, 2.0);
    }

    #[test]
    fn enh_examples() {
        let x = Tensor::filled(3, 2, 2, 0.2);
        assert_eq!(loss_enh(&x, &x, 1.25, 0.5, 0.02).unwrap().total, 1.75);
        let xh = Tensor::filled(3, 2, 2, 0.5);
        let a = loss_enh(&x, &xh, 1.0, 1.0, 0.01).unwrap();
        let b = loss_enh(&x, &xh, 1.0, 1.0, 0.02).unwrap();
        let da = a.total - a.rate_y - a.rate_z;
        let db = b.total - b.rate_y - b.rate_z;
        assert!((db - 2.0 * da).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn saicm_equals_lic_under_full_mask(seed in any::<u64>(), lambda in 0.001f64..10.0, ry in 0.0f64..100.0, rz in 0.0f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Tensor::from_fn(3, 5, 4, |_, _, _| rng.gen());
            let xh = Tensor::from_fn(3, 5, 4, |_, _, _| rng.gen());
            let a = loss_lic(&x, &xh, ry, rz, lambda).unwrap();
            let b = loss_saicm(&x, &xh, &BinaryMask::filled(5, 4, true), ry, rz, lambda).unwrap();
            prop_assert!((a.total - b.total).abs() <= 1e-6 * a.total.abs().max(1e-12));
            prop_assert!(a.rate_y >= 0.0 && a.distortion >= 0.0 && a.total.is_finite());
            prop_assert!((a.total - (a.rate_y + a.rate_z + a.lambda * a.distortion)).abs() <= 1e-6);
        }

        #[test]
        fn rate_non_negative(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = Tensor::from_fn(2, 3, 3, |_, _, _| rng.gen_range(-130i32..130) as f64);
            let p = EntropyParams::new(
                Tensor::from_fn(2, 3, 3, |_, _, _| rng.gen_range(-20.0..20.0)),
                Tensor::from_fn(2, 3, 3, |_, _, _| rng.gen_range(SCALE_FLOOR..30.0)),
            ).unwrap();
            let r = estimated_rate(&s, &p).unwrap();
            prop_assert!(r >= 0.0 && r.is_finite());
        }
    }
}
