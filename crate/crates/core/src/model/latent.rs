use rand::Rng;

use crate::error::{Error, Result};
use crate::gaussian::SCALE_FLOOR;
use crate::tensor::Tensor;

/// Ordered channel groups of a latent, all sharing one spatial size.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentGroups {
    groups: Vec<Tensor>,
    quantized: bool,
}

impl LatentGroups {
    pub fn new(groups: Vec<Tensor>, quantized: bool) -> Result<Self> {
        let first = groups
            .first()
            .ok_or_else(|| Error::Dimension("latent needs at least one group".into()))?;
        let (h, w) = (first.height(), first.width());
        if groups.iter().any(|g| (g.height(), g.width()) != (h, w)) {
            return Err(Error::Dimension("latent groups differ in spatial size".into()));
        }
        if quantized && groups.iter().any(|g| g.data().iter().any(|v| v.fract() != 0.0)) {
            return Err(Error::Dimension("quantized latent holds non-integer values".into()));
        }
        Ok(Self { groups, quantized })
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn groups(&self) -> &[Tensor] {
        &self.groups
    }

    pub fn group(&self, i: usize) -> &Tensor {
        &self.groups[i]
    }

    pub fn into_groups(self) -> Vec<Tensor> {
        self.groups
    }

    pub fn is_quantized(&self) -> bool {
        self.quantized
    }

    pub fn total_channels(&self) -> usize {
        self.groups.iter().map(Tensor::channels).sum()
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.groups[0].height(), self.groups[0].width())
    }

    /// Eval-quantizes every group.
    pub fn quantized(&self) -> Self {
        Self {
            groups: self.groups.iter().map(quantize_eval).collect(),
            quantized: true,
        }
    }
}

/// Splits a `C`-channel latent into `n` equal channel groups; group `i` holds
/// channels `[i * C / n, (i + 1) * C / n)`.
pub fn split_groups(latent: &Tensor, n: usize) -> Result<LatentGroups> {
    let c = latent.channels();
    if n == 0 || c % n != 0 {
        return Err(Error::Config(format!("{c} channels cannot be split into {n} groups")));
    }
    let w = c / n;
    let groups = (0..n).map(|i| latent.slice_channels(i * w..(i + 1) * w)).collect();
    let quantized = latent.data().iter().all(|v| v.fract() == 0.0);
    Ok(LatentGroups { groups, quantized })
}

/// Channel-axis concatenation of the groups, in order.
pub fn concat_groups(groups: &LatentGroups) -> Result<Tensor> {
    Tensor::concat_channels(groups.groups())
}

/// Hyper latent `z` (or its quantized version).
#[derive(Clone, Debug, PartialEq)]
pub struct HyperLatent {
    pub tensor: Tensor,
    pub quantized: bool,
}

/// Per-element Gaussian parameters for a latent tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyParams {
    pub mean: Tensor,
    pub scale: Tensor,
}

impl EntropyParams {
    pub fn new(mean: Tensor, scale: Tensor) -> Result<Self> {
        mean.expect_same_shape(&scale)?;
        if !mean.is_finite() || !scale.is_finite() {
            return Err(Error::NonFinite("entropy parameters"));
        }
        if scale.data().iter().any(|&s| s < SCALE_FLOOR) {
            return Err(Error::Config(format!("scale below floor {SCALE_FLOOR}")));
        }
        Ok(Self { mean, scale })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuantizeMode {
    /// Additive uniform noise in `[-0.5, 0.5)`.
    Train,
    /// Round to nearest, ties away from zero.
    Eval,
}

pub fn quantize(latent: &Tensor, mode: QuantizeMode, rng: &mut impl Rng) -> Tensor {
    match mode {
        QuantizeMode::Eval => quantize_eval(latent),
        QuantizeMode::Train => add_uniform_noise(latent, rng),
    }
}

pub fn quantize_eval(latent: &Tensor) -> Tensor {
    latent.map(f64::round)
}

/// Largest symbol magnitude the entropy coder represents.
pub const SYMBOL_MAX: i32 = 127;

/// Eval quantization followed by clipping to `[-SYMBOL_MAX, SYMBOL_MAX]`:
/// exactly the values a decoder reconstructs.
pub fn quantize_symbols(latent: &Tensor) -> Tensor {
    let max = SYMBOL_MAX as f64;
    latent.map(|v| v.round().clamp(-max, max))
}

pub(crate) fn add_uniform_noise(latent: &Tensor, rng: &mut impl Rng) -> Tensor {
    let mut out = latent.clone();
    for v in out.data_mut() {
        *v += rng.gen_range(-0.5..0.5);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn split_index_arithmetic() {
        let y = Tensor::from_fn(6, 1, 1, |c, _, _| (c + 1) as f64);
        let g = split_groups(&y, 3).unwrap();
        let got: Vec<Vec<f64>> = g.groups().iter().map(|t| t.data().to_vec()).collect();
        assert_eq!(got, vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
    }

    #[test]
    fn split_full_size_widths() {
        let y = Tensor::zeros(320, 2, 2);
        let g = split_groups(&y, 5).unwrap();
        assert_eq!(g.len(), 5);
        assert!(g.groups().iter().all(|t| t.channels() == 64));
        assert_eq!(concat_groups(&g).unwrap().channels(), 320);
    }

    #[test]
    fn split_single_group_is_identity() {
        let y = Tensor::from_fn(4, 2, 3, |c, h, w| (c * 6 + h * 3 + w) as f64 * 0.5);
        let g = split_groups(&y, 1).unwrap();
        assert_eq!(g.group(0), &y);
        assert_eq!(concat_groups(&g).unwrap(), y);
    }

    #[test]
    fn split_rejects_non_divisor() {
        assert!(split_groups(&Tensor::zeros(10, 1, 1), 3).is_err());
        assert!(split_groups(&Tensor::zeros(10, 1, 1), 0).is_err());
    }

    #[test]
    fn concat_rejects_misaligned_groups() {
        assert!(LatentGroups::new(vec![Tensor::zeros(2, 2, 2), Tensor::zeros(2, 3, 2)], false).is_err());
    }

    #[test]
    fn eval_rounding() {
        let t = Tensor::from_vec(1, 1, 4, vec![1.4, -2.5, 2.5, -0.4]).unwrap();
        let q = quantize_eval(&t);
        assert_eq!(q.data(), &[1.0, -3.0, 3.0, -0.0]);
        assert_eq!(quantize_eval(&q), q);
    }

    #[test]
    fn quantized_groups_reject_fractions() {
        assert!(LatentGroups::new(vec![Tensor::filled(1, 1, 1, 0.5)], true).is_err());
    }

    #[test]
    fn entropy_params_enforce_floor() {
        let m = Tensor::zeros(1, 1, 2);
        assert!(EntropyParams::new(m.clone(), Tensor::filled(1, 1, 2, 0.05)).is_err());
        assert!(EntropyParams::new(m.clone(), Tensor::filled(1, 1, 3, 1.0)).is_err());
        assert!(EntropyParams::new(m, Tensor::filled(1, 1, 2, 0.11)).is_ok());
    }

    proptest! {
        #[test]
        fn split_concat_round_trip(c_per in 1usize..6, n in 1usize..7, h in 1usize..4, w in 1usize..4, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = Tensor::from_fn(c_per * n, h, w, |_, _, _| rng.gen_range(-10.0..10.0));
            let g = split_groups(&y, n).unwrap();
            prop_assert_eq!(g.len(), n);
            prop_assert_eq!(concat_groups(&g).unwrap(), y);
        }

        #[test]
        fn quantize_bounds(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = Tensor::from_fn(3, 4, 4, |_, _, _| rng.gen_range(-50.0..50.0));
            let noisy = quantize(&y, QuantizeMode::Train, &mut rng);
            prop_assert!(y.data().iter().zip(noisy.data()).all(|(a, b)| (a - b).abs() <= 0.5));
            let q = quantize(&y, QuantizeMode::Eval, &mut rng);
            prop_assert!(q.data().iter().all(|v| v.fract() == 0.0));
            prop_assert_eq!(quantize_eval(&q), q);
        }
    }
}
