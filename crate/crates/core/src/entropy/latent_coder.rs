//! Group-sequential coding of one latent through a [`LatentCodec`].
//!
//! The z stream holds the hyper latent under the factorized prior. The y
//! stream holds groups `1..k` back to back in one range-coder session; the
//! tables of group `i` come from the hyper context and the groups before it as
//! the decoder will see them.

use super::cdf::{CdfTable, DEFAULT_SUPPORT};
use super::range_coder::{RangeDecoder, RangeEncoder};
use crate::error::{Error, Result};
use crate::losses::{estimated_rate, factorized_rate};
use crate::model::{quantize_symbols, EntropyParams, FactorizedPrior, LatentCodec, LatentGroups};
use crate::tensor::Tensor;

/// Hyper strides between latent and hyper latent.
const HYPER_STRIDE: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedLatent {
    pub z: Vec<u8>,
    pub y: Vec<u8>,
    /// The quantized groups exactly as a decoder reconstructs them.
    pub y_hat: LatentGroups,
}

fn encode_tensor(enc: &mut RangeEncoder, symbols: &Tensor, params: &EntropyParams) -> Result<()> {
    for ((&v, &m), &s) in symbols.data().iter().zip(params.mean.data()).zip(params.scale.data()) {
        let table = CdfTable::gaussian(m, s, DEFAULT_SUPPORT)?;
        enc.encode(v as i32, &table)?;
    }
    Ok(())
}

fn decode_tensor(dec: &mut RangeDecoder<'_>, params: &EntropyParams) -> Result<Tensor> {
    let (c, h, w) = params.mean.shape();
    let data = params
        .mean
        .data()
        .iter()
        .zip(params.scale.data())
        .map(|(&m, &s)| {
            let table = CdfTable::gaussian(m, s, DEFAULT_SUPPORT)?;
            Ok(dec.decode(&table)? as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Tensor::from_vec(c, h, w, data)
}

fn prior_params(prior: &FactorizedPrior, latent_h: usize, latent_w: usize) -> EntropyParams {
    prior.params_for(latent_h / HYPER_STRIDE, latent_w / HYPER_STRIDE)
}

/// Codes an unquantized latent `y` (all groups, concatenated on channels).
pub fn encode_latent(codec: &LatentCodec, y: &Tensor) -> Result<EncodedLatent> {
    let z_hat = quantize_symbols(&codec.hyper_encode(y)?.tensor);
    let mut enc = RangeEncoder::new();
    encode_tensor(&mut enc, &z_hat, &prior_params(&codec.prior, y.height(), y.width()))?;
    let z = enc.finish();

    let context = codec.hyper_decode(&z_hat)?;
    let w = codec.group_width();
    let mut decoded: Vec<Tensor> = Vec::with_capacity(codec.groups);
    let mut enc = RangeEncoder::new();
    for i in 0..codec.groups {
        let params = codec.group_entropy_params(i, &context, &decoded)?;
        let symbols = quantize_symbols(&y.slice_channels(i * w..(i + 1) * w));
        encode_tensor(&mut enc, &symbols, &params)?;
        decoded.push(symbols);
    }
    Ok(EncodedLatent {
        z,
        y: enc.finish(),
        y_hat: LatentGroups::new(decoded, true)?,
    })
}

/// Bits the rate model assigns to `y` and its hyper latent, using the same
/// quantized values and parameters as [`encode_latent`].
pub fn estimated_latent_bits(codec: &LatentCodec, y: &Tensor) -> Result<f64> {
    let z_hat = quantize_symbols(&codec.hyper_encode(y)?.tensor);
    let mut bits = factorized_rate(&z_hat, &codec.prior)?;
    let context = codec.hyper_decode(&z_hat)?;
    let w = codec.group_width();
    let mut decoded = Vec::with_capacity(codec.groups);
    for i in 0..codec.groups {
        let params = codec.group_entropy_params(i, &context, &decoded)?;
        let symbols = quantize_symbols(&y.slice_channels(i * w..(i + 1) * w));
        bits += estimated_rate(&symbols, &params)?;
        decoded.push(symbols);
    }
    Ok(bits)
}

/// Step-by-step decoder for one latent. Exposes the y-stream position after
/// each group so callers can map bytes to groups.
pub struct LatentDecoder<'a> {
    codec: &'a LatentCodec,
    context: Tensor,
    y: RangeDecoder<'a>,
    decoded: Vec<Tensor>,
}

impl<'a> LatentDecoder<'a> {
    /// `latent_hw` is the spatial size of the latent being decoded.
    pub fn new(codec: &'a LatentCodec, z: &'a [u8], y: &'a [u8], latent_hw: (usize, usize)) -> Result<Self> {
        let (h, w) = latent_hw;
        if h == 0 || w == 0 || h % HYPER_STRIDE != 0 || w % HYPER_STRIDE != 0 {
            return Err(Error::Dimension(format!("latent {h}x{w} not divisible by the hyper stride")));
        }
        let mut zdec = RangeDecoder::new(z)?;
        let z_hat = decode_tensor(&mut zdec, &prior_params(&codec.prior, h, w))?;
        if zdec.position() != z.len() {
            return Err(Error::Malformed("unused bytes in z section".into()));
        }
        Ok(Self {
            codec,
            context: codec.hyper_decode(&z_hat)?,
            y: RangeDecoder::new(y)?,
            decoded: Vec::with_capacity(codec.groups),
        })
    }

    pub fn groups_decoded(&self) -> usize {
        self.decoded.len()
    }

    pub fn is_done(&self) -> bool {
        self.decoded.len() == self.codec.groups
    }

    /// Bytes of the y section read so far.
    pub fn position(&self) -> usize {
        self.y.position()
    }

    pub fn decoded(&self) -> &[Tensor] {
        &self.decoded
    }

    pub fn next_group(&mut self) -> Result<&Tensor> {
        let i = self.decoded.len();
        let params = self.codec.group_entropy_params(i, &self.context, &self.decoded)?;
        let group = decode_tensor(&mut self.y, &params)?;
        self.decoded.push(group);
        Ok(&self.decoded[i])
    }

    /// Decodes the remaining groups and checks the y section was consumed
    /// exactly.
    pub fn finish(mut self, y_len: usize) -> Result<LatentGroups> {
        while !self.is_done() {
            self.next_group()?;
        }
        if self.position() != y_len {
            return Err(Error::Malformed("unused bytes in y section".into()));
        }
        LatentGroups::new(self.decoded, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn codec() -> LatentCodec {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        LatentCodec::new("t", 6, 3, 4, 5, &mut rng)
    }

    fn latent(seed: u64, amp: f64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(6, 8, 4, |_, _, _| rng.gen_range(-amp..amp))
    }

    #[test]
    fn decoder_reproduces_encoder_latent() {
        let c = codec();
        for seed in 0..4 {
            let y = latent(seed, 6.0);
            let e = encode_latent(&c, &y).unwrap();
            let d = LatentDecoder::new(&c, &e.z, &e.y, (8, 4)).unwrap().finish(e.y.len()).unwrap();
            assert_eq!(d, e.y_hat);
            assert_eq!(e.y_hat.len(), 3);
        }
    }

    #[test]
    fn extreme_latents_are_clipped_not_rejected() {
        let c = codec();
        let y = latent(9, 1.0).map(|v| v * 1e4);
        let e = encode_latent(&c, &y).unwrap();
        assert!(e.y_hat.groups().iter().all(|g| g.data().iter().all(|v| v.abs() <= 127.0)));
        let d = LatentDecoder::new(&c, &e.z, &e.y, (8, 4)).unwrap().finish(e.y.len()).unwrap();
        assert_eq!(d, e.y_hat);
    }

    #[test]
    fn positions_grow_per_group() {
        let c = codec();
        let e = encode_latent(&c, &latent(1, 4.0)).unwrap();
        let mut d = LatentDecoder::new(&c, &e.z, &e.y, (8, 4)).unwrap();
        let mut last = d.position();
        while !d.is_done() {
            d.next_group().unwrap();
            assert!(d.position() >= last);
            last = d.position();
        }
        assert_eq!(last, e.y.len());
    }

    #[test]
    fn wrong_spatial_size_rejected() {
        let c = codec();
        let e = encode_latent(&c, &latent(1, 1.0)).unwrap();
        assert!(LatentDecoder::new(&c, &e.z, &e.y, (6, 4)).is_err());
    }
}
