//! Hyperprior plus channel-conditional group entropy model shared by the base,
//! enhancement and residual codecs.

use rand::Rng;

use super::latent::{add_uniform_noise, quantize_symbols, EntropyParams, HyperLatent};
use crate::error::{Error, Result};
use crate::gaussian::{bounded_scale, bounded_scale_backward, symbol_bits, symbol_bits_grad};
use crate::nn::{Chain, ChainTrace, Conv2d, ConvTranspose2d, Module, Param};
use crate::tensor::Tensor;

/// Learned per-channel Gaussian prior for the hyper latent.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedPrior {
    pub mean: Param,
    pub raw_scale: Param,
}

impl FactorizedPrior {
    pub fn new(name: &str, channels: usize) -> Self {
        // softplus(0.5413) ~= 1
        let mut raw_scale = Param::zeros(format!("{name}.raw_scale"), vec![channels]);
        raw_scale.data.iter_mut().for_each(|v| *v = 0.5413);
        Self {
            mean: Param::zeros(format!("{name}.mean"), vec![channels]),
            raw_scale,
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn channel_params(&self, c: usize) -> (f64, f64) {
        (self.mean.data[c], bounded_scale(self.raw_scale.data[c]))
    }

    /// Broadcasts the per-channel parameters over a hyper latent shape.
    pub fn params_for(&self, height: usize, width: usize) -> EntropyParams {
        let mean = Tensor::from_fn(self.channels(), height, width, |c, _, _| self.mean.data[c]);
        let scale = Tensor::from_fn(self.channels(), height, width, |c, _, _| self.channel_params(c).1);
        EntropyParams { mean, scale }
    }
}

impl Module for FactorizedPrior {
    fn params(&self) -> Vec<&Param> {
        vec![&self.mean, &self.raw_scale]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.mean, &mut self.raw_scale]
    }
}

/// Hyper analysis/synthesis pair, one parameter predictor per channel group,
/// and the factorized prior of the hyper latent.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCodec {
    pub channels: usize,
    pub groups: usize,
    pub hyper_analysis: Chain<Conv2d>,
    pub hyper_synthesis: Chain<ConvTranspose2d>,
    pub predictors: Vec<Chain<Conv2d>>,
    pub prior: FactorizedPrior,
}

/// Everything the backward pass needs from a training forward pass.
#[derive(Clone, Debug)]
pub struct TrainPass {
    /// Noisy latent `y + u` fed to the synthesis transform.
    pub y_tilde: Tensor,
    pub rate_y_bits: f64,
    pub rate_z_bits: f64,
    z_tilde: Tensor,
    hyper_analysis: ChainTrace,
    hyper_synthesis: ChainTrace,
    predictors: Vec<(ChainTrace, Tensor)>,
}

impl LatentCodec {
    pub fn new(name: &str, channels: usize, groups: usize, hyper_channels: usize, predictor_hidden: usize, rng: &mut impl Rng) -> Self {
        assert!(groups > 0 && channels % groups == 0);
        let w = channels / groups;
        let hyper_analysis = Chain::new(vec![
            Conv2d::new(&format!("{name}.hyper_analysis.0"), channels, hyper_channels, 3, 2, rng),
            Conv2d::new(&format!("{name}.hyper_analysis.1"), hyper_channels, hyper_channels, 3, 2, rng),
        ]);
        let hyper_synthesis = Chain::new(vec![
            ConvTranspose2d::new(&format!("{name}.hyper_synthesis.0"), hyper_channels, hyper_channels, 3, 2, rng),
            ConvTranspose2d::new(&format!("{name}.hyper_synthesis.1"), hyper_channels, 2 * channels, 3, 2, rng),
        ]);
        let predictors = (0..groups)
            .map(|i| {
                let input = 2 * channels + i * w;
                let mut last = Conv2d::new(&format!("{name}.predictor.{i}.1"), predictor_hidden, 2 * w, 3, 1, rng);
                last.weight.data.iter_mut().for_each(|v| *v *= 0.1);
                Chain::new(vec![
                    Conv2d::new(&format!("{name}.predictor.{i}.0"), input, predictor_hidden, 3, 1, rng),
                    last,
                ])
            })
            .collect();
        Self {
            channels,
            groups,
            hyper_analysis,
            hyper_synthesis,
            predictors,
            prior: FactorizedPrior::new(&format!("{name}.prior"), hyper_channels),
        }
    }

    pub fn group_width(&self) -> usize {
        self.channels / self.groups
    }

    /// Channels of the hyper-decoded context tensor (mean + scale base).
    pub fn context_channels(&self) -> usize {
        2 * self.channels
    }

    pub fn hyper_encode(&self, y: &Tensor) -> Result<HyperLatent> {
        if y.channels() != self.channels {
            return Err(Error::Dimension(format!(
                "hyper encoder expects {} channels, got {}",
                self.channels,
                y.channels()
            )));
        }
        if y.height() % 4 != 0 || y.width() % 4 != 0 || y.is_empty() {
            return Err(Error::Dimension(format!(
                "latent {}x{} not divisible by the hyper stride 4",
                y.height(),
                y.width()
            )));
        }
        Ok(HyperLatent {
            tensor: self.hyper_analysis.forward(y),
            quantized: false,
        })
    }

    pub fn hyper_decode(&self, z_hat: &Tensor) -> Result<Tensor> {
        if z_hat.channels() != self.prior.channels() {
            return Err(Error::Dimension(format!(
                "hyper decoder expects {} channels, got {}",
                self.prior.channels(),
                z_hat.channels()
            )));
        }
        Ok(self.hyper_synthesis.forward(z_hat))
    }

    /// Gaussian parameters of group `index` (0-based) given the hyper context
    /// and the decoded groups before it. Nothing at or after `index` is read.
    pub fn group_entropy_params(&self, index: usize, context: &Tensor, prev: &[Tensor]) -> Result<EntropyParams> {
        if index >= self.groups {
            return Err(Error::GroupCount {
                what: "group index",
                expected: self.groups,
                actual: index + 1,
            });
        }
        if prev.len() != index {
            return Err(Error::GroupCount {
                what: "previously decoded groups",
                expected: index,
                actual: prev.len(),
            });
        }
        if context.channels() != self.context_channels() {
            return Err(Error::Dimension(format!(
                "context has {} channels, expected {}",
                context.channels(),
                self.context_channels()
            )));
        }
        let w = self.group_width();
        if prev.iter().any(|g| g.channels() != w) {
            return Err(Error::Dimension(format!("decoded groups must have {w} channels")));
        }
        let input = Tensor::concat_channels(std::iter::once(context).chain(prev))?;
        let raw = self.predictors[index].forward(&input);
        let (mean, scale) = split_raw(&raw, w);
        EntropyParams::new(mean, scale)
    }

    /// Training forward pass: noisy quantization for rates and synthesis,
    /// conditioning on eval-quantized (detached) earlier groups.
    pub fn forward_train(&self, y: &Tensor, rng: &mut impl Rng) -> TrainPass {
        let w = self.group_width();
        let (z, hyper_analysis) = self.hyper_analysis.forward_traced(y);
        let z_tilde = add_uniform_noise(&z, rng);
        let mut rate_z_bits = 0.0;
        let plane = z_tilde.plane_len();
        for (i, &v) in z_tilde.data().iter().enumerate() {
            let (m, s) = self.prior.channel_params(i / plane);
            rate_z_bits += symbol_bits(v, m, s);
        }
        let (context, hyper_synthesis) = self.hyper_synthesis.forward_traced(&z_tilde);

        let mut decoded: Vec<Tensor> = Vec::with_capacity(self.groups);
        let mut noisy: Vec<Tensor> = Vec::with_capacity(self.groups);
        let mut predictors = Vec::with_capacity(self.groups);
        let mut rate_y_bits = 0.0;
        for i in 0..self.groups {
            let y_i = y.slice_channels(i * w..(i + 1) * w);
            let input = Tensor::concat_channels(std::iter::once(&context).chain(&decoded)).expect("aligned");
            let (raw, trace) = self.predictors[i].forward_traced(&input);
            let (mean, scale) = split_raw(&raw, w);
            let y_tilde = add_uniform_noise(&y_i, rng);
            for ((&v, &m), &s) in y_tilde.data().iter().zip(mean.data()).zip(scale.data()) {
                rate_y_bits += symbol_bits(v, m, s);
            }
            decoded.push(quantize_symbols(&y_i));
            noisy.push(y_tilde);
            predictors.push((trace, raw));
        }
        TrainPass {
            y_tilde: Tensor::concat_channels(&noisy).expect("aligned"),
            rate_y_bits,
            rate_z_bits,
            z_tilde,
            hyper_analysis,
            hyper_synthesis,
            predictors,
        }
    }

    /// Backward of `rate_weight * (rate_y + rate_z)` plus whatever loss
    /// produced `d_y_tilde`. Accumulates into `grad` and returns `dL/dy`.
    pub fn backward_train(&self, pass: &TrainPass, d_y_tilde: &Tensor, rate_weight: f64, grad: &mut Self) -> Tensor {
        let w = self.group_width();
        let ctx_ch = self.context_channels();
        let y_tilde = &pass.y_tilde;
        let mut d_y = d_y_tilde.clone();
        let plane = y_tilde.plane_len();
        let mut d_context = Tensor::zeros(ctx_ch, y_tilde.height(), y_tilde.width());

        for i in 0..self.groups {
            let (trace, raw) = &pass.predictors[i];
            let mut d_raw = Tensor::zeros(2 * w, raw.height(), raw.width());
            for c in 0..w {
                for p in 0..plane {
                    let mean = raw.data()[c * plane + p];
                    let raw_s = raw.data()[(w + c) * plane + p];
                    let yi = (i * w + c) * plane + p;
                    let g = symbol_bits_grad(y_tilde.data()[yi], mean, bounded_scale(raw_s));
                    d_y.data_mut()[yi] += rate_weight * g.d_value;
                    d_raw.data_mut()[c * plane + p] = rate_weight * g.d_mean;
                    d_raw.data_mut()[(w + c) * plane + p] = bounded_scale_backward(raw_s, rate_weight * g.d_scale);
                }
            }
            let d_input = self.predictors[i].backward(trace, &d_raw, &mut grad.predictors[i]);
            // Earlier groups enter detached; only the context receives gradient.
            for (a, b) in d_context.data_mut().iter_mut().zip(&d_input.data()[..ctx_ch * plane]) {
                *a += b;
            }
        }

        let mut d_z = self.hyper_synthesis.backward(&pass.hyper_synthesis, &d_context, &mut grad.hyper_synthesis);
        let z_plane = pass.z_tilde.plane_len();
        for c in 0..self.prior.channels() {
            let (m, s) = self.prior.channel_params(c);
            let mut d_scale = 0.0;
            for p in 0..z_plane {
                let idx = c * z_plane + p;
                let g = symbol_bits_grad(pass.z_tilde.data()[idx], m, s);
                d_z.data_mut()[idx] += rate_weight * g.d_value;
                grad.prior.mean.data[c] += rate_weight * g.d_mean;
                d_scale += rate_weight * g.d_scale;
            }
            grad.prior.raw_scale.data[c] += bounded_scale_backward(self.prior.raw_scale.data[c], d_scale);
        }
        let d_from_hyper = self.hyper_analysis.backward(&pass.hyper_analysis, &d_z, &mut grad.hyper_analysis);
        d_y.add_assign(&d_from_hyper);
        d_y
    }
}

/// Splits a predictor output into (mean, bounded scale).
fn split_raw(raw: &Tensor, w: usize) -> (Tensor, Tensor) {
    let mean = raw.slice_channels(0..w);
    let scale = raw.slice_channels(w..2 * w).map(bounded_scale);
    (mean, scale)
}

impl Module for LatentCodec {
    fn params(&self) -> Vec<&Param> {
        let mut out = self.hyper_analysis.params();
        out.extend(self.hyper_synthesis.params());
        for p in &self.predictors {
            out.extend(p.params());
        }
        out.extend(self.prior.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.hyper_analysis.params_mut();
        out.extend(self.hyper_synthesis.params_mut());
        for p in &mut self.predictors {
            out.extend(p.params_mut());
        }
        out.extend(self.prior.params_mut());
        out
    }
}
