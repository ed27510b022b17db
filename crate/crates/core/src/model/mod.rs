//! The base (machine) and enhancement (human) codecs.
//!
//! Both are convolutional autoencoders with a hyperprior and a
//! channel-conditional entropy model over latent groups. The base codec codes
//! `n` groups of `C / n` channels and reconstructs an image for machine
//! vision; the enhancement codec codes `m <= n` groups of the same width whose
//! decoder reads the fused latent (see [`crate::fusion`]).

mod codec;
mod config;
mod latent;

pub use codec::{FactorizedPrior, LatentCodec, TrainPass};
pub use config::{lambda_from_id, lambda_id, ModelConfig, CUSTOM_LAMBDA_ID, LAMBDA_TABLE};
pub use latent::{
    concat_groups, quantize, quantize_eval, quantize_symbols, split_groups, EntropyParams, HyperLatent,
    LatentGroups, QuantizeMode, SYMBOL_MAX,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Chain, Conv2d, ConvTranspose2d, Module, Param};
use crate::tensor::{Image, Tensor};

const TRANSFORM_KERNEL: usize = 5;

pub(crate) fn analysis_chain(name: &str, widths: &[usize], rng: &mut ChaCha8Rng) -> Chain<Conv2d> {
    Chain::new(
        widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Conv2d::new(&format!("{name}.{i}"), w[0], w[1], TRANSFORM_KERNEL, 2, rng))
            .collect(),
    )
}

pub(crate) fn synthesis_chain(name: &str, widths: &[usize], rng: &mut ChaCha8Rng) -> Chain<ConvTranspose2d> {
    let mut chain = Chain::new(
        widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| ConvTranspose2d::new(&format!("{name}.{i}"), w[0], w[1], TRANSFORM_KERNEL, 2, rng))
            .collect::<Vec<_>>(),
    );
    // start from mid-grey output
    let last = chain.layers.last_mut().expect("at least one stage");
    last.bias.data.iter_mut().for_each(|b| *b = 0.5);
    chain
}

fn analysis_widths(config: &ModelConfig, out: usize) -> Vec<usize> {
    let mut w = vec![3];
    w.extend(&config.hidden_channels);
    w.push(out);
    w
}

fn synthesis_widths(config: &ModelConfig) -> Vec<usize> {
    let mut w = vec![config.latent_channels];
    w.extend(config.hidden_channels.iter().rev());
    w.push(3);
    w
}

fn check_input(config: &ModelConfig, x: &Tensor) -> Result<()> {
    let s = config.downsample_factor;
    if x.channels() != 3 {
        return Err(Error::Dimension(format!("expected 3 input channels, got {}", x.channels())));
    }
    if x.height() == 0 || x.width() == 0 || x.height() % s != 0 || x.width() % s != 0 {
        return Err(Error::Dimension(format!(
            "input {}x{} not divisible by downsample factor {s}",
            x.height(),
            x.width()
        )));
    }
    Ok(())
}

/// Reflect-pads an image so both sides are multiples of
/// [`ModelConfig::padding_multiple`].
pub fn pad_input(config: &ModelConfig, image: &Image) -> Tensor {
    let k = config.padding_multiple();
    let h = image.height().div_ceil(k) * k;
    let w = image.width().div_ceil(k) * k;
    image.tensor().reflect_pad_to(h, w)
}

fn check_groups(what: &'static str, groups: &LatentGroups, expected: usize, width: usize) -> Result<()> {
    if groups.len() != expected {
        return Err(Error::GroupCount {
            what,
            expected,
            actual: groups.len(),
        });
    }
    if groups.groups().iter().any(|g| g.channels() != width) {
        return Err(Error::Dimension(format!("{what}: every group needs {width} channels")));
    }
    Ok(())
}

/// The machine-layer codec.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseModel {
    pub config: ModelConfig,
    pub analysis: Chain<Conv2d>,
    pub codec: LatentCodec,
    pub synthesis: Chain<ConvTranspose2d>,
}

impl BaseModel {
    /// Fresh weights drawn from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let c = config.latent_channels;
        let analysis = analysis_chain("analysis", &analysis_widths(&config, c), &mut rng);
        let codec = LatentCodec::new("codec", c, config.groups, config.hyper_channels, config.predictor_hidden, &mut rng);
        let synthesis = synthesis_chain("synthesis", &synthesis_widths(&config), &mut rng);
        Ok(Self {
            config,
            analysis,
            codec,
            synthesis,
        })
    }

    /// `y = g_a(x)` for an input already padded to a multiple of `s`.
    pub fn analyze_base(&self, x: &Tensor) -> Result<Tensor> {
        check_input(&self.config, x)?;
        Ok(self.analysis.forward(x))
    }

    /// `x_t = g_machine(concat(y_1..y_n))`, clamped to `[0, 1]`.
    pub fn synth_machine(&self, y_hat: &LatentGroups) -> Result<Image> {
        check_groups("machine synthesis", y_hat, self.config.groups, self.config.group_width())?;
        Image::from_clamped(self.synthesis.forward(&concat_groups(y_hat)?))
    }
}

impl Module for BaseModel {
    fn params(&self) -> Vec<&Param> {
        let mut out = self.analysis.params();
        out.extend(self.codec.params());
        out.extend(self.synthesis.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.analysis.params_mut();
        out.extend(self.codec.params_mut());
        out.extend(self.synthesis.params_mut());
        out
    }
}

/// The additional-information codec. Its decoder consumes the fused latent.
#[derive(Clone, Debug, PartialEq)]
pub struct EnhancementModel {
    pub config: ModelConfig,
    /// Hash of the base model this codec was trained against.
    pub base_hash: u64,
    pub analysis: Chain<Conv2d>,
    pub codec: LatentCodec,
    pub synthesis: Chain<ConvTranspose2d>,
}

impl EnhancementModel {
    pub fn new(config: ModelConfig, base_hash: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x656e_6861_6e63_6521);
        let ya = config.enh_channels();
        let analysis = analysis_chain("enh.analysis", &analysis_widths(&config, ya), &mut rng);
        let codec = LatentCodec::new(
            "enh.codec",
            ya,
            config.enh_groups,
            config.hyper_channels,
            config.predictor_hidden,
            &mut rng,
        );
        let synthesis = synthesis_chain("enh.synthesis", &synthesis_widths(&config), &mut rng);
        Ok(Self {
            config,
            base_hash,
            analysis,
            codec,
            synthesis,
        })
    }

    /// Starts the human decoder from the machine decoder's weights.
    pub fn warm_start_from(&mut self, base: &BaseModel) {
        for (dst, src) in self.synthesis.params_mut().into_iter().zip(base.synthesis.params()) {
            dst.data.copy_from_slice(&src.data);
        }
    }

    /// `ya = g_a'(x)`, split into `m` groups of `C / n` channels.
    pub fn analyze_enhancement(&self, x: &Tensor) -> Result<LatentGroups> {
        check_input(&self.config, x)?;
        split_groups(&self.analysis.forward(x), self.config.enh_groups)
    }

    /// `x = g_human(concat(yf_1..yf_n))`, clamped to `[0, 1]`.
    pub fn synth_human(&self, fused: &LatentGroups) -> Result<Image> {
        check_groups("human synthesis", fused, self.config.groups, self.config.group_width())?;
        Image::from_clamped(self.synthesis.forward(&concat_groups(fused)?))
    }

    /// Trainable parameters: encoder, hyper pair, group predictors, prior and
    /// the human decoder.
    pub fn trainable_params(&self) -> usize {
        self.param_count()
    }
}

impl Module for EnhancementModel {
    fn params(&self) -> Vec<&Param> {
        let mut out = self.analysis.params();
        out.extend(self.codec.params());
        out.extend(self.synthesis.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.analysis.params_mut();
        out.extend(self.codec.params_mut());
        out.extend(self.synthesis.params_mut());
        out
    }
}
