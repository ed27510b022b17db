//! Two-stage optimization.
//!
//! Stage one trains the base codec on the mask-weighted objective. Stage two
//! trains the enhancement codec against the frozen base: the base latent is
//! eval-quantized and fused with the noisy enhancement latent, and only the
//! enhancement weights are updated.
//!
//! Losses are normalized the usual way for learned codecs: rates in bits per
//! pixel, distortion as MSE on the 0–255 scale, so
//! `total = rate_y + rate_z + λ · 255² · mse`.

use std::f64::consts::PI;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, ResidualModel};
use crate::error::{Error, Result};
use crate::eval::{machine_reconstruction, shift_residual};
use crate::image_io::{list_images, load_image};
use crate::losses::{masked_mse, masked_mse_grad, mse, LossBreakdown};
use crate::mask::{edge_mask, load_mask, mask_file_name, BinaryMask, DEFAULT_DILATION};
use crate::model::{quantize_symbols, BaseModel, EnhancementModel, ModelConfig, LAMBDA_TABLE};
use crate::nn::{clip_grad_norm, Adam, Module};
use crate::synthetic::synthetic_dataset;
use crate::tensor::{Image, Tensor};

/// Peak value of the 8-bit scale the distortion term is measured on.
pub const DISTORTION_PEAK: f64 = 255.0;

/// Where training images come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Image files in `path`. With `mask_dir`, every image needs
    /// `<mask_dir>/<stem>.mask`; without it, edge masks are derived.
    Folder {
        path: PathBuf,
        #[serde(default)]
        mask_dir: Option<PathBuf>,
    },
    /// Procedural images from [`synthetic_dataset`].
    Synthetic { count: usize, size: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dataset: DatasetSpec,
    pub crop_size: usize,
    pub batch_size: usize,
    pub steps: usize,
    /// Initial learning rate.
    pub lr: f64,
    /// Learning rate at the last step (cosine decay); `None` keeps `lr`.
    pub lr_min: Option<f64>,
    pub clip_norm: f64,
    pub lambda: f64,
    pub seed: u64,
    /// Save a checkpoint every this many steps (0 disables).
    pub checkpoint_interval: usize,
    pub checkpoint_dir: Option<PathBuf>,
    /// Per-step CSV log, appended to.
    pub log_csv: Option<PathBuf>,
    pub mask_dilation: u32,
    /// Start the human decoder from the machine decoder's weights.
    pub warm_start: bool,
    /// Architecture. Its `lambda` and `seed` are replaced by the fields above.
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::Folder {
                path: PathBuf::from("train"),
                mask_dir: None,
            },
            crop_size: 256,
            batch_size: 8,
            steps: 2000,
            lr: 1e-4,
            lr_min: None,
            clip_norm: 1.0,
            lambda: 0.01,
            seed: 0,
            checkpoint_interval: 0,
            checkpoint_dir: None,
            log_csv: None,
            mask_dilation: DEFAULT_DILATION,
            warm_start: true,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    /// The desk-scale setup: toy model, 512 synthetic 32x32 images, 2000
    /// steps of 8, learning rate 1e-3 decaying to 1e-4.
    pub fn toy(lambda: f64) -> Self {
        Self {
            dataset: DatasetSpec::Synthetic {
                count: 512,
                size: 32,
                seed: 1,
            },
            crop_size: 32,
            lr: 1e-3,
            lr_min: Some(1e-4),
            lambda,
            model: ModelConfig::toy(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        let k = self.model.padding_multiple();
        if self.crop_size == 0 || self.crop_size % k != 0 {
            return Err(Error::Config(format!("crop size {} must be a positive multiple of {k}", self.crop_size)));
        }
        if !LAMBDA_TABLE.contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} is not in the table {LAMBDA_TABLE:?}", self.lambda)));
        }
        if self.batch_size == 0 || self.steps == 0 {
            return Err(Error::Config("batch size and step count must be positive".into()));
        }
        let lr_ok = |v: f64| v > 0.0 && v.is_finite();
        if !lr_ok(self.lr) || !self.lr_min.map_or(true, lr_ok) || !lr_ok(self.clip_norm) {
            return Err(Error::Config("learning rates and clip norm must be positive".into()));
        }
        if let DatasetSpec::Synthetic { count, size, .. } = self.dataset {
            if count == 0 || size < self.crop_size {
                return Err(Error::Config(format!("synthetic set of {count} images of {size}px cannot supply {}px crops", self.crop_size)));
            }
        }
        Ok(())
    }

    /// The architecture with this run's λ and seed.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            lambda: self.lambda,
            seed: self.seed,
            ..self.model.clone()
        }
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_text(&fs::read_to_string(path)?)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let DatasetSpec::Folder { path, mask_dir } = &mut cfg.dataset {
            fix(path);
            mask_dir.iter_mut().for_each(fix);
        }
        cfg.log_csv.iter_mut().for_each(fix);
        cfg.checkpoint_dir.iter_mut().for_each(fix);
        Ok(cfg)
    }

    /// Learning rate at `step` (0-based).
    pub fn lr_at(&self, step: usize) -> f64 {
        match self.lr_min {
            None => self.lr,
            Some(min) => {
                let t = step as f64 / (self.steps.max(2) - 1) as f64;
                min + 0.5 * (self.lr - min) * (1.0 + (PI * t).cos())
            }
        }
    }
}

/// A training image and the mask its distortion is weighted by.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub name: String,
    pub image: Image,
    pub mask: BinaryMask,
}

/// Loads every training image with its mask.
pub fn load_samples(config: &TrainConfig) -> Result<Vec<Sample>> {
    let samples: Vec<Sample> = match &config.dataset {
        DatasetSpec::Synthetic { count, size, seed } => synthetic_dataset(*count, *size, *seed)
            .into_iter()
            .enumerate()
            .map(|(i, image)| Sample {
                name: format!("synthetic_{i:05}"),
                mask: edge_mask(&image, config.mask_dilation),
                image,
            })
            .collect(),
        DatasetSpec::Folder { path, mask_dir } => list_images(path)?
            .into_iter()
            .map(|p| {
                let image = load_image(&p)?;
                let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
                let mask = match mask_dir {
                    Some(dir) => {
                        let mp = dir.join(mask_file_name(&p));
                        if !mp.is_file() {
                            return Err(Error::MissingMask(name));
                        }
                        load_mask(&mp, (image.height(), image.width()))?
                    }
                    None => edge_mask(&image, config.mask_dilation),
                };
                Ok(Sample { name, image, mask })
            })
            .collect::<Result<_>>()?,
    };
    if samples.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    if let Some(s) = samples
        .iter()
        .find(|s| s.image.height() < config.crop_size || s.image.width() < config.crop_size)
    {
        return Err(Error::Config(format!("{} is smaller than the {}px crop", s.name, config.crop_size)));
    }
    Ok(samples)
}

/// One row of the training log: batch means of each component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub rate_y: f64,
    pub rate_z: f64,
    pub distortion: f64,
    pub total: f64,
}

/// A trained model and its per-step log.
#[derive(Clone, Debug)]
pub struct TrainOutcome<M> {
    pub model: M,
    pub log: Vec<LogRow>,
}

impl<M> TrainOutcome<M> {
    /// Mean total loss over the first and the last tenth of the run.
    pub fn smoothed_loss(&self) -> (f64, f64) {
        let k = (self.log.len() / 10).max(1);
        let mean = |rows: &[LogRow]| rows.iter().map(|r| r.total).sum::<f64>() / rows.len() as f64;
        (mean(&self.log[..k]), mean(&self.log[self.log.len() - k..]))
    }

    pub fn loss_decreased(&self) -> bool {
        let (first, last) = self.smoothed_loss();
        last < first
    }
}

/// Loss of one training image on the mask-weighted objective, with gradients
/// accumulated into `grad`. An all-ones mask gives the plain objective.
pub fn base_loss_grad(
    model: &BaseModel,
    grad: &mut BaseModel,
    x: &Tensor,
    mask: &BinaryMask,
    lambda: f64,
    rng: &mut impl Rng,
) -> Result<LossBreakdown> {
    let pixels = (x.height() * x.width()) as f64;
    let peak2 = DISTORTION_PEAK * DISTORTION_PEAK;
    let (y, analysis) = model.analysis.forward_traced(x);
    let pass = model.codec.forward_train(&y, rng);
    let (x_hat, synthesis) = model.synthesis.forward_traced(&pass.y_tilde);
    let loss = LossBreakdown::new(
        pass.rate_y_bits / pixels,
        pass.rate_z_bits / pixels,
        peak2 * masked_mse(x, &x_hat, mask)?,
        lambda,
    );
    let d_x_hat = masked_mse_grad(x, &x_hat, mask)?.map(|g| g * lambda * peak2);
    let d_y_tilde = model.synthesis.backward(&synthesis, &d_x_hat, &mut grad.synthesis);
    let d_y = model.codec.backward_train(&pass, &d_y_tilde, 1.0 / pixels, &mut grad.codec);
    model.analysis.backward(&analysis, &d_y, &mut grad.analysis);
    Ok(loss)
}

/// Loss of one training image on the enhancement objective. `base_latent` is
/// the eval-quantized base latent (all `n` groups, concatenated); rates cover
/// the enhancement latent only.
pub fn enhancement_loss_grad(
    model: &EnhancementModel,
    grad: &mut EnhancementModel,
    x: &Tensor,
    base_latent: &Tensor,
    lambda: f64,
    rng: &mut impl Rng,
) -> Result<LossBreakdown> {
    let pixels = (x.height() * x.width()) as f64;
    let peak2 = DISTORTION_PEAK * DISTORTION_PEAK;
    let (ya, analysis) = model.analysis.forward_traced(x);
    let pass = model.codec.forward_train(&ya, rng);
    let mut fused = base_latent.clone();
    // the enhancement latent lands on the first m groups
    for (f, a) in fused.data_mut().iter_mut().zip(pass.y_tilde.data()) {
        *f += a;
    }
    let (x_hat, synthesis) = model.synthesis.forward_traced(&fused);
    let loss = LossBreakdown::new(
        pass.rate_y_bits / pixels,
        pass.rate_z_bits / pixels,
        peak2 * mse(x, &x_hat)?,
        lambda,
    );
    let n = x.len() as f64;
    let d_x_hat = x_hat.zip_map(x, |a, b| 2.0 * (a - b) / n * lambda * peak2)?;
    let d_fused = model.synthesis.backward(&synthesis, &d_x_hat, &mut grad.synthesis);
    let d_ya_tilde = d_fused.slice_channels(0..ya.channels());
    let d_ya = model.codec.backward_train(&pass, &d_ya_tilde, 1.0 / pixels, &mut grad.codec);
    model.analysis.backward(&analysis, &d_ya, &mut grad.analysis);
    Ok(loss)
}

struct Batches {
    order: Vec<usize>,
    next: usize,
    rng: ChaCha8Rng,
}

impl Batches {
    fn new(len: usize, rng: ChaCha8Rng) -> Self {
        Self {
            order: (0..len).collect(),
            next: len,
            rng,
        }
    }

    /// Next sample index and crop corner. Reshuffles at every epoch.
    fn draw(&mut self, samples: &[Sample], crop: usize) -> (usize, usize, usize) {
        if self.next == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.next = 0;
        }
        let i = self.order[self.next];
        self.next += 1;
        let im = &samples[i].image;
        let top = self.rng.gen_range(0..=im.height() - crop);
        let left = self.rng.gen_range(0..=im.width() - crop);
        (i, top, left)
    }
}

struct CsvLog(Option<csv::Writer<fs::File>>);

impl CsvLog {
    fn open(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self(None)) };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let fresh = file.metadata()?.len() == 0;
        Ok(Self(Some(csv::WriterBuilder::new().has_headers(fresh).from_writer(file))))
    }

    fn write(&mut self, row: &LogRow) -> Result<()> {
        if let Some(w) = &mut self.0 {
            w.serialize(row)?;
            w.flush()?;
        }
        Ok(())
    }
}

/// Shared optimization loop. `step_fn` evaluates one cropped sample.
fn optimize<M, F>(mut model: M, config: &TrainConfig, samples: &[Sample], prefix: &str, mut step_fn: F) -> Result<TrainOutcome<M>>
where
    M: Module + Clone + Checkpoint,
    F: FnMut(&M, &mut M, usize, &Tensor, &BinaryMask, &mut ChaCha8Rng) -> Result<LossBreakdown>,
{
    let mut batches = Batches::new(samples.len(), ChaCha8Rng::seed_from_u64(config.seed));
    let mut noise = ChaCha8Rng::seed_from_u64(config.seed);
    noise.set_stream(1);
    let mut adam = Adam::new(&model);
    let mut grad = model.zeros_like();
    let mut csv = CsvLog::open(config.log_csv.as_deref())?;
    let mut log = Vec::with_capacity(config.steps);
    let c = config.crop_size;
    let inv_b = 1.0 / config.batch_size as f64;

    for step in 0..config.steps {
        grad.zero_grad();
        let (mut ry, mut rz, mut d) = (0.0, 0.0, 0.0);
        for _ in 0..config.batch_size {
            let (i, top, left) = batches.draw(samples, c);
            let x = samples[i].image.tensor().window(top, left, c, c);
            let mask = samples[i].mask.window(top, left, c, c);
            let loss = step_fn(&model, &mut grad, i, &x, &mask, &mut noise)?;
            ry += loss.rate_y * inv_b;
            rz += loss.rate_z * inv_b;
            d += loss.distortion * inv_b;
        }
        let loss = LossBreakdown::new(ry, rz, d, config.lambda);
        if !loss.is_finite() {
            return Err(Error::Diverged {
                step,
                detail: format!("{loss:?}"),
            });
        }
        grad.scale(inv_b);
        let norm = clip_grad_norm(&mut grad, config.clip_norm);
        if !norm.is_finite() {
            return Err(Error::Diverged {
                step,
                detail: format!("gradient norm {norm}"),
            });
        }
        adam.step(&mut model, &grad, config.lr_at(step));

        let row = LogRow {
            step,
            rate_y: loss.rate_y,
            rate_z: loss.rate_z,
            distortion: loss.distortion,
            total: loss.total,
        };
        csv.write(&row)?;
        log.push(row);
        if let Some(dir) = &config.checkpoint_dir {
            if config.checkpoint_interval > 0 && (step + 1) % config.checkpoint_interval == 0 {
                fs::create_dir_all(dir)?;
                model.save(dir.join(format!("{prefix}_{:06}.ckpt", step + 1)))?;
            }
        }
    }
    Ok(TrainOutcome { model, log })
}

/// Stage one: the base codec on the mask-weighted objective.
pub fn train_base(config: &TrainConfig) -> Result<TrainOutcome<BaseModel>> {
    config.validate()?;
    let samples = load_samples(config)?;
    train_base_on(config, &samples)
}

/// [`train_base`] on samples already in memory.
pub fn train_base_on(config: &TrainConfig, samples: &[Sample]) -> Result<TrainOutcome<BaseModel>> {
    config.validate()?;
    let model = BaseModel::new(config.model_config())?;
    let lambda = config.lambda;
    optimize(model, config, samples, "base", |m, g, _, x, mask, rng| {
        base_loss_grad(m, g, x, mask, lambda, rng)
    })
}

fn check_compatible(config: &TrainConfig, base: &BaseModel) -> Result<()> {
    if !config.model.latent_compatible(&base.config) {
        return Err(Error::Config(format!(
            "enhancement config (C={}, n={}, s={}) does not match the base (C={}, n={}, s={})",
            config.model.latent_channels,
            config.model.groups,
            config.model.downsample_factor,
            base.config.latent_channels,
            base.config.groups,
            base.config.downsample_factor
        )));
    }
    Ok(())
}

/// Stage two: the enhancement codec against a frozen `base`.
pub fn train_enhancement(config: &TrainConfig, base: &BaseModel) -> Result<TrainOutcome<EnhancementModel>> {
    config.validate()?;
    let samples = load_samples(config)?;
    train_enhancement_on(config, base, &samples)
}

/// [`train_enhancement`] on samples already in memory.
pub fn train_enhancement_on(config: &TrainConfig, base: &BaseModel, samples: &[Sample]) -> Result<TrainOutcome<EnhancementModel>> {
    config.validate()?;
    check_compatible(config, base)?;
    let mut model = EnhancementModel::new(config.model_config(), base.model_hash())?;
    if config.warm_start {
        model.warm_start_from(base);
    }
    let lambda = config.lambda;
    optimize(model, config, samples, "enh", |m, g, _, x, _, rng| {
        let y_hat = quantize_symbols(&base.analysis.forward(x));
        enhancement_loss_grad(m, g, x, &y_hat, lambda, rng)
    })
}

/// Residual codec for the difference-compression baseline: a base-architecture
/// codec trained with the plain objective on `(x - x̂_t + 1) / 2`.
pub fn train_residual(config: &TrainConfig, base: &BaseModel) -> Result<TrainOutcome<ResidualModel>> {
    config.validate()?;
    let samples = load_samples(config)?;
    train_residual_on(config, base, &samples)
}

/// [`train_residual`] on samples already in memory.
pub fn train_residual_on(config: &TrainConfig, base: &BaseModel, samples: &[Sample]) -> Result<TrainOutcome<ResidualModel>> {
    config.validate()?;
    check_compatible(config, base)?;
    let residuals = samples
        .iter()
        .map(|s| {
            let x_t = machine_reconstruction(base, &s.image)?;
            Ok(Sample {
                name: s.name.clone(),
                mask: BinaryMask::filled(s.image.height(), s.image.width(), true),
                image: shift_residual(&s.image, &x_t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut mc = config.model_config();
    mc.seed ^= 0x7265_7369_6475_616c;
    let model = ResidualModel(BaseModel::new(mc)?);
    let lambda = config.lambda;
    optimize(model, config, &residuals, "residual", |m, g, _, x, mask, rng| {
        base_loss_grad(&m.0, &mut g.0, x, mask, lambda, rng)
    })
}

impl Module for ResidualModel {
    fn params(&self) -> Vec<&crate::nn::Param> {
        self.0.params()
    }

    fn params_mut(&mut self) -> Vec<&mut crate::nn::Param> {
        self.0.params_mut()
    }
}
