use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// λ values addressable by the one-byte `lambda_id` of the stream header.
pub const LAMBDA_TABLE: [f64; 5] = [0.005, 0.01, 0.02, 0.03, 0.05];

/// `lambda_id` written for a λ outside [`LAMBDA_TABLE`].
pub const CUSTOM_LAMBDA_ID: u8 = 0xFF;

pub fn lambda_id(lambda: f64) -> u8 {
    LAMBDA_TABLE
        .iter()
        .position(|&l| l == lambda)
        .map_or(CUSTOM_LAMBDA_ID, |i| i as u8)
}

pub fn lambda_from_id(id: u8) -> Option<f64> {
    LAMBDA_TABLE.get(id as usize).copied()
}

/// Architecture and rate point of a codec pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Latent channels `C` of the base codec.
    pub latent_channels: usize,
    /// Number of channel groups `n` in the base latent.
    pub groups: usize,
    /// Number of enhancement groups `m` (`1 <= m <= n`).
    pub enh_groups: usize,
    /// Spatial stride product `s` of the analysis transform; a power of two.
    pub downsample_factor: usize,
    /// Intermediate widths of the analysis / synthesis stages, one per
    /// stage boundary (`log2(s) - 1` entries).
    pub hidden_channels: Vec<usize>,
    pub hyper_channels: usize,
    pub predictor_hidden: usize,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_channels: 320,
            groups: 5,
            enh_groups: 5,
            downsample_factor: 16,
            hidden_channels: vec![192, 192, 192],
            hyper_channels: 192,
            predictor_hidden: 224,
            lambda: 0.01,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Small configuration used by examples and tests: `s = 4`, `C = 20`, `n = 5`.
    pub fn toy() -> Self {
        Self {
            latent_channels: 20,
            groups: 5,
            enh_groups: 3,
            downsample_factor: 4,
            hidden_channels: vec![32],
            hyper_channels: 16,
            predictor_hidden: 24,
            lambda: 0.01,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.latent_channels == 0 || self.groups == 0 || self.enh_groups == 0 {
            return fail("channel and group counts must be positive".into());
        }
        if self.latent_channels % self.groups != 0 {
            return fail(format!(
                "latent channels {} not divisible by group count {}",
                self.latent_channels, self.groups
            ));
        }
        if self.enh_groups > self.groups {
            return fail(format!(
                "enhancement groups m={} exceed base groups n={}",
                self.enh_groups, self.groups
            ));
        }
        if self.groups > u8::MAX as usize {
            return fail("group count must fit in one byte".into());
        }
        if self.downsample_factor < 2 || !self.downsample_factor.is_power_of_two() {
            return fail(format!(
                "downsample factor {} must be a power of two >= 2",
                self.downsample_factor
            ));
        }
        if self.hidden_channels.len() + 1 != self.stages() {
            return fail(format!(
                "{} stages need {} hidden widths, got {}",
                self.stages(),
                self.stages() - 1,
                self.hidden_channels.len()
            ));
        }
        if self.hidden_channels.iter().any(|&h| h == 0) || self.hyper_channels == 0 || self.predictor_hidden == 0 {
            return fail("hidden widths must be positive".into());
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be positive, got {}", self.lambda));
        }
        Ok(())
    }

    /// Number of stride-2 stages in the analysis transform.
    pub fn stages(&self) -> usize {
        self.downsample_factor.trailing_zeros() as usize
    }

    /// Channels per latent group, `C / n`.
    pub fn group_width(&self) -> usize {
        self.latent_channels / self.groups
    }

    /// Channels of the enhancement latent, `m * C / n`.
    pub fn enh_channels(&self) -> usize {
        self.enh_groups * self.group_width()
    }

    /// Inputs are padded to a multiple of this so both the latent (`/s`) and
    /// the hyper latent (`/4s`) have integral size.
    pub fn padding_multiple(&self) -> usize {
        4 * self.downsample_factor
    }

    /// Whether two configs describe the same latent layout (`C`, `n`, `s`).
    pub fn latent_compatible(&self, other: &ModelConfig) -> bool {
        self.latent_channels == other.latent_channels
            && self.groups == other.groups
            && self.downsample_factor == other.downsample_factor
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_and_toy_are_valid() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::toy().validate().unwrap();
        assert_eq!(ModelConfig::default().stages(), 4);
        assert_eq!(ModelConfig::default().group_width(), 64);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = ModelConfig::default();
        let mut c = base.clone();
        c.groups = 7;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.enh_groups = 6;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.enh_groups = 0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.lambda = 0.0;
        assert!(c.validate().is_err());
        let mut c = base;
        c.downsample_factor = 12;
        assert!(c.validate().is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let mut c = ModelConfig::toy();
        c.lambda = 0.1 + 0.2;
        assert_eq!(ModelConfig::from_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn missing_keys_take_defaults() {
        let c = ModelConfig::from_text("latent_channels = 20\ndownsample_factor = 4\nhidden_channels = [32]").unwrap();
        assert_eq!(c.latent_channels, 20);
        assert_eq!(c.groups, ModelConfig::default().groups);
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn lambda_ids() {
        assert_eq!(lambda_id(0.005), 0);
        assert_eq!(lambda_id(0.05), 4);
        assert_eq!(lambda_id(0.07), CUSTOM_LAMBDA_ID);
        assert_eq!(lambda_from_id(2), Some(0.02));
        assert_eq!(lambda_from_id(9), None);
    }
}
