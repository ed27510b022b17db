//! Image-level encode and the two decode paths.

use super::bitstream::{EnhancementSections, Header, ScalableBitstream};
use super::latent_coder::{encode_latent, LatentDecoder};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::fusion::fuse_groups;
use crate::model::{concat_groups, lambda_id, pad_input, BaseModel, EnhancementModel, LatentGroups, ModelConfig};
use crate::tensor::Image;

fn latent_size(config: &ModelConfig, header: &Header) -> (usize, usize) {
    let k = config.padding_multiple();
    let s = config.downsample_factor;
    let h = (header.height as usize).div_ceil(k) * k;
    let w = (header.width as usize).div_ceil(k) * k;
    (h / s, w / s)
}

fn check_pair(base_hash: u64, enh: &EnhancementModel, base: &ModelConfig) -> Result<()> {
    if enh.base_hash != base_hash {
        return Err(Error::ModelHash {
            expected: base_hash,
            actual: enh.base_hash,
        });
    }
    if !enh.config.latent_compatible(base) {
        return Err(Error::Config(
            "enhancement model differs from the base in C, n or downsample factor".into(),
        ));
    }
    Ok(())
}

fn crop(image: Image, header: &Header) -> Result<Image> {
    Image::new(image.into_tensor().crop(header.height as usize, header.width as usize))
}

/// Codes `x` into a base layer and, when `enh` is given, an enhancement layer.
/// The header carries the base model's hash; the enhancement model must have
/// been trained against that base.
pub fn encode_image(x: &Image, base: &BaseModel, enh: Option<&EnhancementModel>) -> Result<ScalableBitstream> {
    let (width, height) = (x.width(), x.height());
    let too_big = || Error::Dimension(format!("{width}x{height} exceeds the 65535 pixel header limit"));
    let base_hash = base.model_hash();
    if let Some(e) = enh {
        check_pair(base_hash, e, &base.config)?;
    }
    let padded = pad_input(&base.config, x);
    let y = encode_latent(&base.codec, &base.analyze_base(&padded)?)?;
    let enhancement = match enh {
        Some(e) => {
            let ya = concat_groups(&e.analyze_enhancement(&padded)?)?;
            let coded = encode_latent(&e.codec, &ya)?;
            Some(EnhancementSections {
                za: coded.z,
                ya: coded.y,
            })
        }
        None => None,
    };
    let lambda = enh.map_or(base.config.lambda, |e| e.config.lambda);
    Ok(ScalableBitstream {
        header: Header {
            width: u16::try_from(width).map_err(|_| too_big())?,
            height: u16::try_from(height).map_err(|_| too_big())?,
            n: base.config.groups as u8,
            m: enh.map_or(0, |e| e.config.enh_groups as u8),
            lambda_id: lambda_id(lambda),
            model_hash: base_hash,
        },
        z: y.z,
        y: y.y,
        enhancement,
    })
}

/// The base latent `ŷ`, reading only the header, z and y sections.
pub fn decode_base_latent(stream: &ScalableBitstream, base: &BaseModel) -> Result<LatentGroups> {
    let actual = base.model_hash();
    if stream.header.model_hash != actual {
        return Err(Error::ModelHash {
            expected: stream.header.model_hash,
            actual,
        });
    }
    if stream.header.n as usize != base.config.groups {
        return Err(Error::GroupCount {
            what: "stream header n",
            expected: base.config.groups,
            actual: stream.header.n as usize,
        });
    }
    let hw = latent_size(&base.config, &stream.header);
    LatentDecoder::new(&base.codec, &stream.z, &stream.y, hw)?.finish(stream.y.len())
}

/// The enhancement latent `ŷa`.
pub fn decode_enhancement_latent(stream: &ScalableBitstream, enh: &EnhancementModel) -> Result<LatentGroups> {
    let sections = stream.enhancement.as_ref().ok_or(Error::LayerMissing)?;
    if stream.header.m as usize != enh.config.enh_groups {
        return Err(Error::GroupCount {
            what: "stream header m",
            expected: enh.config.enh_groups,
            actual: stream.header.m as usize,
        });
    }
    let hw = latent_size(&enh.config, &stream.header);
    LatentDecoder::new(&enh.codec, &sections.za, &sections.ya, hw)?.finish(sections.ya.len())
}

/// `x̂_t = g_machine(ŷ)`. Never touches the enhancement sections.
pub fn decode_machine(stream: &ScalableBitstream, base: &BaseModel) -> Result<Image> {
    let y_hat = decode_base_latent(stream, base)?;
    crop(base.synth_machine(&y_hat)?, &stream.header)
}

/// `x̂ = g_human(fuse(ŷ, ŷa))`.
pub fn decode_human(stream: &ScalableBitstream, base: &BaseModel, enh: &EnhancementModel) -> Result<Image> {
    if !stream.has_enhancement() {
        return Err(Error::LayerMissing);
    }
    check_pair(stream.header.model_hash, enh, &base.config)?;
    let y_hat = decode_base_latent(stream, base)?;
    let ya_hat = decode_enhancement_latent(stream, enh)?;
    crop(enh.synth_human(&fuse_groups(&y_hat, &ya_hat)?)?, &stream.header)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn models() -> (BaseModel, EnhancementModel) {
        let base = BaseModel::new(ModelConfig::toy()).unwrap();
        let enh = EnhancementModel::new(ModelConfig::toy(), base.model_hash()).unwrap();
        (base, enh)
    }

    fn image(h: usize, w: usize) -> Image {
        Image::new(crate::tensor::Tensor::from_fn(3, h, w, |c, y, x| {
            0.5 + 0.4 * ((c + 1) as f64 * 0.3 * y as f64 + 0.2 * x as f64).sin()
        }))
        .unwrap()
    }

    #[test]
    fn base_only_stream_has_no_enhancement() {
        let (base, _) = models();
        let s = encode_image(&image(16, 16), &base, None).unwrap();
        assert!(!s.has_enhancement());
        assert_eq!(s.header.m, 0);
        assert!(matches!(decode_human(&s, &base, &models().1), Err(Error::LayerMissing)));
    }

    #[test]
    fn odd_sizes_crop_back() {
        let (base, enh) = models();
        let x = image(13, 21);
        let s = encode_image(&x, &base, Some(&enh)).unwrap();
        let bytes = s.to_bytes().unwrap();
        let s = ScalableBitstream::from_bytes(&bytes).unwrap();
        let m = decode_machine(&s, &base).unwrap();
        let h = decode_human(&s, &base, &enh).unwrap();
        assert_eq!((m.height(), m.width()), (13, 21));
        assert_eq!((h.height(), h.width()), (13, 21));
    }

    #[test]
    fn mismatched_models_rejected() {
        let (base, _) = models();
        let stranger = EnhancementModel::new(ModelConfig::toy(), 1).unwrap();
        assert!(matches!(encode_image(&image(16, 16), &base, Some(&stranger)), Err(Error::ModelHash { .. })));
        let s = encode_image(&image(16, 16), &base, None).unwrap();
        let mut other_cfg = ModelConfig::toy();
        other_cfg.seed = 5;
        let other = BaseModel::new(other_cfg).unwrap();
        assert!(matches!(decode_machine(&s, &other), Err(Error::ModelHash { .. })));
    }
}
