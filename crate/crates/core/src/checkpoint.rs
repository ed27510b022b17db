//! Self-describing weight files.
//!
//! ```text
//! "SICMCKPT" | version u8 | kind u8 | u32 len + config (TOML) | base_hash u64
//! | u32 tensor count | per tensor: u16 len + name, u8 rank, u32 dims, f64 LE data
//! ```
//!
//! All integers are big-endian. A model's hash is the first eight bytes of the
//! SHA-256 of its checkpoint bytes, so it covers the config and every weight.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{BaseModel, EnhancementModel, ModelConfig};
use crate::nn::Module;

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"SICMCKPT";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ModelKind {
    Base = 0,
    Enhancement = 1,
    Residual = 2,
}

impl ModelKind {
    fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Self::Base),
            1 => Ok(Self::Enhancement),
            2 => Ok(Self::Residual),
            _ => Err(Error::Malformed(format!("unknown model kind {v}"))),
        }
    }
}

/// First eight bytes of SHA-256, big-endian.
pub fn hash_bytes(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// A BaseModel trained on shifted residuals `(x - x_t + 1) / 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualModel(pub BaseModel);

pub trait Checkpoint: Sized {
    const KIND: ModelKind;

    fn to_bytes(&self) -> Vec<u8>;
    fn from_bytes(bytes: &[u8]) -> Result<Self>;

    fn model_hash(&self) -> u64 {
        hash_bytes(&self.to_bytes())
    }

    fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingCheckpoint(path.display().to_string()),
            _ => e.into(),
        })?;
        Self::from_bytes(&bytes)
    }
}

impl Checkpoint for BaseModel {
    const KIND: ModelKind = ModelKind::Base;

    fn to_bytes(&self) -> Vec<u8> {
        write(Self::KIND, &self.config, 0, self)
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let raw = read(bytes, Self::KIND)?;
        let mut model = BaseModel::new(raw.config.clone())?;
        raw.load_into(&mut model)?;
        Ok(model)
    }
}

impl Checkpoint for EnhancementModel {
    const KIND: ModelKind = ModelKind::Enhancement;

    fn to_bytes(&self) -> Vec<u8> {
        write(Self::KIND, &self.config, self.base_hash, self)
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let raw = read(bytes, Self::KIND)?;
        let mut model = EnhancementModel::new(raw.config.clone(), raw.base_hash)?;
        raw.load_into(&mut model)?;
        Ok(model)
    }
}

impl Checkpoint for ResidualModel {
    const KIND: ModelKind = ModelKind::Residual;

    fn to_bytes(&self) -> Vec<u8> {
        write(Self::KIND, &self.0.config, 0, &self.0)
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let raw = read(bytes, Self::KIND)?;
        let mut model = BaseModel::new(raw.config.clone())?;
        raw.load_into(&mut model)?;
        Ok(Self(model))
    }
}

fn write(kind: ModelKind, config: &ModelConfig, base_hash: u64, model: &impl Module) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.push(kind as u8);
    let text = config.to_text();
    out.extend_from_slice(&(text.len() as u32).to_be_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&base_hash.to_be_bytes());
    let params = model.params();
    out.extend_from_slice(&(params.len() as u32).to_be_bytes());
    for p in params {
        out.extend_from_slice(&(p.name.len() as u16).to_be_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(p.shape.len() as u8);
        for &d in &p.shape {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        for v in &p.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct RawTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

struct RawCheckpoint {
    config: ModelConfig,
    base_hash: u64,
    tensors: Vec<RawTensor>,
}

impl RawCheckpoint {
    fn load_into(self, model: &mut impl Module) -> Result<()> {
        let params = model.params_mut();
        if params.len() != self.tensors.len() {
            return Err(Error::Malformed(format!(
                "checkpoint holds {} tensors, model expects {}",
                self.tensors.len(),
                params.len()
            )));
        }
        for (p, t) in params.into_iter().zip(self.tensors) {
            if p.name != t.name || p.shape != t.shape {
                return Err(Error::Malformed(format!(
                    "tensor {} {:?} does not match model parameter {} {:?}",
                    t.name, t.shape, p.name, p.shape
                )));
            }
            p.data = t.data;
        }
        Ok(())
    }
}

fn read(bytes: &[u8], expected: ModelKind) -> Result<RawCheckpoint> {
    let mut r = Cursor { bytes, pos: 0 };
    let magic = r.take(8)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: CHECKPOINT_MAGIC.to_vec(),
            found: magic.to_vec(),
        });
    }
    let version = r.u8()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version(version));
    }
    let kind = ModelKind::from_u8(r.u8()?)?;
    if kind != expected {
        return Err(Error::Malformed(format!("checkpoint holds a {kind:?} model, expected {expected:?}")));
    }
    let text_len = r.u32()? as usize;
    let text = std::str::from_utf8(r.take(text_len)?).map_err(|e| Error::Malformed(e.to_string()))?;
    let config = ModelConfig::from_text(text)?;
    let base_hash = r.u64()?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|e| Error::Malformed(e.to_string()))?;
        let rank = r.u8()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let raw = r.take(len.checked_mul(8).ok_or(Error::Truncated("checkpoint tensor"))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push(RawTensor { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::Malformed("trailing bytes after checkpoint".into()));
    }
    Ok(RawCheckpoint {
        config,
        base_hash,
        tensors,
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(Error::Truncated("checkpoint"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_round_trips_bit_exactly() {
        let mut model = BaseModel::new(ModelConfig::toy()).unwrap();
        model.codec.prior.mean.data[0] = -0.0;
        model.codec.prior.mean.data[1] = f64::MIN_POSITIVE / 3.0;
        let bytes = model.to_bytes();
        let back = BaseModel::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.codec.prior.mean.data[0].to_bits(), (-0.0f64).to_bits());
        assert_eq!(back.model_hash(), model.model_hash());
    }

    #[test]
    fn enhancement_keeps_base_hash() {
        let model = EnhancementModel::new(ModelConfig::toy(), 0xdead_beef).unwrap();
        let back = EnhancementModel::from_bytes(&model.to_bytes()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.base_hash, 0xdead_beef);
    }

    #[test]
    fn hash_tracks_weights_and_config() {
        let model = BaseModel::new(ModelConfig::toy()).unwrap();
        let mut other = model.clone();
        other.synthesis.layers[0].bias.data[0] += 1e-12;
        assert_ne!(model.model_hash(), other.model_hash());
        let mut config = model.config.clone();
        config.lambda = 0.05;
        let mut relabelled = model.clone();
        relabelled.config = config;
        assert_ne!(model.model_hash(), relabelled.model_hash());
    }

    #[test]
    fn kind_and_corruption_checked() {
        let model = BaseModel::new(ModelConfig::toy()).unwrap();
        let bytes = model.to_bytes();
        assert!(EnhancementModel::from_bytes(&bytes).is_err());
        assert!(ResidualModel::from_bytes(&bytes).is_err());
        assert!(matches!(BaseModel::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Truncated(_))));
        let mut bad = bytes.clone();
        bad[0] = 0;
        assert!(matches!(BaseModel::from_bytes(&bad), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn missing_file_reports_path() {
        let err = BaseModel::load("/nonexistent/base.ckpt").unwrap_err();
        assert!(matches!(err, Error::MissingCheckpoint(p) if p.contains("base.ckpt")));
    }
}
