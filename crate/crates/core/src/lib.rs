//! Scalable learned image coding for machines and humans.
//!
//! A base codec reconstructs the structure a recognition model needs; an
//! enhancement codec carries the additional information a viewer needs, and
//! its decoder reads the base latent fused with the enhancement latent.

pub mod checkpoint;
pub mod cli;
pub mod entropy;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod image_io;
pub mod gaussian;
pub mod losses;
pub mod mask;
pub mod model;
pub mod nn;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use checkpoint::{Checkpoint, ResidualModel};
pub use entropy::{decode_human, decode_machine, encode_image, ScalableBitstream};
pub use error::{Error, Result};
pub use fusion::fuse_groups;
pub use mask::BinaryMask;
pub use model::{BaseModel, EnhancementModel, LatentGroups, ModelConfig};
pub use tensor::{Image, Tensor};
