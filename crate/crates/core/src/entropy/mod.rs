//! From latents and entropy parameters to bytes and back.

pub mod bitstream;
pub mod cdf;
mod latent_coder;
pub mod range_coder;
mod scalable;

pub use bitstream::{EnhancementSections, Header, ScalableBitstream, SectionLayout};
pub use cdf::{build_cdf, CdfTable, DEFAULT_SUPPORT};
pub use latent_coder::{encode_latent, estimated_latent_bits, EncodedLatent, LatentDecoder};
pub use range_coder::{range_decode, range_encode, RangeDecoder, RangeEncoder};
pub use scalable::{decode_base_latent, decode_enhancement_latent, decode_human, decode_machine, encode_image};
