//! Encodes one image into a two-layer stream, decodes both layers and shows
//! that the machine layer survives stripping the enhancement sections.
//!
//! ```text
//! cargo run --release --example scalable_roundtrip -- [steps]
//! ```

use sicm::checkpoint::Checkpoint;
use sicm::eval::{bpp, psnr};
use sicm::synthetic::synthetic_dataset;
use sicm::train::{load_samples, train_base_on, train_enhancement_on, DatasetSpec, TrainConfig};
use sicm::{decode_human, decode_machine, encode_image, ScalableBitstream};

fn main() -> sicm::Result<()> {
    let steps: usize = std::env::args().nth(1).map_or(300, |a| a.parse().expect("steps"));
    let config = TrainConfig {
        dataset: DatasetSpec::Synthetic {
            count: 128,
            size: 32,
            seed: 1,
        },
        steps,
        ..TrainConfig::toy(0.02)
    };
    let samples = load_samples(&config)?;
    let base = train_base_on(&config, &samples)?.model;
    let enh = train_enhancement_on(&config, &base, &samples)?.model;

    let x = &synthetic_dataset(1, 48, 11)[0];
    let stream = encode_image(x, &base, Some(&enh))?;
    let bytes = stream.to_bytes()?;
    let parsed = ScalableBitstream::from_bytes(&bytes)?;
    let rates = bpp(&parsed, x.width(), x.height());
    println!(
        "{} bytes, model {:016x}: base {:.3} bpp + enhancement {:.3} bpp",
        bytes.len(),
        base.model_hash(),
        rates.base,
        rates.enh
    );

    let x_t = decode_machine(&parsed, &base)?;
    let x_h = decode_human(&parsed, &base, &enh)?;
    println!("machine layer {:.2} dB, human layer {:.2} dB", psnr(x, &x_t)?, psnr(x, &x_h)?);

    let stripped = parsed.strip_enhancement();
    let x_s = decode_machine(&stripped, &base)?;
    println!(
        "stripped stream {} bytes, machine layer identical: {}",
        stripped.len(),
        x_s == x_t
    );
    match decode_human(&stripped, &base, &enh) {
        Ok(_) => println!("unexpected: human layer decoded without its sections"),
        Err(e) => println!("human layer from stripped stream: {e}"),
    }
    Ok(())
}
