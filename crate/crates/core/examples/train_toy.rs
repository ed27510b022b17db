//! Trains a base and an enhancement codec on synthetic images and reports
//! held-out rate and quality for both layers.
//!
//! ```text
//! cargo run --release --example train_toy -- [lambda] [steps]
//! ```

use std::time::Instant;

use sicm::eval::{evaluate_set, machine_reconstruction, region_psnr};
use sicm::mask::edge_mask;
use sicm::synthetic::synthetic_dataset;
use sicm::train::{load_samples, train_base_on, train_enhancement_on, TrainConfig};

fn main() -> sicm::Result<()> {
    let mut args = std::env::args().skip(1);
    let lambda: f64 = args.next().map_or(0.05, |a| a.parse().expect("lambda"));
    let steps: usize = args.next().map_or(2000, |a| a.parse().expect("steps"));

    let config = TrainConfig {
        steps,
        ..TrainConfig::toy(lambda)
    };
    let samples = load_samples(&config)?;
    let test: Vec<_> = synthetic_dataset(32, 32, 0xface)
        .into_iter()
        .enumerate()
        .map(|(i, im)| (format!("test_{i}"), im))
        .collect();

    let t = Instant::now();
    let base = train_base_on(&config, &samples)?;
    let (first, last) = base.smoothed_loss();
    println!("base: {steps} steps in {:.1?}, smoothed loss {first:.3} -> {last:.3}", t.elapsed());

    let t = Instant::now();
    let enh = train_enhancement_on(&config, &base.model, &samples)?;
    let (first, last) = enh.smoothed_loss();
    println!("enhancement: {steps} steps in {:.1?}, smoothed loss {first:.3} -> {last:.3}", t.elapsed());

    let (point, _) = evaluate_set(&test, &base.model, Some(&enh.model))?;
    println!(
        "lambda {lambda}: bpp base {:.3} enh {:.3} total {:.3} | psnr machine {:.2} dB human {:.2} dB",
        point.bpp_base, point.bpp_enh, point.bpp_total, point.psnr_machine, point.psnr_human
    );

    let (mut inside, mut outside) = (0.0, 0.0);
    for (_, x) in &test {
        let x_t = machine_reconstruction(&base.model, x)?;
        let (i, o) = region_psnr(x, &x_t, &edge_mask(x, 2))?;
        inside += i / test.len() as f64;
        outside += o / test.len() as f64;
    }
    println!("machine layer psnr inside mask {inside:.2} dB, outside {outside:.2} dB");
    Ok(())
}
