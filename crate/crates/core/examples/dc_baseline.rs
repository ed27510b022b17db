//! Fusion against difference compression (machine layer plus a separately
//! coded residual) at one λ, written as sweep rows.
//!
//! ```text
//! cargo run --release --example dc_baseline -- [lambda] [steps]
//! ```

use sicm::eval::{evaluate_dc, evaluate_set, pair_with_dc, write_rd_csv};
use sicm::synthetic::synthetic_dataset;
use sicm::train::{load_samples, train_base_on, train_enhancement_on, train_residual_on, DatasetSpec, TrainConfig};

fn main() -> sicm::Result<()> {
    let mut args = std::env::args().skip(1);
    let lambda: f64 = args.next().map_or(0.05, |a| a.parse().expect("lambda"));
    let steps: usize = args.next().map_or(500, |a| a.parse().expect("steps"));
    let config = TrainConfig {
        dataset: DatasetSpec::Synthetic {
            count: 256,
            size: 32,
            seed: 1,
        },
        steps,
        ..TrainConfig::toy(lambda)
    };
    let samples = load_samples(&config)?;
    let test: Vec<_> = synthetic_dataset(16, 32, 0xface)
        .into_iter()
        .enumerate()
        .map(|(i, im)| (format!("test_{i}"), im))
        .collect();

    let base = train_base_on(&config, &samples)?.model;
    let enh = train_enhancement_on(&config, &base, &samples)?.model;
    let residual = train_residual_on(&config, &base, &samples)?.model;

    let rows = vec![evaluate_set(&test, &base, Some(&enh))?.0, evaluate_dc(&test, &base, &residual)?];
    write_rd_csv(&rows, std::io::stdout())?;
    for c in pair_with_dc(&rows) {
        let verdict = if c.fusion_dominates() { "fusion ahead" } else { "fusion not ahead" };
        println!("lambda {}: {verdict}", c.lambda);
    }
    Ok(())
}
