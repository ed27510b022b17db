//! Enhancement-codec size as the number of enhancement groups grows.
//!
//! ```text
//! cargo run --example param_count
//! ```

use sicm::eval::count_enh_params;
use sicm::ModelConfig;

fn main() -> sicm::Result<()> {
    let mut config = ModelConfig::default();
    println!("C = {}, n = {}", config.latent_channels, config.groups);
    println!("{:>2} {:>10} {:>12}", "m", "channels", "params (M)");
    for m in 1..=config.groups {
        config.enh_groups = m;
        let count = count_enh_params(&config)?;
        println!("{m:>2} {:>10} {:>12.3}", config.enh_channels(), count as f64 / 1e6);
    }
    Ok(())
}
