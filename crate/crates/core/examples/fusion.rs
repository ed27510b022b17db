//! Element-wise fusion of base and enhancement latent groups.
//!
//! ```text
//! cargo run --example fusion
//! ```

use sicm::{fuse_groups, LatentGroups, Tensor};

fn main() -> sicm::Result<()> {
    let group = |v: f64| Tensor::filled(2, 2, 2, v);
    let base = LatentGroups::new((1..=5).map(|k| group(k as f64)).collect(), true)?;
    let enh = LatentGroups::new(vec![group(10.0), group(20.0)], true)?;

    let fused = fuse_groups(&base, &enh)?;
    for (k, g) in fused.groups().iter().enumerate() {
        let tag = if k < enh.len() { "base + enh" } else { "base" };
        println!("group {}: {:>5} ({tag})", k + 1, g.data()[0]);
    }
    Ok(())
}
