//! Range coding of symbols under per-symbol discretized Gaussians, compared
//! with the ideal code length.
//!
//! ```text
//! cargo run --example range_coding
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sicm::entropy::{range_decode, range_encode, CdfTable, DEFAULT_SUPPORT};

fn main() -> sicm::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let count = 20_000;
    let mut tables = Vec::with_capacity(count);
    let mut symbols = Vec::with_capacity(count);
    for _ in 0..count {
        let mean = rng.gen_range(-3.0..3.0);
        let scale = rng.gen_range(0.11..4.0);
        let table = CdfTable::gaussian(mean, scale, DEFAULT_SUPPORT)?;
        // draw a symbol from the quantized table itself
        let (symbol, _, _) = table.lookup(rng.gen_range(0..sicm::entropy::cdf::TOTAL_FREQ));
        symbols.push(symbol);
        tables.push(table);
    }

    let ideal: f64 = symbols
        .iter()
        .zip(&tables)
        .map(|(&s, t)| t.bits(s))
        .collect::<sicm::Result<Vec<_>>>()?
        .iter()
        .sum();
    let bytes = range_encode(&symbols, &tables)?;
    let decoded = range_decode(&bytes, &tables, symbols.len())?;
    assert_eq!(decoded, symbols);

    println!("{count} symbols");
    println!("ideal   {:.1} bytes", ideal / 8.0);
    println!("actual  {} bytes ({:+.3}%)", bytes.len(), 100.0 * (bytes.len() as f64 * 8.0 / ideal - 1.0));
    Ok(())
}
