use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::gaussian::{std_cdf, SCALE_FLOOR};
use crate::model::{EntropyParams, SYMBOL_MAX};

/// Bits of probability precision in every table.
pub const PRECISION_BITS: u32 = 16;

/// Sum of all frequencies in a table.
pub const TOTAL_FREQ: u32 = 1 << PRECISION_BITS;

/// Support used for all latent symbols.
pub const DEFAULT_SUPPORT: RangeInclusive<i32> = -SYMBOL_MAX..=SYMBOL_MAX;

/// Cumulative frequencies over a contiguous symbol range. `cdf[0] == 0`,
/// `cdf[len] == TOTAL_FREQ` and every symbol has frequency at least 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CdfTable {
    min_symbol: i32,
    cdf: Vec<u32>,
}

impl CdfTable {
    /// Quantizes `probs` (one per symbol, starting at `min_symbol`) to
    /// frequencies: each symbol gets `1 + floor(p * (TOTAL - len))` and the
    /// leftover goes to the most frequent symbol.
    pub fn from_probabilities(min_symbol: i32, probs: &[f64]) -> Result<Self> {
        let len = probs.len();
        if len == 0 {
            return Err(Error::EmptySupport);
        }
        if len as u32 > TOTAL_FREQ {
            return Err(Error::Config(format!("{len} symbols exceed {PRECISION_BITS}-bit precision")));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::NonFinite("symbol probabilities"));
        }
        let spare = (TOTAL_FREQ - len as u32) as f64;
        let mut freq: Vec<u32> = probs.iter().map(|&p| 1 + (p.min(1.0) * spare).floor() as u32).collect();
        let sum: u64 = freq.iter().map(|&f| f as u64).sum();
        // sum(probs) <= 1 keeps the floors within budget; renormalize otherwise
        if sum > TOTAL_FREQ as u64 {
            let norm: f64 = probs.iter().sum();
            freq = probs.iter().map(|&p| 1 + (p / norm * spare).floor() as u32).collect();
        }
        let sum: u32 = freq.iter().sum();
        let top = freq
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .expect("non-empty");
        freq[top] += TOTAL_FREQ - sum;
        let mut cdf = Vec::with_capacity(len + 1);
        let mut acc = 0;
        cdf.push(0);
        for f in freq {
            acc += f;
            cdf.push(acc);
        }
        Ok(Self { min_symbol, cdf })
    }

    /// Discretized `N(mean, scale)` over `support`.
    pub fn gaussian(mean: f64, scale: f64, support: RangeInclusive<i32>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::EmptySupport);
        }
        if !mean.is_finite() || !scale.is_finite() {
            return Err(Error::NonFinite("entropy parameters"));
        }
        if scale < SCALE_FLOOR {
            return Err(Error::Config(format!("scale {scale} below floor {SCALE_FLOOR}")));
        }
        let (lo, hi) = (*support.start(), *support.end());
        let bounds: Vec<f64> = (lo..=hi + 1)
            .map(|b| std_cdf((b as f64 - 0.5 - mean) / scale))
            .collect();
        let probs: Vec<f64> = bounds.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
        Self::from_probabilities(lo, &probs)
    }

    pub fn min_symbol(&self) -> i32 {
        self.min_symbol
    }

    pub fn max_symbol(&self) -> i32 {
        self.min_symbol + self.len() as i32 - 1
    }

    pub fn len(&self) -> usize {
        self.cdf.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cdf(&self) -> &[u32] {
        &self.cdf
    }

    /// `(cumulative low, frequency)` of `symbol`.
    pub fn interval(&self, symbol: i32) -> Result<(u32, u32)> {
        if symbol < self.min_symbol || symbol > self.max_symbol() {
            return Err(Error::SymbolRange {
                symbol,
                min: self.min_symbol,
                max: self.max_symbol(),
            });
        }
        let i = (symbol - self.min_symbol) as usize;
        Ok((self.cdf[i], self.cdf[i + 1] - self.cdf[i]))
    }

    /// Symbol whose interval contains `target` (`< TOTAL_FREQ`).
    pub fn lookup(&self, target: u32) -> (i32, u32, u32) {
        let i = self.cdf.partition_point(|&c| c <= target) - 1;
        let i = i.min(self.len() - 1);
        (self.min_symbol + i as i32, self.cdf[i], self.cdf[i + 1] - self.cdf[i])
    }

    /// Ideal code length of `symbol` under the quantized table.
    pub fn bits(&self, symbol: i32) -> Result<f64> {
        let (_, f) = self.interval(symbol)?;
        Ok(PRECISION_BITS as f64 - (f as f64).log2())
    }
}

/// One table per element of `params`, in element order.
pub fn build_cdf(params: &EntropyParams, support: RangeInclusive<i32>) -> Result<Vec<CdfTable>> {
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    params
        .mean
        .data()
        .iter()
        .zip(params.scale.data())
        .map(|(&m, &s)| CdfTable::gaussian(m, s, support.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn narrow_gaussian_concentrates_on_zero() {
        let t = CdfTable::gaussian(0.0, SCALE_FLOOR, DEFAULT_SUPPORT).unwrap();
        let (_, f0) = t.interval(0).unwrap();
        // oracle: Phi(0.5/0.11) - Phi(-0.5/0.11) = 1 - 5.5e-6
        let p0 = std_cdf(0.5 / SCALE_FLOOR) - std_cdf(-0.5 / SCALE_FLOOR);
        assert!(p0 > 0.9999);
        assert!(f0 as f64 / TOTAL_FREQ as f64 >= 0.97);
    }

    #[test]
    fn symmetric_params_give_symmetric_table() {
        let t = CdfTable::gaussian(0.0, 3.7, -20..=20).unwrap();
        for s in 0..=20 {
            assert_eq!(t.interval(s).unwrap().1, t.interval(-s).unwrap().1, "symbol {s}");
        }
    }

    #[test]
    fn tables_strictly_increase_and_sum_to_total() {
        for (m, s) in [(0.0, 0.11), (50.0, 1.0), (-126.7, 0.3), (3.3, 40.0), (500.0, 0.2)] {
            let t = CdfTable::gaussian(m, s, DEFAULT_SUPPORT).unwrap();
            assert_eq!(t.cdf()[0], 0);
            assert_eq!(*t.cdf().last().unwrap(), TOTAL_FREQ);
            assert!(t.cdf().windows(2).all(|w| w[1] > w[0]));
            assert_eq!(t.len(), 255);
        }
    }

    #[test]
    fn empty_support_rejected() {
        #[allow(clippy::reversed_empty_ranges)]
        let empty = 1..=0;
        assert!(matches!(CdfTable::gaussian(0.0, 1.0, empty.clone()), Err(Error::EmptySupport)));
        let p = EntropyParams::new(Tensor::zeros(1, 1, 1), Tensor::filled(1, 1, 1, 1.0)).unwrap();
        assert!(matches!(build_cdf(&p, empty), Err(Error::EmptySupport)));
    }

    #[test]
    fn lookup_inverts_interval() {
        let t = CdfTable::gaussian(1.3, 2.2, -10..=10).unwrap();
        for s in -10..=10 {
            let (lo, f) = t.interval(s).unwrap();
            assert_eq!(t.lookup(lo).0, s);
            assert_eq!(t.lookup(lo + f - 1).0, s);
        }
        assert!(t.interval(11).is_err());
    }
}
