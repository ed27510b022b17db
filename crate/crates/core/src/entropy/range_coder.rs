//! Byte-oriented range coder over 16-bit frequency tables.
//!
//! The encoder keeps a 64-bit `low` (33 significant bits, the top one being a
//! pending carry) and a 32-bit `range`, renormalizing a byte at a time once
//! `range < 2^24`. Carries are resolved through a one-byte cache plus a count
//! of pending `0xFF` bytes. `finish` shifts out five bytes; the decoder reads
//! exactly as many bytes as the encoder wrote.

use super::cdf::{CdfTable, PRECISION_BITS};
use crate::error::{Error, Result};

const TOP: u32 = 1 << 24;

/// Bytes produced by encoding zero symbols.
pub const TERMINATOR_LEN: usize = 5;

#[derive(Debug)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut temp = self.cache;
            loop {
                self.out.push(temp.wrapping_add(carry));
                temp = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.cache_size += 1;
        self.low = ((self.low as u32) << 8) as u64;
    }

    /// Codes the interval `[cum, cum + freq)` out of `2^16`.
    pub fn encode_interval(&mut self, cum: u32, freq: u32) {
        debug_assert!(freq > 0 && cum + freq <= 1 << PRECISION_BITS);
        let r = self.range >> PRECISION_BITS;
        self.low += r as u64 * cum as u64;
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    pub fn encode(&mut self, symbol: i32, table: &CdfTable) -> Result<()> {
        let (cum, freq) = table.interval(symbol)?;
        self.encode_interval(cum, freq);
        Ok(())
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..TERMINATOR_LEN {
            self.shift_low();
        }
        self.out
    }
}

#[derive(Debug)]
pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    range: u32,
    code: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self> {
        let mut dec = Self {
            data,
            pos: 0,
            range: u32::MAX,
            code: 0,
        };
        for _ in 0..TERMINATOR_LEN {
            dec.code = (dec.code << 8) | dec.next_byte()? as u32;
        }
        Ok(dec)
    }

    fn next_byte(&mut self) -> Result<u8> {
        let b = *self
            .data
            .get(self.pos)
            .ok_or(Error::Truncated("range coder ran past the end of its section"))?;
        self.pos += 1;
        Ok(b)
    }

    /// Bytes consumed so far, including look-ahead held in the code register.
    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn decode(&mut self, table: &CdfTable) -> Result<i32> {
        let r = self.range >> PRECISION_BITS;
        let target = (self.code / r).min((1 << PRECISION_BITS) - 1);
        let (symbol, cum, freq) = table.lookup(target);
        self.code = self.code.wrapping_sub(r * cum);
        self.range = r * freq;
        while self.range < TOP {
            self.code = (self.code << 8) | self.next_byte()? as u32;
            self.range <<= 8;
        }
        Ok(symbol)
    }
}

/// Encodes `symbols[i]` with `tables[i]`.
pub fn range_encode(symbols: &[i32], tables: &[CdfTable]) -> Result<Vec<u8>> {
    if symbols.len() != tables.len() {
        return Err(Error::Dimension(format!("{} symbols, {} tables", symbols.len(), tables.len())));
    }
    let mut enc = RangeEncoder::new();
    for (&s, t) in symbols.iter().zip(tables) {
        enc.encode(s, t)?;
    }
    Ok(enc.finish())
}

/// Decodes `count` symbols, using `tables[i]` for the `i`-th.
pub fn range_decode(bytes: &[u8], tables: &[CdfTable], count: usize) -> Result<Vec<i32>> {
    if tables.len() < count {
        return Err(Error::Dimension(format!("{count} symbols, {} tables", tables.len())));
    }
    let mut dec = RangeDecoder::new(bytes)?;
    tables[..count].iter().map(|t| dec.decode(t)).collect()
}
