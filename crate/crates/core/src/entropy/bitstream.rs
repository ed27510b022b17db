//! The two-layer `.sicm` container.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "SICM"
//!      4     1  version (1)
//!      5     1  flags, bit0 = enhancement present, other bits zero
//!      6     2  width  (big-endian)
//!      8     2  height (big-endian)
//!     10     1  n
//!     11     1  m (0 without enhancement)
//!     12     1  lambda_id
//!     13     8  model_hash (big-endian)
//!     21        sections: u32 BE length + payload, in order z, y[, za, ya]
//! ```

use std::ops::Range;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SICM";
pub const VERSION: u8 = 1;
pub const FLAG_ENHANCEMENT: u8 = 0b0000_0001;
pub const HEADER_LEN: usize = 21;
/// Bytes of the length prefix in front of every section.
pub const SECTION_PREFIX: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub width: u16,
    pub height: u16,
    pub n: u8,
    pub m: u8,
    pub lambda_id: u8,
    pub model_hash: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnhancementSections {
    pub za: Vec<u8>,
    pub ya: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScalableBitstream {
    pub header: Header,
    pub z: Vec<u8>,
    pub y: Vec<u8>,
    pub enhancement: Option<EnhancementSections>,
}

/// Byte ranges of each section payload inside the serialized stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SectionLayout {
    pub z: Range<usize>,
    pub y: Range<usize>,
    pub za: Option<Range<usize>>,
    pub ya: Option<Range<usize>>,
}

impl ScalableBitstream {
    pub fn has_enhancement(&self) -> bool {
        self.enhancement.is_some()
    }

    pub fn flags(&self) -> u8 {
        if self.has_enhancement() {
            FLAG_ENHANCEMENT
        } else {
            0
        }
    }

    /// Header plus the z and y sections.
    pub fn base_len(&self) -> usize {
        HEADER_LEN + 2 * SECTION_PREFIX + self.z.len() + self.y.len()
    }

    /// The za and ya sections, or 0.
    pub fn enhancement_len(&self) -> usize {
        self.enhancement
            .as_ref()
            .map_or(0, |e| 2 * SECTION_PREFIX + e.za.len() + e.ya.len())
    }

    pub fn len(&self) -> usize {
        self.base_len() + self.enhancement_len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The machine-only stream: enhancement sections dropped, flag and `m`
    /// cleared.
    pub fn strip_enhancement(&self) -> Self {
        Self {
            header: Header { m: 0, ..self.header },
            z: self.z.clone(),
            y: self.y.clone(),
            enhancement: None,
        }
    }

    pub fn layout(&self) -> SectionLayout {
        let mut at = HEADER_LEN;
        let mut next = |len: usize| {
            let start = at + SECTION_PREFIX;
            at = start + len;
            start..at
        };
        let z = next(self.z.len());
        let y = next(self.y.len());
        let (za, ya) = match &self.enhancement {
            Some(e) => (Some(next(e.za.len())), Some(next(e.ya.len()))),
            None => (None, None),
        };
        SectionLayout { z, y, za, ya }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let h = &self.header;
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.flags());
        out.extend_from_slice(&h.width.to_be_bytes());
        out.extend_from_slice(&h.height.to_be_bytes());
        out.push(h.n);
        out.push(if self.has_enhancement() { h.m } else { 0 });
        out.push(h.lambda_id);
        out.extend_from_slice(&h.model_hash.to_be_bytes());
        let mut sections = vec![&self.z, &self.y];
        if let Some(e) = &self.enhancement {
            sections.extend([&e.za, &e.ya]);
        }
        for s in sections {
            let len = u32::try_from(s.len()).map_err(|_| Error::Malformed("section exceeds 4 GiB".into()))?;
            out.extend_from_slice(&len.to_be_bytes());
            out.extend_from_slice(s);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "header")?;
        if magic != MAGIC {
            return Err(Error::BadMagic {
                expected: MAGIC.to_vec(),
                found: magic.to_vec(),
            });
        }
        let version = r.u8("header")?;
        if version != VERSION {
            return Err(Error::Version(version));
        }
        let flags = r.u8("header")?;
        if flags & !FLAG_ENHANCEMENT != 0 {
            return Err(Error::Malformed(format!("reserved flag bits set: {flags:#04x}")));
        }
        let header = Header {
            width: r.u16("header")?,
            height: r.u16("header")?,
            n: r.u8("header")?,
            m: r.u8("header")?,
            lambda_id: r.u8("header")?,
            model_hash: u64::from_be_bytes(r.take(8, "header")?.try_into().expect("8 bytes")),
        };
        if header.width == 0 || header.height == 0 || header.n == 0 {
            return Err(Error::Malformed("zero width, height or group count".into()));
        }
        let enhanced = flags & FLAG_ENHANCEMENT != 0;
        if enhanced && (header.m == 0 || header.m > header.n) {
            return Err(Error::Malformed(format!("m = {} with n = {}", header.m, header.n)));
        }
        if !enhanced && header.m != 0 {
            return Err(Error::Malformed("m set without an enhancement layer".into()));
        }
        let z = r.section("z section")?;
        let y = r.section("y section")?;
        let enhancement = if enhanced {
            Some(EnhancementSections {
                za: r.section("za section")?,
                ya: r.section("ya section")?,
            })
        } else {
            None
        };
        if r.pos != bytes.len() {
            return Err(Error::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            header,
            z,
            y,
            enhancement,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len()).ok_or(Error::Truncated(what))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn section(&mut self, what: &'static str) -> Result<Vec<u8>> {
        let len = u32::from_be_bytes(self.take(4, what)?.try_into().expect("4 bytes"));
        Ok(self.take(len as usize, what)?.to_vec())
    }
}
