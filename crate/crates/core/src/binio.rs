//! Little-endian helpers shared by the binary file formats.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BinError {
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("unsupported version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },
    #[error("truncated input at byte {offset}")]
    Truncated { offset: usize },
    #[error("trailing bytes after payload at byte {offset}")]
    Trailing { offset: usize },
    #[error("invalid data at byte {offset}: {reason}")]
    Invalid { offset: usize, reason: String },
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_f32(out: &mut Vec<u8>, v: f32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn header(magic: &[u8; 4], version: u32) -> Vec<u8> {
    let mut out = magic.to_vec();
    put_u32(&mut out, version);
    out
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks magic and version, leaving the reader positioned after them.
    pub fn open(
        bytes: &'a [u8],
        magic: &'static [u8; 4],
        version: u32,
    ) -> Result<Self, BinError> {
        let mut r = Self { bytes, pos: 0 };
        let expected = std::str::from_utf8(magic).unwrap_or("?");
        if r.take(4).map_err(|_| BinError::BadMagic { expected })? != magic {
            return Err(BinError::BadMagic { expected });
        }
        let found = r.u32()?;
        if found != version {
            return Err(BinError::Version {
                expected: version,
                found,
            });
        }
        Ok(r)
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], BinError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(BinError::Truncated { offset: self.pos })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, BinError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, BinError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32, BinError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64, BinError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn char(&mut self) -> Result<char, BinError> {
        let offset = self.pos;
        let cp = self.u32()?;
        char::from_u32(cp).ok_or(BinError::Invalid {
            offset,
            reason: format!("{cp:#x} is not a unicode scalar"),
        })
    }

    /// Length prefix for `count` items of `item_size` bytes; rejects counts
    /// the remaining input cannot hold so corrupt headers fail fast.
    pub fn count(&mut self, item_size: usize) -> Result<usize, BinError> {
        let offset = self.pos;
        let n = self.u32()? as usize;
        if n.saturating_mul(item_size) > self.bytes.len() - self.pos {
            return Err(BinError::Truncated { offset });
        }
        Ok(n)
    }

    pub fn finish(self) -> Result<(), BinError> {
        if self.pos != self.bytes.len() {
            return Err(BinError::Trailing { offset: self.pos });
        }
        Ok(())
    }
}
