//! Big-endian length-prefixed encoding helpers shared by the key, SMP and
//! frame encodings.

use num_bigint::BigUint;

use crate::error::{Error, Result};

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Malformed(format!(
                "truncated: wanted {n} bytes at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// `[u16 len][len bytes]`.
    pub(crate) fn prefixed(&mut self) -> Result<&'a [u8]> {
        let n = self.u16()? as usize;
        self.take(n)
    }

    pub(crate) fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Malformed(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

/// Big-endian bytes of `x`, left-padded with zeros to `width`.
pub(crate) fn to_fixed_be(x: &BigUint, width: usize) -> Result<Vec<u8>> {
    let raw = x.to_bytes_be();
    let raw: &[u8] = if raw == [0] { &[] } else { &raw };
    if raw.len() > width {
        return Err(Error::Internal(format!("integer of {} bytes exceeds width {width}", raw.len())));
    }
    let mut out = vec![0u8; width - raw.len()];
    out.extend_from_slice(raw);
    Ok(out)
}

/// `[u16 width][x big-endian, zero-padded to width]`.
pub(crate) fn put_mpi(out: &mut Vec<u8>, x: &BigUint, width: usize) -> Result<()> {
    out.extend_from_slice(&(width as u16).to_be_bytes());
    out.extend_from_slice(&to_fixed_be(x, width)?);
    Ok(())
}

pub(crate) fn get_mpi(r: &mut Reader<'_>) -> Result<BigUint> {
    Ok(BigUint::from_bytes_be(r.prefixed()?))
}
