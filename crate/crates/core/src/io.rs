//! Little-endian binary helpers shared by the on-disk formats.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Reader that tracks its byte offset so format errors can point at it.
pub(crate) struct BinReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> BinReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner, offset: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        let mut filled = 0;
        while filled < N {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => {
                    return Err(Error::format(
                        self.offset + filled as u64,
                        format!("truncated input while reading {what}"),
                    ))
                }
                Ok(n) => filled += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.offset += N as u64;
        Ok(buf)
    }

    pub fn magic(&mut self, expected: &[u8]) -> Result<()> {
        let start = self.offset;
        let mut got = vec![0u8; expected.len()];
        for b in got.iter_mut() {
            *b = self.bytes::<1>("magic")?[0];
        }
        if got != expected {
            return Err(Error::format(
                start,
                format!(
                    "bad magic: expected {:?}, found {:?}",
                    String::from_utf8_lossy(expected),
                    String::from_utf8_lossy(&got)
                ),
            ));
        }
        Ok(())
    }

    pub fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.bytes::<1>(what)?[0])
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(what)?))
    }

    pub fn usize(&mut self, what: &str) -> Result<usize> {
        let at = self.offset;
        let v = self.u64(what)?;
        usize::try_from(v).map_err(|_| Error::format(at, format!("{what} does not fit in memory")))
    }

    /// Reads a float and rejects NaN / infinity.
    pub fn finite_f64(&mut self, what: &str) -> Result<f64> {
        let at = self.offset;
        let v = f64::from_le_bytes(self.bytes(what)?);
        if !v.is_finite() {
            return Err(Error::format(at, format!("non-finite value in {what}")));
        }
        Ok(v)
    }

    pub fn f64_vec(&mut self, len: usize, what: &str) -> Result<Vec<f64>> {
        (0..len).map(|_| self.finite_f64(what)).collect()
    }

    pub fn string(&mut self, what: &str) -> Result<String> {
        let at = self.offset;
        let len = self.u32(what)? as usize;
        let mut buf = Vec::with_capacity(len);
        for _ in 0..len {
            buf.push(self.u8(what)?);
        }
        String::from_utf8(buf).map_err(|_| Error::format(at, format!("{what} is not valid UTF-8")))
    }

    /// Fails unless the stream is exhausted.
    pub fn finish(mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe)? {
            0 => Ok(()),
            _ => Err(Error::format(self.offset, "trailing bytes after payload")),
        }
    }
}

pub(crate) struct BinWriter<W> {
    inner: W,
}

impl<W: Write> BinWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner }
    }

    pub fn raw(&mut self, bytes: &[u8]) -> Result<()> {
        self.inner.write_all(bytes)?;
        Ok(())
    }

    pub fn u8(&mut self, v: u8) -> Result<()> {
        self.raw(&[v])
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.raw(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> Result<()> {
        self.raw(&v.to_le_bytes())
    }

    pub fn usize(&mut self, v: usize) -> Result<()> {
        self.u64(v as u64)
    }

    pub fn f64(&mut self, v: f64) -> Result<()> {
        self.raw(&v.to_le_bytes())
    }

    pub fn f64_slice(&mut self, vs: &[f64]) -> Result<()> {
        for &v in vs {
            self.f64(v)?;
        }
        Ok(())
    }

    pub fn string(&mut self, s: &str) -> Result<()> {
        let len = u32::try_from(s.len()).map_err(|_| Error::argument("string too long"))?;
        self.u32(len)?;
        self.raw(s.as_bytes())
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}
