//! Little-endian byte container primitives for the `LSAT` checkpoint files.

use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"LSAT";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn header(&mut self) {
        self.buf.extend_from_slice(MAGIC);
        self.u16(FORMAT_VERSION);
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn str(&mut self, s: &str) -> Result<()> {
        self.u32(len_u32(s.len(), "string")?);
        self.buf.extend_from_slice(s.as_bytes());
        Ok(())
    }

    /// Entries only, row-major; the shape is written by the caller.
    pub fn matrix<T: Scalar>(&mut self, m: &Matrix<T>) {
        for &x in m.as_slice() {
            self.f64(x.as_f64());
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub fn len_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Usage(format!("{what} too large for u32 length field: {n}")))
}

pub struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn err(&self, msg: impl Into<String>) -> Error {
        Error::Format { offset: self.pos, msg: msg.into() }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.err(format!("truncated: need {n} bytes, {} available", self.remaining())));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn header(&mut self) -> Result<()> {
        let magic = self.take(4)?;
        if magic != MAGIC {
            self.pos -= 4;
            return Err(self.err(format!("bad magic {magic:?}")));
        }
        let version = self.u16()?;
        if version != FORMAT_VERSION {
            self.pos -= 2;
            return Err(self.err(format!("unsupported version {version}")));
        }
        Ok(())
    }

    pub fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn str(&mut self) -> Result<String> {
        let start = self.pos;
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec())
            .map_err(|_| Error::Format { offset: start, msg: "invalid UTF-8 in string".into() })
    }

    pub fn matrix<T: Scalar>(&mut self, rows: usize, cols: usize) -> Result<Matrix<T>> {
        let start = self.pos;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= self.remaining()))
            .ok_or_else(|| self.err(format!("truncated: {rows}x{cols} matrix does not fit")))?;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let x = self.f64()?;
            let t = T::cast(x);
            if t.as_f64().to_bits() != x.to_bits() {
                return Err(self.err(format!("value {x} not representable as {}", T::NAME)));
            }
            data.push(t);
        }
        Matrix::new(rows, cols, data).map_err(|e| Error::Format { offset: start, msg: e.to_string() })
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(self.err(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}
