//! Byte-level helpers shared by the key, ciphertext and wire encodings.
//!
//! Integers are big-endian. Group elements are written at the context's
//! fixed element width, so they need no per-element length prefix.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use thiserror::Error;

use crate::group::{ElemG, ElemGT, GroupContext, GroupError, Scalar};

/// Version byte carried by every tagged object and wire payload.
pub const FORMAT_VERSION: u8 = 0x01;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("input truncated")]
    Truncated,
    #[error("{0} trailing bytes after object")]
    Trailing(usize),
    #[error("expected type tag {expected:#04x}, found {found:#04x}")]
    WrongType { expected: u8, found: u8 },
    #[error("unknown tag {0:#04x}")]
    UnknownTag(u8),
    #[error("unsupported format version {0:#04x}")]
    UnsupportedVersion(u8),
    #[error("element width {found} does not match the group ({expected})")]
    ElementWidth { expected: usize, found: usize },
    #[error("invalid field: {0}")]
    Invalid(&'static str),
    #[error("nesting deeper than {0}")]
    TooDeep(usize),
    #[error("string is not valid UTF-8")]
    Utf8,
    #[error("invalid base64 text")]
    Base64,
    #[error("element: {0}")]
    Element(#[from] GroupError),
}

#[derive(Debug, Default, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer::default()
    }

    /// Starts a tagged object: `[tag][version][element width]`.
    pub fn with_header(tag: u8, ctx: &GroupContext) -> Self {
        let mut w = Writer::new();
        w.u8(tag);
        w.u8(FORMAT_VERSION);
        w.u8(ctx.element_len() as u8);
        w
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u16(&mut self, v: u16) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    /// `u32` length prefix, then the bytes.
    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        self.u32(u32::try_from(bytes.len()).expect("field longer than 4 GiB"));
        self.raw(bytes)
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn scalar(&mut self, s: Scalar) -> &mut Self {
        self.raw(&s.to_be_bytes())
    }

    pub fn elem_g(&mut self, e: &ElemG) -> &mut Self {
        e.encode_into(&mut self.buf);
        self
    }

    pub fn elem_gt(&mut self, e: &ElemGT) -> &mut Self {
        e.encode_into(&mut self.buf);
        self
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug, Clone)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    /// Consumes and checks a header written by [`Writer::with_header`].
    pub fn header(&mut self, tag: u8, ctx: &GroupContext) -> Result<(), CodecError> {
        let found = self.u8()?;
        if found != tag {
            return Err(CodecError::WrongType { expected: tag, found });
        }
        let version = self.u8()?;
        if version != FORMAT_VERSION {
            return Err(CodecError::UnsupportedVersion(version));
        }
        let width = self.u8()? as usize;
        if width != ctx.element_len() {
            return Err(CodecError::ElementWidth { expected: ctx.element_len(), found: width });
        }
        Ok(())
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.remaining() < n {
            return Err(CodecError::Truncated);
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, CodecError> {
        self.array().map(u16::from_be_bytes)
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        self.array().map(u32::from_be_bytes)
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        self.array().map(u64::from_be_bytes)
    }

    /// Reads a `u32`-prefixed field. The prefix is checked against the
    /// remaining input before anything is allocated.
    pub fn bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    pub fn str(&mut self) -> Result<&'a str, CodecError> {
        std::str::from_utf8(self.bytes()?).map_err(|_| CodecError::Utf8)
    }

    pub fn string(&mut self) -> Result<String, CodecError> {
        self.str().map(str::to_owned)
    }

    pub fn scalar(&mut self) -> Result<Scalar, CodecError> {
        Scalar::from_be_bytes(self.array()?).ok_or(CodecError::Invalid("scalar not reduced"))
    }

    pub fn elem_g(&mut self, ctx: &GroupContext) -> Result<ElemG, CodecError> {
        Ok(ctx.decode_g(self.take(ctx.element_len())?)?)
    }

    pub fn elem_gt(&mut self, ctx: &GroupContext) -> Result<ElemGT, CodecError> {
        Ok(ctx.decode_gt(self.take(ctx.element_len())?)?)
    }

    /// Count prefix for a sequence whose items take at least `min_item`
    /// bytes each; rejects counts the remaining input cannot hold.
    pub fn count(&mut self, min_item: usize) -> Result<usize, CodecError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item.max(1)) > self.remaining() {
            return Err(CodecError::Truncated);
        }
        Ok(n)
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn finish(self) -> Result<(), CodecError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(CodecError::Trailing(n)),
        }
    }
}

pub fn to_base64(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

pub fn from_base64(text: &str) -> Result<Vec<u8>, CodecError> {
    STANDARD.decode(text.trim()).map_err(|_| CodecError::Base64)
}
