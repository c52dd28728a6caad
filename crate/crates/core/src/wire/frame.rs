use std::io::{self, ErrorKind, Read, Write};

use super::{decode, encode, Message, WireError};
use crate::group::GroupContext;

pub const DEFAULT_MAX_FRAME: usize = 1 << 20;

/// Fills `buf`, resuming after partial reads and interrupts. Returns the
/// number of bytes read before a clean end of stream.
fn read_full<R: Read + ?Sized>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut done = 0;
    while done < buf.len() {
        match r.read(&mut buf[done..]) {
            Ok(0) => break,
            Ok(n) => done += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(done)
}

/// Reads one frame payload. The declared length is checked against `max`
/// before the payload buffer is allocated.
pub fn read_payload<R: Read + ?Sized>(r: &mut R, max: usize) -> Result<Vec<u8>, WireError> {
    let mut len = [0u8; 4];
    match read_full(r, &mut len)? {
        0 => return Err(WireError::Closed),
        4 => {}
        _ => return Err(WireError::Truncated),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > max {
        return Err(WireError::Oversize { len, max });
    }
    let mut payload = vec![0u8; len];
    if read_full(r, &mut payload)? != len {
        return Err(WireError::Truncated);
    }
    Ok(payload)
}

pub fn read_frame<R: Read + ?Sized>(r: &mut R, ctx: &GroupContext, max: usize) -> Result<Message, WireError> {
    let payload = read_payload(r, max)?;
    Ok(decode(ctx, &payload)?)
}

/// Writes one frame and returns the full frame bytes that went out.
pub fn write_frame<W: Write + ?Sized>(
    w: &mut W,
    ctx: &GroupContext,
    m: &Message,
    max: usize,
) -> Result<Vec<u8>, WireError> {
    let payload = encode(ctx, m);
    if payload.len() > max {
        return Err(WireError::Oversize { len: payload.len(), max });
    }
    let mut frame = Vec::with_capacity(4 + payload.len());
    frame.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    frame.extend_from_slice(&payload);
    w.write_all(&frame)?;
    w.flush()?;
    Ok(frame)
}

/// Reading half of a connection.
pub struct FrameReader<R> {
    inner: R,
    ctx: GroupContext,
    max: usize,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R, ctx: GroupContext) -> Self {
        FrameReader { inner, ctx, max: DEFAULT_MAX_FRAME }
    }

    pub fn with_max(mut self, max: usize) -> Self {
        self.max = max;
        self
    }

    pub fn recv(&mut self) -> Result<Message, WireError> {
        read_frame(&mut self.inner, &self.ctx, self.max)
    }

    pub fn get_ref(&self) -> &R {
        &self.inner
    }
}

/// Writing half of a connection.
pub struct FrameWriter<W> {
    inner: W,
    ctx: GroupContext,
    max: usize,
}

impl<W: Write> FrameWriter<W> {
    pub fn new(inner: W, ctx: GroupContext) -> Self {
        FrameWriter { inner, ctx, max: DEFAULT_MAX_FRAME }
    }

    pub fn with_max(mut self, max: usize) -> Self {
        self.max = max;
        self
    }

    /// Sends `m`; returns the frame bytes for transcripts.
    pub fn send(&mut self, m: &Message) -> Result<Vec<u8>, WireError> {
        write_frame(&mut self.inner, &self.ctx, m, self.max)
    }

    pub fn get_ref(&self) -> &W {
        &self.inner
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Yields one byte per read call.
    struct Trickle<'a>(&'a [u8]);

    impl Read for Trickle<'_> {
        fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
            match self.0.split_first() {
                Some((b, rest)) if !buf.is_empty() => {
                    buf[0] = *b;
                    self.0 = rest;
                    Ok(1)
                }
                _ => Ok(0),
            }
        }
    }

    fn ctx() -> GroupContext {
        GroupContext::transparent("frame").unwrap()
    }

    #[test]
    fn partial_reads_are_resumed() {
        let ctx = ctx();
        let m = Message::Error { code: 7, text: "late".into() };
        let mut bytes = Vec::new();
        write_frame(&mut bytes, &ctx, &m, DEFAULT_MAX_FRAME).unwrap();
        let mut r = Trickle(&bytes);
        assert_eq!(read_frame(&mut r, &ctx, DEFAULT_MAX_FRAME).unwrap(), m);
        assert!(matches!(read_frame(&mut r, &ctx, DEFAULT_MAX_FRAME), Err(WireError::Closed)));
    }

    #[test]
    fn oversize_rejected_before_allocation() {
        let ctx = ctx();
        // Declares 4 GiB - 1 with no payload behind it.
        let mut r: &[u8] = &[0xFF, 0xFF, 0xFF, 0xFF];
        assert!(matches!(
            read_frame(&mut r, &ctx, DEFAULT_MAX_FRAME),
            Err(WireError::Oversize { len: 0xFFFF_FFFF, .. })
        ));
        let big = Message::UploadPolicy { xml: "x".repeat(100) };
        assert!(matches!(write_frame(&mut Vec::new(), &ctx, &big, 64), Err(WireError::Oversize { .. })));
    }

    #[test]
    fn truncation_detected() {
        let ctx = ctx();
        let mut bytes = Vec::new();
        write_frame(&mut bytes, &ctx, &Message::UploadPolicy { xml: "abc".into() }, DEFAULT_MAX_FRAME).unwrap();
        for cut in [2, 6, bytes.len() - 1] {
            let mut r: &[u8] = &bytes[..cut];
            assert!(matches!(read_frame(&mut r, &ctx, DEFAULT_MAX_FRAME), Err(WireError::Truncated)), "cut={cut}");
        }
    }
}
