//! TCP binding: one reader and one writer per socket.

use std::io;
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};

use super::{FrameReader, FrameWriter};
use crate::group::GroupContext;

/// Splits a connected socket into independently owned halves.
pub fn split(stream: TcpStream, ctx: &GroupContext) -> io::Result<(FrameReader<TcpStream>, FrameWriter<TcpStream>)> {
    stream.set_nodelay(true)?;
    let write_half = stream.try_clone()?;
    Ok((FrameReader::new(stream, ctx.clone()), FrameWriter::new(write_half, ctx.clone())))
}

pub fn connect<A: ToSocketAddrs>(
    addr: A,
    ctx: &GroupContext,
) -> io::Result<(FrameReader<TcpStream>, FrameWriter<TcpStream>)> {
    split(TcpStream::connect(addr)?, ctx)
}

pub fn bind<A: ToSocketAddrs>(addr: A) -> io::Result<TcpListener> {
    TcpListener::bind(addr)
}

/// Closes the writing direction so the peer's reader sees a clean end of
/// stream.
pub fn finish(w: &FrameWriter<TcpStream>) -> io::Result<()> {
    w.get_ref().shutdown(Shutdown::Write)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{Message, WireError};
    use std::thread;

    #[test]
    fn loopback_round_trip() {
        let ctx = GroupContext::transparent("tcp").unwrap();
        let listener = bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server_ctx = ctx.clone();
        let server = thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let (mut r, mut w) = split(stream, &server_ctx).unwrap();
            let mut seen = Vec::new();
            loop {
                match r.recv() {
                    Ok(m) => {
                        w.send(&m).unwrap();
                        seen.push(m);
                    }
                    Err(WireError::Closed) => break,
                    Err(e) => panic!("{e}"),
                }
            }
            seen.len()
        });
        let (mut r, mut w) = connect(addr, &ctx).unwrap();
        let msgs: Vec<_> = (0..5u16).map(|code| Message::Error { code, text: format!("m{code}") }).collect();
        for m in &msgs {
            w.send(m).unwrap();
        }
        finish(&w).unwrap();
        for m in &msgs {
            assert_eq!(&r.recv().unwrap(), m);
        }
        assert_eq!(server.join().unwrap(), 5);
    }
}
