//! In-memory byte pipes for tests and in-process runs.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::sync::Arc;

use parking_lot::{Condvar, Mutex};

#[derive(Default)]
struct State {
    buf: VecDeque<u8>,
    writer_closed: bool,
    reader_closed: bool,
}

#[derive(Default)]
struct Shared {
    state: Mutex<State>,
    ready: Condvar,
}

/// Creates a unidirectional pipe. Reads block until data arrives or the
/// writer is dropped.
pub fn pipe() -> (PipeWriter, PipeReader) {
    let shared = Arc::new(Shared::default());
    (PipeWriter { shared: shared.clone() }, PipeReader { shared })
}

pub struct PipeWriter {
    shared: Arc<Shared>,
}

pub struct PipeReader {
    shared: Arc<Shared>,
}

impl Write for PipeWriter {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        let mut st = self.shared.state.lock();
        if st.reader_closed {
            return Err(io::Error::new(io::ErrorKind::BrokenPipe, "pipe reader dropped"));
        }
        st.buf.extend(data);
        self.shared.ready.notify_all();
        Ok(data.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Drop for PipeWriter {
    fn drop(&mut self) {
        self.shared.state.lock().writer_closed = true;
        self.shared.ready.notify_all();
    }
}

impl Read for PipeReader {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        if out.is_empty() {
            return Ok(0);
        }
        let mut st = self.shared.state.lock();
        while st.buf.is_empty() && !st.writer_closed {
            self.shared.ready.wait(&mut st);
        }
        let n = out.len().min(st.buf.len());
        for (slot, b) in out.iter_mut().zip(st.buf.drain(..n)) {
            *slot = b;
        }
        Ok(n)
    }
}

impl Drop for PipeReader {
    fn drop(&mut self) {
        self.shared.state.lock().reader_closed = true;
    }
}

/// One end of a bidirectional in-memory connection.
pub struct DuplexEnd {
    pub reader: PipeReader,
    pub writer: PipeWriter,
}

pub fn duplex() -> (DuplexEnd, DuplexEnd) {
    let (aw, br) = pipe();
    let (bw, ar) = pipe();
    (DuplexEnd { reader: ar, writer: aw }, DuplexEnd { reader: br, writer: bw })
}
