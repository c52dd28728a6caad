//! The cloud behind a TCP listener.
//!
//! A connection whose first message is `Subscribe` belongs to that user and
//! receives its deliveries; any other connection is treated as an owner's.
//! Deliveries are written by the thread that ingested the ciphertext, so
//! per-stream order carries over to each user's socket.

use std::collections::HashMap;
use std::io;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use parking_lot::Mutex;

use super::{CloudService, Party, RoleError};
use crate::wire::{tcp, FrameWriter, Message, WireError};

/// Observer for every frame the cloud sends.
pub type FrameSink = Arc<dyn Fn(Party, &[u8]) + Send + Sync>;

type UserWriters = Arc<Mutex<HashMap<String, Arc<Mutex<FrameWriter<TcpStream>>>>>>;

pub struct CloudServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
    connections: Arc<Mutex<Vec<JoinHandle<()>>>>,
    users: UserWriters,
}

struct Shared {
    cloud: Arc<CloudService>,
    users: UserWriters,
    sink: Option<FrameSink>,
}

impl Shared {
    fn send(&self, to: Party, w: &mut FrameWriter<TcpStream>, m: &Message) -> Result<(), WireError> {
        let frame = w.send(m)?;
        if let Some(sink) = &self.sink {
            sink(to, &frame);
        }
        Ok(())
    }

    fn report(&self, to: &Party, w: &mut FrameWriter<TcpStream>, e: &RoleError) {
        log::warn!("{to:?}: {e}");
        let m = Message::Error { code: e.code(), text: e.to_string() };
        if let Err(e) = self.send(to.clone(), w, &m) {
            log::warn!("{to:?}: could not report error: {e}");
        }
    }

    fn serve(&self, stream: TcpStream) -> Result<(), WireError> {
        let (mut reader, writer) = tcp::split(stream, self.cloud.context())?;
        let writer = Arc::new(Mutex::new(writer));
        let mut peer: Option<Party> = None;
        loop {
            let m = match reader.recv() {
                Ok(m) => m,
                Err(WireError::Closed) => break,
                Err(e) => return Err(e),
            };
            let who = peer.get_or_insert_with(|| match &m {
                Message::Subscribe { user_id, .. } => {
                    self.users.lock().insert(user_id.clone(), writer.clone());
                    Party::User(user_id.clone())
                }
                _ => Party::Owner(String::new()),
            });
            if let (Party::User(owner_of_conn), Message::Subscribe { user_id, .. }) = (&*who, &m) {
                if owner_of_conn != user_id {
                    let e = RoleError::Inconsistent("subscription for another user");
                    self.report(who, &mut writer.lock(), &e);
                    continue;
                }
            }
            if let (Party::Owner(s), Message::RegisterStream { stream, .. }) = (&mut *who, &m) {
                s.clone_from(stream);
            }
            match self.cloud.handle(m) {
                Ok(h) => {
                    for d in h.deliveries {
                        let target = self.users.lock().get(&d.user_id).cloned();
                        match target {
                            Some(w) => {
                                if let Err(e) = self.send(Party::User(d.user_id.clone()), &mut w.lock(), &d.message) {
                                    log::warn!("delivery to {:?} failed: {e}", d.user_id);
                                }
                            }
                            None => log::warn!("user {:?} has no open connection", d.user_id),
                        }
                    }
                    for e in &h.rejected {
                        self.report(who, &mut writer.lock(), e);
                    }
                }
                Err(e) => self.report(who, &mut writer.lock(), &e),
            }
        }
        // Owners learn that everything they sent has been processed when
        // their reader sees the end of stream.
        if let Some(Party::Owner(_)) = peer {
            let _ = writer.lock().get_ref().shutdown(Shutdown::Write);
        }
        Ok(())
    }
}

impl CloudServer {
    pub fn spawn(listener: TcpListener, cloud: Arc<CloudService>, sink: Option<FrameSink>) -> io::Result<Self> {
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let connections: Arc<Mutex<Vec<JoinHandle<()>>>> = Arc::default();
        let users: UserWriters = Arc::default();
        let shared = Arc::new(Shared { cloud, users: users.clone(), sink });
        let acceptor = {
            let stop = stop.clone();
            let connections = connections.clone();
            thread::Builder::new().name("cloud-accept".into()).spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let conn = match conn {
                        Ok(c) => c,
                        Err(e) => {
                            log::warn!("accept failed: {e}");
                            continue;
                        }
                    };
                    let shared = shared.clone();
                    let handle = thread::spawn(move || {
                        let peer = conn.peer_addr().ok();
                        if let Err(e) = shared.serve(conn) {
                            log::warn!("connection {peer:?}: {e}");
                        }
                    });
                    connections.lock().push(handle);
                }
            })?
        };
        Ok(CloudServer { addr, stop, acceptor: Some(acceptor), connections, users })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the listener fails; for long-running deployments.
    pub fn wait(mut self) {
        if let Some(a) = self.acceptor.take() {
            let _ = a.join();
        }
    }

    /// Stops accepting, closes every user's delivery stream and waits for
    /// all connections to end.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the acceptor with a throwaway connection.
        let _ = TcpStream::connect(self.addr);
        if let Some(a) = self.acceptor.take() {
            let _ = a.join();
        }
        for w in self.users.lock().values() {
            let _ = w.lock().get_ref().shutdown(Shutdown::Write);
        }
        let handles: Vec<_> = self.connections.lock().drain(..).collect();
        for h in handles {
            let _ = h.join();
        }
    }
}
