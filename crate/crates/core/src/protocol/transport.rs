//! Frame delivery between roles.
//!
//! Every endpoint owns an inbox. `send` to [`Endpoint::AllClients`] is one
//! logical broadcast fanned out to each registered client.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::net::{Shutdown, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use crate::error::{Error, Result};

use super::wire::read_frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Endpoint {
    Server,
    Aggregator,
    Client(u32),
    AllClients,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Server => f.write_str("server"),
            Endpoint::Aggregator => f.write_str("aggregator"),
            Endpoint::Client(i) => write!(f, "client{i}"),
            Endpoint::AllClients => f.write_str("clients"),
        }
    }
}

pub trait Transport: Send + Sync {
    fn send(&self, from: Endpoint, to: Endpoint, frame: Vec<u8>) -> Result<()>;
    /// Blocks until a frame for `at` arrives.
    fn recv(&self, at: Endpoint) -> Result<Vec<u8>>;
}

fn fan_out(to: Endpoint, clients: u32) -> Vec<Endpoint> {
    match to {
        Endpoint::AllClients => (0..clients).map(Endpoint::Client).collect(),
        other => vec![other],
    }
}

/// Receive timeout; a stalled protocol is reported instead of hanging.
const RECV_TIMEOUT: Duration = Duration::from_secs(600);

struct Inbox {
    tx: Sender<Vec<u8>>,
    rx: Mutex<Receiver<Vec<u8>>>,
}

impl Inbox {
    fn new() -> Self {
        let (tx, rx) = channel();
        Inbox { tx, rx: Mutex::new(rx) }
    }

    fn recv(&self, at: Endpoint) -> Result<Vec<u8>> {
        self.rx
            .lock()
            .map_err(|_| Error::Transport(format!("inbox of {at} poisoned")))?
            .recv_timeout(RECV_TIMEOUT)
            .map_err(|e| Error::Transport(format!("{at}: {e}")))
    }
}

fn inboxes(clients: u32) -> HashMap<Endpoint, Inbox> {
    let mut map = HashMap::new();
    map.insert(Endpoint::Server, Inbox::new());
    map.insert(Endpoint::Aggregator, Inbox::new());
    for i in 0..clients {
        map.insert(Endpoint::Client(i), Inbox::new());
    }
    map
}

/// Channels inside one process.
pub struct InProcess {
    clients: u32,
    inboxes: HashMap<Endpoint, Inbox>,
}

impl InProcess {
    pub fn new(clients: u32) -> Self {
        InProcess {
            clients,
            inboxes: inboxes(clients),
        }
    }

    fn inbox(&self, at: Endpoint) -> Result<&Inbox> {
        self.inboxes
            .get(&at)
            .ok_or_else(|| Error::Transport(format!("unknown endpoint {at}")))
    }
}

impl Transport for InProcess {
    fn send(&self, _from: Endpoint, to: Endpoint, frame: Vec<u8>) -> Result<()> {
        for dest in fan_out(to, self.clients) {
            self.inbox(dest)?
                .tx
                .send(frame.clone())
                .map_err(|e| Error::Transport(format!("{dest}: {e}")))?;
        }
        Ok(())
    }

    fn recv(&self, at: Endpoint) -> Result<Vec<u8>> {
        self.inbox(at)?.recv(at)
    }
}

/// Length-prefixed frames over loopback TCP. Each endpoint listens on its
/// own port; a reader thread per accepted connection feeds the inbox.
pub struct Tcp {
    clients: u32,
    inboxes: Arc<HashMap<Endpoint, Inbox>>,
    addrs: HashMap<Endpoint, std::net::SocketAddr>,
    streams: Mutex<HashMap<(Endpoint, Endpoint), TcpStream>>,
    acceptors: Vec<JoinHandle<()>>,
    closing: Arc<AtomicBool>,
}

impl Tcp {
    pub fn new(clients: u32) -> Result<Self> {
        let inboxes = Arc::new(inboxes(clients));
        let closing = Arc::new(AtomicBool::new(false));
        let mut addrs = HashMap::new();
        let mut acceptors = Vec::new();
        for &at in inboxes.keys() {
            let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| Error::Transport(e.to_string()))?;
            addrs.insert(at, listener.local_addr().map_err(|e| Error::Transport(e.to_string()))?);
            let tx = inboxes[&at].tx.clone();
            let closing = Arc::clone(&closing);
            acceptors.push(std::thread::spawn(move || {
                for stream in listener.incoming() {
                    let Ok(mut stream) = stream else { break };
                    if closing.load(Ordering::SeqCst) {
                        break;
                    }
                    let tx = tx.clone();
                    std::thread::spawn(move || {
                        while let Ok(frame) = read_frame(&mut stream) {
                            if tx.send(frame).is_err() {
                                break;
                            }
                        }
                    });
                }
            }));
        }
        Ok(Tcp {
            clients,
            inboxes,
            addrs,
            streams: Mutex::new(HashMap::new()),
            acceptors,
            closing,
        })
    }
}

impl Transport for Tcp {
    fn send(&self, from: Endpoint, to: Endpoint, frame: Vec<u8>) -> Result<()> {
        let mut streams = self
            .streams
            .lock()
            .map_err(|_| Error::Transport("stream table poisoned".into()))?;
        for dest in fan_out(to, self.clients) {
            let addr = self
                .addrs
                .get(&dest)
                .ok_or_else(|| Error::Transport(format!("unknown endpoint {dest}")))?;
            let stream = match streams.entry((from, dest)) {
                std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::hash_map::Entry::Vacant(e) => {
                    let s = TcpStream::connect(addr).map_err(|e| Error::Transport(format!("{dest}: {e}")))?;
                    s.set_nodelay(true).ok();
                    e.insert(s)
                }
            };
            stream
                .write_all(&frame)
                .map_err(|e| Error::Transport(format!("{from} -> {dest}: {e}")))?;
        }
        Ok(())
    }

    fn recv(&self, at: Endpoint) -> Result<Vec<u8>> {
        self.inboxes
            .get(&at)
            .ok_or_else(|| Error::Transport(format!("unknown endpoint {at}")))?
            .recv(at)
    }
}

impl Drop for Tcp {
    fn drop(&mut self) {
        if let Ok(mut streams) = self.streams.lock() {
            for (_, s) in streams.drain() {
                let _ = s.shutdown(Shutdown::Both);
            }
        }
        // Wake each acceptor with a throwaway connection so it sees the flag.
        self.closing.store(true, Ordering::SeqCst);
        for addr in self.addrs.values() {
            let _ = TcpStream::connect(addr);
        }
        for handle in self.acceptors.drain(..) {
            let _ = handle.join();
        }
    }
}

/// One observed frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tapped {
    pub from: Endpoint,
    pub to: Endpoint,
    pub frame: Vec<u8>,
}

/// Records every frame passing through an inner transport.
pub struct Tap<T> {
    inner: T,
    log: Mutex<Vec<Tapped>>,
}

impl<T: Transport> Tap<T> {
    pub fn new(inner: T) -> Self {
        Tap {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn frames(&self) -> Vec<Tapped> {
        self.log.lock().map(|l| l.clone()).unwrap_or_default()
    }

    /// Frames delivered to `at` (broadcasts count for every client).
    pub fn observed_by(&self, at: Endpoint) -> Vec<Tapped> {
        self.frames()
            .into_iter()
            .filter(|t| t.to == at || (t.to == Endpoint::AllClients && matches!(at, Endpoint::Client(_))))
            .collect()
    }
}

impl<T: Transport> Transport for Tap<T> {
    fn send(&self, from: Endpoint, to: Endpoint, frame: Vec<u8>) -> Result<()> {
        if let Ok(mut log) = self.log.lock() {
            log.push(Tapped {
                from,
                to,
                frame: frame.clone(),
            });
        }
        self.inner.send(from, to, frame)
    }

    fn recv(&self, at: Endpoint) -> Result<Vec<u8>> {
        self.inner.recv(at)
    }
}
