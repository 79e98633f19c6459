use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::protocol::{encode_reply, Reply};
use super::session::{Session, SessionConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ServeConfig {
    /// `host:port`; port 0 picks a free port.
    pub addr: String,
    pub tick_ms: u64,
    pub root: Option<PathBuf>,
    /// Defaults for every new session.
    pub session: SessionConfig,
}

impl Default for ServeConfig {
    fn default() -> Self {
        let session = SessionConfig::default();
        Self {
            addr: "127.0.0.1:7878".into(),
            tick_ms: session.tick_ms,
            root: None,
            session,
        }
    }
}

/// A running server: one thread accepting connections and one per session.
pub struct Server {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl Server {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the accept loop exits.
    pub fn join(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    /// Stops accepting connections; open sessions run until their clients
    /// disconnect.
    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.stop_accepting();
        }
    }
}

/// Binds `cfg.addr` and serves sessions until shut down.
pub fn serve(cfg: ServeConfig) -> Result<Server> {
    let listener = TcpListener::bind(&cfg.addr).map_err(|e| Error::config(format!("cannot bind {}: {e}", cfg.addr)))?;
    let addr = listener.local_addr()?;
    let mut defaults = cfg.session.clone();
    defaults.tick_ms = cfg.tick_ms;
    defaults.root = cfg.root.clone();
    Session::new(0, defaults.clone())?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let accept = thread::spawn(move || {
        let ids = AtomicU64::new(1);
        for conn in listener.incoming() {
            if flag.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = conn else { continue };
            let id = ids.fetch_add(1, Ordering::Relaxed);
            let cfg = defaults.clone();
            thread::spawn(move || {
                let _ = run_connection(stream, id, cfg);
            });
        }
    });
    Ok(Server {
        addr,
        stop,
        accept: Some(accept),
    })
}

/// Serves one connection: a reader thread feeds lines to the session loop,
/// which also drives live ticks.
fn run_connection(stream: TcpStream, id: u64, cfg: SessionConfig) -> Result<()> {
    stream.set_nodelay(true)?;
    let mut session = Session::new(id, cfg)?;
    let period = Duration::from_millis(session.config().tick_ms);
    let (tx, rx) = mpsc::channel::<String>();
    let reader = BufReader::new(stream.try_clone()?);
    thread::spawn(move || {
        for line in reader.lines() {
            let Ok(line) = line else { break };
            if tx.send(line).is_err() {
                break;
            }
        }
    });
    let mut out = BufWriter::new(stream);
    let mut next_tick: Option<Instant> = None;
    loop {
        let msg = match next_tick {
            Some(at) => rx.recv_timeout(at.saturating_duration_since(Instant::now())),
            None => rx.recv().map_err(|_| RecvTimeoutError::Disconnected),
        };
        match msg {
            Ok(line) => {
                if !line.trim().is_empty() {
                    for reply in session.handle_line(&line) {
                        writeln!(out, "{reply}")?;
                    }
                }
            }
            Err(RecvTimeoutError::Timeout) => {
                for reply in session.tick() {
                    writeln!(out, "{}", encode_reply(None, &reply))?;
                }
                let now = Instant::now();
                let mut at = next_tick.unwrap_or(now) + period;
                if at + period < now {
                    at = now + period;
                }
                next_tick = Some(at);
            }
            Err(RecvTimeoutError::Disconnected) => break,
        }
        out.flush()?;
        next_tick = match (session.ticking(), next_tick) {
            (true, Some(at)) => Some(at),
            (true, None) => Some(Instant::now() + period),
            (false, _) => None,
        };
    }
    Ok(())
}

/// Line-oriented client for tests and tools.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    pub fn connect(addr: SocketAddr) -> Result<Self> {
        let writer = TcpStream::connect(addr)?;
        writer.set_nodelay(true)?;
        Ok(Self {
            reader: BufReader::new(writer.try_clone()?),
            writer,
        })
    }

    pub fn set_read_timeout(&self, t: Option<Duration>) -> Result<()> {
        self.writer.set_read_timeout(t)?;
        Ok(())
    }

    pub fn send_line(&mut self, line: &str) -> Result<()> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        Ok(())
    }

    pub fn send(&mut self, req: &super::protocol::Request) -> Result<()> {
        self.send_line(&super::protocol::encode_request(None, req))
    }

    /// Next line from the server, without the newline.
    pub fn recv_line(&mut self) -> Result<String> {
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(Error::Protocol("connection closed".into()));
        }
        Ok(line.trim_end().to_string())
    }

    pub fn recv(&mut self) -> Result<Reply> {
        Ok(super::protocol::decode_reply(&self.recv_line()?)?.body)
    }
}
