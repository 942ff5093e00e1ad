//! Single-session server: length-prefixed JSON over TCP, with a websocket
//! upgrade on the same port for browser clients.

use std::fs::File;
use std::io::LineWriter;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, Sender};
use tungstenite::Message;

use super::session::{Session, SessionConfig};
use super::wire::{read_raw, write_frame};
use super::{CommandMsg, DelayLine, ErrorCode, ErrorMsg, LinkConfig, ProtocolError, ServerMsg};
use crate::world::WorkspaceSpec;

#[derive(Debug, Clone, Default)]
pub struct ServerConfig {
    pub link: LinkConfig,
    pub session: SessionConfig,
    /// Pace the simulation at wall-clock speed.
    pub realtime: bool,
    pub log_path: Option<PathBuf>,
}

enum Inbound {
    Attach { conn: u64, tx: Sender<ServerMsg> },
    Command { conn: u64, msg: CommandMsg },
    Malformed { conn: u64, message: String },
    Detach { conn: u64 },
}

pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    streams: Arc<Mutex<Vec<TcpStream>>>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting, closes open connections and joins the server threads.
    pub fn shutdown(mut self) {
        self.stop();
    }

    /// Blocks until the server stops.
    pub fn join(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    fn stop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        for s in self.streams.lock().expect("stream list").drain(..) {
            let _ = s.shutdown(std::net::Shutdown::Both);
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if !self.threads.is_empty() {
            self.stop();
        }
    }
}

/// Binds `addr` and starts the acceptor and simulation threads.
pub fn serve(spec: Arc<WorkspaceSpec>, config: ServerConfig, addr: &str) -> Result<ServerHandle, ProtocolError> {
    config.link.validate()?;
    let listener = TcpListener::bind(addr).map_err(|source| ProtocolError::Bind {
        addr: addr.to_string(),
        source,
    })?;
    listener.set_nonblocking(true)?;
    let local = listener.local_addr()?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let streams = Arc::new(Mutex::new(Vec::new()));
    let active = Arc::new(Mutex::new(None::<u64>));
    let (tx, rx) = unbounded();

    let mut session = Session::new(spec, config.session);
    if let Some(path) = &config.log_path {
        session = session.with_log(Box::new(LineWriter::new(File::create(path)?)));
    }
    let sim = {
        let shutdown = shutdown.clone();
        let config = config.clone();
        thread::Builder::new()
            .name("sim".into())
            .spawn(move || run_sim(session, config, rx, shutdown))?
    };
    let acceptor = {
        let shutdown = shutdown.clone();
        let streams = streams.clone();
        thread::Builder::new()
            .name("accept".into())
            .spawn(move || accept_loop(listener, tx, active, streams, shutdown))?
    };
    tracing::info!("listening on {local}");
    Ok(ServerHandle {
        addr: local,
        shutdown,
        streams,
        threads: vec![acceptor, sim],
    })
}

fn accept_loop(
    listener: TcpListener,
    tx: Sender<Inbound>,
    active: Arc<Mutex<Option<u64>>>,
    streams: Arc<Mutex<Vec<TcpStream>>>,
    shutdown: Arc<AtomicBool>,
) {
    let mut next_conn = 1u64;
    while !shutdown.load(Ordering::SeqCst) {
        let stream = match listener.accept() {
            Ok((s, peer)) => {
                tracing::debug!("connection from {peer}");
                s
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(5));
                continue;
            }
            Err(e) => {
                tracing::warn!("accept failed: {e}");
                continue;
            }
        };
        let conn = next_conn;
        next_conn += 1;
        let tx = tx.clone();
        let active = active.clone();
        let streams = streams.clone();
        let shutdown = shutdown.clone();
        let spawned = thread::Builder::new()
            .name(format!("conn-{conn}"))
            .spawn(move || handle_connection(stream, conn, tx, active, streams, shutdown));
        if let Err(e) = spawned {
            tracing::warn!("cannot spawn connection thread: {e}");
        }
    }
}

fn handle_connection(
    stream: TcpStream,
    conn: u64,
    tx: Sender<Inbound>,
    active: Arc<Mutex<Option<u64>>>,
    streams: Arc<Mutex<Vec<TcpStream>>>,
    shutdown: Arc<AtomicBool>,
) {
    let _ = stream.set_nonblocking(false);
    let _ = stream.set_nodelay(true);
    let websocket = is_websocket(&stream);
    let busy = {
        let mut a = active.lock().expect("active session");
        if a.is_some() {
            true
        } else {
            *a = Some(conn);
            false
        }
    };
    if busy {
        reject_busy(stream, websocket);
        return;
    }
    if let Ok(clone) = stream.try_clone() {
        streams.lock().expect("stream list").push(clone);
    }
    let (out_tx, out_rx) = unbounded();
    let _ = tx.send(Inbound::Attach { conn, tx: out_tx });
    if websocket {
        run_websocket(stream, conn, &tx, out_rx, &shutdown);
    } else {
        run_framed(stream, conn, &tx, out_rx);
    }
    let _ = tx.send(Inbound::Detach { conn });
    let mut a = active.lock().expect("active session");
    if *a == Some(conn) {
        *a = None;
    }
}

/// Browsers open with an HTTP upgrade request; framed clients may stay silent.
fn is_websocket(stream: &TcpStream) -> bool {
    let window = Duration::from_millis(200);
    let _ = stream.set_read_timeout(Some(window));
    let mut buf = [0u8; 4];
    let deadline = Instant::now() + window;
    let result = loop {
        match stream.peek(&mut buf) {
            Ok(n) if n >= 4 => break &buf == b"GET ",
            Ok(0) => break false,
            Ok(_) if Instant::now() < deadline => thread::sleep(Duration::from_millis(2)),
            _ => break false,
        }
    };
    let _ = stream.set_read_timeout(None);
    result
}

fn reject_busy(stream: TcpStream, websocket: bool) {
    if websocket {
        if let Ok(mut ws) = tungstenite::accept(stream) {
            let json = serde_json::to_string(&ServerMsg::Busy).expect("busy serializes");
            let _ = ws.send(Message::text(json));
            let _ = ws.close(None);
            let _ = ws.flush();
        }
    } else {
        let mut stream = stream;
        let _ = write_frame(&mut stream, &ServerMsg::Busy);
        let _ = stream.shutdown(std::net::Shutdown::Both);
    }
}

fn parse_command(conn: u64, bytes: &[u8]) -> Inbound {
    match serde_json::from_slice::<CommandMsg>(bytes) {
        Ok(msg) => Inbound::Command { conn, msg },
        Err(e) => Inbound::Malformed {
            conn,
            message: e.to_string(),
        },
    }
}

fn run_framed(stream: TcpStream, conn: u64, tx: &Sender<Inbound>, out: Receiver<ServerMsg>) {
    let Ok(mut writer) = stream.try_clone() else {
        return;
    };
    let write_thread = thread::spawn(move || {
        for msg in out.iter() {
            if write_frame(&mut writer, &msg).is_err() {
                break;
            }
        }
    });
    let mut reader = stream;
    loop {
        match read_raw(&mut reader) {
            Ok(Some(bytes)) => {
                if tx.send(parse_command(conn, &bytes)).is_err() {
                    break;
                }
            }
            Ok(None) => break,
            Err(e) => {
                tracing::debug!("connection {conn} read error: {e}");
                break;
            }
        }
    }
    let _ = reader.shutdown(std::net::Shutdown::Both);
    let _ = tx.send(Inbound::Detach { conn });
    let _ = write_thread.join();
}

fn run_websocket(
    stream: TcpStream,
    conn: u64,
    tx: &Sender<Inbound>,
    out: Receiver<ServerMsg>,
    shutdown: &AtomicBool,
) {
    let mut ws = match tungstenite::accept(stream) {
        Ok(ws) => ws,
        Err(e) => {
            tracing::debug!("websocket handshake failed: {e}");
            return;
        }
    };
    let _ = ws.get_ref().set_read_timeout(Some(Duration::from_millis(10)));
    while !shutdown.load(Ordering::SeqCst) {
        match ws.read() {
            Ok(Message::Text(t)) => {
                let _ = tx.send(parse_command(conn, t.as_bytes()));
            }
            Ok(Message::Binary(b)) => {
                let _ = tx.send(parse_command(conn, &b));
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(_) => break,
        }
        let mut failed = false;
        while let Ok(msg) = out.try_recv() {
            let json = serde_json::to_string(&msg).expect("server message serializes");
            if let Err(e) = ws.send(Message::text(json)) {
                if !matches!(&e, tungstenite::Error::Io(io) if io.kind() == std::io::ErrorKind::WouldBlock) {
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            break;
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
}

fn run_sim(mut session: Session, config: ServerConfig, rx: Receiver<Inbound>, shutdown: Arc<AtomicBool>) {
    let start = Instant::now();
    let link = config.link;
    let seed = config.session.seed;
    let period = link.state_period_us();
    let tick_us = (session.spec().physics.tick_dt * 1e6).round() as u64;
    let mut uplink: DelayLine<CommandMsg> = DelayLine::new(&link, seed ^ 0x5eed_0001);
    let mut downlink: DelayLine<ServerMsg> = DelayLine::new(&link, seed ^ 0x5eed_0002);
    let mut conn: Option<(u64, Sender<ServerMsg>)> = None;
    let mut last_key = None;
    let mut last_pub = 0u64;
    let mut sim_origin_us = 0u64;
    let mut sim_origin_tick = 0u64;

    while !shutdown.load(Ordering::SeqCst) {
        let now = start.elapsed().as_micros() as u64;
        let wall = now as f64 * 1e-6;
        while let Ok(m) = rx.try_recv() {
            match m {
                Inbound::Attach { conn: c, tx } => {
                    session.reset_link();
                    uplink = DelayLine::new(&link, seed ^ c);
                    downlink = DelayLine::new(&link, seed ^ c.rotate_left(17));
                    downlink.push(now, ServerMsg::State(Box::new(session.state_msg())));
                    last_pub = now;
                    conn = Some((c, tx));
                }
                Inbound::Command { conn: c, msg } if conn.as_ref().is_some_and(|(id, _)| *id == c) => {
                    uplink.push(now, msg);
                }
                Inbound::Malformed { conn: c, message } if conn.as_ref().is_some_and(|(id, _)| *id == c) => {
                    downlink.push(now, ServerMsg::Error(ErrorMsg::new(None, ErrorCode::Malformed, message)));
                }
                Inbound::Detach { conn: c } if conn.as_ref().is_some_and(|(id, _)| *id == c) => {
                    tracing::info!("operator {c} disconnected; execution continues");
                    conn = None;
                }
                _ => {}
            }
        }
        for msg in uplink.pop_due(now) {
            if let Err(e) = session.handle(&msg, wall) {
                downlink.push(now, ServerMsg::Error(e));
            }
            for event in session.drain_events(wall) {
                downlink.push(now, ServerMsg::Event { event });
            }
        }

        let ticked = if config.realtime {
            let ticks = session.state().tick - sim_origin_tick;
            sim_origin_us + ticks * tick_us <= now
        } else if session.is_quiet() {
            // unpaced: hold the clock while nothing moves
            sim_origin_us = now;
            sim_origin_tick = session.state().tick;
            false
        } else {
            true
        };
        if ticked {
            for event in session.tick(wall) {
                downlink.push(now, ServerMsg::Event { event });
            }
        }

        let key = session.publish_key();
        if last_key.as_ref() != Some(&key) || now.saturating_sub(last_pub) >= period {
            downlink.push(now, ServerMsg::State(Box::new(session.state_msg())));
            last_key = Some(key);
            last_pub = now;
        }
        for msg in downlink.pop_due(now) {
            if let Some((_, tx)) = &conn {
                if tx.send(msg).is_err() {
                    conn = None;
                }
            }
        }
        if !ticked {
            thread::sleep(Duration::from_micros(500));
        }
    }
}
