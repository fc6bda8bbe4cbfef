//! TCP transport: NDJSON stream and commands on one port, raw wire packets
//! on another.
//!
//! Threads: one engine thread owns the [`Engine`] and routes its output;
//! each connection has a reader (commands into the engine channel) and a
//! writer draining a bounded drop-oldest queue, so a slow client loses
//! whole messages and never stalls the engine or other clients.

use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use bioskin_core::acquisition::{encode_frame, PACKET_LEN};
use bioskin_core::queue::DropOldestQueue;
use bioskin_core::recording::Pacer;

use crate::engine::{ClientId, Engine, Outbound, Subscription, Target};
use crate::protocol::{Body, StreamMessage};

pub const DEFAULT_PORT: u16 = 7878;
pub const PORT_ENV: &str = "BIOSKIN_PORT";
/// Messages buffered per NDJSON client before the oldest is dropped.
pub const CLIENT_QUEUE: usize = 1024;
/// Packets buffered per binary client.
pub const PACKET_QUEUE: usize = 4096;
/// Longest accepted command line, bytes.
pub const MAX_LINE: usize = 64 * 1024;

const POLL: Duration = Duration::from_millis(20);

/// Port from `BIOSKIN_PORT`, else [`DEFAULT_PORT`].
pub fn default_port() -> u16 {
    std::env::var(PORT_ENV).ok().and_then(|v| v.parse().ok()).unwrap_or(DEFAULT_PORT)
}

#[derive(Clone, Debug)]
pub struct ServerConfig {
    /// NDJSON address; port 0 picks a free one.
    pub addr: SocketAddr,
    /// Binary packet address; `None` puts it on the NDJSON port + 1, or a
    /// free port when that is 0.
    pub binary_addr: Option<SocketAddr>,
    /// Source speed relative to real time; 0 runs unpaced.
    pub speed: f64,
    /// Stop after this many source frames.
    pub max_frames: Option<u64>,
    pub client_queue: usize,
}

impl ServerConfig {
    pub fn new(addr: SocketAddr) -> Self {
        ServerConfig { addr, binary_addr: None, speed: 1.0, max_frames: None, client_queue: CLIENT_QUEUE }
    }
}

enum Inbound {
    Connected(ClientId),
    Line(ClientId, String),
    Disconnected(ClientId),
}

struct Client {
    queue: Arc<DropOldestQueue<Arc<str>>>,
    stream: TcpStream,
    sub: Subscription,
    last_state_us: Option<u64>,
}

struct BinaryClient {
    queue: Arc<DropOldestQueue<[u8; PACKET_LEN]>>,
    stream: TcpStream,
}

#[derive(Default)]
struct Hub {
    clients: Mutex<HashMap<ClientId, Client>>,
    binary: Mutex<HashMap<ClientId, BinaryClient>>,
}

impl Hub {
    fn route(&self, out: Vec<Outbound>) {
        if out.is_empty() {
            return;
        }
        let mut clients = self.clients.lock().expect("hub poisoned");
        for item in out {
            match item {
                Outbound::Message(target, msg) => deliver(&mut clients, target, &msg),
                Outbound::Subscribe(id, sub) => {
                    if let Some(c) = clients.get_mut(&id) {
                        c.sub = sub;
                        c.last_state_us = None;
                    }
                }
                Outbound::Packet(raw) => {
                    let binary = self.binary.lock().expect("hub poisoned");
                    if !binary.is_empty() {
                        let bytes = encode_frame(&raw);
                        for b in binary.values() {
                            b.queue.push(bytes);
                        }
                    }
                }
            }
        }
    }

    fn close_all(&self) {
        for c in self.clients.lock().expect("hub poisoned").values() {
            c.queue.close();
            let _ = c.stream.shutdown(Shutdown::Both);
        }
        for b in self.binary.lock().expect("hub poisoned").values() {
            b.queue.close();
            let _ = b.stream.shutdown(Shutdown::Both);
        }
    }
}

fn deliver(clients: &mut HashMap<ClientId, Client>, target: Target, msg: &StreamMessage) {
    let mut line: Option<Arc<str>> = None;
    let mut send = |c: &mut Client| {
        let l = line.get_or_insert_with(|| msg.to_line().into());
        c.queue.push(Arc::clone(l));
    };
    match target {
        Target::Client(id) => {
            if let Some(c) = clients.get_mut(&id) {
                send(c);
            }
        }
        Target::All => {
            for c in clients.values_mut() {
                match &msg.body {
                    Body::RawFrame(_) if !c.sub.raw_frames => continue,
                    Body::ForceState(s) => {
                        // Decimate on sensor time so every client sees the
                        // same states for the same rate.
                        let period = (1e6 / c.sub.max_rate_hz).round() as u64;
                        if c.last_state_us.is_some_and(|last| s.timestamp_us < last + period) {
                            continue;
                        }
                        c.last_state_us = Some(s.timestamp_us);
                    }
                    _ => {}
                }
                send(c);
            }
        }
    }
}

/// A running service.
pub struct ServerHandle {
    addr: SocketAddr,
    binary_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
    engine: Option<JoinHandle<Engine>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn binary_addr(&self) -> SocketAddr {
        self.binary_addr
    }

    /// True once the engine thread has stopped on its own.
    pub fn is_finished(&self) -> bool {
        self.engine.as_ref().is_none_or(JoinHandle::is_finished)
    }

    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.stop)
    }

    /// Stops all threads and returns the engine, with any recording closed.
    pub fn shutdown(mut self) -> Engine {
        self.stop.store(true, Ordering::SeqCst);
        let engine = self.engine.take().expect("joined once").join().expect("engine thread panicked");
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        engine
    }

    /// Blocks until the engine stops (frame limit or stop flag), then shuts
    /// down.
    pub fn wait(self) -> Engine {
        while !self.is_finished() && !self.stop.load(Ordering::SeqCst) {
            thread::sleep(POLL);
        }
        self.shutdown()
    }
}

pub fn serve(engine: Engine, cfg: ServerConfig) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(cfg.addr)?;
    let addr = listener.local_addr()?;
    let binary_addr = cfg.binary_addr.unwrap_or_else(|| {
        let mut a = addr;
        a.set_port(if cfg.addr.port() == 0 { 0 } else { addr.port() + 1 });
        a
    });
    let binary = TcpListener::bind(binary_addr)?;
    let binary_addr = binary.local_addr()?;
    listener.set_nonblocking(true)?;
    binary.set_nonblocking(true)?;
    log::info!("streaming NDJSON on {addr}, wire packets on {binary_addr}");

    let stop = Arc::new(AtomicBool::new(false));
    let hub = Arc::new(Hub::default());
    let ids = Arc::new(AtomicU64::new(1));
    let (tx, rx) = mpsc::channel();

    let threads = vec![
        {
            let (stop, hub, ids, queue) = (Arc::clone(&stop), Arc::clone(&hub), Arc::clone(&ids), cfg.client_queue);
            thread::Builder::new()
                .name("ndjson-accept".into())
                .spawn(move || accept_ndjson(listener, stop, hub, ids, tx, queue))?
        },
        {
            let (stop, hub, ids) = (Arc::clone(&stop), Arc::clone(&hub), Arc::clone(&ids));
            thread::Builder::new().name("binary-accept".into()).spawn(move || accept_binary(binary, stop, hub, ids))?
        },
    ];
    let engine = {
        let (stop, hub) = (Arc::clone(&stop), Arc::clone(&hub));
        thread::Builder::new().name("engine".into()).spawn(move || run_engine(engine, rx, hub, stop, &cfg))?
    };
    Ok(ServerHandle { addr, binary_addr, stop, threads, engine: Some(engine) })
}

fn run_engine(mut engine: Engine, rx: Receiver<Inbound>, hub: Arc<Hub>, stop: Arc<AtomicBool>, cfg: &ServerConfig) -> Engine {
    let mut pacer = Pacer::new(cfg.speed);
    let mut frames = 0u64;
    while !stop.load(Ordering::SeqCst) {
        while let Ok(msg) = rx.try_recv() {
            let out = match msg {
                Inbound::Connected(id) => engine.hello(id),
                Inbound::Line(id, line) => engine.handle_line(id, &line),
                Inbound::Disconnected(id) => {
                    engine.disconnected(id);
                    Vec::new()
                }
            };
            hub.route(out);
        }
        if cfg.max_frames.is_some_and(|m| frames >= m) {
            break;
        }
        if engine.is_ended() {
            // Keep answering commands after a replay runs out.
            thread::sleep(POLL);
            continue;
        }
        let step = engine.step();
        if let Some(raw) = &step.frame {
            frames += 1;
            pacer.wait(raw);
        }
        hub.route(step.out);
    }
    if let Some((path, frames)) = engine.finish_recording() {
        log::info!("closed recording {} ({frames} frames)", path.display());
    }
    stop.store(true, Ordering::SeqCst);
    hub.close_all();
    engine
}

fn accept_ndjson(
    listener: TcpListener,
    stop: Arc<AtomicBool>,
    hub: Arc<Hub>,
    ids: Arc<AtomicU64>,
    tx: Sender<Inbound>,
    capacity: usize,
) {
    let mut workers = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        let stream = match listener.accept() {
            Ok((s, peer)) => {
                log::info!("client {peer} connected");
                s
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                thread::sleep(POLL);
                continue;
            }
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let id = ids.fetch_add(1, Ordering::Relaxed);
        match start_client(id, stream, &hub, &tx, capacity, &stop) {
            Ok(mut w) => workers.append(&mut w),
            Err(e) => log::warn!("client {id} setup failed: {e}"),
        }
    }
    for w in workers {
        let _ = w.join();
    }
}

fn start_client(
    id: ClientId,
    stream: TcpStream,
    hub: &Arc<Hub>,
    tx: &Sender<Inbound>,
    capacity: usize,
    stop: &AtomicBool,
) -> io::Result<Vec<JoinHandle<()>>> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let queue = Arc::new(DropOldestQueue::new(capacity));
    let reader = stream.try_clone()?;
    let writer = stream.try_clone()?;
    hub.clients.lock().expect("hub poisoned").insert(
        id,
        Client { queue: Arc::clone(&queue), stream: stream.try_clone()?, sub: Subscription::default(), last_state_us: None },
    );
    // A client that slipped in after shutdown began would never be closed.
    if stop.load(Ordering::SeqCst) {
        queue.close();
        let _ = stream.shutdown(Shutdown::Both);
    }
    let _ = tx.send(Inbound::Connected(id));

    let w = thread::Builder::new().name(format!("client-{id}-write")).spawn(move || write_lines(writer, &queue))?;
    let (hub, tx) = (Arc::clone(hub), tx.clone());
    let r = thread::Builder::new().name(format!("client-{id}-read")).spawn(move || {
        read_lines(id, reader, &tx);
        if let Some(c) = hub.clients.lock().expect("hub poisoned").remove(&id) {
            c.queue.close();
            let _ = c.stream.shutdown(Shutdown::Both);
        }
        let _ = tx.send(Inbound::Disconnected(id));
        log::info!("client {id} disconnected");
    })?;
    Ok(vec![w, r])
}

fn read_lines(id: ClientId, stream: TcpStream, tx: &Sender<Inbound>) {
    let mut reader = BufReader::new(stream);
    let mut buf = Vec::new();
    loop {
        buf.clear();
        match (&mut reader).take(MAX_LINE as u64 + 1).read_until(b'\n', &mut buf) {
            Ok(0) | Err(_) => return,
            Ok(_) => {}
        }
        if buf.len() > MAX_LINE {
            // Hand the engine something it will reject as malformed, then
            // skip to the end of the oversized line.
            let _ = tx.send(Inbound::Line(id, String::new()));
            let mut rest = Vec::new();
            if reader.read_until(b'\n', &mut rest).is_err() {
                return;
            }
            continue;
        }
        let line = String::from_utf8_lossy(&buf);
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if tx.send(Inbound::Line(id, line.to_string())).is_err() {
            return;
        }
    }
}

fn write_lines(mut stream: TcpStream, queue: &DropOldestQueue<Arc<str>>) {
    loop {
        let Some(line) = queue.pop_timeout(POLL) else {
            if queue.is_closed() {
                return;
            }
            continue;
        };
        if stream.write_all(line.as_bytes()).is_err() {
            queue.close();
            return;
        }
    }
}

fn accept_binary(listener: TcpListener, stop: Arc<AtomicBool>, hub: Arc<Hub>, ids: Arc<AtomicU64>) {
    let mut workers = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        let stream = match listener.accept() {
            Ok((s, _)) => s,
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                thread::sleep(POLL);
                continue;
            }
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let id = ids.fetch_add(1, Ordering::Relaxed);
        let setup = || -> io::Result<JoinHandle<()>> {
            stream.set_nonblocking(false)?;
            let queue = Arc::new(DropOldestQueue::new(PACKET_QUEUE));
            let mut writer = stream.try_clone()?;
            hub.binary.lock().expect("hub poisoned").insert(id, BinaryClient { queue: Arc::clone(&queue), stream: stream.try_clone()? });
            if stop.load(Ordering::SeqCst) {
                queue.close();
                let _ = stream.shutdown(Shutdown::Both);
            }
            let hub = Arc::clone(&hub);
            thread::Builder::new().name(format!("binary-{id}")).spawn(move || {
                loop {
                    match queue.pop_timeout(POLL) {
                        Some(p) => {
                            if writer.write_all(&p).is_err() {
                                break;
                            }
                        }
                        None if queue.is_closed() => break,
                        None => {}
                    }
                }
                if let Some(b) = hub.binary.lock().expect("hub poisoned").remove(&id) {
                    b.queue.close();
                }
            })
        };
        match setup() {
            Ok(w) => workers.push(w),
            Err(e) => log::warn!("binary client setup failed: {e}"),
        }
    }
    for w in workers {
        let _ = w.join();
    }
}
