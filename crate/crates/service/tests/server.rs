mod common;

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::thread;
use std::time::{Duration, Instant};

use bioskin_core::acquisition::StreamDecoder;
use bioskin_core::sim::{builtin, SimParams};
use bioskin_service::engine::{Engine, EngineConfig};
use bioskin_service::protocol::{Body, ErrorReason, ServiceEvent, StreamMessage};
use bioskin_service::server::{serve, ServerConfig, ServerHandle};
use common::profile;
use serde_json::json;

fn start(speed: f64, queue: usize) -> ServerHandle {
    start_with(SimParams::default(), speed, queue)
}

fn start_with(params: SimParams, speed: f64, queue: usize) -> ServerHandle {
    let engine = Engine::simulated(&builtin::idle(600.0, 3), params, profile(), EngineConfig::default()).unwrap();
    let mut cfg = ServerConfig::new("127.0.0.1:0".parse().unwrap());
    cfg.speed = speed;
    cfg.client_queue = queue;
    serve(engine, cfg).unwrap()
}

struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    fn connect(addr: SocketAddr) -> Self {
        let s = TcpStream::connect(addr).unwrap();
        s.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
        Client { writer: s.try_clone().unwrap(), reader: BufReader::new(s) }
    }

    fn send(&mut self, line: &str) {
        self.writer.write_all(line.as_bytes()).unwrap();
        self.writer.write_all(b"\n").unwrap();
    }

    fn next(&mut self) -> StreamMessage {
        let mut line = String::new();
        self.reader.read_line(&mut line).unwrap();
        serde_json::from_str(&line).unwrap_or_else(|e| panic!("bad line {line:?}: {e}"))
    }

    /// Reads until the reply to `id` arrives.
    fn reply(&mut self, id: i64) -> StreamMessage {
        loop {
            let m = self.next();
            if m.reply_id() == Some(&json!(id)) {
                return m;
            }
        }
    }
}

#[test]
fn greeting_then_replies_on_the_same_connection() {
    let server = start(1.0, 1024);
    let mut c = Client::connect(server.addr());
    assert!(matches!(c.next().body, Body::Event(ServiceEvent::Hello { ref profile_id, .. }) if profile_id == "bench"));
    c.send(r#"{"id":1,"cmd":"warp_drive"}"#);
    let m = c.reply(1);
    assert!(matches!(&m.body, Body::Error(e) if e.reason == ErrorReason::UnknownCommand));
    c.send("this is not json");
    loop {
        if let Body::Error(e) = c.next().body {
            assert_eq!(e.reason, ErrorReason::Malformed);
            break;
        }
    }
    c.send(r#"{"id":2,"cmd":"ping"}"#);
    assert!(matches!(c.reply(2).body, Body::Ack(_)));
    server.shutdown();
}

#[test]
fn two_clients_see_the_same_state_numbers() {
    let server = start(1.0, 1024);
    let mut a = Client::connect(server.addr());
    let mut b = Client::connect(server.addr());
    let collect = |c: &mut Client| -> HashMap<u64, u64> {
        let mut seen = HashMap::new();
        while seen.len() < 150 {
            let m = c.next();
            if let Body::ForceState(s) = m.body {
                seen.insert(s.timestamp_us, m.seq);
            }
        }
        seen
    };
    let (sa, sb) = (collect(&mut a), collect(&mut b));
    let common: Vec<_> = sa.keys().filter(|t| sb.contains_key(t)).collect();
    assert!(common.len() >= 100, "{}", common.len());
    assert!(common.iter().all(|t| sa[t] == sb[t]));
    server.shutdown();
}

#[test]
fn zero_cal_over_the_socket_recentres_the_grid() {
    let mut params = SimParams::default();
    params.hall.rest_v += 0.03;
    let server = start_with(params, 0.0, 1 << 16);
    let mut c = Client::connect(server.addr());
    let mean_grid = |c: &mut Client, after: u64| {
        let (mut grid, mut n) = ([0.0; 9], 0.0);
        while n < 300.0 {
            if let Body::ForceState(s) = c.next().body {
                if s.timestamp_us > after {
                    grid.iter_mut().zip(s.normal_grid).for_each(|(g, f)| *g += f);
                    n += 1.0;
                }
            }
        }
        grid.map(|g| g / n)
    };
    let before = mean_grid(&mut c, 0);
    c.send(r#"{"id":5,"cmd":"zero_cal","group":"normal"}"#);
    let m = c.reply(5);
    let Body::Ack(ack) = &m.body else { panic!("{m:?}") };
    assert_eq!(ack.result["offsets"].as_array().unwrap().len(), 5);
    let after = mean_grid(&mut c, m.timestamp_us);
    // The shifted rest voltage reads as load until it is zeroed away.
    let total = |g: [f64; 9]| g.iter().map(|f| f.abs()).sum::<f64>();
    assert!(total(after) < 0.5 * total(before), "before {before:?} after {after:?}");
    server.shutdown();
}

#[test]
fn slow_client_loses_whole_messages_only() {
    let server = start(0.0, 64);
    let mut slow = Client::connect(server.addr());
    let mut fast = Client::connect(server.addr());
    slow.send(r#"{"id":1,"cmd":"subscribe","raw_frames":true}"#);
    // The fast client keeps up while the slow one sleeps.
    let t0 = Instant::now();
    let mut fast_states = 0;
    while t0.elapsed() < Duration::from_millis(800) {
        if matches!(fast.next().body, Body::ForceState(_)) {
            fast_states += 1;
        }
    }
    assert!(fast_states > 1_000, "{fast_states}");
    let mut last = 0;
    let mut gaps = 0;
    for _ in 0..20_000 {
        let m = slow.next();
        assert!(m.seq > last, "seq went from {last} to {}", m.seq);
        gaps += usize::from(last != 0 && m.seq > last + 1);
        last = m.seq;
    }
    assert!(gaps > 0, "an unread client must have lost messages");
    server.shutdown();
}

#[test]
fn binary_port_carries_decodable_packets() {
    let server = start(1.0, 1024);
    let mut s = TcpStream::connect(server.binary_addr()).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    let mut dec = StreamDecoder::default();
    let mut frames = Vec::new();
    let mut buf = [0u8; 512];
    while frames.len() < 200 {
        let n = s.read(&mut buf).unwrap();
        assert!(n > 0);
        dec.push(&buf[..n]);
        frames.extend(dec.drain_frames());
    }
    assert!(frames.windows(2).all(|w| w[1].seq == w[0].seq.wrapping_add(1)));
    assert!(frames.windows(2).all(|w| w[1].timestamp_us - w[0].timestamp_us == 2_000));
    server.shutdown();
}

#[test]
fn frame_limit_stops_the_server_and_disconnects_clients() {
    let engine = Engine::simulated(&builtin::idle(10.0, 1), SimParams::default(), profile(), EngineConfig::default()).unwrap();
    let mut cfg = ServerConfig::new("127.0.0.1:0".parse().unwrap());
    cfg.speed = 0.0;
    cfg.max_frames = Some(2_000);
    let server = serve(engine, cfg).unwrap();
    let mut c = Client::connect(server.addr());
    let deadline = Instant::now() + Duration::from_secs(10);
    while !server.is_finished() {
        assert!(Instant::now() < deadline);
        thread::sleep(Duration::from_millis(10));
    }
    let engine = server.wait();
    assert!((engine.now_us() as f64 - 2_000.0 * 2_000.0).abs() <= 2_000.0);
    let mut rest = String::new();
    // Either a clean EOF or a reset; the point is that it does not hang.
    let _ = c.reader.read_to_string(&mut rest);
}
