//! Live session host: one simulation thread paced by the wall clock, one I/O
//! thread per WebSocket client, connected by channels.

use std::collections::BTreeMap;
use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, Sender, TryRecvError};
use tungstenite::{Message, WebSocket};

use crate::error::{Error, Result};
use crate::session::{EpisodeLog, Outcome, Setup, Simulation};

use super::clock::TickClock;
use super::protocol::{
    cue_frame, now_ms, Event, EventCode, Hello, Input, MetricsReport, Payload, Role, ScenarioInfo, StateUpdate, TimingStats,
    WireMessage, PROTOCOL_VERSION, SUPPORTED_VERSIONS,
};

pub const DEFAULT_BIND: &str = "127.0.0.1:8765";
pub const DEFAULT_STREAM_RATE: f64 = 60.0;
/// Inputs older than this on arrival are dropped, ms.
pub const STALE_INPUT_MS: i64 = 1000;
const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(2);
const POLL: Duration = Duration::from_millis(2);

#[derive(Clone, Debug, PartialEq)]
pub struct ServiceConfig {
    pub bind: String,
    /// Logs and metrics of finished sessions go here.
    pub data_dir: Option<PathBuf>,
    /// Rate of `state` and `cues` messages, Hz.
    pub stream_rate: f64,
    /// How long an externally driven episode waits for a pilot before the
    /// clock starts anyway.
    pub pilot_wait: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: DEFAULT_BIND.into(),
            data_dir: None,
            stream_rate: DEFAULT_STREAM_RATE,
            pilot_wait: Duration::from_secs(300),
        }
    }
}

impl ServiceConfig {
    /// Defaults overridden by `SKYDIVE_BIND` and `SKYDIVE_DATA_DIR`.
    pub fn from_env() -> Self {
        let mut c = ServiceConfig::default();
        if let Ok(bind) = std::env::var("SKYDIVE_BIND") {
            c.bind = bind;
        }
        c.data_dir = Some(std::env::var_os("SKYDIVE_DATA_DIR").map_or_else(|| PathBuf::from("data"), PathBuf::from));
        c
    }
}

#[derive(Debug)]
pub struct SessionReport {
    pub log: EpisodeLog,
    pub timing: TimingStats,
    /// Saved log, when a data directory is configured.
    pub log_path: Option<PathBuf>,
    pub clients_seen: usize,
}

enum Inbound {
    Connected { id: usize, tx: Sender<String> },
    Text { id: usize, text: String, received: u64 },
    Disconnected { id: usize },
}

struct Client {
    tx: Sender<String>,
    role: Option<Role>,
    /// Server minus client clock at hello, ms.
    offset: i64,
    last_input: u64,
}

pub struct Server {
    listener: TcpListener,
    config: ServiceConfig,
}

impl Server {
    /// Binds the listening socket; a busy port is a startup error.
    pub fn bind(config: ServiceConfig) -> Result<Self> {
        if !(config.stream_rate.is_finite() && config.stream_rate > 0.0) {
            return Err(Error::InvalidConfig(format!("stream rate {} must be positive", config.stream_rate)));
        }
        let listener = TcpListener::bind(&config.bind)?;
        listener.set_nonblocking(true)?;
        Ok(Server { listener, config })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Runs one episode in real time and returns once it has ended and every
    /// client has been sent the final messages.
    pub fn run(self, setup: Setup) -> Result<SessionReport> {
        let stop = Arc::new(AtomicBool::new(false));
        let (in_tx, in_rx) = unbounded();
        let acceptor = {
            let stop = stop.clone();
            let listener = self.listener;
            std::thread::spawn(move || accept_loop(listener, in_tx, stop))
        };
        let result = Host::new(setup, &self.config).and_then(|host| host.run(&in_rx, &self.config));
        stop.store(true, Ordering::SeqCst);
        let workers = acceptor.join().unwrap_or_default();
        // queued connections hold their outbound senders; dropping them lets
        // every client thread close its socket
        drop(in_rx);
        for w in workers {
            let _ = w.join();
        }
        result
    }
}

fn accept_loop(listener: TcpListener, to_sim: Sender<Inbound>, stop: Arc<AtomicBool>) -> Vec<JoinHandle<()>> {
    let mut workers = Vec::new();
    let mut next_id = 0;
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::info!("client {next_id} connected from {peer}");
                let tx = to_sim.clone();
                let id = next_id;
                next_id += 1;
                workers.push(std::thread::spawn(move || client_loop(id, stream, tx)));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                log::warn!("accept failed: {e}");
                std::thread::sleep(Duration::from_millis(5));
            }
        }
    }
    workers
}

fn client_loop(id: usize, stream: TcpStream, to_sim: Sender<Inbound>) {
    let setup = stream.set_nonblocking(false).and_then(|_| stream.set_read_timeout(Some(HANDSHAKE_TIMEOUT)));
    if let Err(e) = setup {
        log::warn!("client {id}: {e}");
        return;
    }
    let mut ws = match tungstenite::accept(stream) {
        Ok(ws) => ws,
        Err(e) => {
            log::warn!("client {id}: handshake failed: {e}");
            return;
        }
    };
    if ws.get_ref().set_read_timeout(Some(POLL)).is_err() {
        return;
    }
    let (tx, rx) = unbounded();
    if to_sim.send(Inbound::Connected { id, tx }).is_err() {
        return;
    }
    serve_client(id, &mut ws, &to_sim, &rx);
    let _ = to_sim.send(Inbound::Disconnected { id });
    log::info!("client {id} disconnected");
}

fn serve_client(id: usize, ws: &mut WebSocket<TcpStream>, to_sim: &Sender<Inbound>, from_sim: &Receiver<String>) {
    loop {
        match ws.read() {
            Ok(Message::Text(t)) => {
                let _ = to_sim.send(Inbound::Text { id, text: t.as_str().to_owned(), received: now_ms() });
            }
            Ok(Message::Close(_)) => return,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(_) => return,
        }
        loop {
            match from_sim.try_recv() {
                Ok(text) => {
                    if ws.send(Message::text(text)).is_err() {
                        return;
                    }
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    let _ = ws.close(None);
                    let _ = ws.flush();
                    return;
                }
            }
        }
    }
}

/// State owned by the simulation thread.
struct Host {
    sim: Simulation,
    info: ScenarioInfo,
    clients: BTreeMap<usize, Client>,
    pilot: Option<usize>,
    pending: Option<Input>,
    seen: usize,
}

impl Host {
    fn new(setup: Setup, config: &ServiceConfig) -> Result<Self> {
        let info = ScenarioInfo {
            scenario: setup.scenario.clone(),
            rate: setup.config.sim.rate,
            stream_rate: config.stream_rate.min(setup.config.sim.rate),
            path: setup.path.waypoints(),
            output_limit: setup.config.output_limit(),
        };
        Ok(Host { sim: Simulation::new(setup)?, info, clients: BTreeMap::new(), pilot: None, pending: None, seen: 0 })
    }

    fn send(&self, id: usize, payload: Payload) {
        if let Some(c) = self.clients.get(&id) {
            let _ = c.tx.send(WireMessage::new(self.sim.tick_count(), payload).to_json());
        }
    }

    fn broadcast(&self, tick: u64, payload: Payload) {
        let text = WireMessage::new(tick, payload).to_json();
        for c in self.clients.values().filter(|c| c.role.is_some()) {
            let _ = c.tx.send(text.clone());
        }
    }

    fn event(&self, id: usize, event: Event) {
        self.send(id, Payload::Event(event));
    }

    fn drain(&mut self, rx: &Receiver<Inbound>) {
        while let Ok(m) = rx.try_recv() {
            match m {
                Inbound::Connected { id, tx } => {
                    self.seen += 1;
                    self.clients.insert(id, Client { tx, role: None, offset: 0, last_input: 0 });
                }
                Inbound::Disconnected { id } => {
                    self.clients.remove(&id);
                    if self.pilot == Some(id) {
                        log::warn!("pilot {id} left");
                        self.pilot = None;
                    }
                }
                Inbound::Text { id, text, received } => self.handle(id, &text, received),
            }
        }
    }

    fn handle(&mut self, id: usize, text: &str, received: u64) {
        if let Some(v) = WireMessage::peek_version(text).filter(|v| *v != PROTOCOL_VERSION) {
            let mut e = Event::new(EventCode::VersionMismatch, format!("protocol version {v} is not supported"));
            e.supported_versions = SUPPORTED_VERSIONS.to_vec();
            return self.event(id, e);
        }
        let msg = match WireMessage::from_json(text) {
            Ok(m) => m,
            Err(e) => return self.event(id, Event::new(EventCode::BadMessage, e.to_string())),
        };
        match msg.payload {
            Payload::Hello(h) => self.hello(id, h, msg.timestamp, received),
            Payload::Input(i) => self.input(id, i, msg.timestamp, received),
            _ => self.event(id, Event::new(EventCode::BadMessage, format!("clients may not send {}", msg.kind()))),
        }
    }

    fn hello(&mut self, id: usize, h: Hello, timestamp: u64, received: u64) {
        if !h.versions.is_empty() && !h.versions.contains(&PROTOCOL_VERSION) {
            let mut e = Event::new(EventCode::VersionMismatch, format!("no common protocol version in {:?}", h.versions));
            e.supported_versions = SUPPORTED_VERSIONS.to_vec();
            return self.event(id, e);
        }
        let role = if h.role == Role::Pilot && self.pilot.is_none() {
            self.pilot = Some(id);
            Role::Pilot
        } else {
            Role::Observer
        };
        if let Some(c) = self.clients.get_mut(&id) {
            c.role = Some(role);
            c.offset = received as i64 - timestamp as i64;
        }
        log::info!("client {id} joined as {role:?}");
        self.send(id, Payload::Hello(Hello { role, name: Some("skydive".into()), versions: SUPPORTED_VERSIONS.to_vec() }));
        let mut joined = Event::new(EventCode::Joined, format!("joined as {role:?}").to_lowercase());
        joined.role = Some(role);
        self.event(id, joined);
        self.send(id, Payload::Scenario(Box::new(self.info.clone())));
    }

    fn input(&mut self, id: usize, input: Input, timestamp: u64, received: u64) {
        let Some(c) = self.clients.get_mut(&id) else { return };
        if c.role.is_none() {
            return self.event(id, Event::new(EventCode::BadMessage, "send hello first"));
        }
        if self.pilot != Some(id) {
            return self.event(id, Event::new(EventCode::NotPilot, "only the pilot's inputs are applied"));
        }
        let age = received as i64 - (timestamp as i64 + c.offset);
        if age > STALE_INPUT_MS {
            return self.event(id, Event::new(EventCode::StaleInput, format!("input {age} ms old was discarded")));
        }
        if timestamp < c.last_input {
            return;
        }
        c.last_input = timestamp;
        if input.u_arms.is_finite() && input.u_legs.is_finite() {
            self.pending = Some(input);
        } else {
            self.event(id, Event::new(EventCode::BadMessage, "non-finite input"));
        }
    }

    fn run(mut self, rx: &Receiver<Inbound>, config: &ServiceConfig) -> Result<SessionReport> {
        let rate = self.info.rate;
        if self.sim.is_external() {
            let until = Instant::now() + config.pilot_wait;
            log::info!("waiting for a pilot");
            while self.pilot.is_none() && Instant::now() < until {
                self.drain(rx);
                std::thread::sleep(POLL);
            }
            self.sim.reset_stream_clock();
        }
        let decimation = (rate / self.info.stream_rate).round().max(1.0) as u64;
        let t_predict = self.sim.setup().t_predict;
        let mut clock = TickClock::new(rate);
        let mut records = Vec::new();
        loop {
            clock.wait(|| self.drain(rx));
            self.drain(rx);
            if let Some(i) = self.pending.take() {
                self.sim.set_external_input(i.u_arms, i.u_legs)?;
            }
            let Some(r) = self.sim.tick()? else { break };
            if r.tick % decimation == 0 {
                self.broadcast(r.tick, Payload::State(Box::new(StateUpdate::from_record(&r))));
                self.broadcast(r.tick, Payload::Cues(Box::new(cue_frame(&r, t_predict))));
            }
            records.push(r);
        }
        let timing = clock.stats();
        log::info!(
            "{} ticks, {:.2}% within 2 ms of schedule, worst {:.2} ms late",
            timing.ticks,
            100.0 * timing.on_time_fraction(),
            timing.max_lateness_ms
        );
        if records.is_empty() {
            return Err(Error::EmptyLog);
        }
        let footer = self.sim.footer(&records)?;
        let tick = self.sim.tick_count();
        if footer.outcome == Outcome::StreamLost {
            self.broadcast(tick, Payload::Event(Event::new(EventCode::StreamLost, footer.reason.clone().unwrap_or_default())));
        }
        let mut ended = Event::new(EventCode::EpisodeEnded, format!("{:?}", footer.outcome).to_lowercase());
        ended.outcome = Some(footer.outcome);
        self.broadcast(tick, Payload::Event(ended));
        let report = MetricsReport { outcome: footer.outcome, metrics: footer.metrics.clone(), timing: Some(timing) };
        self.broadcast(tick, Payload::Metrics(Box::new(report.clone())));

        let log = EpisodeLog { header: self.sim.setup().header(), records, footer };
        let log_path = match &config.data_dir {
            Some(dir) => Some(save(dir, &log, &report)?),
            None => None,
        };
        Ok(SessionReport { log, timing, log_path, clients_seen: self.seen })
    }
}

/// Writes `<name>-<seed>-<ms>.jsonl` and a sibling `.metrics.json`.
fn save(dir: &std::path::Path, log: &EpisodeLog, report: &MetricsReport) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let stem = format!("{}-{}-{}", log.header.scenario.name, log.header.seed, now_ms());
    let path = dir.join(format!("{stem}.jsonl"));
    log.save(&path)?;
    std::fs::write(dir.join(format!("{stem}.metrics.json")), serde_json::to_string_pretty(report)?)?;
    Ok(path)
}
