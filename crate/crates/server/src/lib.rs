//! Network front end for a single [`SessionHub`].
//!
//! One session per server. Raw TCP and WebSocket connections both carry the
//! newline-JSON envelope protocol; every connection task decodes its frames
//! and hands them to one hub task, which owns all session state. The HTTP
//! listener also serves the map and activity documents under `/assets/`.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use log::{debug, info, warn};
use tactix_core::activity::Activity;
use tactix_core::dynamics::DynamicsParams;
use tactix_core::session::{encode, ConnId, HubInput, HubOutput, LineDecoder, SessionConfig, SessionHub, SessionRecord};
use tactix_core::trace::summary::{session_summary, SummaryOptions};
use tactix_core::trace::{write_events, write_trace, TraceError};
use tactix_core::zone_map::ZoneMap;
use thiserror::Error;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, Notify};
use tokio::task::JoinHandle;

pub mod agent;

/// How often the hub task checks for due heartbeats.
const TICK_MS: u64 = 20;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("hub task failed: {0}")]
    Hub(String),
}

#[derive(Debug, Clone)]
pub struct ServerOptions {
    pub config: SessionConfig,
    pub dynamics: DynamicsParams,
    pub map: ZoneMap,
    /// The map document exactly as loaded; served verbatim so clients can
    /// hash it and compare with `config.map_hash`.
    pub map_json: String,
    pub activity: Activity,
    pub activity_json: String,
    pub tcp_addr: SocketAddr,
    pub http_addr: SocketAddr,
}

enum Outbound {
    Frame(Vec<u8>),
    Close,
}

enum ToHub {
    Open(ConnId, mpsc::UnboundedSender<Outbound>),
    Input(HubInput),
}

#[derive(Clone)]
struct Shared {
    hub: mpsc::UnboundedSender<ToHub>,
    next_conn: Arc<AtomicU64>,
    session_id: String,
    map_json: Arc<str>,
    activity_json: Arc<str>,
    index_json: Arc<str>,
}

impl Shared {
    fn open(&self) -> (ConnId, mpsc::UnboundedReceiver<Outbound>) {
        let id = ConnId(self.next_conn.fetch_add(1, Ordering::Relaxed));
        let (tx, rx) = mpsc::unbounded_channel();
        let _ = self.hub.send(ToHub::Open(id, tx));
        (id, rx)
    }

    fn input(&self, input: HubInput) {
        let _ = self.hub.send(ToHub::Input(input));
    }

    /// Feeds raw bytes through the decoder and forwards complete frames.
    fn feed(&self, conn: ConnId, decoder: &mut LineDecoder, bytes: &[u8]) {
        decoder.push(bytes);
        while let Some(frame) = decoder.next_frame() {
            self.input(match frame {
                Ok(env) => HubInput::Frame(conn, env),
                Err(e) => HubInput::Malformed(conn, e),
            });
        }
    }
}

/// Ends a running session from elsewhere, e.g. a signal handler.
#[derive(Debug, Clone, Default)]
pub struct StopHandle(Arc<Notify>);

impl StopHandle {
    pub fn stop(&self) {
        self.0.notify_one();
    }
}

/// A running session server.
pub struct RunningServer {
    tcp_addr: SocketAddr,
    http_addr: SocketAddr,
    session_id: String,
    stop: StopHandle,
    hub: JoinHandle<SessionRecord>,
    tasks: Vec<JoinHandle<()>>,
}

impl RunningServer {
    pub fn tcp_addr(&self) -> SocketAddr {
        self.tcp_addr
    }

    pub fn http_addr(&self) -> SocketAddr {
        self.http_addr
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn ws_url(&self) -> String {
        format!("ws://{}/ws/session/{}", self.http_addr, self.session_id)
    }

    pub fn stop_handle(&self) -> StopHandle {
        self.stop.clone()
    }

    /// Waits until both participants have joined and then left, or until
    /// the session is stopped.
    pub async fn finished(mut self) -> Result<SessionRecord, ServerError> {
        let record = (&mut self.hub).await.map_err(|e| ServerError::Hub(e.to_string()));
        self.abort_listeners();
        record
    }

    /// Stops the session now and returns what was recorded.
    pub async fn shutdown(self) -> Result<SessionRecord, ServerError> {
        self.stop.stop();
        self.finished().await
    }

    fn abort_listeners(&mut self) {
        for t in self.tasks.drain(..) {
            t.abort();
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        self.hub.abort();
        self.abort_listeners();
    }
}

async fn bind(addr: SocketAddr) -> Result<TcpListener, ServerError> {
    TcpListener::bind(addr).await.map_err(|source| ServerError::Bind { addr, source })
}

/// Binds both listeners and starts the session.
pub async fn start(opts: ServerOptions) -> Result<RunningServer, ServerError> {
    opts.config.validate().map_err(ServerError::Config)?;
    opts.dynamics.validate().map_err(ServerError::Config)?;
    let problems = opts.activity.check_against(&opts.map);
    if !problems.is_empty() {
        return Err(ServerError::Config(problems.join("; ")));
    }
    let tcp = bind(opts.tcp_addr).await?;
    let http = bind(opts.http_addr).await?;
    let tcp_addr = tcp.local_addr()?;
    let http_addr = http.local_addr()?;

    let (hub_tx, hub_rx) = mpsc::unbounded_channel();
    let stop = StopHandle::default();
    let session_id = opts.config.session_id.clone();
    let index = serde_json::json!({
        "session_id": session_id,
        "mode": opts.config.mode,
        "map_hash": opts.config.map_hash,
        "map": "/assets/map.json",
        "activity": "/assets/activity.json",
        "ws": format!("/ws/session/{session_id}"),
    });
    let shared = Shared {
        hub: hub_tx,
        next_conn: Arc::new(AtomicU64::new(1)),
        session_id: session_id.clone(),
        map_json: opts.map_json.as_str().into(),
        activity_json: opts.activity_json.as_str().into(),
        index_json: index.to_string().into(),
    };

    let hub = SessionHub::new(opts.config, opts.dynamics, opts.map, &opts.activity);
    let hub_task = tokio::spawn(run_hub(hub, hub_rx, stop.clone()));

    let tcp_shared = shared.clone();
    let tcp_task = tokio::spawn(async move {
        loop {
            match tcp.accept().await {
                Ok((stream, peer)) => {
                    debug!("tcp connection from {peer}");
                    tokio::spawn(tcp_conn(stream, tcp_shared.clone()));
                }
                Err(e) => warn!("tcp accept failed: {e}"),
            }
        }
    });
    let app = router(shared);
    let http_task = tokio::spawn(async move {
        if let Err(e) = axum::serve(http, app).await {
            warn!("http server stopped: {e}");
        }
    });
    info!("session {session_id}: tcp {tcp_addr}, http {http_addr}");
    Ok(RunningServer {
        tcp_addr,
        http_addr,
        session_id,
        stop,
        hub: hub_task,
        tasks: vec![tcp_task, http_task],
    })
}

async fn run_hub(
    mut hub: SessionHub,
    mut rx: mpsc::UnboundedReceiver<ToHub>,
    stop: StopHandle,
) -> SessionRecord {
    let epoch = Instant::now();
    let now = || epoch.elapsed().as_millis() as u64;
    let mut conns = std::collections::BTreeMap::new();
    let mut ticker = tokio::time::interval(Duration::from_millis(TICK_MS));
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut seen_started = false;
    loop {
        let outputs = tokio::select! {
            _ = stop.0.notified() => break,
            _ = ticker.tick() => hub.tick(now()),
            msg = rx.recv() => match msg {
                Some(ToHub::Open(conn, tx)) => {
                    conns.insert(conn, tx);
                    hub.handle(now(), HubInput::Connected(conn))
                }
                Some(ToHub::Input(input)) => {
                    if let HubInput::Disconnected(conn) = &input {
                        conns.remove(conn);
                    }
                    hub.handle(now(), input)
                }
                None => break,
            },
        };
        for o in outputs {
            match o {
                HubOutput::Send(conn, env) => {
                    if let Some(tx) = conns.get(&conn) {
                        let _ = tx.send(Outbound::Frame(encode(&env)));
                    }
                }
                HubOutput::Close(conn) => {
                    if let Some(tx) = conns.remove(&conn) {
                        let _ = tx.send(Outbound::Close);
                    }
                }
            }
        }
        seen_started |= hub.is_started();
        if seen_started && hub.connected_roles().is_empty() {
            info!("session {}: both participants left", hub.config().session_id);
            break;
        }
    }
    for tx in conns.into_values() {
        let _ = tx.send(Outbound::Close);
    }
    hub.finish()
}

async fn tcp_conn(stream: TcpStream, shared: Shared) {
    let _ = stream.set_nodelay(true);
    let (conn, mut rx) = shared.open();
    let (mut rd, mut wr) = stream.into_split();
    let mut decoder = LineDecoder::new();
    let mut buf = vec![0u8; 8192];
    loop {
        tokio::select! {
            read = rd.read(&mut buf) => match read {
                Ok(0) | Err(_) => break,
                Ok(n) => shared.feed(conn, &mut decoder, &buf[..n]),
            },
            out = rx.recv() => match out {
                Some(Outbound::Frame(bytes)) => {
                    if wr.write_all(&bytes).await.is_err() {
                        break;
                    }
                }
                Some(Outbound::Close) | None => {
                    let _ = wr.shutdown().await;
                    break;
                }
            },
        }
    }
    shared.input(HubInput::Disconnected(conn));
}

fn router(shared: Shared) -> Router {
    Router::new()
        .route("/ws/session/{session_id}", get(ws_upgrade))
        .route("/assets/", get(assets_index))
        .route("/assets/map.json", get(asset_map))
        .route("/assets/activity.json", get(asset_activity))
        .with_state(shared)
}

fn json_response(body: &str) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body.to_string()).into_response()
}

async fn assets_index(State(s): State<Shared>) -> Response {
    json_response(&s.index_json)
}

async fn asset_map(State(s): State<Shared>) -> Response {
    json_response(&s.map_json)
}

async fn asset_activity(State(s): State<Shared>) -> Response {
    json_response(&s.activity_json)
}

async fn ws_upgrade(UrlPath(session_id): UrlPath<String>, State(s): State<Shared>, ws: WebSocketUpgrade) -> Response {
    if session_id != s.session_id {
        return (StatusCode::NOT_FOUND, format!("unknown session {session_id}")).into_response();
    }
    ws.on_upgrade(move |socket| ws_conn(socket, s))
}

/// Each WebSocket text message carries one or more newline-terminated
/// frames; a missing final newline is tolerated.
async fn ws_conn(socket: WebSocket, shared: Shared) {
    let (conn, mut rx) = shared.open();
    let (mut sink, mut stream) = socket.split();
    let mut decoder = LineDecoder::new();
    loop {
        tokio::select! {
            msg = stream.next() => match msg {
                Some(Ok(WsMessage::Text(text))) => {
                    let mut bytes = text.as_str().as_bytes().to_vec();
                    if !bytes.ends_with(b"\n") {
                        bytes.push(b'\n');
                    }
                    shared.feed(conn, &mut decoder, &bytes);
                }
                Some(Ok(WsMessage::Binary(bytes))) => shared.feed(conn, &mut decoder, &bytes),
                Some(Ok(WsMessage::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => {}
            },
            out = rx.recv() => match out {
                Some(Outbound::Frame(bytes)) => {
                    let text = String::from_utf8_lossy(&bytes).into_owned();
                    if sink.send(WsMessage::Text(text.into())).await.is_err() {
                        break;
                    }
                }
                Some(Outbound::Close) | None => {
                    let _ = sink.send(WsMessage::Close(None)).await;
                    break;
                }
            },
        }
    }
    shared.input(HubInput::Disconnected(conn));
}

/// Writes `trace.csv` and `events.jsonl`, plus `report.json` when the
/// trace is analyzable. Returns the paths written.
pub fn write_record(dir: &Path, record: &SessionRecord, opts: &SummaryOptions) -> Result<Vec<PathBuf>, ServerError> {
    std::fs::create_dir_all(dir)?;
    let digest = record.config.digest();
    let trace_path = dir.join("trace.csv");
    write_trace(std::io::BufWriter::new(std::fs::File::create(&trace_path)?), &record.trace, Some(&digest))?;
    let events_path = dir.join("events.jsonl");
    write_events(std::io::BufWriter::new(std::fs::File::create(&events_path)?), &record.events)?;
    let mut paths = vec![trace_path, events_path];
    match session_summary(&record.trace, &record.events, opts) {
        Ok(report) => {
            let path = dir.join("report.json");
            let mut text = serde_json::to_string_pretty(&report).map_err(std::io::Error::other)?;
            text.push('\n');
            std::fs::write(&path, text)?;
            paths.push(path);
        }
        Err(e) => warn!("no report for session {}: {e}", record.config.session_id),
    }
    Ok(paths)
}
