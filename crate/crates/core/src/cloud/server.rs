//! TCP front end of the cloud service.
//!
//! One thread per connection. Ledger-mutating messages go through the
//! [`CloudCore`] mutex in arrival order. A connection whose first `ModelAck`
//! names an edge id is registered as that edge and can receive pushed models.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, BufReader};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, error, info, warn};

use super::notify::Dispatcher;
use super::CloudCore;
use crate::learn::{deserialize_model, ModelHash};
use crate::protocol::{
    decode, now_ms, read_message_line, DistributionReport, DistributionStatus, EdgeOutcome,
    ErrorMsg, MessageWriter, ModelAck, ModelUpdate, Payload, SeqTracker,
};

pub const DEFAULT_DISTRIBUTE_TIMEOUT_MS: u64 = 5_000;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub distribute_timeout: Duration,
    pub snapshot: Option<PathBuf>,
    pub snapshot_every: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            distribute_timeout: Duration::from_millis(DEFAULT_DISTRIBUTE_TIMEOUT_MS),
            snapshot: None,
            snapshot_every: 100,
        }
    }
}

type SharedWriter = Arc<Mutex<MessageWriter<TcpStream>>>;
type Reply = Result<ModelAck, ErrorMsg>;
type Waiter = Arc<Mutex<Option<mpsc::Sender<Reply>>>>;

#[derive(Clone)]
struct EdgeConn {
    conn_id: u64,
    writer: SharedWriter,
    waiter: Waiter,
}

struct Shared {
    core: Mutex<CloudCore>,
    dispatcher: Mutex<Dispatcher>,
    edges: Mutex<BTreeMap<String, EdgeConn>>,
    conns: Mutex<HashMap<u64, TcpStream>>,
    distributing: Mutex<()>,
    config: ServerConfig,
    next_conn: AtomicU64,
    ledger_events: AtomicU64,
    stopping: AtomicBool,
}

pub struct CloudServer {
    shared: Arc<Shared>,
    addr: SocketAddr,
    acceptor: Option<JoinHandle<()>>,
}

impl CloudServer {
    /// Bind and start accepting connections in a background thread.
    pub fn start(
        listen: &str,
        core: CloudCore,
        dispatcher: Dispatcher,
        config: ServerConfig,
    ) -> io::Result<Self> {
        let listener = TcpListener::bind(listen)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            core: Mutex::new(core),
            dispatcher: Mutex::new(dispatcher),
            edges: Mutex::new(BTreeMap::new()),
            conns: Mutex::new(HashMap::new()),
            distributing: Mutex::new(()),
            config,
            next_conn: AtomicU64::new(1),
            ledger_events: AtomicU64::new(0),
            stopping: AtomicBool::new(false),
        });
        let s = shared.clone();
        let acceptor = thread::Builder::new()
            .name("cloud-accept".into())
            .spawn(move || accept_loop(listener, s))?;
        info!("cloud listening on {addr}");
        Ok(Self {
            shared,
            addr,
            acceptor: Some(acceptor),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Ids of edges currently registered.
    pub fn edges(&self) -> Vec<String> {
        self.shared.edges.lock().unwrap().keys().cloned().collect()
    }

    /// Run `f` against the core under its lock.
    pub fn with_core<R>(&self, f: impl FnOnce(&mut CloudCore) -> R) -> R {
        f(&mut self.shared.core.lock().unwrap())
    }

    pub fn with_dispatcher<R>(&self, f: impl FnOnce(&mut Dispatcher) -> R) -> R {
        f(&mut self.shared.dispatcher.lock().unwrap())
    }

    /// Push a model to every registered edge and collect their replies.
    pub fn distribute(&self, update: &ModelUpdate) -> DistributionReport {
        distribute(&self.shared, update)
    }

    /// Block until the accept loop ends (it only ends on [`Self::shutdown`]).
    pub fn wait(mut self) {
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }

    /// Stop accepting, close every connection and write a final snapshot.
    pub fn shutdown(mut self) -> io::Result<()> {
        self.stop()
    }

    fn stop(&mut self) -> io::Result<()> {
        let Some(acceptor) = self.acceptor.take() else {
            return Ok(());
        };
        self.shared.stopping.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        let _ = acceptor.join();
        for (_, s) in self.shared.conns.lock().unwrap().drain() {
            let _ = s.shutdown(Shutdown::Both);
        }
        match &self.shared.config.snapshot {
            Some(p) => self.shared.core.lock().unwrap().write_snapshot(p),
            None => Ok(()),
        }
    }
}

impl Drop for CloudServer {
    fn drop(&mut self) {
        if let Err(e) = self.stop() {
            error!("final snapshot failed: {e}");
        }
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    for stream in listener.incoming() {
        if shared.stopping.load(Ordering::SeqCst) {
            break;
        }
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                warn!("accept failed: {e}");
                continue;
            }
        };
        let conn_id = shared.next_conn.fetch_add(1, Ordering::Relaxed);
        let s = shared.clone();
        let spawned = thread::Builder::new()
            .name(format!("cloud-conn-{conn_id}"))
            .spawn(move || {
                if let Err(e) = serve_connection(stream, conn_id, &s) {
                    debug!("connection {conn_id} ended: {e}");
                }
                s.conns.lock().unwrap().remove(&conn_id);
            });
        if let Err(e) = spawned {
            error!("cannot spawn connection thread: {e}");
        }
    }
}

fn serve_connection(stream: TcpStream, conn_id: u64, shared: &Shared) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let peer = stream.peer_addr()?;
    shared
        .conns
        .lock()
        .unwrap()
        .insert(conn_id, stream.try_clone()?);
    let writer: SharedWriter = Arc::new(Mutex::new(MessageWriter::new(stream.try_clone()?)));
    let waiter: Waiter = Arc::default();
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut seqs = SeqTracker::default();
    let mut edge_id: Option<String> = None;
    debug!("connection {conn_id} from {peer}");

    let reply =
        |p: Payload| -> io::Result<()> { writer.lock().unwrap().send(p, now_ms()).map(|_| ()) };

    let result = (|| -> io::Result<()> {
        while let Some(line) = read_message_line(&mut reader)? {
            let env = match decode(&line) {
                Ok(env) => env,
                Err(e) => {
                    reply(Payload::Error(ErrorMsg::new("decode", e.to_string(), None)))?;
                    continue;
                }
            };
            if let Err(err) = seqs.check(env.seq) {
                reply(Payload::Error(err))?;
                continue;
            }
            let seq = env.seq;
            match env.payload {
                Payload::Sale(sale) => {
                    let delta = shared.core.lock().unwrap().on_sale(sale)?;
                    if !delta.applied {
                        reply(unknown_sku(&delta.sku, seq))?;
                    } else if delta.discrepancy {
                        warn!("{}: recorded stock {:?}", delta.sku, delta.recorded_stock);
                    }
                    after_ledger_event(shared, delta.applied)?;
                }
                Payload::Shelf(obs) => {
                    let sku = obs.sku.clone();
                    let (alerts, applied) = {
                        let mut core = shared.core.lock().unwrap();
                        let before = core.ledger().dead_letters().len();
                        let alerts = core.on_observation(obs)?;
                        (alerts, core.ledger().dead_letters().len() == before)
                    };
                    if !applied {
                        reply(unknown_sku(&sku, seq))?;
                    }
                    after_ledger_event(shared, applied)?;
                    dispatch(shared, &alerts);
                }
                Payload::Suspicion(s) => {
                    let alerts = shared.core.lock().unwrap().on_suspicion(s);
                    dispatch(shared, &alerts);
                }
                Payload::ModelAck(ack) => match &edge_id {
                    None => {
                        info!(
                            "edge {} registered (model {:?})",
                            ack.edge_id, ack.model_hash
                        );
                        shared.edges.lock().unwrap().insert(
                            ack.edge_id.clone(),
                            EdgeConn {
                                conn_id,
                                writer: writer.clone(),
                                waiter: waiter.clone(),
                            },
                        );
                        edge_id = Some(ack.edge_id);
                    }
                    Some(_) => route(&waiter, Ok(ack)),
                },
                Payload::Error(e) if edge_id.is_some() => route(&waiter, Err(e)),
                Payload::Error(e) => warn!("peer {peer} reported {}: {}", e.code, e.message),
                Payload::ModelUpdate(update) => {
                    let report = match verify(&update) {
                        Ok(()) => distribute(shared, &update),
                        Err(msg) => {
                            reply(Payload::Error(ErrorMsg::new(
                                "corrupt_model",
                                msg,
                                Some(seq),
                            )))?;
                            continue;
                        }
                    };
                    reply(Payload::DistributionReport(report))?;
                }
                other => reply(Payload::Error(ErrorMsg::new(
                    "unexpected",
                    format!("cloud does not accept {}", other.msg_type().as_str()),
                    Some(seq),
                )))?,
            }
        }
        Ok(())
    })();

    if let Some(id) = edge_id {
        let mut edges = shared.edges.lock().unwrap();
        if edges.get(&id).is_some_and(|e| e.conn_id == conn_id) {
            edges.remove(&id);
            info!("edge {id} disconnected");
        }
    }
    // wakes a distribution waiting on this edge
    waiter.lock().unwrap().take();
    let _ = stream.shutdown(Shutdown::Both);
    result
}

fn unknown_sku(sku: &str, seq: u64) -> Payload {
    Payload::Error(ErrorMsg::new(
        "unknown_sku",
        format!("sku `{sku}` is not registered; event kept as dead letter"),
        Some(seq),
    ))
}

fn route(waiter: &Waiter, reply: Reply) {
    match waiter.lock().unwrap().take() {
        Some(tx) => {
            let _ = tx.send(reply);
        }
        None => debug!("unsolicited edge reply: {reply:?}"),
    }
}

fn after_ledger_event(shared: &Shared, applied: bool) -> io::Result<()> {
    if !applied {
        return Ok(());
    }
    let n = shared.ledger_events.fetch_add(1, Ordering::Relaxed) + 1;
    match &shared.config.snapshot {
        Some(p) if n.is_multiple_of(shared.config.snapshot_every) => {
            shared.core.lock().unwrap().write_snapshot(p)
        }
        _ => Ok(()),
    }
}

fn dispatch(shared: &Shared, alerts: &[crate::protocol::Alert]) {
    if alerts.is_empty() {
        return;
    }
    let mut d = shared.dispatcher.lock().unwrap();
    for a in alerts {
        for rec in d.dispatch(a, now_ms()) {
            if !rec.success {
                error!("alert {} not delivered to {}", rec.alert_id, rec.sink);
            }
        }
    }
}

fn verify(update: &ModelUpdate) -> Result<(), String> {
    if ModelHash::of(&update.model) != update.model_hash {
        return Err("hash does not match model bytes".into());
    }
    let model = deserialize_model(&update.model).map_err(|e| e.to_string())?;
    if model.kind() != update.kind {
        return Err(format!(
            "declared kind {} but bytes hold {}",
            update.kind,
            model.kind()
        ));
    }
    Ok(())
}

fn distribute(shared: &Shared, update: &ModelUpdate) -> DistributionReport {
    let _one_at_a_time = shared.distributing.lock().unwrap();
    let edges: Vec<(String, EdgeConn)> = shared
        .edges
        .lock()
        .unwrap()
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    info!(
        "distributing {} model {} to {} edges",
        update.kind,
        update.model_hash,
        edges.len()
    );

    let mut waiting = Vec::with_capacity(edges.len());
    for (id, conn) in edges {
        let (tx, rx) = mpsc::channel();
        *conn.waiter.lock().unwrap() = Some(tx);
        let sent = conn
            .writer
            .lock()
            .unwrap()
            .send(Payload::ModelUpdate(update.clone()), now_ms());
        match sent {
            Ok(_) => waiting.push((id, Some(rx))),
            Err(e) => {
                warn!("edge {id}: send failed: {e}");
                conn.waiter.lock().unwrap().take();
                waiting.push((id, None));
            }
        }
    }

    let deadline = Instant::now() + shared.config.distribute_timeout;
    let edges = waiting
        .into_iter()
        .map(|(edge_id, rx)| {
            let reply =
                rx.map(|rx| rx.recv_timeout(deadline.saturating_duration_since(Instant::now())));
            let (status, acked_hash) = match reply {
                Some(Ok(Ok(ack))) if ack.model_hash == Some(update.model_hash) => {
                    (DistributionStatus::Acked, ack.model_hash)
                }
                Some(Ok(Ok(ack))) => (DistributionStatus::Stale, ack.model_hash),
                Some(Ok(Err(e))) => {
                    warn!("edge {edge_id} rejected model: {}", e.message);
                    (DistributionStatus::Rejected, None)
                }
                Some(Err(RecvTimeoutError::Timeout)) => {
                    warn!("edge {edge_id}: no ack within timeout");
                    (DistributionStatus::Unreached, None)
                }
                Some(Err(RecvTimeoutError::Disconnected)) | None => {
                    (DistributionStatus::Unreached, None)
                }
            };
            EdgeOutcome {
                edge_id,
                status,
                acked_hash,
            }
        })
        .collect();
    DistributionReport {
        model_hash: update.model_hash,
        edges,
    }
}
