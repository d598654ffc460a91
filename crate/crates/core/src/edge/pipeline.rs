use std::io::{self, BufReader};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use log::{debug, info, warn};
use serde::Serialize;

use super::uplink::{Clock, Connector, Link, Uplink};
use super::{EdgeAgent, EdgeError, ModelStore};
use crate::features::parse_landmark_record;
use crate::protocol::{
    decode, now_ms, read_message_line, ErrorMsg, MessageWriter, ModelAck, Payload, SeqTracker,
};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunReport {
    /// Frames parsed and scored.
    pub frames: u64,
    pub events: u64,
    /// Records that failed to parse or normalize.
    pub parse_failures: u64,
    /// Frames refused by stream rules (unknown camera, sequence regression).
    pub rejected_frames: u64,
    /// Frames seen while no anomaly model was loaded.
    pub unscored_frames: u64,
    pub delivered: u64,
    pub dropped: u64,
}

/// Drive landmark lines through the agent and ship events through `uplink`.
///
/// Lines are handled in arrival order. After the source ends, pending events
/// are drained with bounded retries; failing that is the only error.
pub fn run_pipeline<I, C, K>(
    agent: &mut EdgeAgent,
    source: I,
    uplink: &mut Uplink<C, K>,
) -> Result<RunReport, EdgeError>
where
    I: IntoIterator<Item = io::Result<String>>,
    C: Connector,
    K: Clock,
{
    let mut report = RunReport::default();
    for line in source {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_landmark_record(&line) {
            Err(e) => {
                debug!("skipping record: {e}");
                report.parse_failures += 1;
            }
            Ok(frame) => match agent.evaluate_frame(&frame) {
                Ok(event) => {
                    report.frames += 1;
                    if let Some(ev) = event {
                        report.events += 1;
                        uplink.enqueue(ev);
                    }
                }
                Err(EdgeError::NoModelLoaded) => report.unscored_frames += 1,
                Err(EdgeError::Feature(e)) => {
                    debug!("skipping frame: {e}");
                    report.parse_failures += 1;
                }
                Err(e) => {
                    warn!("rejecting frame: {e}");
                    report.rejected_frames += 1;
                }
            },
        }
        uplink.pump();
    }
    uplink.drain()?;
    report.delivered = uplink.delivered();
    report.dropped = uplink.dropped();
    info!(
        "pipeline done: {} frames, {} events, {} parse failures",
        report.frames, report.events, report.parse_failures
    );
    Ok(report)
}

type SharedWriter = Arc<Mutex<MessageWriter<TcpStream>>>;

/// Connects to the cloud over TCP. Each connection registers the edge with a
/// `ModelAck` and runs a reader thread that applies pushed models.
pub struct TcpConnector {
    addr: String,
    edge_id: String,
    models: Arc<ModelStore>,
    timeout: Duration,
}

impl TcpConnector {
    pub fn new(
        addr: impl Into<String>,
        edge_id: impl Into<String>,
        models: Arc<ModelStore>,
    ) -> Self {
        Self {
            addr: addr.into(),
            edge_id: edge_id.into(),
            models,
            timeout: Duration::from_secs(2),
        }
    }
}

struct TcpLink {
    stream: TcpStream,
    writer: SharedWriter,
    alive: Arc<AtomicBool>,
}

impl Link for TcpLink {
    fn send(&mut self, payload: &Payload) -> io::Result<()> {
        if !self.alive.load(Ordering::Acquire) {
            return Err(io::ErrorKind::BrokenPipe.into());
        }
        self.writer
            .lock()
            .unwrap()
            .send(payload.clone(), now_ms())?;
        Ok(())
    }
}

impl Drop for TcpLink {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}

impl Connector for TcpConnector {
    fn connect(&mut self) -> io::Result<Box<dyn Link>> {
        let addr = self
            .addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no address"))?;
        let stream = TcpStream::connect_timeout(&addr, self.timeout)?;
        stream.set_nodelay(true)?;
        let writer: SharedWriter = Arc::new(Mutex::new(MessageWriter::new(stream.try_clone()?)));
        writer.lock().unwrap().send(
            Payload::ModelAck(ModelAck {
                model_hash: self.models.snapshot().anomaly_hash(),
                edge_id: self.edge_id.clone(),
            }),
            now_ms(),
        )?;

        let alive = Arc::new(AtomicBool::new(true));
        let reader = BufReader::new(stream.try_clone()?);
        let (w, a, models, edge_id) = (
            writer.clone(),
            alive.clone(),
            self.models.clone(),
            self.edge_id.clone(),
        );
        thread::Builder::new()
            .name(format!("edge-{edge_id}-rx"))
            .spawn(move || {
                serve_cloud_messages(reader, &w, &models, &edge_id);
                a.store(false, Ordering::Release);
            })?;
        Ok(Box::new(TcpLink {
            stream,
            writer,
            alive,
        }))
    }
}

/// Apply pushed models and answer each with an ack or an error, until the
/// connection closes. A truncated final line is discarded.
fn serve_cloud_messages(
    mut reader: BufReader<TcpStream>,
    writer: &SharedWriter,
    models: &ModelStore,
    edge_id: &str,
) {
    let mut seqs = SeqTracker::default();
    let reply = |p: Payload| {
        if let Err(e) = writer.lock().unwrap().send(p, now_ms()) {
            debug!("reply failed: {e}");
        }
    };
    while let Ok(Some(line)) = read_message_line(&mut reader) {
        let env = match decode(&line) {
            Ok(env) => env,
            Err(e) => {
                reply(Payload::Error(ErrorMsg::new("decode", e.to_string(), None)));
                continue;
            }
        };
        if let Err(err) = seqs.check(env.seq) {
            reply(Payload::Error(err));
            continue;
        }
        match env.payload {
            Payload::ModelUpdate(update) => match models.apply_model_update(&update, edge_id) {
                Ok(ack) => {
                    info!("applied {} model {}", update.kind, update.model_hash);
                    reply(Payload::ModelAck(ack));
                }
                Err(e) => {
                    warn!("rejected model update: {e}");
                    reply(Payload::Error(ErrorMsg::new(
                        "corrupt_model",
                        e.to_string(),
                        Some(env.seq),
                    )));
                }
            },
            Payload::Error(e) => warn!("cloud reported error {}: {}", e.code, e.message),
            other => reply(Payload::Error(ErrorMsg::new(
                "unexpected",
                format!("edge does not accept {}", other.msg_type().as_str()),
                Some(env.seq),
            ))),
        }
    }
}
