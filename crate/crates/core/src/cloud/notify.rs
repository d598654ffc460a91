//! Alert delivery to pluggable sinks.

use std::collections::HashSet;
use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use log::{info, warn};
use serde::Serialize;
use thiserror::Error;

use crate::protocol::Alert;

pub const DEFAULT_RETRIES: u32 = 3;

#[derive(Debug, Error)]
#[error("sink `{sink}` unavailable: {reason}")]
pub struct SinkUnavailable {
    pub sink: String,
    pub reason: String,
}

pub trait Notifier: Send {
    fn name(&self) -> String;
    /// Deliver one serialized alert (a single JSON line, no LF).
    fn deliver(&mut self, line: &str) -> Result<(), SinkUnavailable>;
}

/// Writes each alert as one line to a stream, stdout by default.
pub struct StreamSink<W: Write + Send> {
    name: String,
    out: W,
}

impl StreamSink<io::Stdout> {
    pub fn stdout() -> Self {
        Self {
            name: "stdout".into(),
            out: io::stdout(),
        }
    }
}

impl<W: Write + Send> StreamSink<W> {
    pub fn new(name: impl Into<String>, out: W) -> Self {
        Self {
            name: name.into(),
            out,
        }
    }
}

impl<W: Write + Send> Notifier for StreamSink<W> {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn deliver(&mut self, line: &str) -> Result<(), SinkUnavailable> {
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| SinkUnavailable {
                sink: self.name(),
                reason: e.to_string(),
            })
    }
}

/// Appends to a file, opening it per delivery so rotation is harmless.
pub struct FileSink {
    path: PathBuf,
}

impl FileSink {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }
}

impl Notifier for FileSink {
    fn name(&self) -> String {
        format!("file:{}", self.path.display())
    }

    fn deliver(&mut self, line: &str) -> Result<(), SinkUnavailable> {
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .and_then(|mut f| writeln!(f, "{line}"))
            .map_err(|e| SinkUnavailable {
                sink: self.name(),
                reason: e.to_string(),
            })
    }
}

/// POSTs the alert JSON to a URL; any non-2xx status counts as failure.
pub struct WebhookSink {
    url: String,
    agent: ureq::Agent,
}

impl WebhookSink {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        Self {
            url: url.into(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl Notifier for WebhookSink {
    fn name(&self) -> String {
        format!("webhook:{}", self.url)
    }

    fn deliver(&mut self, line: &str) -> Result<(), SinkUnavailable> {
        self.agent
            .post(&self.url)
            .set("Content-Type", "application/json")
            .send_string(line)
            .map(|_| ())
            .map_err(|e| SinkUnavailable {
                sink: self.name(),
                reason: e.to_string(),
            })
    }
}

/// Collects delivered lines in memory; can be told to fail.
#[derive(Clone, Default)]
pub struct MemorySink {
    pub lines: Arc<Mutex<Vec<String>>>,
    pub failing: bool,
}

impl Notifier for MemorySink {
    fn name(&self) -> String {
        "memory".into()
    }

    fn deliver(&mut self, line: &str) -> Result<(), SinkUnavailable> {
        if self.failing {
            return Err(SinkUnavailable {
                sink: self.name(),
                reason: "configured to fail".into(),
            });
        }
        self.lines.lock().unwrap().push(line.to_string());
        Ok(())
    }
}

/// Parse `stdout`, `file:<path>` or `webhook:<url>`.
pub fn sink_from_spec(spec: &str, timeout: Duration) -> Result<Box<dyn Notifier>, String> {
    match spec.split_once(':') {
        _ if spec == "stdout" => Ok(Box::new(StreamSink::stdout())),
        Some(("file", path)) if !path.is_empty() => Ok(Box::new(FileSink::new(path))),
        Some(("webhook", url)) if !url.is_empty() => Ok(Box::new(WebhookSink::new(url, timeout))),
        _ => Err(format!(
            "unknown notifier `{spec}` (expected stdout, file:<path> or webhook:<url>)"
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeliveryRecord {
    pub alert_id: String,
    pub sink: String,
    pub at_ms: u64,
    pub success: bool,
    pub attempts: u32,
    pub error: Option<String>,
}

pub struct Dispatcher {
    sinks: Vec<Box<dyn Notifier>>,
    retries: u32,
    retry_delay: Duration,
    seen: HashSet<String>,
    records: Vec<DeliveryRecord>,
}

impl Dispatcher {
    pub fn new(sinks: Vec<Box<dyn Notifier>>) -> Self {
        Self {
            sinks,
            retries: DEFAULT_RETRIES,
            retry_delay: Duration::from_millis(200),
            seen: HashSet::new(),
            records: Vec::new(),
        }
    }

    pub fn with_retry(mut self, retries: u32, delay: Duration) -> Self {
        self.retries = retries;
        self.retry_delay = delay;
        self
    }

    /// Send to every sink. Repeated alert ids are skipped and yield no records.
    pub fn dispatch(&mut self, alert: &Alert, now_ms: u64) -> Vec<DeliveryRecord> {
        if !self.seen.insert(alert.alert_id.clone()) {
            info!("suppressing duplicate alert {}", alert.alert_id);
            return Vec::new();
        }
        let line = serde_json::to_string(alert).expect("alert serializes");
        let mut out = Vec::with_capacity(self.sinks.len());
        for sink in &mut self.sinks {
            let mut attempts = 0;
            let result = loop {
                attempts += 1;
                match sink.deliver(&line) {
                    Ok(()) => break Ok(()),
                    Err(e) if attempts > self.retries => break Err(e),
                    Err(e) => {
                        warn!("{e}; retrying");
                        std::thread::sleep(self.retry_delay);
                    }
                }
            };
            out.push(DeliveryRecord {
                alert_id: alert.alert_id.clone(),
                sink: sink.name(),
                at_ms: now_ms,
                success: result.is_ok(),
                attempts,
                error: result.err().map(|e| e.reason),
            });
        }
        self.records.extend(out.iter().cloned());
        out
    }

    pub fn records(&self) -> &[DeliveryRecord] {
        &self.records
    }
}
