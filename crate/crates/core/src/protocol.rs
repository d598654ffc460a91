//! Line-delimited JSON messages between terminals, edges and the cloud.
//!
//! Each message is one object on one LF-terminated line:
//!
//! ```text
//! {"msg_type":"SaleEvent","seq":3,"sent_at_ms":1700000000000,"payload":{...}}
//! ```
//!
//! `seq` increases strictly per connection and direction. Field order on
//! encode is fixed (see `docs/protocol.md`); decoding accepts any order but
//! rejects unknown fields.

use std::io::{self, BufRead, Write};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::features::{FeatureVector, FEATURE_DIM};
use crate::json::{self, FieldError, ObjectReader};
use crate::learn::{ModelHash, ModelKind};

pub const DEFAULT_CLOUD_PORT: u16 = 7700;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsgType {
    SaleEvent,
    ShelfObservation,
    SuspicionEvent,
    ModelUpdate,
    ModelAck,
    Alert,
    Error,
    DistributionReport,
}

impl MsgType {
    pub const ALL: [MsgType; 8] = [
        MsgType::SaleEvent,
        MsgType::ShelfObservation,
        MsgType::SuspicionEvent,
        MsgType::ModelUpdate,
        MsgType::ModelAck,
        MsgType::Alert,
        MsgType::Error,
        MsgType::DistributionReport,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MsgType::SaleEvent => "SaleEvent",
            MsgType::ShelfObservation => "ShelfObservation",
            MsgType::SuspicionEvent => "SuspicionEvent",
            MsgType::ModelUpdate => "ModelUpdate",
            MsgType::ModelAck => "ModelAck",
            MsgType::Alert => "Alert",
            MsgType::Error => "Error",
            MsgType::DistributionReport => "DistributionReport",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl Serialize for ModelHash {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaleEvent {
    pub sku: String,
    pub quantity: u64,
    pub terminal_id: String,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShelfObservation {
    pub sku: String,
    pub observed_count: u64,
    pub camera_id: String,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BufferedFrame {
    pub frame_seq: u64,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuspicionEvent {
    pub camera_id: String,
    pub anomaly_score: f64,
    pub predicted_label: String,
    pub frame_buffer: Vec<BufferedFrame>,
    /// Hash of the anomaly model that produced `anomaly_score`.
    pub model_hash: ModelHash,
    /// Hash of the classifier behind `predicted_label`, when one is loaded.
    pub classifier_hash: Option<ModelHash>,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelUpdate {
    pub kind: ModelKind,
    pub model: Vec<u8>,
    pub model_hash: ModelHash,
}

impl Serialize for ModelUpdate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire<'a> {
            kind: ModelKind,
            model: String,
            model_hash: &'a ModelHash,
        }
        Wire {
            kind: self.kind,
            model: BASE64.encode(&self.model),
            model_hash: &self.model_hash,
        }
        .serialize(s)
    }
}

/// Reply to a [`ModelUpdate`]; also sent once by an edge on connect to
/// register its id and current anomaly model (`None` before any model).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelAck {
    pub model_hash: Option<ModelHash>,
    pub edge_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Alert {
    pub alert_id: String,
    pub camera_id: String,
    pub sku: String,
    pub missing_count: u64,
    pub suspicion: SuspicionEvent,
    pub created_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorMsg {
    pub code: String,
    pub message: String,
    pub ref_seq: Option<u64>,
}

impl ErrorMsg {
    pub fn new(code: &str, message: impl Into<String>, ref_seq: Option<u64>) -> Self {
        Self {
            code: code.to_string(),
            message: message.into(),
            ref_seq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionStatus {
    /// Acked with the hash that was sent.
    Acked,
    /// Acked with a different hash.
    Stale,
    /// Replied with an error instead of an ack.
    Rejected,
    /// No reply before the timeout, or the connection dropped.
    Unreached,
}

impl DistributionStatus {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "acked" => Some(Self::Acked),
            "stale" => Some(Self::Stale),
            "rejected" => Some(Self::Rejected),
            "unreached" => Some(Self::Unreached),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeOutcome {
    pub edge_id: String,
    pub status: DistributionStatus,
    pub acked_hash: Option<ModelHash>,
}

/// Result of a model push, returned to the client that pushed it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionReport {
    pub model_hash: ModelHash,
    pub edges: Vec<EdgeOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Sale(SaleEvent),
    Shelf(ShelfObservation),
    Suspicion(SuspicionEvent),
    ModelUpdate(ModelUpdate),
    ModelAck(ModelAck),
    Alert(Alert),
    Error(ErrorMsg),
    DistributionReport(DistributionReport),
}

impl Payload {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Payload::Sale(_) => MsgType::SaleEvent,
            Payload::Shelf(_) => MsgType::ShelfObservation,
            Payload::Suspicion(_) => MsgType::SuspicionEvent,
            Payload::ModelUpdate(_) => MsgType::ModelUpdate,
            Payload::ModelAck(_) => MsgType::ModelAck,
            Payload::Alert(_) => MsgType::Alert,
            Payload::Error(_) => MsgType::Error,
            Payload::DistributionReport(_) => MsgType::DistributionReport,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub seq: u64,
    pub sent_at_ms: u64,
    pub payload: Payload,
}

impl Envelope {
    pub fn msg_type(&self) -> MsgType {
        self.payload.msg_type()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("decode error at byte {offset}, field `{field}`: {reason}")]
pub struct DecodeError {
    pub offset: usize,
    pub field: String,
    pub reason: String,
}

impl DecodeError {
    fn at(line: &str, e: FieldError) -> Self {
        Self {
            offset: json::key_offset(line, &e.field),
            field: e.field,
            reason: e.reason,
        }
    }
}

pub fn encode(envelope: &Envelope) -> String {
    #[derive(Serialize)]
    #[serde(untagged)]
    enum PayloadRef<'a> {
        Sale(&'a SaleEvent),
        Shelf(&'a ShelfObservation),
        Suspicion(&'a SuspicionEvent),
        ModelUpdate(&'a ModelUpdate),
        ModelAck(&'a ModelAck),
        Alert(&'a Alert),
        Error(&'a ErrorMsg),
        DistributionReport(&'a DistributionReport),
    }
    #[derive(Serialize)]
    struct Wire<'a> {
        msg_type: &'static str,
        seq: u64,
        sent_at_ms: u64,
        payload: PayloadRef<'a>,
    }
    let payload = match &envelope.payload {
        Payload::Sale(p) => PayloadRef::Sale(p),
        Payload::Shelf(p) => PayloadRef::Shelf(p),
        Payload::Suspicion(p) => PayloadRef::Suspicion(p),
        Payload::ModelUpdate(p) => PayloadRef::ModelUpdate(p),
        Payload::ModelAck(p) => PayloadRef::ModelAck(p),
        Payload::Alert(p) => PayloadRef::Alert(p),
        Payload::Error(p) => PayloadRef::Error(p),
        Payload::DistributionReport(p) => PayloadRef::DistributionReport(p),
    };
    serde_json::to_string(&Wire {
        msg_type: envelope.msg_type().as_str(),
        seq: envelope.seq,
        sent_at_ms: envelope.sent_at_ms,
        payload,
    })
    .expect("envelope encodes")
}

pub fn decode(line: &str) -> Result<Envelope, DecodeError> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    let value: Value = serde_json::from_str(line).map_err(|e| DecodeError {
        offset: byte_offset(line, e.line(), e.column()),
        field: "<message>".into(),
        reason: e.to_string(),
    })?;
    decode_value(&value).map_err(|e| DecodeError::at(line, e))
}

fn byte_offset(line: &str, line_no: usize, column: usize) -> usize {
    if line_no <= 1 {
        column.saturating_sub(1)
    } else {
        line.len()
    }
}

fn decode_value(value: &Value) -> Result<Envelope, FieldError> {
    let r = ObjectReader::new(value, "")?;
    r.deny_unknown(&["msg_type", "seq", "sent_at_ms", "payload"])?;
    let tag = r.str("msg_type")?;
    let msg_type =
        MsgType::parse(tag).ok_or_else(|| FieldError::new("msg_type", "unknown message type"))?;
    let seq = r.u64("seq")?;
    let sent_at_ms = r.u64("sent_at_ms")?;
    let p = r.object("payload")?;
    let payload = match msg_type {
        MsgType::SaleEvent => Payload::Sale(decode_sale(&p)?),
        MsgType::ShelfObservation => Payload::Shelf(decode_shelf(&p)?),
        MsgType::SuspicionEvent => Payload::Suspicion(decode_suspicion(&p)?),
        MsgType::ModelUpdate => Payload::ModelUpdate(decode_model_update(&p)?),
        MsgType::ModelAck => Payload::ModelAck(decode_model_ack(&p)?),
        MsgType::Alert => Payload::Alert(decode_alert(&p)?),
        MsgType::Error => Payload::Error(decode_error(&p)?),
        MsgType::DistributionReport => Payload::DistributionReport(decode_report(&p)?),
    };
    Ok(Envelope {
        seq,
        sent_at_ms,
        payload,
    })
}

fn text(r: &ObjectReader<'_>, name: &str) -> Result<String, FieldError> {
    let s = r.str(name)?;
    if s.is_empty() {
        return Err(FieldError::new(r.path(name), "must be non-empty"));
    }
    Ok(s.to_string())
}

fn hash(r: &ObjectReader<'_>, name: &str) -> Result<ModelHash, FieldError> {
    ModelHash::from_hex(r.str(name)?)
        .ok_or_else(|| FieldError::new(r.path(name), "expected 64 hex digits"))
}

fn opt_hash(r: &ObjectReader<'_>, name: &str) -> Result<Option<ModelHash>, FieldError> {
    r.value(name)?;
    match r.opt_value(name) {
        None => Ok(None),
        Some(_) => hash(r, name).map(Some),
    }
}

fn decode_sale(r: &ObjectReader<'_>) -> Result<SaleEvent, FieldError> {
    r.deny_unknown(&["sku", "quantity", "terminal_id", "timestamp_ms"])?;
    let quantity = r.u64("quantity")?;
    if quantity == 0 {
        return Err(FieldError::new(r.path("quantity"), "must be >= 1"));
    }
    Ok(SaleEvent {
        sku: text(r, "sku")?,
        quantity,
        terminal_id: text(r, "terminal_id")?,
        timestamp_ms: r.u64("timestamp_ms")?,
    })
}

fn decode_shelf(r: &ObjectReader<'_>) -> Result<ShelfObservation, FieldError> {
    r.deny_unknown(&["sku", "observed_count", "camera_id", "timestamp_ms"])?;
    Ok(ShelfObservation {
        sku: text(r, "sku")?,
        observed_count: r.u64("observed_count")?,
        camera_id: text(r, "camera_id")?,
        timestamp_ms: r.u64("timestamp_ms")?,
    })
}

fn decode_suspicion(r: &ObjectReader<'_>) -> Result<SuspicionEvent, FieldError> {
    r.deny_unknown(&[
        "camera_id",
        "anomaly_score",
        "predicted_label",
        "frame_buffer",
        "model_hash",
        "classifier_hash",
        "timestamp_ms",
    ])?;
    let anomaly_score = r.f64("anomaly_score")?;
    if anomaly_score < 0.0 {
        return Err(FieldError::new(r.path("anomaly_score"), "must be >= 0"));
    }
    let raw = r.array("frame_buffer")?;
    if raw.is_empty() {
        return Err(FieldError::new(r.path("frame_buffer"), "must be non-empty"));
    }
    let field = r.path("frame_buffer");
    let mut frame_buffer = Vec::with_capacity(raw.len());
    for item in raw {
        let f = ObjectReader::new(item, &field)?;
        f.deny_unknown(&["frame_seq", "features"])?;
        let values = json::f64_array(f.value("features")?, &f.path("features"))?;
        if values.len() != FEATURE_DIM {
            return Err(FieldError::new(
                f.path("features"),
                format!("expected {FEATURE_DIM} values"),
            ));
        }
        frame_buffer.push(BufferedFrame {
            frame_seq: f.u64("frame_seq")?,
            features: FeatureVector::new(values)
                .map_err(|e| FieldError::new(f.path("features"), e.to_string()))?,
        });
    }
    Ok(SuspicionEvent {
        camera_id: text(r, "camera_id")?,
        anomaly_score,
        predicted_label: r.str("predicted_label")?.to_string(),
        frame_buffer,
        model_hash: hash(r, "model_hash")?,
        classifier_hash: opt_hash(r, "classifier_hash")?,
        timestamp_ms: r.u64("timestamp_ms")?,
    })
}

fn decode_model_update(r: &ObjectReader<'_>) -> Result<ModelUpdate, FieldError> {
    r.deny_unknown(&["kind", "model", "model_hash"])?;
    let kind = r
        .str("kind")?
        .parse()
        .map_err(|e: String| FieldError::new(r.path("kind"), e))?;
    let model = BASE64
        .decode(r.str("model")?)
        .map_err(|e| FieldError::new(r.path("model"), e.to_string()))?;
    Ok(ModelUpdate {
        kind,
        model,
        model_hash: hash(r, "model_hash")?,
    })
}

fn decode_model_ack(r: &ObjectReader<'_>) -> Result<ModelAck, FieldError> {
    r.deny_unknown(&["model_hash", "edge_id"])?;
    Ok(ModelAck {
        model_hash: opt_hash(r, "model_hash")?,
        edge_id: text(r, "edge_id")?,
    })
}

fn decode_alert(r: &ObjectReader<'_>) -> Result<Alert, FieldError> {
    r.deny_unknown(&[
        "alert_id",
        "camera_id",
        "sku",
        "missing_count",
        "suspicion",
        "created_at_ms",
    ])?;
    let missing_count = r.u64("missing_count")?;
    if missing_count == 0 {
        return Err(FieldError::new(r.path("missing_count"), "must be >= 1"));
    }
    Ok(Alert {
        alert_id: text(r, "alert_id")?,
        camera_id: text(r, "camera_id")?,
        sku: text(r, "sku")?,
        missing_count,
        suspicion: decode_suspicion(&r.object("suspicion")?)?,
        created_at_ms: r.u64("created_at_ms")?,
    })
}

fn decode_error(r: &ObjectReader<'_>) -> Result<ErrorMsg, FieldError> {
    r.deny_unknown(&["code", "message", "ref_seq"])?;
    r.value("ref_seq")?;
    let ref_seq = match r.opt_value("ref_seq") {
        None => None,
        Some(_) => Some(r.u64("ref_seq")?),
    };
    Ok(ErrorMsg {
        code: text(r, "code")?,
        message: r.str("message")?.to_string(),
        ref_seq,
    })
}

fn decode_report(r: &ObjectReader<'_>) -> Result<DistributionReport, FieldError> {
    r.deny_unknown(&["model_hash", "edges"])?;
    let field = r.path("edges");
    let edges = r
        .array("edges")?
        .iter()
        .map(|v| {
            let e = ObjectReader::new(v, &field)?;
            e.deny_unknown(&["edge_id", "status", "acked_hash"])?;
            let status = DistributionStatus::parse(e.str("status")?)
                .ok_or_else(|| FieldError::new(e.path("status"), "unknown status"))?;
            Ok(EdgeOutcome {
                edge_id: text(&e, "edge_id")?,
                status,
                acked_hash: opt_hash(&e, "acked_hash")?,
            })
        })
        .collect::<Result<Vec<_>, FieldError>>()?;
    Ok(DistributionReport {
        model_hash: hash(r, "model_hash")?,
        edges,
    })
}

/// Rejects sequence numbers that do not strictly increase.
#[derive(Debug, Default, Clone)]
pub struct SeqTracker {
    last: Option<u64>,
}

impl SeqTracker {
    pub fn check(&mut self, seq: u64) -> Result<(), ErrorMsg> {
        if let Some(last) = self.last {
            if seq <= last {
                return Err(ErrorMsg::new(
                    "sequence",
                    format!("seq {seq} does not follow {last}"),
                    Some(seq),
                ));
            }
        }
        self.last = Some(seq);
        Ok(())
    }
}

/// Writes envelopes with a per-connection increasing `seq`.
#[derive(Debug)]
pub struct MessageWriter<W: Write> {
    inner: W,
    next_seq: u64,
}

impl<W: Write> MessageWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner, next_seq: 1 }
    }

    pub fn send(&mut self, payload: Payload, sent_at_ms: u64) -> io::Result<u64> {
        let seq = self.next_seq;
        let mut line = encode(&Envelope {
            seq,
            sent_at_ms,
            payload,
        });
        line.push('\n');
        self.inner.write_all(line.as_bytes())?;
        self.inner.flush()?;
        self.next_seq += 1;
        Ok(seq)
    }

    pub fn get_ref(&self) -> &W {
        &self.inner
    }
}

/// Reads one complete line. A trailing fragment without LF is a truncated
/// message and is dropped, and the stream is treated as closed.
pub fn read_message_line(reader: &mut impl BufRead) -> io::Result<Option<String>> {
    let mut buf = String::new();
    let n = reader.read_line(&mut buf)?;
    if n == 0 || !buf.ends_with('\n') {
        return Ok(None);
    }
    buf.pop();
    if buf.ends_with('\r') {
        buf.pop();
    }
    Ok(Some(buf))
}

pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}
