//! The in-shop agent: landmark frames in, suspicion events out.

mod pipeline;
mod uplink;

pub use pipeline::{run_pipeline, RunReport, TcpConnector};
pub use uplink::{
    Backoff, Clock, Connector, Link, ManualClock, SystemClock, Uplink, UplinkConfig,
    DEFAULT_BUFFER_CAP,
};

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use arc_swap::ArcSwap;
use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::features::{normalize_landmarks, FeatureError, LandmarkFrame};
use crate::learn::{
    deserialize_model, AnomalyModel, KnnModel, LearnError, LinearModel, Model, ModelHash,
};
use crate::protocol::{BufferedFrame, ModelAck, ModelUpdate, SuspicionEvent};

pub const DEFAULT_ANOMALY_THRESHOLD: f64 = 1.5;
pub const DEFAULT_COOLDOWN_MS: u64 = 10_000;
pub const DEFAULT_FRAME_BUFFER_LEN: usize = 5;
pub const UNCLASSIFIED: &str = "unclassified";

#[derive(Debug, Error)]
pub enum EdgeError {
    #[error("no anomaly model loaded")]
    NoModelLoaded,
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("camera `{0}` is not configured on this edge")]
    UnknownCamera(String),
    #[error("camera `{camera}`: frame_seq {seq} does not follow {last}")]
    OutOfOrder { camera: String, seq: u64, last: u64 },
    #[error("corrupt model: {0}")]
    CorruptModel(String),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cloud unreachable after {attempts} attempts with {pending} events pending")]
    Unreachable { attempts: u32, pending: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeConfig {
    pub edge_id: String,
    /// Frames from cameras outside this list are rejected; empty accepts all.
    pub camera_ids: Vec<String>,
    pub anomaly_threshold: f64,
    pub cooldown_ms: u64,
    pub frame_buffer_len: usize,
    pub cloud_address: String,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        Self {
            edge_id: "edge-1".into(),
            camera_ids: Vec::new(),
            anomaly_threshold: DEFAULT_ANOMALY_THRESHOLD,
            cooldown_ms: DEFAULT_COOLDOWN_MS,
            frame_buffer_len: DEFAULT_FRAME_BUFFER_LEN,
            cloud_address: format!("127.0.0.1:{}", crate::protocol::DEFAULT_CLOUD_PORT),
        }
    }
}

pub const EDGE_CONFIG_KEYS: &[&str] = &[
    "edge_id",
    "camera_ids",
    "anomaly_threshold",
    "cooldown_ms",
    "frame_buffer_len",
    "cloud_address",
    "anomaly_model",
    "classifier_model",
];

impl EdgeConfig {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self, ConfigError> {
        kv.deny_unknown(EDGE_CONFIG_KEYS, &[])?;
        let d = Self::default();
        let cfg = Self {
            edge_id: kv.get("edge_id").map(String::from).unwrap_or(d.edge_id),
            camera_ids: kv.list("camera_ids"),
            anomaly_threshold: kv.parsed_or("anomaly_threshold", d.anomaly_threshold)?,
            cooldown_ms: kv.parsed_or("cooldown_ms", d.cooldown_ms)?,
            frame_buffer_len: kv.parsed_or("frame_buffer_len", d.frame_buffer_len)?,
            cloud_address: kv
                .get("cloud_address")
                .map(String::from)
                .unwrap_or(d.cloud_address),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, reason: &str| ConfigError::Invalid {
            key: key.into(),
            reason: reason.into(),
        };
        if self.edge_id.is_empty() {
            return Err(invalid("edge_id", "must be non-empty"));
        }
        if !(self.anomaly_threshold > 0.0) || !self.anomaly_threshold.is_finite() {
            return Err(invalid("anomaly_threshold", "must be a positive number"));
        }
        if self.frame_buffer_len == 0 {
            return Err(invalid("frame_buffer_len", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum Classifier {
    Linear(LinearModel),
    Knn(KnnModel),
}

impl Classifier {
    pub fn predict(&self, fv: &crate::features::FeatureVector) -> Result<String, LearnError> {
        match self {
            Classifier::Linear(m) => Ok(m.predict(fv)?.label),
            Classifier::Knn(m) => Ok(m.predict(fv)?.label),
        }
    }
}

/// Models active at one instant. Replaced as a whole, never mutated.
#[derive(Debug, Clone, Default)]
pub struct ModelSet {
    pub anomaly: Option<(Arc<AnomalyModel>, ModelHash)>,
    pub classifier: Option<(Arc<Classifier>, ModelHash)>,
}

impl ModelSet {
    pub fn anomaly_hash(&self) -> Option<ModelHash> {
        self.anomaly.as_ref().map(|(_, h)| *h)
    }

    fn with(&self, model: Model, hash: ModelHash) -> ModelSet {
        let mut next = self.clone();
        match model {
            Model::Anomaly(m) => next.anomaly = Some((Arc::new(m), hash)),
            Model::Linear(m) => next.classifier = Some((Arc::new(Classifier::Linear(m)), hash)),
            Model::Knn(m) => next.classifier = Some((Arc::new(Classifier::Knn(m)), hash)),
        }
        next
    }
}

/// Shared, atomically swappable model slot. Readers take a snapshot per
/// frame; an update publishes a complete new [`ModelSet`].
#[derive(Debug, Default)]
pub struct ModelStore {
    current: ArcSwap<ModelSet>,
}

impl ModelStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn snapshot(&self) -> Arc<ModelSet> {
        self.current.load_full()
    }

    pub fn install(&self, model: Model) {
        let hash = model.hash();
        self.current.rcu(|cur| cur.with(model.clone(), hash));
    }

    /// Verify, decode and publish a pushed model. On any error the active
    /// models are left untouched.
    pub fn apply_model_update(
        &self,
        update: &ModelUpdate,
        edge_id: &str,
    ) -> Result<ModelAck, EdgeError> {
        if ModelHash::of(&update.model) != update.model_hash {
            return Err(EdgeError::CorruptModel(
                "hash does not match model bytes".into(),
            ));
        }
        let model =
            deserialize_model(&update.model).map_err(|e| EdgeError::CorruptModel(e.to_string()))?;
        if model.kind() != update.kind {
            return Err(EdgeError::CorruptModel(format!(
                "declared kind {} but bytes hold {}",
                update.kind,
                model.kind()
            )));
        }
        self.current
            .rcu(|cur| cur.with(model.clone(), update.model_hash));
        Ok(ModelAck {
            model_hash: Some(update.model_hash),
            edge_id: edge_id.to_string(),
        })
    }
}

#[derive(Debug, Default)]
struct CameraState {
    last_seq: Option<u64>,
    buffer: VecDeque<BufferedFrame>,
    cooldown_until_ms: Option<u64>,
}

pub struct EdgeAgent {
    config: EdgeConfig,
    models: Arc<ModelStore>,
    cameras: HashMap<String, CameraState>,
}

impl EdgeAgent {
    pub fn new(config: EdgeConfig, models: Arc<ModelStore>) -> Self {
        Self {
            config,
            models,
            cameras: HashMap::new(),
        }
    }

    pub fn config(&self) -> &EdgeConfig {
        &self.config
    }

    pub fn models(&self) -> &Arc<ModelStore> {
        &self.models
    }

    /// Normalize, score and debounce one frame.
    ///
    /// The model snapshot is taken once, so the score, the predicted label and
    /// the hashes in the event all come from the same model set.
    pub fn evaluate_frame(
        &mut self,
        frame: &LandmarkFrame,
    ) -> Result<Option<SuspicionEvent>, EdgeError> {
        let models = self.models.snapshot();
        let (anomaly, anomaly_hash) = models.anomaly.as_ref().ok_or(EdgeError::NoModelLoaded)?;
        if !self.config.camera_ids.is_empty() && !self.config.camera_ids.contains(&frame.camera_id)
        {
            return Err(EdgeError::UnknownCamera(frame.camera_id.clone()));
        }
        let cam = self.cameras.entry(frame.camera_id.clone()).or_default();
        if let Some(last) = cam.last_seq {
            if frame.frame_seq <= last {
                return Err(EdgeError::OutOfOrder {
                    camera: frame.camera_id.clone(),
                    seq: frame.frame_seq,
                    last,
                });
            }
        }
        let features = normalize_landmarks(frame)?;
        cam.last_seq = Some(frame.frame_seq);

        let score = anomaly.score(&features);
        cam.buffer.push_back(BufferedFrame {
            frame_seq: frame.frame_seq,
            features,
        });
        while cam.buffer.len() > self.config.frame_buffer_len {
            cam.buffer.pop_front();
        }

        if score < self.config.anomaly_threshold {
            return Ok(None);
        }
        if cam
            .cooldown_until_ms
            .is_some_and(|until| frame.timestamp_ms < until)
        {
            return Ok(None);
        }
        cam.cooldown_until_ms = Some(frame.timestamp_ms.saturating_add(self.config.cooldown_ms));

        let latest = &cam.buffer.back().expect("just pushed").features;
        let (predicted_label, classifier_hash) = match &models.classifier {
            Some((c, h)) => (c.predict(latest)?, Some(*h)),
            None => (UNCLASSIFIED.to_string(), None),
        };
        Ok(Some(SuspicionEvent {
            camera_id: frame.camera_id.clone(),
            anomaly_score: score,
            predicted_label,
            frame_buffer: cam.buffer.iter().cloned().collect(),
            model_hash: *anomaly_hash,
            classifier_hash,
            timestamp_ms: frame.timestamp_ms,
        }))
    }

    pub fn apply_model_update(&self, update: &ModelUpdate) -> Result<ModelAck, EdgeError> {
        self.models.apply_model_update(update, &self.config.edge_id)
    }
}
