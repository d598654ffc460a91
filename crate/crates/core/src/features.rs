//! Landmark frames and the 136-value normalized feature representation.
//!
//! A frame carries the 68 facial landmarks reported by an upstream face
//! landmark extractor plus the face bounding box. Normalization removes the
//! face position and size:
//!
//! ```text
//! x'[i] = (x[i] - bbox.origin_x) / bbox.width
//! y'[i] = (y[i] - bbox.origin_y) / bbox.height
//! ```
//!
//! and lays the result out as 68 x-values followed by 68 y-values.

use serde::ser::{SerializeSeq, Serializer};
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::json::{self, FieldError, ObjectReader};

pub const LANDMARK_COUNT: usize = 68;
pub const FEATURE_DIM: usize = 2 * LANDMARK_COUNT;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("parse error at `{field}`: {reason}")]
    Parse { field: String, reason: String },
    #[error("validation error at `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error("bounding box {axis} must be positive, got {value}")]
    NonPositiveBboxDimension { axis: &'static str, value: f64 },
    #[error("expected {LANDMARK_COUNT} landmark points, got {0}")]
    WrongPointCount(usize),
    #[error("feature vector must have {FEATURE_DIM} finite values")]
    BadFeatureVector,
}

impl FeatureError {
    /// Field the error refers to, when it refers to one.
    pub fn field(&self) -> Option<&str> {
        match self {
            FeatureError::Parse { field, .. } | FeatureError::Validation { field, .. } => {
                Some(field)
            }
            _ => None,
        }
    }

    fn parse(e: FieldError) -> Self {
        FeatureError::Parse {
            field: e.field,
            reason: e.reason,
        }
    }

    fn validation(field: &str, reason: impl Into<String>) -> Self {
        FeatureError::Validation {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub origin_x: f64,
    pub origin_y: f64,
    pub width: f64,
    pub height: f64,
}

/// One camera frame reduced to facial landmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFrame {
    pub camera_id: String,
    pub frame_seq: u64,
    pub timestamp_ms: u64,
    pub bbox: BoundingBox,
    pub points: Vec<Point>,
}

impl LandmarkFrame {
    /// Checks the per-frame invariants. Sequence monotonicity is a stream
    /// property and is enforced by the consumer.
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.points.len() != LANDMARK_COUNT {
            return Err(FeatureError::WrongPointCount(self.points.len()));
        }
        for (axis, value) in [("width", self.bbox.width), ("height", self.bbox.height)] {
            if !(value > 0.0) {
                return Err(FeatureError::NonPositiveBboxDimension { axis, value });
            }
        }
        Ok(())
    }

    /// Applies `f` to the bounding-box origin and every landmark.
    pub fn map_coordinates(&self, f: impl Fn(f64, f64) -> (f64, f64)) -> LandmarkFrame {
        let (ox, oy) = f(self.bbox.origin_x, self.bbox.origin_y);
        LandmarkFrame {
            bbox: BoundingBox {
                origin_x: ox,
                origin_y: oy,
                ..self.bbox
            },
            points: self
                .points
                .iter()
                .map(|p| {
                    let (x, y) = f(p.x, p.y);
                    Point { x, y }
                })
                .collect(),
            ..self.clone()
        }
    }
}

/// 136 finite values: normalized x-coordinates 0..68, then y-coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self, FeatureError> {
        if values.len() != FEATURE_DIM || values.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::BadFeatureVector);
        }
        Ok(Self(values))
    }

    pub fn zeros() -> Self {
        Self(vec![0.0; FEATURE_DIM])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn x(&self, landmark: usize) -> f64 {
        self.0[landmark]
    }

    pub fn y(&self, landmark: usize) -> f64 {
        self.0[LANDMARK_COUNT + landmark]
    }

    pub fn euclidean(&self, other: &FeatureVector) -> f64 {
        squared_distance(&self.0, &other.0).sqrt()
    }
}

impl Serialize for FeatureVector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        for v in &self.0 {
            seq.serialize_element(v)?;
        }
        seq.end()
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn normalize_landmarks(frame: &LandmarkFrame) -> Result<FeatureVector, FeatureError> {
    frame.validate()?;
    let b = &frame.bbox;
    let mut values = vec![0.0; FEATURE_DIM];
    for (i, p) in frame.points.iter().enumerate() {
        values[i] = (p.x - b.origin_x) / b.width;
        values[LANDMARK_COUNT + i] = (p.y - b.origin_y) / b.height;
    }
    FeatureVector::new(values)
}

#[derive(Serialize)]
struct FrameRecord<'a> {
    camera_id: &'a str,
    frame_seq: u64,
    timestamp_ms: u64,
    bbox: [f64; 4],
    points: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<&'a str>,
}

fn record<'a>(frame: &'a LandmarkFrame, label: Option<&'a str>) -> FrameRecord<'a> {
    let b = &frame.bbox;
    FrameRecord {
        camera_id: &frame.camera_id,
        frame_seq: frame.frame_seq,
        timestamp_ms: frame.timestamp_ms,
        bbox: [b.origin_x, b.origin_y, b.width, b.height],
        points: frame.points.iter().map(|p| [p.x, p.y]).collect(),
        label,
    }
}

/// Encode a frame as one landmark NDJSON line (no trailing newline).
pub fn emit_landmark_record(frame: &LandmarkFrame) -> String {
    serde_json::to_string(&record(frame, None)).expect("frame record serializes")
}

/// Same as [`emit_landmark_record`] with a trailing `label` field.
pub fn emit_labeled_record(frame: &LandmarkFrame, label: &str) -> String {
    serde_json::to_string(&record(frame, Some(label))).expect("frame record serializes")
}

pub fn parse_landmark_record(line: &str) -> Result<LandmarkFrame, FeatureError> {
    let value = parse_line(line)?;
    frame_from_value(&value, false).map(|(frame, _)| frame)
}

/// Parse a record of the labeled dataset format, which requires `label`.
pub fn parse_labeled_record(line: &str) -> Result<(LandmarkFrame, String), FeatureError> {
    let value = parse_line(line)?;
    let (frame, label) = frame_from_value(&value, true)?;
    Ok((frame, label.expect("label required")))
}

fn parse_line(line: &str) -> Result<Value, FeatureError> {
    serde_json::from_str(line.trim_end_matches(['\n', '\r'])).map_err(|e| FeatureError::Parse {
        field: "<record>".into(),
        reason: e.to_string(),
    })
}

const FRAME_FIELDS: &[&str] = &["camera_id", "frame_seq", "timestamp_ms", "bbox", "points"];
const LABELED_FIELDS: &[&str] = &[
    "camera_id",
    "frame_seq",
    "timestamp_ms",
    "bbox",
    "points",
    "label",
];

fn frame_from_value(
    value: &Value,
    labeled: bool,
) -> Result<(LandmarkFrame, Option<String>), FeatureError> {
    let r = ObjectReader::new(value, "").map_err(FeatureError::parse)?;
    r.deny_unknown(if labeled {
        LABELED_FIELDS
    } else {
        FRAME_FIELDS
    })
    .map_err(FeatureError::parse)?;

    let camera_id = r.str("camera_id").map_err(FeatureError::parse)?.to_string();
    if camera_id.is_empty() {
        return Err(FeatureError::validation("camera_id", "must be non-empty"));
    }
    let frame_seq = r.u64("frame_seq").map_err(FeatureError::parse)?;
    let timestamp_ms = r.u64("timestamp_ms").map_err(FeatureError::parse)?;

    let bbox = json::f64_array(r.value("bbox").map_err(FeatureError::parse)?, "bbox")
        .map_err(FeatureError::parse)?;
    if bbox.len() != 4 {
        return Err(FeatureError::Parse {
            field: "bbox".into(),
            reason: format!("expected 4 numbers, got {}", bbox.len()),
        });
    }
    let bbox = BoundingBox {
        origin_x: bbox[0],
        origin_y: bbox[1],
        width: bbox[2],
        height: bbox[3],
    };
    if !(bbox.width > 0.0) {
        return Err(FeatureError::validation("bbox.width", "must be positive"));
    }
    if !(bbox.height > 0.0) {
        return Err(FeatureError::validation("bbox.height", "must be positive"));
    }

    let raw_points = r.array("points").map_err(FeatureError::parse)?;
    let mut points = Vec::with_capacity(raw_points.len());
    for p in raw_points {
        let xy = json::f64_array(p, "points").map_err(FeatureError::parse)?;
        if xy.len() != 2 {
            return Err(FeatureError::Parse {
                field: "points".into(),
                reason: "each point must be [x, y]".into(),
            });
        }
        points.push(Point::new(xy[0], xy[1]));
    }
    if points.len() != LANDMARK_COUNT {
        return Err(FeatureError::validation(
            "points",
            format!("expected {LANDMARK_COUNT} points, got {}", points.len()),
        ));
    }

    let label = if labeled {
        let label = r.str("label").map_err(FeatureError::parse)?;
        if label.is_empty() {
            return Err(FeatureError::validation("label", "must be non-empty"));
        }
        Some(label.to_string())
    } else {
        None
    };

    Ok((
        LandmarkFrame {
            camera_id,
            frame_seq,
            timestamp_ms,
            bbox,
            points,
        },
        label,
    ))
}
