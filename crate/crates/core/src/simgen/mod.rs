//! Deterministic synthetic data: labeled posture datasets, shop scenarios
//! with planted thefts, and an in-process replay that scores the pipeline
//! against the scenario's ground truth.

pub mod oracle;
pub mod posture;
pub mod replay;
pub mod scenario;

pub use posture::{gen_posture_dataset, PostureDatasetSpec};
pub use replay::{replay, replay_dir, ScenarioReport};
pub use scenario::{
    gen_scenario, GroundTruth, InjectionKind, Scenario, ScenarioMode, ScenarioSpec,
};

use thiserror::Error;

use crate::cloud::LedgerError;
use crate::config::ConfigError;
use crate::edge::EdgeError;
use crate::features::{BoundingBox, FeatureVector, LandmarkFrame, Point, LANDMARK_COUNT};
use crate::learn::LearnError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("infeasible spec: {0}")]
    InfeasibleSpec(String),
    #[error("generator guarantee violated: {0}")]
    Guarantee(String),
    #[error("scenario file {file}: {reason}")]
    ScenarioFile { file: String, reason: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Edge(#[from] EdgeError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Face box used when turning feature vectors back into landmark frames.
pub const FIXED_BBOX: BoundingBox = BoundingBox {
    origin_x: 100.0,
    origin_y: 50.0,
    width: 200.0,
    height: 240.0,
};

/// Inverse of normalization against [`FIXED_BBOX`].
pub fn frame_from_features(
    fv: &FeatureVector,
    camera_id: &str,
    frame_seq: u64,
    timestamp_ms: u64,
) -> LandmarkFrame {
    let b = FIXED_BBOX;
    LandmarkFrame {
        camera_id: camera_id.to_string(),
        frame_seq,
        timestamp_ms,
        bbox: b,
        points: (0..LANDMARK_COUNT)
            .map(|i| {
                Point::new(
                    b.origin_x + fv.x(i) * b.width,
                    b.origin_y + fv.y(i) * b.height,
                )
            })
            .collect(),
    }
}

/// A frontal face in box-relative coordinates, 68 points in the usual
/// jaw, brows, nose, eyes, lips order.
pub fn face_template() -> FeatureVector {
    use std::f64::consts::PI;
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(LANDMARK_COUNT);
    let ellipse = |pts: &mut Vec<(f64, f64)>, cx: f64, cy: f64, rx: f64, ry: f64, n: usize| {
        for i in 0..n {
            let a = PI + 2.0 * PI * i as f64 / n as f64;
            pts.push((cx + rx * a.cos(), cy + ry * a.sin()));
        }
    };
    for i in 0..17 {
        let t = i as f64 / 16.0;
        pts.push((0.5 - 0.42 * (PI * t).cos(), 0.3 + 0.62 * (PI * t).sin()));
    }
    for side in [0.18, 0.58] {
        for i in 0..5 {
            let t = i as f64 / 4.0;
            pts.push((side + 0.24 * t, 0.26 - 0.04 * (PI * t).sin()));
        }
    }
    for i in 0..4 {
        pts.push((0.5, 0.36 + 0.07 * i as f64));
    }
    for i in 0..5 {
        pts.push((
            0.4 + 0.05 * i as f64,
            0.6 + 0.02 * (1.0 - (i as f64 - 2.0).abs() / 2.0),
        ));
    }
    ellipse(&mut pts, 0.32, 0.38, 0.07, 0.03, 6);
    ellipse(&mut pts, 0.68, 0.38, 0.07, 0.03, 6);
    ellipse(&mut pts, 0.5, 0.76, 0.15, 0.06, 12);
    ellipse(&mut pts, 0.5, 0.76, 0.1, 0.025, 8);
    debug_assert_eq!(pts.len(), LANDMARK_COUNT);
    let mut v: Vec<f64> = pts.iter().map(|p| p.0).collect();
    v.extend(pts.iter().map(|p| p.1));
    FeatureVector::new(v).expect("template is finite")
}
