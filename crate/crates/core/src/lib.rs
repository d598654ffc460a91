//! Shop-floor theft detection: an edge agent that scores facial-landmark
//! streams for anomalous behavior and a cloud service that only alerts when
//! the anomaly coincides with a stock shortfall in the item ledger.

// Guards such as `!(x > 0.0)` also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cloud;
pub mod config;
pub mod edge;
pub mod features;
pub mod json;
pub mod learn;
pub mod protocol;
pub mod simgen;
