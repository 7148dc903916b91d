//! Concept-drift detection for process event logs using extended dynamic
//! Bayesian networks (eDBNs).
//!
//! The pipeline learns a model from the head of a log, scores every event
//! and trace, runs a sliding-window Kolmogorov–Smirnov test over the trace
//! scores to locate drift points, and explains drift by decomposing scores
//! per attribute and per component.

pub mod analysis;
pub mod api;
pub mod cli;
pub mod drift;
pub mod error;
pub mod eventlog;
pub mod parameters;
pub mod plot;
pub mod scoring;
pub mod structure;
pub mod testkit;

pub use error::{Error, Result};
pub use eventlog::{parse_log, AttributeKind, EventLog, Schema};
pub use parameters::{train_model, EdbnModel};
pub use scoring::{score_log, TraceScore};
pub use structure::{build_structure, DependencyGraph, StructureConfig};
