//! Iterative out-of-distribution-guided synthetic data generation for
//! knowledge distillation.
//!
//! Each iteration a teacher generates a train batch, a small student is
//! trained on it with symmetric cross-entropy, the teacher generates a
//! validation batch meant to differ from the train batch, and the student's
//! free-energy scores pick a band of validation samples that are fed back
//! into the next train prompt.

pub mod config;
pub mod container;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod feedback;
pub mod generation;
pub mod label;
pub mod par;
pub mod pipeline;
pub mod simulation;
pub mod student;
pub mod text;
pub mod types;

pub use error::{Error, Result};
pub use label::{canonicalize_label, normalize_label, LabelMatch};
pub use types::{Batch, BatchRole, Provenance, Sample, TaskKind, TaskSpec};
