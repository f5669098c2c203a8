//! Synthetic ground truth and a simulated teacher for desk-scale experiments.

pub mod experiment;
pub mod fingerprint;
pub mod judge;
pub mod teacher;
pub mod world;

pub use experiment::{run_arm, summarize, sweep, Arm, ArmResult, ArmSummary, SweepSizes, TestSets};
pub use fingerprint::Realization;
pub use judge::SimulatedJudge;
pub use teacher::{sim_teacher_generate, teacher_weights, SimTeacherConfig, SimulatedGenerator};
pub use world::{zipf_priors, Cluster, SimWorld, TEXT_FIELD};
