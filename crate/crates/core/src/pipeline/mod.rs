//! The distillation loop, its checkpoints and the on-disk run layout.

pub mod engine;
pub mod run;
pub mod state;

pub use engine::Pipeline;
pub use run::{evaluate_student, resume, run, setup, sim_world, RunDir, RunReport, RunSetup, SimSummary};
pub use state::{IterationMetrics, PipelineState};
