//! Energy-based OOD scoring of the student and feedback-band selection.

pub mod energy;
pub mod select;

pub use energy::{free_energy, log_sum_exp, sequence_energy, EnergyScore};
pub use select::{
    assign_ranks, score_batch, score_batch_with, score_sample, scores_csv, select_feedback, ScoredSample, Selection,
    SelectorConfig,
};
