//! Metrics, distribution exports and label auditing.

pub mod audit;
pub mod histogram;
pub mod metrics;

pub use audit::{audit_labels, AuditRecord, AuditReport};
pub use histogram::{export_distribution, Bin, Histogram};
pub use metrics::{
    accuracy, exact_match, lexical_diversity, normalize_answer, rouge_l, rouge_l_beta, rouge_l_report, MetricReport,
    PairDetail,
};
