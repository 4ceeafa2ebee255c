//! Baselines, metrics, significance tests and the cross-validated
//! comparison protocol.

mod experiment;
mod logreg;
mod metrics;
mod stats;

pub use experiment::*;
pub use logreg::{fit_baselines, fit_logreg_l2, Baselines, LogReg};
pub use metrics::{auc, classification_metrics, MetricReport};
pub use stats::{cohens_d_paired, paired_t_test, student_t_two_sided, TTest};
