//! Fusion quality metrics, their text-aware variants, and rank aggregation.

pub mod qabf;
pub mod rank;
pub mod ssim;
pub mod stats;
pub mod textual;
pub mod vif;

pub use qabf::qabf;
pub use rank::{mean_rank, ScoreTable};
pub use ssim::ssim;
pub use stats::{entropy, sd, sf};
pub use textual::{
    assess, confidence, iqa, q_o, q_plus, text_guided_reference, Assessment, ConfidenceMode, Metric,
    MetricResult, TextEvidence,
};
pub use vif::vif;
