//! Distances between sample sets, interval calibration, selective prediction.

mod calibration;
mod distance;
mod selective;
mod uncertainty;

pub use calibration::{picp_mpiw, z_for_level, IntervalScore, Z95};
pub use distance::{
    pooled_edges, sliced_w1, tv_binned, tv_histograms, wasserstein1_1d, BinnedHistogram, TV_MIN_SAMPLES,
};
pub use selective::{risk_coverage, RiskCoverageCurve};
pub use uncertainty::{uncertainty_scores, uncertainty_scores_with, PairwiseAggregation, UncertaintyKind};
