//! Relative-pose and dense-depth accuracy metrics.

pub mod depth;
pub mod pose;

pub use depth::{depth_metrics, format_depth_table, median_scale_align, pool_depth_metrics, DepthEvalPair, DepthMetrics};
pub use pose::{format_pose_table, pose_metrics, AucCombine, PairSelection, PoseMetricOptions, PoseMetrics, PoseSet};
