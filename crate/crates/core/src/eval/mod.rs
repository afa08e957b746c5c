//! Evaluation protocol: reasonable-set filtering, greedy matching,
//! miss-rate/FPPI curves, log-average miss rate and proposal recall.

pub mod curve;
pub mod gt;
pub mod matching;
pub mod recall;

pub use crate::arch::iou;
pub use curve::{log_avg_miss_rate, miss_rate_at, mr_fppi_curve, CurvePoint, EvalImage, MrFppiCurve, LAMR_POINTS, LAMR_RANGE};
pub use gt::{filter_reasonable, GroundTruth, REASONABLE_MIN_HEIGHT};
pub use matching::{match_detections, match_detections_with_ignored, MatchResult};
pub use recall::{proposal_recall, recall_ious, recall_vs_iou, recall_vs_k, RECALL_KS};
