//! Training and inference drivers, NMS and score-level fusion.

pub mod detect;
pub mod nms;
pub mod score_fusion;
pub mod train;

use crate::arch::{BBox, FusionStage};

pub use detect::{detect, detect_unfiltered, DEFAULT_NMS, DEFAULT_SCORE_THRESH, DEFAULT_TOP_K};
pub use nms::nms;
pub use score_fusion::{score_fuse, ScoreFusionWeights};
pub use train::{mean_training_loss, train, EpochLog, TrainOutcome, TrainSchedule};

/// A scored box produced by one of the detectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection<T> {
    pub bbox: BBox<T>,
    /// Pedestrian confidence in `[0, 1]`.
    pub score: T,
    pub source: FusionStage,
}
