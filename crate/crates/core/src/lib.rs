//! Multispectral (color + thermal) pedestrian detection: a small tensor
//! engine, two-stage detectors with early, halfway, late and score fusion,
//! the miss-rate evaluation protocol and detector complementarity analysis.

pub mod arch;
pub mod complementarity;
mod error;
pub mod eval;
pub mod io;
pub mod nn;
pub mod pipeline;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use arch::{build_detector, BBox, DetectorConfig, DetectorModel, FusionStage, Proposal};
pub use pipeline::{detect, score_fuse, train, Detection, TrainSchedule};

pub type Tensor32 = nn::Tensor<f32>;
pub type Tensor64 = nn::Tensor<f64>;
pub type BBox32 = BBox<f32>;
pub type DetectorModel32 = DetectorModel<f32>;
pub type Detection32 = Detection<f32>;
pub type Sample32 = io::Sample<f32>;
