use crate::arch::BBox;
use crate::Scalar;

/// Minimum pedestrian height (pixels) of the reasonable evaluation setting.
pub const REASONABLE_MIN_HEIGHT: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth<T> {
    pub bbox: BBox<T>,
    pub occluded: bool,
    pub truncated: bool,
}

impl<T: Scalar> GroundTruth<T> {
    pub fn new(bbox: BBox<T>) -> Self {
        GroundTruth { bbox, occluded: false, truncated: false }
    }

    pub fn height(&self) -> T {
        self.bbox.height()
    }

    /// Unoccluded, untruncated and at least `min_height` tall.
    pub fn is_reasonable(&self, min_height: f64) -> bool {
        !self.occluded && !self.truncated && self.height().as_f64() >= min_height
    }
}

/// Splits ground truths into `(kept, ignored)` under the reasonable setting.
pub fn filter_reasonable<T: Scalar>(gts: &[GroundTruth<T>], min_height: f64) -> (Vec<GroundTruth<T>>, Vec<GroundTruth<T>>) {
    gts.iter().partition(|g| g.is_reasonable(min_height))
}
