//! Score-level fusion of two single-modality detectors: each detector's
//! boxes are re-scored by the other's head on its own image and the two
//! confidences are averaged.

use crate::arch::head::score_boxes;
use crate::arch::model::{DetectorModel, Frame};
use crate::arch::FusionStage;
use crate::pipeline::detect::detect_from_features;
use crate::pipeline::{nms, Detection};
use crate::{Error, Result, Scalar};

/// Weights of the color and thermal confidences; non-negative, summing to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreFusionWeights {
    pub color: f64,
    pub thermal: f64,
}

impl Default for ScoreFusionWeights {
    fn default() -> Self {
        ScoreFusionWeights { color: 0.5, thermal: 0.5 }
    }
}

impl ScoreFusionWeights {
    pub fn validate(&self) -> Result<()> {
        if self.color < 0.0 || self.thermal < 0.0 || ((self.color + self.thermal) - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "score fusion weights must be non-negative and sum to 1, got ({}, {})",
                self.color, self.thermal
            )));
        }
        Ok(())
    }

    pub fn combine<T: Scalar>(&self, color: T, thermal: T) -> T {
        T::lit(self.color) * color + T::lit(self.thermal) * thermal
    }
}

/// Cascade of the color and thermal detectors.
///
/// Thresholding applies to the fused score, after NMS over the union of both
/// re-scored lists. A detector whose weight is zero contributes no boxes of its own.
pub fn score_fuse<T: Scalar>(
    model_c: &DetectorModel<T>,
    model_t: &DetectorModel<T>,
    frame: &Frame<'_, T>,
    weights: ScoreFusionWeights,
    score_thresh: f64,
    nms_thresh: f64,
    top_k: usize,
) -> Result<Vec<Detection<T>>> {
    weights.validate()?;
    if model_c.stage != FusionStage::NoneColor || model_t.stage != FusionStage::NoneThermal {
        return Err(Error::contract(format!(
            "score fusion needs a none-color and a none-thermal model, got {} and {}",
            model_c.stage, model_t.stage
        )));
    }
    let (feats_c, _) = model_c.backbone_forward(frame)?;
    let (feats_t, _) = model_t.backbone_forward(frame)?;

    let mut merged = Vec::new();
    if weights.color > 0.0 {
        let own = detect_from_features(model_c, &feats_c, nms_thresh, top_k)?;
        let boxes: Vec<_> = own.iter().map(|d| d.bbox).collect();
        let other = score_boxes(model_t, &feats_t, &boxes)?;
        merged.extend(own.iter().zip(other).map(|(d, s_t)| Detection {
            bbox: d.bbox,
            score: weights.combine(d.score, s_t),
            source: FusionStage::Score,
        }));
    }
    if weights.thermal > 0.0 {
        let own = detect_from_features(model_t, &feats_t, nms_thresh, top_k)?;
        let boxes: Vec<_> = own.iter().map(|d| d.bbox).collect();
        let other = score_boxes(model_c, &feats_c, &boxes)?;
        merged.extend(own.iter().zip(other).map(|(d, s_c)| Detection {
            bbox: d.bbox,
            score: weights.combine(s_c, d.score),
            source: FusionStage::Score,
        }));
    }
    Ok(nms(&merged, nms_thresh).into_iter().filter(|d| d.score.as_f64() > score_thresh).collect())
}
