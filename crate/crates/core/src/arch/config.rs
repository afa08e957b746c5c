use std::fmt;
use std::str::FromStr;

use crate::arch::anchors::PEDESTRIAN_RATIOS;
use crate::{Error, Result};

/// Where (and whether) the color and thermal branches are joined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FusionStage {
    /// Single branch on the color image.
    NoneColor,
    /// Single branch on the thermal image.
    NoneThermal,
    /// Concatenate after the first conv stage, then NIN.
    Early,
    /// Concatenate after the fourth conv stage, then NIN.
    Halfway,
    /// Concatenate the last fully-connected features; RPN sees both C5 maps.
    Late,
    /// Two independently trained single-modality detectors whose scores are averaged.
    Score,
}

impl FusionStage {
    pub const ALL: [FusionStage; 6] = [
        FusionStage::NoneColor,
        FusionStage::NoneThermal,
        FusionStage::Early,
        FusionStage::Halfway,
        FusionStage::Late,
        FusionStage::Score,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FusionStage::NoneColor => "none-color",
            FusionStage::NoneThermal => "none-thermal",
            FusionStage::Early => "early",
            FusionStage::Halfway => "halfway",
            FusionStage::Late => "late",
            FusionStage::Score => "score",
        }
    }

    pub fn is_single_modality(self) -> bool {
        matches!(self, FusionStage::NoneColor | FusionStage::NoneThermal)
    }
}

impl fmt::Display for FusionStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionStage::ALL
            .into_iter()
            .find(|st| st.name() == s || st.name().replace('-', "_") == s)
            .ok_or_else(|| Error::config(format!("unknown fusion stage `{s}`")))
    }
}

/// Number of conv stages in a backbone.
pub const NUM_STAGES: usize = 5;
/// Stages (0-based) followed by 2×2 max pooling. The template pools after
/// all of the first four; the fourth pooling is removed.
pub const POOLED_STAGES: [usize; 3] = [0, 1, 2];
/// Total downsampling from image to C5.
pub const FEATURE_STRIDE: usize = 8;

/// Hyperparameters of a detector graph.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// Output channels of conv stages C1..C5.
    pub widths: [usize; NUM_STAGES],
    pub image_h: usize,
    pub image_w: usize,
    pub anchor_scales: Vec<f64>,
    pub anchor_ratios: Vec<f64>,
    /// Width of the F6/F7 fully-connected layers.
    pub fc_width: usize,
    /// Output channels of the NIN after a conv-stage junction; the width of
    /// the stage at the junction when unset.
    pub fusion_width: Option<usize>,
    pub rpn_width: usize,
    /// RoI pooling grid side.
    pub roi_out: usize,
    /// Proposals kept after RPN non-maximum suppression.
    pub rpn_top_k: usize,
    pub rpn_pre_nms: usize,
    pub rpn_nms: f64,
    /// Std of the Gaussian used for backbone/NIN/F6/F7 weights; He scaling when unset.
    pub weight_std: Option<f64>,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            widths: [8, 16, 32, 32, 32],
            image_h: 64,
            image_w: 80,
            anchor_scales: vec![16.0, 24.0, 32.0],
            anchor_ratios: PEDESTRIAN_RATIOS.to_vec(),
            fc_width: 128,
            fusion_width: None,
            rpn_width: 32,
            roi_out: 7,
            rpn_top_k: 300,
            rpn_pre_nms: 2000,
            rpn_nms: 0.7,
            weight_std: None,
            seed: 0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.contains(&0) || self.fc_width == 0 || self.rpn_width == 0 || self.roi_out == 0 {
            return Err(Error::config("layer widths must be positive"));
        }
        if self.fusion_width == Some(0) {
            return Err(Error::config("fusion width must be positive"));
        }
        if self.image_h == 0 || self.image_w == 0 || !self.image_h.is_multiple_of(FEATURE_STRIDE) || !self.image_w.is_multiple_of(FEATURE_STRIDE) {
            return Err(Error::config(format!(
                "image size {}x{} (h x w) must be a positive multiple of the pooling factor {FEATURE_STRIDE}",
                self.image_h, self.image_w
            )));
        }
        if !(self.rpn_nms > 0.0 && self.rpn_nms < 1.0) {
            return Err(Error::config("RPN NMS threshold must lie in (0, 1)"));
        }
        if self.rpn_top_k == 0 || self.rpn_pre_nms == 0 {
            return Err(Error::config("RPN proposal caps must be positive"));
        }
        if let Some(s) = self.weight_std {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::config("weight std must be positive"));
            }
        }
        Ok(())
    }

    pub fn feature_hw(&self) -> (usize, usize) {
        (self.image_h / FEATURE_STRIDE, self.image_w / FEATURE_STRIDE)
    }

    pub fn anchors_per_cell(&self) -> usize {
        self.anchor_scales.len() * self.anchor_ratios.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for st in FusionStage::ALL {
            assert_eq!(st.name().parse::<FusionStage>().unwrap(), st);
        }
        assert!("middle".parse::<FusionStage>().is_err());
    }

    #[test]
    fn indivisible_image_rejected() {
        let cfg = DetectorConfig { image_w: 84, ..DetectorConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(DetectorConfig::default().validate().is_ok());
    }
}
