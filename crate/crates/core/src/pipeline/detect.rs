use crate::arch::head::detection_head_forward;
use crate::arch::model::{DetectorModel, Features, Frame};
use crate::arch::rpn::proposals_from_maps;
use crate::pipeline::{nms, Detection};
use crate::{Result, Scalar};

pub const DEFAULT_SCORE_THRESH: f64 = 0.5;
pub const DEFAULT_NMS: f64 = 0.3;
pub const DEFAULT_TOP_K: usize = 300;

/// Detections of `model` on one aligned pair: proposals, head scoring,
/// box refinement, NMS, then only scores strictly above `score_thresh`.
/// Sorted by descending score.
pub fn detect<T: Scalar>(
    model: &DetectorModel<T>,
    frame: &Frame<'_, T>,
    score_thresh: f64,
    nms_thresh: f64,
    top_k: usize,
) -> Result<Vec<Detection<T>>> {
    let dets = detect_unfiltered(model, frame, nms_thresh, top_k)?;
    Ok(dets.into_iter().filter(|d| d.score.as_f64() > score_thresh).collect())
}

/// [`detect`] without the final score threshold.
pub fn detect_unfiltered<T: Scalar>(model: &DetectorModel<T>, frame: &Frame<'_, T>, nms_thresh: f64, top_k: usize) -> Result<Vec<Detection<T>>> {
    let (feats, _) = model.backbone_forward(frame)?;
    detect_from_features(model, &feats, nms_thresh, top_k)
}

pub(crate) fn detect_from_features<T: Scalar>(
    model: &DetectorModel<T>,
    feats: &Features<T>,
    nms_thresh: f64,
    top_k: usize,
) -> Result<Vec<Detection<T>>> {
    let (maps, _) = model.rpn_forward_maps(&feats.rpn_input)?;
    let proposals = proposals_from_maps(model, &maps, top_k);
    if proposals.is_empty() {
        return Ok(Vec::new());
    }
    let dets = detection_head_forward(model, feats, &proposals)?;
    Ok(nms(&dets, nms_thresh))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build_detector, DetectorConfig, FusionStage};
    use crate::nn::Tensor;

    fn inputs() -> (Tensor<f32>, Tensor<f32>) {
        (
            Tensor::from_fn([1, 3, 64, 80], |_, c, y, x| ((x * 5 + y * 11 + c * 3) % 17) as f32 / 17.0),
            Tensor::from_fn([1, 1, 64, 80], |_, _, y, x| if (20..50).contains(&y) && (30..42).contains(&x) { 0.9 } else { 0.2 }),
        )
    }

    #[test]
    fn blank_images_are_deterministic() {
        let m = build_detector::<f32>(&DetectorConfig::default(), FusionStage::Halfway).unwrap();
        let (c, t) = m.blank_inputs();
        let f = Frame::new(&c, &t).unwrap();
        let a = detect(&m, &f, 0.0, DEFAULT_NMS, DEFAULT_TOP_K).unwrap();
        let b = detect(&m, &f, 0.0, DEFAULT_NMS, DEFAULT_TOP_K).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn threshold_monotonicity_and_ceiling() {
        let m = build_detector::<f32>(&DetectorConfig::default(), FusionStage::Early).unwrap();
        let (c, t) = inputs();
        let f = Frame::new(&c, &t).unwrap();
        let mut prev = usize::MAX;
        for th in [0.0, 0.2, 0.4, 0.5, 0.6, 0.9, 1.0] {
            let dets = detect(&m, &f, th, DEFAULT_NMS, DEFAULT_TOP_K).unwrap();
            assert!(dets.len() <= prev);
            assert!(dets.windows(2).all(|w| w[0].score >= w[1].score));
            prev = dets.len();
        }
        assert_eq!(prev, 0);
    }

    #[test]
    fn misaligned_pair_is_rejected() {
        let c = Tensor::<f32>::zeros([1, 3, 64, 80]);
        let t = Tensor::<f32>::zeros([1, 1, 64, 72]);
        assert!(Frame::new(&c, &t).is_err());
    }
}
