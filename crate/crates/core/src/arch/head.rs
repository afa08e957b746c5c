use crate::arch::bbox::decode_bbox;
use crate::arch::model::{DetectorModel, Features};
use crate::arch::rpn::Proposal;
use crate::pipeline::Detection;
use crate::{Error, Result, Scalar};

/// Head regression targets are divided by these before training, and
/// predictions multiplied back at inference.
pub const HEAD_DELTA_STDS: [f64; 4] = [0.1, 0.1, 0.2, 0.2];

/// Scores and refines each proposal: one detection per proposal, in input order.
/// Refined boxes are clipped to the image; a box that clips away keeps the proposal's box.
pub fn detection_head_forward<T: Scalar>(
    model: &DetectorModel<T>,
    feats: &Features<T>,
    proposals: &[Proposal<T>],
) -> Result<Vec<Detection<T>>> {
    if proposals.is_empty() {
        return Err(Error::contract("detection head needs at least one proposal"));
    }
    let rois: Vec<_> = proposals.iter().map(|p| p.bbox).collect();
    let (out, _) = model.head_forward(feats, &rois)?;
    let (w, h) = (T::lit(model.config.image_w as f64), T::lit(model.config.image_h as f64));
    let stds = HEAD_DELTA_STDS.map(T::lit);
    Ok(rois
        .iter()
        .enumerate()
        .map(|(r, roi)| {
            let d = &out.deltas.data()[r * 4..r * 4 + 4];
            let deltas = [d[0] * stds[0], d[1] * stds[1], d[2] * stds[2], d[3] * stds[3]];
            let bbox = decode_bbox(roi, &deltas).clip(w, h).unwrap_or(*roi);
            Detection { bbox, score: out.probs.data()[r * 2 + 1], source: model.stage }
        })
        .collect())
}

/// Pedestrian probability the head assigns to each box, without refinement.
pub fn score_boxes<T: Scalar>(model: &DetectorModel<T>, feats: &Features<T>, boxes: &[crate::arch::BBox<T>]) -> Result<Vec<T>> {
    if boxes.is_empty() {
        return Ok(Vec::new());
    }
    let (out, _) = model.head_forward(feats, boxes)?;
    Ok((0..boxes.len()).map(|r| out.probs.data()[r * 2 + 1]).collect())
}
