use crate::arch::bbox::decode_bbox;
use crate::arch::model::{DetectorModel, Frame, RpnOutput};
use crate::arch::BBox;
use crate::pipeline::nms::nms_indices;
use crate::{Result, Scalar};

/// Proposals narrower or shorter than this (pixels, after clipping) are dropped.
pub const MIN_PROPOSAL_SIZE: f64 = 2.0;

/// Class-agnostic region proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal<T> {
    pub bbox: BBox<T>,
    /// Sigmoid of the RPN logit, in `[0, 1]`.
    pub objectness: T,
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Runs the backbone and RPN and returns at most `top_k` proposals,
/// sorted by descending objectness.
pub fn rpn_forward<T: Scalar>(model: &DetectorModel<T>, frame: &Frame<'_, T>, top_k: usize) -> Result<Vec<Proposal<T>>> {
    let (feats, _) = model.backbone_forward(frame)?;
    let (maps, _) = model.rpn_forward_maps(&feats.rpn_input)?;
    Ok(proposals_from_maps(model, &maps, top_k))
}

/// Decodes every anchor, clips to the image, keeps the `rpn_pre_nms` best,
/// suppresses overlaps above `rpn_nms` and truncates to `top_k`.
pub fn proposals_from_maps<T: Scalar>(model: &DetectorModel<T>, maps: &RpnOutput<T>, top_k: usize) -> Vec<Proposal<T>> {
    let cfg = &model.config;
    let (fh, fw) = cfg.feature_hw();
    let a = cfg.anchors_per_cell();
    let (img_w, img_h) = (T::lit(cfg.image_w as f64), T::lit(cfg.image_h as f64));
    let min_size = T::lit(MIN_PROPOSAL_SIZE);
    let anchors = model.anchor_boxes();
    let plane = fh * fw;

    let mut cands: Vec<Proposal<T>> = Vec::with_capacity(anchors.len());
    for (i, anchor) in anchors.iter().enumerate() {
        let cell = i / a;
        let k = i % a;
        let logit = maps.logits.data()[k * plane + cell];
        let d = |j: usize| maps.deltas.data()[(4 * k + j) * plane + cell];
        let decoded = decode_bbox(anchor, &[d(0), d(1), d(2), d(3)]);
        let Some(bbox) = decoded.clip(img_w, img_h) else { continue };
        if bbox.width() < min_size || bbox.height() < min_size {
            continue;
        }
        cands.push(Proposal { bbox, objectness: sigmoid(logit) });
    }
    // stable: equal scores keep anchor order
    cands.sort_by(|x, y| y.objectness.partial_cmp(&x.objectness).expect("finite objectness"));
    cands.truncate(cfg.rpn_pre_nms);
    let boxes: Vec<BBox<T>> = cands.iter().map(|p| p.bbox).collect();
    let keep = nms_indices(&boxes, cfg.rpn_nms);
    keep.into_iter().take(top_k).map(|i| cands[i]).collect()
}
