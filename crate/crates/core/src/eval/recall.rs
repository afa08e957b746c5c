use crate::arch::{BBox, Proposal};
use crate::eval::matching::{check_sorted, greedy_match};
use crate::eval::GroundTruth;
use crate::{Error, Result, Scalar};

/// Fraction of kept ground truths matched (greedily, in objectness order) by
/// the top `k` proposals of each image at IoU strictly above `iou_thresh`.
pub fn proposal_recall<T: Scalar>(
    proposals: &[Vec<Proposal<T>>],
    kept: &[Vec<GroundTruth<T>>],
    k: usize,
    iou_thresh: f64,
) -> Result<f64> {
    if proposals.len() != kept.len() {
        return Err(Error::contract(format!(
            "{} proposal lists for {} ground-truth lists",
            proposals.len(),
            kept.len()
        )));
    }
    let total: usize = kept.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::Data("recall is undefined without kept ground truths".into()));
    }
    let mut hit = 0;
    for (props, gts) in proposals.iter().zip(kept) {
        check_sorted(props.iter().map(|p| p.objectness), "proposals")?;
        let boxes: Vec<BBox<T>> = props.iter().take(k).map(|p| p.bbox).collect();
        let gt_boxes: Vec<BBox<T>> = gts.iter().map(|g| g.bbox).collect();
        hit += greedy_match(&boxes, &gt_boxes, &[], iou_thresh).tp.len();
    }
    Ok(hit as f64 / total as f64)
}

/// `(k, recall)` for each requested proposal budget.
pub fn recall_vs_k<T: Scalar>(
    proposals: &[Vec<Proposal<T>>],
    kept: &[Vec<GroundTruth<T>>],
    ks: &[usize],
    iou_thresh: f64,
) -> Result<Vec<(usize, f64)>> {
    ks.iter().map(|&k| Ok((k, proposal_recall(proposals, kept, k, iou_thresh)?))).collect()
}

/// `(iou, recall)` at a fixed budget `k`.
pub fn recall_vs_iou<T: Scalar>(
    proposals: &[Vec<Proposal<T>>],
    kept: &[Vec<GroundTruth<T>>],
    k: usize,
    ious: &[f64],
) -> Result<Vec<(f64, f64)>> {
    ious.iter().map(|&t| Ok((t, proposal_recall(proposals, kept, k, t)?))).collect()
}

/// Budgets reported by the recall-vs-proposals curve.
pub const RECALL_KS: [usize; 10] = [1, 5, 10, 20, 30, 50, 100, 150, 200, 300];

/// IoU thresholds `0.5, 0.55, …, 0.95` of the recall-vs-IoU curve.
pub fn recall_ious() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}
