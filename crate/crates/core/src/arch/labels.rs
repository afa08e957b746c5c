use crate::arch::{iou, BBox};
use crate::Scalar;

/// Proposals strictly above this IoU with a ground truth are positives.
pub const POSITIVE_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProposalLabel<T> {
    /// Carries the index and box of the best-overlapping ground truth.
    Positive { gt: usize, target: BBox<T> },
    Negative,
}

impl<T> ProposalLabel<T> {
    pub fn is_positive(&self) -> bool {
        matches!(self, ProposalLabel::Positive { .. })
    }
}

/// Labels each proposal positive iff its best IoU over `gts` exceeds `pos_iou`.
/// Ties between ground truths go to the lowest index.
pub fn assign_proposal_labels<T: Scalar>(proposals: &[BBox<T>], gts: &[BBox<T>], pos_iou: f64) -> Vec<ProposalLabel<T>> {
    proposals
        .iter()
        .map(|p| {
            let mut best: Option<(usize, f64)> = None;
            for (i, g) in gts.iter().enumerate() {
                let v = iou(p, g);
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
            match best {
                Some((gt, v)) if v > pos_iou => ProposalLabel::Positive { gt, target: gts[gt] },
                _ => ProposalLabel::Negative,
            }
        })
        .collect()
}
