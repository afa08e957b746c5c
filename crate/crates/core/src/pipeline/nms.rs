use crate::arch::{iou, BBox};
use crate::pipeline::Detection;
use crate::Scalar;

/// Greedy suppression over boxes already sorted by descending score.
/// Returns kept indices in order.
pub fn nms_indices<T: Scalar>(sorted: &[BBox<T>], iou_thresh: f64) -> Vec<usize> {
    let mut keep: Vec<usize> = Vec::new();
    for (i, b) in sorted.iter().enumerate() {
        if keep.iter().all(|&k| iou(&sorted[k], b) <= iou_thresh) {
            keep.push(i);
        }
    }
    keep
}

/// Greedy non-maximum suppression by descending score; equal scores keep input order.
/// A detection survives iff its IoU with every higher-ranked survivor is at most `iou_thresh`.
pub fn nms<T: Scalar>(dets: &[Detection<T>], iou_thresh: f64) -> Vec<Detection<T>> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.partial_cmp(&dets[a].score).expect("finite scores"));
    let boxes: Vec<BBox<T>> = order.iter().map(|&i| dets[i].bbox).collect();
    nms_indices(&boxes, iou_thresh).into_iter().map(|k| dets[order[k]]).collect()
}
