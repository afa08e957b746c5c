use crate::arch::{iou, BBox};
use crate::eval::GroundTruth;
use crate::pipeline::Detection;
use crate::{Error, Result, Scalar};

/// Detection/ground-truth assignment for one image.
///
/// Indices refer to the detection slice and kept ground-truth slice that
/// were matched. Every detection lands in exactly one of `tp`, `fp` or
/// `ignored`; every kept ground truth is matched at most once.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    /// `(detection, ground truth)` pairs.
    pub tp: Vec<(usize, usize)>,
    pub fp: Vec<usize>,
    /// Detections absorbed by ignored ground truths; counted neither as TP nor FP.
    pub ignored: Vec<usize>,
    /// Kept ground truths no detection matched.
    pub missed: Vec<usize>,
    pub iou_thresh: f64,
}

impl MatchResult {
    pub fn evaluated(&self) -> usize {
        self.tp.len() + self.fp.len()
    }

    /// Whether kept ground truth `g` was matched.
    pub fn is_matched(&self, g: usize) -> bool {
        self.tp.iter().any(|&(_, gt)| gt == g)
    }
}

pub(crate) fn check_sorted<S: PartialOrd + Copy>(scores: impl Iterator<Item = S>, what: &str) -> Result<()> {
    let mut prev: Option<S> = None;
    for (i, s) in scores.enumerate() {
        if let Some(p) = prev {
            if !(s <= p) {
                return Err(Error::contract(format!("{what} must be sorted by descending score (violated at index {i})")));
            }
        }
        prev = Some(s);
    }
    Ok(())
}

/// Greedy matching core shared by detections and proposals. Each box, in
/// order, takes the highest-IoU unmatched ground truth with IoU strictly
/// above `iou_thresh` (lowest index on ties); otherwise it is absorbed by
/// an ignored ground truth above the threshold, or else counted as FP.
pub(crate) fn greedy_match<T: Scalar>(boxes: &[BBox<T>], kept: &[BBox<T>], ignored: &[BBox<T>], iou_thresh: f64) -> MatchResult {
    let mut taken = vec![false; kept.len()];
    let mut res = MatchResult { iou_thresh, ..MatchResult::default() };
    for (d, b) in boxes.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in kept.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = iou(b, gt);
            if v > iou_thresh && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            res.tp.push((d, g));
        } else if ignored.iter().any(|ig| iou(b, ig) > iou_thresh) {
            res.ignored.push(d);
        } else {
            res.fp.push(d);
        }
    }
    res.missed = (0..kept.len()).filter(|&g| !taken[g]).collect();
    res
}

/// Matches score-sorted detections against kept ground truths.
pub fn match_detections<T: Scalar>(dets: &[Detection<T>], kept: &[GroundTruth<T>], iou_thresh: f64) -> Result<MatchResult> {
    match_detections_with_ignored(dets, kept, &[], iou_thresh)
}

/// As [`match_detections`], letting `ignored` ground truths absorb detections without penalty.
pub fn match_detections_with_ignored<T: Scalar>(
    dets: &[Detection<T>],
    kept: &[GroundTruth<T>],
    ignored: &[GroundTruth<T>],
    iou_thresh: f64,
) -> Result<MatchResult> {
    check_sorted(dets.iter().map(|d| d.score), "detections")?;
    let boxes: Vec<_> = dets.iter().map(|d| d.bbox).collect();
    let kept: Vec<_> = kept.iter().map(|g| g.bbox).collect();
    let ignored: Vec<_> = ignored.iter().map(|g| g.bbox).collect();
    Ok(greedy_match(&boxes, &kept, &ignored, iou_thresh))
}
