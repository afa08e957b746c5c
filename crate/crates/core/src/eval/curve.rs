use crate::eval::gt::filter_reasonable;
use crate::eval::matching::match_detections_with_ignored;
use crate::eval::GroundTruth;
use crate::pipeline::Detection;
use crate::{Error, Result, Scalar};

/// Detections and ground truths of one evaluated image.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalImage<T> {
    /// Sorted by descending score.
    pub dets: Vec<Detection<T>>,
    pub kept: Vec<GroundTruth<T>>,
    pub ignored: Vec<GroundTruth<T>>,
}

impl<T: Scalar> EvalImage<T> {
    /// Sorts detections and splits ground truths under the reasonable setting.
    pub fn reasonable(mut dets: Vec<Detection<T>>, gts: &[GroundTruth<T>], min_height: f64) -> Self {
        dets.sort_by(|a, b| b.score.partial_cmp(&a.score).expect("finite scores"));
        let (kept, ignored) = filter_reasonable(gts, min_height);
        EvalImage { dets, kept, ignored }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    /// Detections scoring at least this value are counted.
    pub threshold: f64,
    pub fppi: f64,
    pub miss_rate: f64,
}

/// Miss rate against false positives per image, one point per distinct
/// score threshold, ordered by descending threshold (so by non-decreasing FPPI).
#[derive(Debug, Clone, PartialEq)]
pub struct MrFppiCurve {
    pub points: Vec<CurvePoint>,
    pub n_images: usize,
    pub n_gts: usize,
}

/// Sweeps every distinct detection score as a threshold.
///
/// Greedy matching in score order means the matching restricted to the
/// detections above a threshold is a prefix of the full matching, so one
/// matching pass per image suffices.
pub fn mr_fppi_curve<T: Scalar>(images: &[EvalImage<T>], iou_thresh: f64) -> Result<MrFppiCurve> {
    let n_gts: usize = images.iter().map(|im| im.kept.len()).sum();
    if n_gts == 0 {
        return Err(Error::Data("miss rate is undefined without kept ground truths".into()));
    }
    let n_images = images.len();
    // (score, is_tp) over evaluated detections of every image
    let mut events: Vec<(f64, bool)> = Vec::new();
    for im in images {
        let m = match_detections_with_ignored(&im.dets, &im.kept, &im.ignored, iou_thresh)?;
        events.extend(m.tp.iter().map(|&(d, _)| (im.dets[d].score.as_f64(), true)));
        events.extend(m.fp.iter().map(|&d| (im.dets[d].score.as_f64(), false)));
    }
    events.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite scores"));

    let mut points = Vec::new();
    if events.is_empty() {
        points.push(CurvePoint { threshold: f64::INFINITY, fppi: 0.0, miss_rate: 1.0 });
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < events.len() {
        let t = events[i].0;
        while i < events.len() && events[i].0 == t {
            if events[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(CurvePoint {
            threshold: t,
            fppi: fp as f64 / n_images as f64,
            miss_rate: 1.0 - tp as f64 / n_gts as f64,
        });
    }
    Ok(MrFppiCurve { points, n_images, n_gts })
}

/// Default FPPI range of the log-average miss rate.
pub const LAMR_RANGE: (f64, f64) = (0.1, 1.0);
pub const LAMR_POINTS: usize = 9;
const MIN_MISS_RATE: f64 = 1e-10;

/// FPPI values at which the log-average samples the curve.
pub fn lamr_samples(range: (f64, f64), n_points: usize) -> Vec<f64> {
    let (lo, hi) = (range.0.log10(), range.1.log10());
    if n_points == 1 {
        return vec![10f64.powf(lo)];
    }
    (0..n_points)
        .map(|k| 10f64.powf(lo + (hi - lo) * k as f64 / (n_points - 1) as f64))
        .collect()
}

/// Miss rate of the staircase curve at `fppi`: the point with the largest
/// FPPI not exceeding it (the last such point on ties), or the
/// highest-threshold point when every point lies to the right.
pub fn miss_rate_at(curve: &MrFppiCurve, fppi: f64) -> f64 {
    curve
        .points
        .iter()
        .rev()
        .find(|p| p.fppi <= fppi)
        .or(curve.points.first())
        .map_or(1.0, |p| p.miss_rate)
}

/// Geometric mean of the step-sampled miss rates at `n_points` log-spaced FPPI values.
pub fn log_avg_miss_rate(curve: &MrFppiCurve, range: (f64, f64), n_points: usize) -> f64 {
    let samples = lamr_samples(range, n_points);
    let log_sum: f64 = samples.iter().map(|&f| miss_rate_at(curve, f).max(MIN_MISS_RATE).ln()).sum();
    (log_sum / samples.len() as f64).exp()
}
