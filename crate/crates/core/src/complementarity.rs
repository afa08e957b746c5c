//! Six-way partition of two detectors' true and false positives, and the
//! oracle fusion bound that keeps every true detection of either detector
//! but only the false alarms both of them raise.

use std::fmt::Write as _;

use crate::arch::iou;
use crate::eval::{filter_reasonable, match_detections_with_ignored, GroundTruth, MatchResult};
use crate::pipeline::Detection;
use crate::{Error, Result, Scalar};

/// Minimum IoU for two false positives of different detectors to count as the same false alarm.
pub const FP_PAIR_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ComplementarityTable {
    pub gt_count: usize,
    pub tp_both: usize,
    pub tp_a_only: usize,
    pub tp_b_only: usize,
    pub fp_both: usize,
    pub fp_a_only: usize,
    pub fp_b_only: usize,
    pub n_images: usize,
}

impl ComplementarityTable {
    pub fn validate(&self) -> Result<()> {
        if self.tp_both + self.tp_a_only > self.gt_count || self.tp_both + self.tp_b_only > self.gt_count {
            return Err(Error::contract(format!(
                "true positives exceed ground truths: {}+{} / {}+{} of {}",
                self.tp_both, self.tp_a_only, self.tp_both, self.tp_b_only, self.gt_count
            )));
        }
        if self.tp_both + self.tp_a_only + self.tp_b_only > self.gt_count {
            return Err(Error::contract("union of true positives exceeds the ground-truth count"));
        }
        Ok(())
    }

    pub fn tp_a(&self) -> usize {
        self.tp_both + self.tp_a_only
    }

    pub fn tp_b(&self) -> usize {
        self.tp_both + self.tp_b_only
    }

    pub fn fp_a(&self) -> usize {
        self.fp_both + self.fp_a_only
    }

    pub fn fp_b(&self) -> usize {
        self.fp_both + self.fp_b_only
    }

    fn add(&mut self, o: &ComplementarityTable) {
        self.gt_count += o.gt_count;
        self.tp_both += o.tp_both;
        self.tp_a_only += o.tp_a_only;
        self.tp_b_only += o.tp_b_only;
        self.fp_both += o.fp_both;
        self.fp_a_only += o.fp_a_only;
        self.fp_b_only += o.fp_b_only;
        self.n_images += o.n_images;
    }
}

/// Both detectors' matchings on one image, with the detections they index.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMatches<T> {
    pub dets_a: Vec<Detection<T>>,
    pub match_a: MatchResult,
    pub dets_b: Vec<Detection<T>>,
    pub match_b: MatchResult,
}

/// Pairs false positives of two detectors: all pairs with IoU at least
/// `fp_iou` are visited by descending IoU (ties by lowest indices) and a
/// pair is kept when neither box is already paired.
pub fn pair_false_positives<T: Scalar>(a: &[crate::arch::BBox<T>], b: &[crate::arch::BBox<T>], fp_iou: f64) -> Vec<(usize, usize)> {
    let mut cands = Vec::new();
    for (i, ba) in a.iter().enumerate() {
        for (j, bb) in b.iter().enumerate() {
            let v = iou(ba, bb);
            if v >= fp_iou {
                cands.push((v, i, j));
            }
        }
    }
    cands.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let (mut used_a, mut used_b) = (vec![false; a.len()], vec![false; b.len()]);
    let mut pairs = Vec::new();
    for (_, i, j) in cands {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

fn partition_image<T: Scalar>(im: &ImageMatches<T>, fp_iou: f64) -> Result<ComplementarityTable> {
    let gts_a = im.match_a.tp.len() + im.match_a.missed.len();
    let gts_b = im.match_b.tp.len() + im.match_b.missed.len();
    if gts_a != gts_b {
        return Err(Error::contract(format!("matchings use different ground-truth sets ({gts_a} vs {gts_b} kept)")));
    }
    let mut t = ComplementarityTable { gt_count: gts_a, n_images: 1, ..Default::default() };
    for g in 0..gts_a {
        match (im.match_a.is_matched(g), im.match_b.is_matched(g)) {
            (true, true) => t.tp_both += 1,
            (true, false) => t.tp_a_only += 1,
            (false, true) => t.tp_b_only += 1,
            (false, false) => {}
        }
    }
    let fa: Vec<_> = im.match_a.fp.iter().map(|&d| im.dets_a[d].bbox).collect();
    let fb: Vec<_> = im.match_b.fp.iter().map(|&d| im.dets_b[d].bbox).collect();
    t.fp_both = pair_false_positives(&fa, &fb, fp_iou).len();
    t.fp_a_only = fa.len() - t.fp_both;
    t.fp_b_only = fb.len() - t.fp_both;
    Ok(t)
}

/// Aggregates the per-image partition over a set of images.
pub fn partition<T: Scalar>(images: &[ImageMatches<T>], fp_iou: f64) -> Result<ComplementarityTable> {
    let mut total = ComplementarityTable::default();
    for im in images {
        total.add(&partition_image(im, fp_iou)?);
    }
    Ok(total)
}

/// Matches two detectors' outputs against the same ground truths under the
/// reasonable setting, keeping detections scoring strictly above `score_thresh`.
pub fn match_pair<T: Scalar>(
    dets_a: &[Detection<T>],
    dets_b: &[Detection<T>],
    gts: &[GroundTruth<T>],
    min_height: f64,
    score_thresh: f64,
    iou_thresh: f64,
) -> Result<ImageMatches<T>> {
    let (kept, ignored) = filter_reasonable(gts, min_height);
    let prep = |d: &[Detection<T>]| {
        let mut v: Vec<_> = d.iter().copied().filter(|d| d.score.as_f64() > score_thresh).collect();
        v.sort_by(|x, y| y.score.partial_cmp(&x.score).expect("finite scores"));
        v
    };
    let (dets_a, dets_b) = (prep(dets_a), prep(dets_b));
    let match_a = match_detections_with_ignored(&dets_a, &kept, &ignored, iou_thresh)?;
    let match_b = match_detections_with_ignored(&dets_b, &kept, &ignored, iou_thresh)?;
    Ok(ImageMatches { dets_a, match_a, dets_b, match_b })
}

/// A false-positive count with both candidate normalizations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpRate {
    pub count: usize,
    /// Count over the number of images; `None` for zero images.
    pub per_image: Option<f64>,
    /// Count over the number of ground truths.
    pub per_gt: f64,
}

impl FpRate {
    fn new(count: usize, n_images: usize, gt_count: usize) -> Self {
        FpRate {
            count,
            per_image: (n_images > 0).then(|| count as f64 / n_images as f64),
            per_gt: count as f64 / gt_count as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleBound {
    pub union_detection_rate: f64,
    pub rate_a: f64,
    pub rate_b: f64,
    pub shared_fp_count: usize,
    pub fp_before_a: FpRate,
    pub fp_before_b: FpRate,
    pub fp_after: FpRate,
}

pub fn oracle_bound(t: &ComplementarityTable) -> Result<OracleBound> {
    if t.gt_count == 0 {
        return Err(Error::Data("oracle bound is undefined without ground truths".into()));
    }
    t.validate()?;
    let g = t.gt_count as f64;
    Ok(OracleBound {
        union_detection_rate: (t.tp_both + t.tp_a_only + t.tp_b_only) as f64 / g,
        rate_a: t.tp_a() as f64 / g,
        rate_b: t.tp_b() as f64 / g,
        shared_fp_count: t.fp_both,
        fp_before_a: FpRate::new(t.fp_a(), t.n_images, t.gt_count),
        fp_before_b: FpRate::new(t.fp_b(), t.n_images, t.gt_count),
        fp_after: FpRate::new(t.fp_both, t.n_images, t.gt_count),
    })
}

/// Tables labelled by condition (`all`, `day`, `night`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComplementarityReport {
    pub rows: Vec<(String, ComplementarityTable)>,
}

const COLUMNS: [&str; 9] = ["condition", "images", "gt", "tp_both", "tp_a_only", "tp_b_only", "fp_both", "fp_a_only", "fp_b_only"];

impl ComplementarityReport {
    fn cells(label: &str, t: &ComplementarityTable) -> [String; 9] {
        [
            label.to_string(),
            t.n_images.to_string(),
            t.gt_count.to_string(),
            t.tp_both.to_string(),
            t.tp_a_only.to_string(),
            t.tp_b_only.to_string(),
            t.fp_both.to_string(),
            t.fp_a_only.to_string(),
            t.fp_b_only.to_string(),
        ]
    }

    /// Right-aligned columns; `_a`/`_b` columns count exclusive detections.
    pub fn to_text(&self) -> String {
        let rows: Vec<[String; 9]> = self.rows.iter().map(|(l, t)| Self::cells(l, t)).collect();
        let widths: Vec<usize> = (0..9).map(|c| rows.iter().map(|r| r[c].len()).chain([COLUMNS[c].len()]).max().unwrap()).collect();
        let mut out = String::new();
        let mut line = |cells: &[&str]| {
            let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            out.push_str(parts.join("  ").trim_end());
            out.push('\n');
        };
        line(&COLUMNS);
        for r in &rows {
            line(&r.iter().map(String::as_str).collect::<Vec<_>>());
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = COLUMNS.join(",");
        out.push('\n');
        for (l, t) in &self.rows {
            let _ = writeln!(out, "{}", Self::cells(l, t).join(","));
        }
        out
    }
}
