//! Approximate joint training: one SGD step per image pair minimizes the
//! RPN loss plus the detection-head loss, with proposals treated as constants.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::bbox::encode_bbox;
use crate::arch::model::{DetectorModel, Frame};
use crate::arch::rpn::{proposals_from_maps, sigmoid};
use crate::arch::{assign_proposal_labels, iou, BBox, FusionStage, ProposalLabel, HEAD_DELTA_STDS, POSITIVE_IOU};
use crate::io::Sample;
use crate::nn::{GradientTape, Sgd, Tensor};
use crate::{Error, Result, Scalar};

/// Anchors sampled per image for the RPN loss.
pub const RPN_BATCH: usize = 128;
pub const RPN_POSITIVE_FRACTION: f64 = 0.5;
/// Anchors at or above this IoU with a ground truth are positive.
pub const RPN_POSITIVE_IOU: f64 = 0.7;
/// Anchors below this IoU with every ground truth are negative.
pub const RPN_NEGATIVE_IOU: f64 = 0.3;
/// Proposals sampled per image for the detection-head loss.
pub const HEAD_BATCH: usize = 64;
/// At most one positive per three negatives.
pub const HEAD_POSITIVE_FRACTION: f64 = 0.25;
pub const DEFAULT_MOMENTUM: f64 = 0.9;

/// Two-phase learning-rate schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    pub epochs_phase1: usize,
    pub lr_phase1: f64,
    pub epochs_phase2: usize,
    pub lr_phase2: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            epochs_phase1: 4,
            lr_phase1: 0.001,
            epochs_phase2: 2,
            lr_phase2: 0.0001,
            momentum: DEFAULT_MOMENTUM,
            seed: 0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = |lr: f64| lr.is_finite() && lr > 0.0;
        if !ok(self.lr_phase1) || !ok(self.lr_phase2) {
            return Err(Error::config("learning rates must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.epochs_phase1 + self.epochs_phase2
    }

    pub fn lr_for_epoch(&self, epoch: usize) -> f64 {
        if epoch < self.epochs_phase1 {
            self.lr_phase1
        } else {
            self.lr_phase2
        }
    }
}

/// Mean losses over one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub rpn_cls: f64,
    pub rpn_reg: f64,
    pub head_cls: f64,
    pub head_reg: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: DetectorModel<T>,
    pub log: Vec<EpochLog>,
}

#[derive(Debug, Clone, Copy, Default)]
struct StepLoss {
    rpn_cls: f64,
    rpn_reg: f64,
    head_cls: f64,
    head_reg: f64,
}

impl StepLoss {
    fn total(&self) -> f64 {
        self.rpn_cls + self.rpn_reg + self.head_cls + self.head_reg
    }
}

/// Trains `model` on `data`; deterministic given `schedule.seed`.
pub fn train<T: Scalar>(mut model: DetectorModel<T>, data: &[Sample<T>], schedule: &TrainSchedule) -> Result<TrainOutcome<T>> {
    schedule.validate()?;
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if model.stage == FusionStage::Score {
        return Err(Error::config("score fusion trains its two single-modality models individually"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut opt = Sgd::new(&model.params, T::lit(schedule.momentum));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(schedule.total_epochs());
    for epoch in 0..schedule.total_epochs() {
        let lr = schedule.lr_for_epoch(epoch);
        order.shuffle(&mut rng);
        let mut sum = StepLoss::default();
        for (batch, &i) in order.iter().enumerate() {
            let sample = &data[i];
            let (loss, mut tape) = train_step(&model, sample, &mut rng)?;
            let total = loss.total();
            if !total.is_finite() || !tape.all_finite() {
                return Err(Error::Diverged { epoch, batch, image_id: sample.pair.image_id.clone(), loss: total });
            }
            tape.fill_missing(&model.params);
            opt.step(&mut model.params, &tape, T::lit(lr))?;
            sum.rpn_cls += loss.rpn_cls;
            sum.rpn_reg += loss.rpn_reg;
            sum.head_cls += loss.head_cls;
            sum.head_reg += loss.head_reg;
        }
        let n = data.len() as f64;
        log.push(EpochLog {
            epoch,
            lr,
            loss: sum.total() / n,
            rpn_cls: sum.rpn_cls / n,
            rpn_reg: sum.rpn_reg / n,
            head_cls: sum.head_cls / n,
            head_reg: sum.head_reg / n,
        });
    }
    Ok(TrainOutcome { model, log })
}

/// Mean per-image training loss of `model` on `data` without updating it.
/// Anchor and proposal sampling are drawn from `seed`.
pub fn mean_training_loss<T: Scalar>(model: &DetectorModel<T>, data: &[Sample<T>], seed: u64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Data("loss of an empty set is undefined".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    for s in data {
        sum += train_step(model, s, &mut rng)?.0.total();
    }
    Ok(sum / data.len() as f64)
}

fn smooth_l1(x: f64) -> (f64, f64) {
    if x.abs() < 1.0 {
        (0.5 * x * x, x)
    } else {
        (x.abs() - 0.5, x.signum())
    }
}

/// Picks up to `max_pos` positives and fills the batch with negatives, both uniformly at random.
fn sample_indices(pos: &mut Vec<usize>, neg: &mut Vec<usize>, batch: usize, max_pos: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    pos.shuffle(rng);
    pos.truncate(max_pos);
    neg.shuffle(rng);
    neg.truncate(batch - pos.len());
    pos.sort_unstable();
    neg.sort_unstable();
    (std::mem::take(pos), std::mem::take(neg))
}

/// Training ground truths: every annotated box clipped to the image.
fn training_boxes<T: Scalar>(model: &DetectorModel<T>, sample: &Sample<T>) -> Vec<BBox<T>> {
    let (w, h) = (T::lit(model.config.image_w as f64), T::lit(model.config.image_h as f64));
    sample.gts.iter().filter_map(|g| g.bbox.clip(w, h)).collect()
}

/// Loss and gradients of one image pair.
fn train_step<T: Scalar>(model: &DetectorModel<T>, sample: &Sample<T>, rng: &mut ChaCha8Rng) -> Result<(StepLoss, GradientTape<T>)> {
    let frame = Frame::new(&sample.pair.color, &sample.pair.thermal)?;
    let gts = training_boxes(model, sample);
    let mut tape = GradientTape::for_store(&model.params);
    let mut loss = StepLoss::default();

    let (feats, bb_cache) = model.backbone_forward(&frame)?;
    let (maps, rpn_cache) = model.rpn_forward_maps(&feats.rpn_input)?;

    // RPN targets
    let anchors = model.anchor_boxes();
    let a = model.config.anchors_per_cell();
    let plane = maps.logits.h() * maps.logits.w();
    let overlaps: Vec<Vec<f64>> = anchors.iter().map(|an| gts.iter().map(|gt| iou(an, gt)).collect()).collect();
    let mut best_for_gt = vec![0.0f64; gts.len()];
    for row in &overlaps {
        for (b, &v) in best_for_gt.iter_mut().zip(row) {
            *b = b.max(v);
        }
    }
    // (best IoU, gt index) per anchor; lowest gt index on ties
    let best_for_anchor: Vec<(f64, usize)> = overlaps
        .iter()
        .map(|row| row.iter().enumerate().fold((0.0, usize::MAX), |acc, (g, &v)| if v > acc.0 { (v, g) } else { acc }))
        .collect();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, row) in overlaps.iter().enumerate() {
        let v = best_for_anchor[i].0;
        // every ground truth keeps its best anchors as positives
        let is_best = row.iter().zip(&best_for_gt).any(|(&o, &b)| b > 0.0 && o == b);
        if v >= RPN_POSITIVE_IOU || is_best {
            pos.push(i);
        } else if v < RPN_NEGATIVE_IOU {
            neg.push(i);
        }
    }
    let max_pos = (RPN_BATCH as f64 * RPN_POSITIVE_FRACTION) as usize;
    let (pos, neg) = sample_indices(&mut pos, &mut neg, RPN_BATCH, max_pos, rng);
    let n_rpn = (pos.len() + neg.len()).max(1) as f64;
    let mut d_logits = Tensor::zeros(maps.logits.shape());
    let mut d_deltas = Tensor::zeros(maps.deltas.shape());
    for (i, label) in pos.iter().map(|&i| (i, 1.0)).chain(neg.iter().map(|&i| (i, 0.0))) {
        let (cell, k) = (i / a, i % a);
        let z = maps.logits.data()[k * plane + cell].as_f64();
        // binary cross-entropy on the logit
        let p = sigmoid(z);
        loss.rpn_cls += (z.max(0.0) - z * label + (-z.abs()).exp().ln_1p()) / n_rpn;
        d_logits.data_mut()[k * plane + cell] = T::lit((p - label) / n_rpn);
    }
    for &i in &pos {
        let (cell, k) = (i / a, i % a);
        let target = encode_bbox(&anchors[i], &gts[best_for_anchor[i].1])?;
        for j in 0..4 {
            let idx = (4 * k + j) * plane + cell;
            let (l, g) = smooth_l1(maps.deltas.data()[idx].as_f64() - target[j].as_f64());
            loss.rpn_reg += l / n_rpn;
            d_deltas.data_mut()[idx] = T::lit(g / n_rpn);
        }
    }

    // detection head on sampled proposals (ground truths included)
    let mut rois: Vec<BBox<T>> = proposals_from_maps(model, &maps, model.config.rpn_top_k).into_iter().map(|p| p.bbox).collect();
    rois.extend(gts.iter().copied());
    let labels = assign_proposal_labels(&rois, &gts, POSITIVE_IOU);
    let mut hpos: Vec<usize> = (0..rois.len()).filter(|&r| labels[r].is_positive()).collect();
    let mut hneg: Vec<usize> = (0..rois.len()).filter(|&r| !labels[r].is_positive()).collect();
    let max_pos = (HEAD_BATCH as f64 * HEAD_POSITIVE_FRACTION) as usize;
    let (hpos, hneg) = sample_indices(&mut hpos, &mut hneg, HEAD_BATCH, max_pos, rng);
    let picked: Vec<(usize, bool)> = hpos.iter().map(|&r| (r, true)).chain(hneg.iter().map(|&r| (r, false))).collect();

    let d_sources = if picked.is_empty() {
        feats.roi_sources.iter().map(|s| Tensor::zeros(s.shape())).collect()
    } else {
        let batch: Vec<BBox<T>> = picked.iter().map(|&(r, _)| rois[r]).collect();
        let (out, head_cache) = model.head_forward(&feats, &batch)?;
        let n = batch.len() as f64;
        let mut d_cls = Tensor::zeros(out.logits.shape());
        let mut d_reg = Tensor::zeros(out.deltas.shape());
        for (row, &(r, positive)) in picked.iter().enumerate() {
            let target_class = usize::from(positive);
            let p = out.probs.data()[row * 2 + target_class].as_f64();
            loss.head_cls -= p.max(1e-12).ln() / n;
            for c in 0..2 {
                let y = if c == target_class { 1.0 } else { 0.0 };
                d_cls.data_mut()[row * 2 + c] = T::lit((out.probs.data()[row * 2 + c].as_f64() - y) / n);
            }
            if let ProposalLabel::Positive { target, .. } = labels[r] {
                let t = encode_bbox(&rois[r], &target)?;
                for j in 0..4 {
                    let want = t[j].as_f64() / HEAD_DELTA_STDS[j];
                    let (l, g) = smooth_l1(out.deltas.data()[row * 4 + j].as_f64() - want);
                    loss.head_reg += l / n;
                    d_reg.data_mut()[row * 4 + j] = T::lit(g / n);
                }
            }
        }
        model.head_backward(&head_cache, &d_cls, &d_reg, &mut tape)?
    };

    let d_rpn_input = model.rpn_backward(&rpn_cache, &d_logits, &d_deltas, &mut tape)?;
    model.backbone_backward(&bb_cache, &d_rpn_input, d_sources, &mut tape)?;
    Ok((loss, tape))
}
