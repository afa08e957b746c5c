use std::sync::OnceLock;

use msfusion::arch::{build_detector, detection_head_forward, iou, rpn_forward, DetectorConfig, DetectorModel, FusionStage, Frame};
use msfusion::io::{synth_images, Sample, SynthImage, SynthParams};
use msfusion::pipeline::{mean_training_loss, train, TrainOutcome, TrainSchedule};
use msfusion::Error;

fn dataset(n: usize, seed: u64) -> (Vec<Sample<f32>>, Vec<Sample<f32>>) {
    let p = SynthParams { n_images: n, seed, ..SynthParams::default() };
    let samples: Vec<_> = synth_images::<f32>(&p).unwrap().iter().map(SynthImage::to_sample).collect();
    let test = samples[p.n_train()..].to_vec();
    let mut train = samples;
    train.truncate(p.n_train());
    (train, test)
}

fn schedule() -> TrainSchedule {
    TrainSchedule { lr_phase1: 0.01, lr_phase2: 0.001, seed: 3, ..TrainSchedule::default() }
}

struct Run {
    train: Vec<Sample<f32>>,
    test: Vec<Sample<f32>>,
    initial: DetectorModel<f32>,
    outcome: TrainOutcome<f32>,
}

fn desk_run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| {
        let (train_set, test) = dataset(600, 21);
        assert_eq!(train_set.len(), 500);
        let initial = build_detector::<f32>(&DetectorConfig::default(), FusionStage::NoneThermal).unwrap();
        let outcome = train(initial.clone(), &train_set, &schedule()).unwrap();
        Run { train: train_set, test, initial, outcome }
    })
}

#[test]
fn six_epochs_halve_the_training_loss() {
    let run = desk_run();
    let before = mean_training_loss(&run.initial, &run.train, 0).unwrap();
    let after = mean_training_loss(&run.outcome.model, &run.train, 0).unwrap();
    assert!(after < 0.5 * before, "loss {before} -> {after}");
    let log = &run.outcome.log;
    assert_eq!(log.len(), 6);
    assert!(log.last().unwrap().loss < log[0].loss);
}

#[test]
fn refinement_moves_positives_toward_their_gt() {
    let run = desk_run();
    let model = &run.outcome.model;
    let (mut closer, mut total) = (0, 0);
    for s in &run.test {
        let frame = Frame::new(&s.pair.color, &s.pair.thermal).unwrap();
        let props = rpn_forward(model, &frame, 300).unwrap();
        if props.is_empty() || s.gts.is_empty() {
            continue;
        }
        let (feats, _) = model.backbone_forward(&frame).unwrap();
        let dets = detection_head_forward(model, &feats, &props).unwrap();
        assert_eq!(dets.len(), props.len());
        for (p, d) in props.iter().zip(&dets) {
            let (g, before) = s
                .gts
                .iter()
                .enumerate()
                .map(|(g, gt)| (g, iou(&p.bbox, &gt.bbox)))
                .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            if before > 0.5 {
                total += 1;
                if iou(&d.bbox, &s.gts[g].bbox) > before {
                    closer += 1;
                }
            }
        }
    }
    assert!(total > 100, "only {total} positive proposals");
    let frac = closer as f64 / total as f64;
    assert!(frac >= 0.8, "{closer}/{total} refined boxes moved closer");
}

#[test]
fn same_seed_gives_bit_identical_parameters() {
    let (data, _) = dataset(24, 4);
    let sched = TrainSchedule { epochs_phase1: 1, epochs_phase2: 1, ..schedule() };
    let m = build_detector::<f32>(&DetectorConfig::default(), FusionStage::Halfway).unwrap();
    let a = train(m.clone(), &data, &sched).unwrap();
    let b = train(m.clone(), &data, &sched).unwrap();
    assert_eq!(a.model.params, b.model.params);
    assert_eq!(a.log, b.log);
    assert_ne!(a.model.params, m.params);
}

#[test]
fn zero_epochs_leave_parameters_unchanged() {
    let (data, _) = dataset(12, 5);
    let sched = TrainSchedule { epochs_phase1: 0, epochs_phase2: 0, ..schedule() };
    let m = build_detector::<f32>(&DetectorConfig::default(), FusionStage::Early).unwrap();
    let out = train(m.clone(), &data, &sched).unwrap();
    assert_eq!(out.model.params, m.params);
    assert!(out.log.is_empty());
}

#[test]
fn non_finite_input_aborts_naming_the_image() {
    let (mut data, _) = dataset(12, 6);
    data.truncate(3);
    data[1].pair.thermal.data_mut()[0] = f32::NAN;
    let bad = data[1].pair.image_id.clone();
    let m = build_detector::<f32>(&DetectorConfig::default(), FusionStage::NoneThermal).unwrap();
    match train(m, &data, &schedule()) {
        Err(Error::Diverged { epoch, image_id, .. }) => {
            assert_eq!(epoch, 0);
            assert_eq!(image_id, bad);
        }
        other => panic!("expected divergence, got {:?}", other.map(|o| o.log)),
    }
}

#[test]
fn score_stage_is_not_trainable() {
    let (data, _) = dataset(12, 7);
    let mut m = build_detector::<f32>(&DetectorConfig::default(), FusionStage::NoneColor).unwrap();
    m.stage = FusionStage::Score;
    assert!(matches!(train(m, &data, &schedule()), Err(Error::Config(_))));
}
