use msfusion::arch::{build_detector, rpn_forward, BBox, DetectorConfig, DetectorModel, FusionStage, Frame};
use msfusion::io::{load_model, save_model};
use msfusion::nn::Tensor;
use msfusion::pipeline::detect;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TWO_BRANCH: [FusionStage; 3] = [FusionStage::Early, FusionStage::Halfway, FusionStage::Late];

fn inputs(seed: u64) -> (Tensor<f32>, Tensor<f32>) {
    let cfg = DetectorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = Tensor::from_fn([1, 3, cfg.image_h, cfg.image_w], |_, _, _, _| rng.random_range(0.0..1.0));
    let t = Tensor::from_fn([1, 1, cfg.image_h, cfg.image_w], |_, _, _, _| rng.random_range(0.0..1.0));
    (c, t)
}

/// RPN logits followed by head class probabilities on a fixed box.
fn outputs(model: &DetectorModel<f32>, color: &Tensor<f32>, thermal: &Tensor<f32>) -> Vec<f32> {
    let frame = Frame::new(color, thermal).unwrap();
    let (feats, _) = model.backbone_forward(&frame).unwrap();
    let (maps, _) = model.rpn_forward_maps(&feats.rpn_input).unwrap();
    let roi = BBox::new(20.0, 10.0, 44.0, 54.0).unwrap();
    let (head, _) = model.head_forward(&feats, &[roi]).unwrap();
    maps.logits.data().iter().chain(head.probs.data()).copied().collect()
}

#[test]
fn every_stage_dry_runs() {
    for stage in FusionStage::ALL.into_iter().filter(|s| *s != FusionStage::Score) {
        build_detector::<f32>(&DetectorConfig::default(), stage).unwrap().dry_run().unwrap();
    }
}

#[test]
fn zeroing_thermal_changes_two_branch_outputs() {
    let (c, t) = inputs(1);
    let zero = Tensor::zeros(t.shape());
    for stage in TWO_BRANCH {
        let m = build_detector::<f32>(&DetectorConfig::default(), stage).unwrap();
        assert_ne!(outputs(&m, &c, &t), outputs(&m, &c, &zero), "{stage}");
    }
}

#[test]
fn swapping_modalities_changes_two_branch_outputs() {
    let (c, t) = inputs(2);
    let t_as_color = Tensor::from_fn(c.shape(), |n, _, y, x| t.at(n, 0, y, x));
    let c_as_thermal = Tensor::from_fn(t.shape(), |n, _, y, x| (c.at(n, 0, y, x) + c.at(n, 1, y, x) + c.at(n, 2, y, x)) / 3.0);
    for stage in TWO_BRANCH {
        let m = build_detector::<f32>(&DetectorConfig::default(), stage).unwrap();
        assert_ne!(outputs(&m, &c, &t), outputs(&m, &t_as_color, &c_as_thermal), "{stage}");
    }
}

#[test]
fn single_modality_models_ignore_the_other_input() {
    let (c, t) = inputs(3);
    let m = build_detector::<f32>(&DetectorConfig::default(), FusionStage::NoneColor).unwrap();
    assert_eq!(outputs(&m, &c, &t), outputs(&m, &c, &Tensor::zeros(t.shape())));
    let m = build_detector::<f32>(&DetectorConfig::default(), FusionStage::NoneThermal).unwrap();
    assert_eq!(outputs(&m, &c, &t), outputs(&m, &Tensor::zeros(c.shape()), &t));
}

#[test]
fn rpn_and_detect_are_deterministic() {
    let (c, t) = inputs(4);
    let frame = Frame::new(&c, &t).unwrap();
    for stage in [FusionStage::Halfway, FusionStage::Late] {
        let a = build_detector::<f32>(&DetectorConfig::default(), stage).unwrap();
        let b = build_detector::<f32>(&DetectorConfig::default(), stage).unwrap();
        let pa = rpn_forward(&a, &frame, 300).unwrap();
        assert_eq!(pa, rpn_forward(&b, &frame, 300).unwrap());
        assert!(pa.len() <= 300);
        assert_eq!(rpn_forward(&a, &frame, 1).unwrap(), pa[..1].to_vec());
        assert_eq!(detect(&a, &frame, 0.0, 0.3, 300).unwrap(), detect(&b, &frame, 0.0, 0.3, 300).unwrap());
    }
}

#[test]
fn save_load_detect_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (c, t) = inputs(5);
    let frame = Frame::new(&c, &t).unwrap();
    for stage in [FusionStage::NoneColor, FusionStage::Early, FusionStage::Late] {
        let m = build_detector::<f32>(&DetectorConfig { seed: 11, ..DetectorConfig::default() }, stage).unwrap();
        let path = dir.path().join(format!("{stage}.model"));
        save_model(&path, &m).unwrap();
        let back: DetectorModel<f32> = load_model(&path).unwrap();
        assert_eq!(back.params, m.params);
        let (d0, d1) = (detect(&m, &frame, 0.0, 0.3, 300).unwrap(), detect(&back, &frame, 0.0, 0.3, 300).unwrap());
        assert!(!d0.is_empty());
        let bits = |d: &[msfusion::Detection<f32>]| d.iter().map(|d| [d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2, d.score].map(f32::to_bits)).collect::<Vec<_>>();
        assert_eq!(bits(&d0), bits(&d1));
    }
}
