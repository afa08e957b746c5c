//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use msfusion::arch::{build_detector, iou, rpn_forward, BBox, DetectorConfig, DetectorModel, FusionStage, Frame, Proposal};
use msfusion::complementarity::{oracle_bound, ComplementarityTable};
use msfusion::eval::{
    filter_reasonable, log_avg_miss_rate, match_detections, match_detections_with_ignored, mr_fppi_curve, proposal_recall,
    recall_ious, CurvePoint, EvalImage, GroundTruth, MrFppiCurve, LAMR_POINTS, LAMR_RANGE, RECALL_KS,
};
use msfusion::io::{load_model, save_model, synth_images, Sample, SynthImage, SynthParams};
use msfusion::nn::{check_random_instance, CheckCase};
use msfusion::pipeline::{detect, nms, score_fuse, train, Detection, ScoreFusionWeights, TrainSchedule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg.into()) }
}

fn c1_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for case in CheckCase::ALL {
        for _ in 0..100 {
            let r = check_random_instance(case, &mut rng).map_err(|e| e.to_string())?;
            ensure(r.max_rel_error < 1e-4, format!("{case:?}: relative error {:e}", r.max_rel_error))?;
            worst = worst.max(r.max_rel_error);
        }
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(120), format!("took {t:?}"))?;
    Ok(format!("{} kinds x 100 instances, max rel err {worst:.2e}, {:.2}s", CheckCase::ALL.len(), t.as_secs_f64()))
}

fn overlap(a: &BBox<f64>, b: &BBox<f64>) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let i = w * h;
    i / ((a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - i)
}

fn det(x1: f64, y1: f64, x2: f64, y2: f64, score: f64) -> Detection<f64> {
    Detection { bbox: BBox::new(x1, y1, x2, y2).unwrap(), score, source: FusionStage::NoneColor }
}

fn c2_nms() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for set in 0..1000 {
        let n = rng.random_range(0..=20);
        let thresh = rng.random_range(0.2..0.8);
        let dets: Vec<_> = (0..n)
            .map(|_| {
                let (x, y) = (rng.random_range(0..12) as f64, rng.random_range(0..12) as f64);
                det(x, y, x + rng.random_range(1..=8) as f64, y + rng.random_range(1..=8) as f64, rng.random_range(0..6) as f64 / 5.0)
            })
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| dets[b].score.partial_cmp(&dets[a].score).unwrap());
        let mut suppressed = vec![false; n];
        let mut expect = Vec::new();
        for (pos, &i) in order.iter().enumerate() {
            if suppressed[pos] {
                continue;
            }
            expect.push(dets[i]);
            for (later, &j) in order.iter().enumerate().skip(pos + 1) {
                suppressed[later] |= overlap(&dets[i].bbox, &dets[j].bbox) > thresh;
            }
        }
        ensure(nms(&dets, thresh) == expect, format!("set {set} disagrees"))?;
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(10), format!("took {t:?}"))?;
    Ok(format!("1000 sets agree, {:.3}s", t.as_secs_f64()))
}

fn c3_matching() -> Outcome {
    let gt = GroundTruth::new(BBox::new(0.0, 0.0, 10.0, 20.0).unwrap());
    let m = match_detections(&[det(0.0, 0.0, 10.0, 20.0, 0.9), det(0.0, 0.0, 10.0, 20.0, 0.8)], &[gt], 0.5).map_err(|e| e.to_string())?;
    ensure(m.tp.len() == 1 && m.fp.len() == 1 && m.missed.is_empty(), format!("duplicates: {m:?}"))?;
    // (0,0,10,20) vs (0,0,10,10): IoU 100/200
    let half = det(0.0, 0.0, 10.0, 10.0, 0.9);
    ensure(iou(&half.bbox, &gt.bbox) == 0.5, "fixture IoU is not 0.5")?;
    let m = match_detections(&[half], &[gt], 0.5).map_err(|e| e.to_string())?;
    ensure(m.tp.is_empty() && m.fp == vec![0] && m.missed == vec![0], format!("IoU 0.5: {m:?}"))?;
    let ignored = GroundTruth { occluded: true, ..GroundTruth::new(BBox::new(40.0, 0.0, 50.0, 20.0).unwrap()) };
    let dets = [det(0.0, 0.0, 10.0, 20.0, 0.9), det(40.0, 0.0, 50.0, 20.0, 0.8), det(70.0, 0.0, 80.0, 20.0, 0.7)];
    let m = match_detections_with_ignored(&dets, &[gt], &[ignored], 0.5).map_err(|e| e.to_string())?;
    ensure(m.tp == vec![(0, 0)] && m.ignored == vec![1] && m.fp == vec![2], format!("ignored: {m:?}"))?;
    Ok("duplicate -> 1 TP + 1 FP; IoU 0.5 -> FP; ignored gt absorbs".into())
}

fn curve(points: &[(f64, f64)]) -> MrFppiCurve {
    MrFppiCurve {
        points: points.iter().enumerate().map(|(i, &(fppi, miss_rate))| CurvePoint { threshold: 1.0 - i as f64 * 0.1, fppi, miss_rate }).collect(),
        n_images: 1,
        n_gts: 1,
    }
}

fn c4_metrics() -> Outcome {
    let lamr = |c: &MrFppiCurve| log_avg_miss_rate(c, LAMR_RANGE, LAMR_POINTS);
    let constant = lamr(&curve(&[(0.01, 0.5), (0.5, 0.5), (5.0, 0.5)]));
    ensure(constant == 0.5, format!("constant 0.5 curve gave {constant}"))?;
    let gt = GroundTruth::new(BBox::new(0.0, 0.0, 10.0, 20.0).unwrap());
    let empty = mr_fppi_curve(&[EvalImage { dets: Vec::<Detection<f64>>::new(), kept: vec![gt], ignored: vec![] }], 0.5).map_err(|e| e.to_string())?;
    ensure(lamr(&empty) == 1.0, format!("no detections gave {}", lamr(&empty)))?;
    // samples 10^(-1+k/8): k = 0..3 fall below fppi 0.3, k = 4..8 at or above
    let expect = (0.8f64.powi(4) * 0.4f64.powi(5)).powf(1.0 / 9.0);
    let got = lamr(&curve(&[(0.05, 0.8), (0.3, 0.4), (2.0, 0.1)]));
    ensure((got - expect).abs() < 1e-9, format!("3-point curve {got} vs {expect}"))?;
    Ok(format!("constant 0.5 -> {constant}, empty -> 1, 3-point -> {got:.9}"))
}

fn c5_complementarity() -> Outcome {
    let t = ComplementarityTable { gt_count: 2757, tp_both: 924, tp_a_only: 390, tp_b_only: 397, fp_both: 345, fp_a_only: 1169, fp_b_only: 1158, n_images: 2252 };
    let b = oracle_bound(&t).map_err(|e| e.to_string())?;
    ensure((b.union_detection_rate - 0.621).abs() <= 0.001, format!("union rate {}", b.union_detection_rate))?;
    ensure((b.rate_b - 0.479).abs() <= 0.001, format!("thermal rate {}", b.rate_b))?;
    ensure(b.shared_fp_count == 345 && b.fp_after.count == 345, "shared FP count")?;
    Ok(format!("union {:.2}%, thermal {:.2}%, shared FP {}", 100.0 * b.union_detection_rate, 100.0 * b.rate_b, b.shared_fp_count))
}

struct Desk {
    test: Vec<Sample<f32>>,
    min_height: f64,
    models: Vec<(FusionStage, DetectorModel<f32>)>,
}

const DESK_LOW_THRESH: f64 = 0.01;

fn desk_models() -> Result<Desk, String> {
    let p = SynthParams { n_images: 600, ..SynthParams::default() };
    let samples: Vec<_> = synth_images::<f32>(&p).map_err(|e| e.to_string())?.iter().map(SynthImage::to_sample).collect();
    let (train_set, test) = samples.split_at(p.n_train());
    let sched = TrainSchedule { lr_phase1: 0.01, lr_phase2: 0.001, ..TrainSchedule::default() };
    let mut models = Vec::new();
    for stage in [FusionStage::NoneColor, FusionStage::NoneThermal, FusionStage::Halfway, FusionStage::Early, FusionStage::Late] {
        let start = Instant::now();
        let m = build_detector::<f32>(&DetectorConfig::default(), stage).map_err(|e| e.to_string())?;
        let out = train(m, train_set, &sched).map_err(|e| format!("{stage}: {e}"))?;
        println!("  trained {stage} in {:.1}s, final epoch loss {:.4}", start.elapsed().as_secs_f64(), out.log.last().map_or(f64::NAN, |l| l.loss));
        models.push((stage, out.model));
    }
    Ok(Desk { test: test.to_vec(), min_height: p.min_height, models })
}

impl Desk {
    fn model(&self, stage: FusionStage) -> &DetectorModel<f32> {
        &self.models.iter().find(|(s, _)| *s == stage).unwrap().1
    }

    fn lamr(&self, run: impl Fn(&Frame<'_, f32>) -> msfusion::Result<Vec<Detection<f32>>>) -> Result<f64, String> {
        let mut evals = Vec::new();
        for s in &self.test {
            let frame = Frame::new(&s.pair.color, &s.pair.thermal).map_err(|e| e.to_string())?;
            evals.push(EvalImage::reasonable(run(&frame).map_err(|e| e.to_string())?, &s.gts, self.min_height));
        }
        let c = mr_fppi_curve(&evals, 0.5).map_err(|e| e.to_string())?;
        Ok(log_avg_miss_rate(&c, LAMR_RANGE, LAMR_POINTS))
    }
}

fn c6_fusion(desk: &Result<Desk, String>) -> Outcome {
    let desk = desk.as_ref().map_err(Clone::clone)?;
    let mut mr = Vec::new();
    for (stage, m) in &desk.models {
        mr.push((*stage, desk.lamr(|f| detect(m, f, DESK_LOW_THRESH, 0.3, 300))?));
    }
    let (mc, mt) = (desk.model(FusionStage::NoneColor), desk.model(FusionStage::NoneThermal));
    mr.push((FusionStage::Score, desk.lamr(|f| score_fuse(mc, mt, f, ScoreFusionWeights::default(), DESK_LOW_THRESH, 0.3, 300))?));
    let get = |s: FusionStage| mr.iter().find(|(x, _)| *x == s).unwrap().1;
    let (color, thermal, halfway) = (get(FusionStage::NoneColor), get(FusionStage::NoneThermal), get(FusionStage::Halfway));
    let report = mr.iter().map(|(s, v)| format!("{s} {v:.4}")).collect::<Vec<_>>().join(", ");
    println!("  MR (reported): {report}");
    for s in [FusionStage::Early, FusionStage::Late, FusionStage::Score] {
        let rel = if get(s) < halfway { "below" } else { "not below" };
        println!("  {s} is {rel} halfway (not asserted)");
    }
    ensure(halfway < color && halfway < thermal, format!("halfway not best: {report}"))?;
    ensure(color <= 0.7 && thermal <= 0.7, format!("single-modality margin: {report}"))?;
    Ok(format!("halfway {halfway:.4} < color {color:.4}, thermal {thermal:.4}"))
}

fn c7_proposals(desk: &Result<Desk, String>) -> Outcome {
    let desk = desk.as_ref().map_err(Clone::clone)?;
    let kept: Vec<Vec<GroundTruth<f32>>> = desk.test.iter().map(|s| filter_reasonable(&s.gts, desk.min_height).0).collect();
    let mut at30 = Vec::new();
    for stage in [FusionStage::NoneColor, FusionStage::NoneThermal, FusionStage::Halfway] {
        let m = desk.model(stage);
        let props: Vec<Vec<Proposal<f32>>> = desk
            .test
            .iter()
            .map(|s| rpn_forward(m, &Frame::new(&s.pair.color, &s.pair.thermal)?, 300))
            .collect::<msfusion::Result<_>>()
            .map_err(|e| e.to_string())?;
        let recall = |k, t| proposal_recall(&props, &kept, k, t).map_err(|e| e.to_string());
        let by_k = RECALL_KS.iter().map(|&k| recall(k, 0.5)).collect::<Result<Vec<_>, _>>()?;
        ensure(by_k.windows(2).all(|w| w[0] <= w[1]), format!("{stage}: recall decreases in k {by_k:?}"))?;
        let by_iou = recall_ious().iter().map(|&t| recall(30, t)).collect::<Result<Vec<_>, _>>()?;
        ensure(by_iou.windows(2).all(|w| w[0] >= w[1]), format!("{stage}: recall increases in IoU {by_iou:?}"))?;
        at30.push(recall(30, 0.5)?);
    }
    let (c, t, h) = (at30[0], at30[1], at30[2]);
    ensure(h >= c && h >= t, format!("recall@30 halfway {h:.4}, color {c:.4}, thermal {t:.4}"))?;
    Ok(format!("recall@30 halfway {h:.4} >= color {c:.4}, thermal {t:.4}; monotone in k and IoU"))
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_msfusion")).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), format!("`msfusion {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
}

fn workflow(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let data = p("data");
    cli(&["synth", "--out", &data, "--images", "36", "--seed", "9"])?;
    for (fusion, model) in [("none-color", "c.model"), ("none-thermal", "t.model"), ("halfway", "h.model")] {
        cli(&["train", "--data", &data, "--out", &p(model), "--fusion", fusion, "--epochs1", "1", "--lr1", "0.01", "--epochs2", "1", "--lr2", "0.001", "--seed", "4"])?;
    }
    for (model, dets) in [("c.model", "c.csv"), ("t.model", "t.csv"), ("h.model", "h.csv")] {
        cli(&["detect", "--data", &data, "--model", &p(model), "--out", &p(dets), "--score-thresh", "0.01"])?;
    }
    cli(&["score-fuse", "--data", &data, "--model", &p("c.model"), "--model", &p("t.model"), "--out", &p("s.csv"), "--score-thresh", "0.01"])?;
    for dets in ["c", "t", "h", "s"] {
        cli(&["eval", "--data", &data, "--detections", &p(&format!("{dets}.csv")), "--curve", &p(&format!("{dets}.curve.csv"))])?;
    }
    cli(&["compare", "--data", &data, "--detections", &p("c.csv"), "--detections", &p("t.csv"), "--score-thresh", "0.1", "--out", &p("cmp.csv")])?;
    cli(&["proposals", "--data", &data, "--model", &p("h.model"), "--recall-vs-k", &p("rk.csv"), "--recall-vs-iou", &p("ri.csv")])?;
    let mut files = Vec::new();
    for name in ["c.csv", "t.csv", "h.csv", "s.csv", "c.curve.csv", "t.curve.csv", "h.curve.csv", "s.curve.csv", "cmp.csv", "rk.csv", "ri.csv", "c.model", "h.model"] {
        files.push((name.to_string(), std::fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"))?));
    }
    let mut synth: Vec<_> = std::fs::read_dir(dir.join("data/images")).map_err(|e| e.to_string())?.map(|e| e.unwrap().path()).collect();
    synth.sort();
    synth.extend(["train.txt", "test.txt", "manifest.txt"].map(|f| dir.join("data").join(f)));
    for f in synth {
        files.push((f.strip_prefix(dir).unwrap().to_string_lossy().into_owned(), std::fs::read(&f).map_err(|e| e.to_string())?));
    }
    Ok(files)
}

fn c8_determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    let (fa, fb) = (workflow(a.path())?, workflow(b.path())?);
    ensure(fa.len() == fb.len(), "different file sets")?;
    for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
        ensure(na == nb && ba == bb, format!("{na} differs between runs"))?;
    }
    Ok(format!("{} files byte-identical across two runs", fa.len()))
}

fn c9_serialization(desk: &Result<Desk, String>) -> Outcome {
    let desk = desk.as_ref().map_err(Clone::clone)?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut n = 0;
    for (stage, m) in &desk.models {
        let path = dir.path().join(format!("{stage}.model"));
        save_model(&path, m).map_err(|e| e.to_string())?;
        let back: DetectorModel<f32> = load_model(&path).map_err(|e| e.to_string())?;
        for s in desk.test.iter().take(20) {
            let f = Frame::new(&s.pair.color, &s.pair.thermal).map_err(|e| e.to_string())?;
            let (d0, d1) = (detect(m, &f, 0.0, 0.3, 300).map_err(|e| e.to_string())?, detect(&back, &f, 0.0, 0.3, 300).map_err(|e| e.to_string())?);
            let bits = |d: &[Detection<f32>]| d.iter().map(|d| [d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2, d.score].map(f32::to_bits)).collect::<Vec<_>>();
            ensure(bits(&d0) == bits(&d1), format!("{stage}: detections differ after reload"))?;
            n += d0.len();
        }
    }
    Ok(format!("{} models, {n} detections bit-identical after reload", desk.models.len()))
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()))
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, r: Outcome| {
        match r {
            Ok(detail) => println!("criterion {n} PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} FAIL {name}: {detail}");
            }
        }
    };
    report(1, "gradient correctness", guarded(c1_gradients));
    report(2, "nms oracle", guarded(c2_nms));
    report(3, "matching protocol", guarded(c3_matching));
    report(4, "metric fixtures", guarded(c4_metrics));
    report(5, "complementarity arithmetic", guarded(c5_complementarity));
    let start = Instant::now();
    let desk = std::panic::catch_unwind(desk_models).unwrap_or_else(|_| Err("training panicked".into()));
    println!("  desk-scale training took {:.1}s", start.elapsed().as_secs_f64());
    report(6, "desk-scale fusion synergy", guarded(|| c6_fusion(&desk)));
    report(7, "desk-scale proposal synergy", guarded(|| c7_proposals(&desk)));
    report(8, "cli determinism", guarded(c8_determinism));
    report(9, "serialization", guarded(|| c9_serialization(&desk)));
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 9 acceptance criteria passed");
}
