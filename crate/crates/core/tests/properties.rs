use msfusion::arch::{decode_bbox, encode_bbox, iou, BBox, FusionStage, Proposal};
use msfusion::complementarity::{oracle_bound, ComplementarityTable};
use msfusion::eval::{log_avg_miss_rate, match_detections, proposal_recall, CurvePoint, GroundTruth, MrFppiCurve, LAMR_POINTS, LAMR_RANGE};
use msfusion::nn::{ops, Tensor};
use msfusion::pipeline::{nms, Detection};
use proptest::prelude::*;

fn bbox() -> impl Strategy<Value = BBox<f64>> {
    (0.0..60.0f64, 0.0..60.0f64, 1.0..30.0f64, 1.0..30.0f64).prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
}

fn tensor(c: usize) -> impl Strategy<Value = Tensor<f64>> {
    (1..3usize, 1..5usize, 1..5usize).prop_flat_map(move |(n, h, w)| {
        prop::collection::vec(-5.0..5.0f64, n * c * h * w).prop_map(move |v| Tensor::from_vec([n, c, h, w], v).unwrap())
    })
}

fn scored(max: usize) -> impl Strategy<Value = Vec<Detection<f64>>> {
    prop::collection::vec((bbox(), 0.0..1.0f64), 0..max).prop_map(|v| {
        let mut d: Vec<_> = v.into_iter().map(|(b, s)| Detection { bbox: b, score: s, source: FusionStage::NoneColor }).collect();
        d.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
        d
    })
}

proptest! {
    #[test]
    fn concat_then_slice_round_trips(a in tensor(2), extra in 1..3usize) {
        let b = a.map(|v| v * 2.0);
        let b = Tensor::from_fn([a.n(), extra, a.h(), a.w()], |n, c, y, x| b.at(n, c % 2, y, x));
        let j = ops::concat_channels(&a, &b).unwrap();
        prop_assert_eq!(j.c(), a.c() + extra);
        prop_assert_eq!(j.channel_slice(0, a.c()), a.clone());
        prop_assert_eq!(j.channel_slice(a.c(), extra), b);
    }

    #[test]
    fn softmax_rows_are_distributions(x in tensor(3)) {
        let x = x.flatten();
        let y = ops::softmax(&x);
        for n in 0..y.n() {
            let row: Vec<f64> = (0..y.c()).map(|c| y.at(n, c, 0, 0)).collect();
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn identity_nin_is_identity(x in tensor(3)) {
        let w = Tensor::from_fn([3, 3, 1, 1], |o, i, _, _| if o == i { 1.0 } else { 0.0 });
        let y = ops::conv2d(&x, &w, &[0.0; 3], 1, 0).unwrap();
        prop_assert_eq!(y, x);
    }

    #[test]
    fn bbox_encoding_round_trips(a in bbox(), t in bbox()) {
        let back = decode_bbox(&a, &encode_bbox(&a, &t).unwrap());
        for (u, v) in [(back.x1, t.x1), (back.y1, t.y1), (back.x2, t.x2), (back.y2, t.y2)] {
            prop_assert!((u - v).abs() < 1e-4);
        }
    }

    #[test]
    fn nms_output_is_sorted_separated_subset(dets in scored(25), t in 0.1..0.9f64) {
        let kept = nms(&dets, t);
        prop_assert!(kept.len() <= dets.len());
        prop_assert!(kept.iter().all(|k| dets.contains(k)));
        prop_assert!(kept.windows(2).all(|w| w[0].score >= w[1].score));
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                prop_assert!(iou(&a.bbox, &b.bbox) <= t);
            }
        }
        if !dets.is_empty() {
            prop_assert_eq!(kept[0], dets[0]);
        }
    }

    #[test]
    fn matching_accounts_for_every_gt_and_detection(dets in scored(12), gts in prop::collection::vec(bbox(), 0..6), t in 0.3..0.8f64) {
        let gts: Vec<_> = gts.into_iter().map(GroundTruth::new).collect();
        let m = match_detections(&dets, &gts, t).unwrap();
        prop_assert_eq!(m.tp.len() + m.missed.len(), gts.len());
        prop_assert_eq!(m.tp.len() + m.fp.len(), dets.len());
        for &(d, g) in &m.tp {
            prop_assert!(iou(&dets[d].bbox, &gts[g].bbox) > t);
        }
        let mut gs: Vec<_> = m.tp.iter().map(|p| p.1).collect();
        gs.dedup();
        prop_assert_eq!(gs.len(), m.tp.len());
    }

    #[test]
    fn lamr_respects_domination(
        pts in prop::collection::vec((0.0..3.0f64, 0.0..1.0f64), 1..12),
        bumps in prop::collection::vec(0.0..0.5f64, 12),
    ) {
        let mut pts = pts;
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let better = MrFppiCurve {
            points: pts.iter().enumerate().map(|(i, &(f, m))| CurvePoint { threshold: 1.0 - i as f64 / 100.0, fppi: f, miss_rate: m }).collect(),
            n_images: 1,
            n_gts: 1,
        };
        let mut worse = better.clone();
        for (p, b) in worse.points.iter_mut().zip(&bumps) {
            p.miss_rate = (p.miss_rate + b).min(1.0);
        }
        let (lb, lw) = (log_avg_miss_rate(&better, LAMR_RANGE, LAMR_POINTS), log_avg_miss_rate(&worse, LAMR_RANGE, LAMR_POINTS));
        prop_assert!(lb <= lw + 1e-12);
        prop_assert!((0.0..=1.0).contains(&lb));
    }

    #[test]
    fn recall_monotone_in_budget_and_overlap(
        props in prop::collection::vec(prop::collection::vec((bbox(), 0.0..1.0f64), 0..40), 1..4),
        gts in prop::collection::vec(prop::collection::vec(bbox(), 1..4), 4),
    ) {
        let proposals: Vec<Vec<Proposal<f64>>> = props.into_iter().map(|v| {
            let mut p: Vec<_> = v.into_iter().map(|(b, o)| Proposal { bbox: b, objectness: o }).collect();
            p.sort_by(|a, b| b.objectness.partial_cmp(&a.objectness).unwrap());
            p
        }).collect();
        let kept: Vec<Vec<GroundTruth<f64>>> = gts.into_iter().take(proposals.len()).map(|v| v.into_iter().map(GroundTruth::new).collect()).collect();
        let mut last = 0.0;
        for k in [1, 5, 10, 20, 30, 50] {
            let r = proposal_recall(&proposals, &kept, k, 0.5).unwrap();
            prop_assert!(r >= last);
            last = r;
        }
        let mut last = 1.0;
        for i in 0..10 {
            let r = proposal_recall(&proposals, &kept, 30, 0.5 + 0.05 * i as f64).unwrap();
            prop_assert!(r <= last);
            last = r;
        }
    }

    #[test]
    fn union_rate_monotone_in_each_tp_field(
        both in 0..300usize, a in 0..300usize, b in 0..300usize, extra in 0..300usize,
        fps in (0..500usize, 0..500usize, 0..500usize), field in 0..3usize,
    ) {
        let t = ComplementarityTable {
            gt_count: both + a + b + extra + 1, tp_both: both, tp_a_only: a, tp_b_only: b,
            fp_both: fps.0, fp_a_only: fps.1, fp_b_only: fps.2, n_images: 10,
        };
        let mut base = t;
        base.gt_count += 1;
        let mut up = base;
        match field { 0 => up.tp_both += 1, 1 => up.tp_a_only += 1, _ => up.tp_b_only += 1 }
        let (r0, r1) = (oracle_bound(&base).unwrap(), oracle_bound(&up).unwrap());
        prop_assert!(r1.union_detection_rate >= r0.union_detection_rate);
        prop_assert!(r0.union_detection_rate >= r0.rate_a.max(r0.rate_b));
        prop_assert!(r0.union_detection_rate <= 1.0);
        prop_assert_eq!(r0.fp_after.count, t.fp_both);
        prop_assert!(r0.fp_after.count <= r0.fp_before_a.count.min(r0.fp_before_b.count));
    }
}
