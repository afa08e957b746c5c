//! The worked examples under docs/examples stay valid and mutually consistent.

use std::path::PathBuf;

use msfusion::eval::{log_avg_miss_rate, mr_fppi_curve, EvalImage, LAMR_POINTS, LAMR_RANGE};
use msfusion::io::annotations::{format_annotations, parse_annotations};
use msfusion::io::detections::{format_detections, parse_detections};
use msfusion::io::{format_mr_curve, load_annotations, load_detections, Condition};

fn example(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/examples").join(name)
}

#[test]
fn example_annotations_round_trip() {
    let ann = load_annotations::<f64>(&example("annotations.txt")).unwrap();
    assert_eq!(ann.min_height, 20.0);
    assert_eq!(ann.records.len(), 3);
    assert_eq!(ann.records[1].condition, Condition::Night);
    let text = format_annotations(&ann).unwrap();
    assert_eq!(parse_annotations::<f64>(&text, "again").unwrap(), ann);
}

#[test]
fn example_detections_round_trip_textually() {
    let text = std::fs::read_to_string(example("detections.csv")).unwrap();
    let set = parse_detections::<f64>(&text, "example").unwrap();
    assert_eq!(set.len(), 4);
    assert_eq!(format_detections(&set).unwrap(), text);
}

#[test]
fn example_curve_matches_evaluation() {
    let ann = load_annotations::<f64>(&example("annotations.txt")).unwrap();
    let dets = load_detections::<f64>(&example("detections.csv")).unwrap();
    let images: Vec<_> = ann.records.iter().map(|r| EvalImage::reasonable(dets.get(&r.image_id).to_vec(), &r.gts(), ann.min_height)).collect();
    let curve = mr_fppi_curve(&images, 0.5).unwrap();
    let text = format_mr_curve(&curve, log_avg_miss_rate(&curve, LAMR_RANGE, LAMR_POINTS));
    assert_eq!(text, std::fs::read_to_string(example("curve.csv")).unwrap());
}
