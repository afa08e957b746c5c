//! Plottable CSV output for miss-rate/FPPI and recall curves.

use std::fmt::Write as _;

use crate::eval::MrFppiCurve;

/// `fppi,miss_rate` rows in descending-threshold order, then a `MR=` summary line.
pub fn format_mr_curve(curve: &MrFppiCurve, lamr: f64) -> String {
    let mut out = String::from("fppi,miss_rate\n");
    for p in &curve.points {
        let _ = writeln!(out, "{},{}", p.fppi, p.miss_rate);
    }
    let _ = writeln!(out, "MR={lamr:.4}");
    out
}

/// Two-column CSV, e.g. `k,recall` or `iou,recall`.
pub fn format_xy<X: std::fmt::Display>(x_name: &str, y_name: &str, rows: &[(X, f64)]) -> String {
    let mut out = format!("{x_name},{y_name}\n");
    for (x, y) in rows {
        let _ = writeln!(out, "{x},{y}");
    }
    out
}
