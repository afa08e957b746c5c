//! Detection lists as CSV:
//!
//! ```text
//! # msfusion-detections 1 source=halfway
//! image_id,x1,y1,x2,y2,score
//! img00003,12.5,8,30.25,44,0.93125
//! ```
//!
//! Numbers use the shortest representation that parses back to the same value.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::arch::{BBox, FusionStage};
use crate::io::write_atomic;
use crate::pipeline::Detection;
use crate::{Error, Result, Scalar};

pub const DETECTIONS_MAGIC: &str = "msfusion-detections";
pub const DETECTIONS_VERSION: u32 = 1;
const HEADER: &str = "image_id,x1,y1,x2,y2,score";

/// Detections per image id, in file order within each image.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet<T> {
    pub source: FusionStage,
    pub images: BTreeMap<String, Vec<Detection<T>>>,
}

impl<T: Scalar> DetectionSet<T> {
    pub fn new(source: FusionStage) -> Self {
        DetectionSet { source, images: BTreeMap::new() }
    }

    /// Detections of `image_id`, empty when the file listed none.
    pub fn get(&self, image_id: &str) -> &[Detection<T>] {
        self.images.get(image_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.images.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn format_detections<T: Scalar>(set: &DetectionSet<T>) -> Result<String> {
    let mut out = format!("# {DETECTIONS_MAGIC} {DETECTIONS_VERSION} source={}\n{HEADER}\n", set.source);
    for (id, dets) in &set.images {
        if id.is_empty() || id.contains([',', '\n', '\r']) {
            return Err(Error::contract(format!("image id `{id}` cannot be written to CSV")));
        }
        for d in dets {
            let b = d.bbox;
            let _ = writeln!(out, "{id},{},{},{},{},{}", b.x1, b.y1, b.x2, b.y2, d.score);
        }
    }
    Ok(out)
}

pub fn save_detections<T: Scalar>(path: &Path, set: &DetectionSet<T>) -> Result<()> {
    write_atomic(path, format_detections(set)?.as_bytes())
}

pub fn parse_detections<T: Scalar>(text: &str, path: &str) -> Result<DetectionSet<T>> {
    let err = |line: usize, field: &str, message: String| Error::Parse { path: path.to_string(), line, field: field.to_string(), message };
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| err(1, "header", "empty file".into()))?;
    let mut meta = first.strip_prefix('#').map(str::split_whitespace).ok_or_else(|| err(1, "header", format!("expected `# {DETECTIONS_MAGIC} ...`")))?;
    if meta.next() != Some(DETECTIONS_MAGIC) {
        return Err(err(1, "header", format!("expected `# {DETECTIONS_MAGIC} ...`")));
    }
    let version = meta.next().unwrap_or("");
    if version != DETECTIONS_VERSION.to_string() {
        return Err(Error::Version { path: path.to_string(), found: version.to_string(), expected: DETECTIONS_VERSION.to_string() });
    }
    let source = meta
        .next()
        .and_then(|t| t.strip_prefix("source="))
        .ok_or_else(|| err(1, "source", "missing `source=`".into()))?
        .parse::<FusionStage>()
        .map_err(|e| err(1, "source", e.to_string()))?;
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        _ => return Err(err(2, "header", format!("expected column header `{HEADER}`"))),
    }
    let mut set = DetectionSet::new(source);
    for (i, raw) in lines {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = raw.split(',').collect();
        if cells.len() != 6 {
            return Err(err(line, "record", format!("expected 6 fields, found {}", cells.len())));
        }
        let mut v = [T::zero(); 5];
        for (k, field) in ["x1", "y1", "x2", "y2", "score"].iter().enumerate() {
            v[k] = cells[k + 1].trim().parse().map_err(|_| err(line, field, format!("`{}` is not a number", cells[k + 1])))?;
        }
        let bbox = BBox::new(v[0], v[1], v[2], v[3]).map_err(|e| err(line, "box", e.to_string()))?;
        if !(v[4].as_f64() >= 0.0 && v[4].as_f64() <= 1.0) {
            return Err(err(line, "score", format!("score {} outside [0, 1]", v[4])));
        }
        set.images.entry(cells[0].to_string()).or_default().push(Detection { bbox, score: v[4], source });
    }
    Ok(set)
}

pub fn load_detections<T: Scalar>(path: &Path) -> Result<DetectionSet<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&text, &path.display().to_string())
}
