//! Versioned line-based annotation files, one per split.
//!
//! ```text
//! msfusion-annotations 1
//! min_height 20
//! image img00000 color=images/img00000_color.ppm thermal=images/img00000_thermal.pgm condition=night
//! object 1.5 2 10.25 40 occluded=0 truncated=0 visible=both
//! ```
//!
//! Blank lines and lines starting with `#` are skipped. `object` lines
//! belong to the closest preceding `image` line; `visible` is optional.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::arch::BBox;
use crate::eval::{GroundTruth, REASONABLE_MIN_HEIGHT};
use crate::io::write_atomic;
use crate::{Error, Result, Scalar};

pub const ANNOTATION_MAGIC: &str = "msfusion-annotations";
pub const ANNOTATION_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Condition {
    Day,
    Night,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Day => "day",
            Condition::Night => "night",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "day" => Ok(Condition::Day),
            "night" => Ok(Condition::Night),
            _ => Err(format!("expected `day` or `night`, found `{s}`")),
        }
    }
}

/// In which modalities a pedestrian was rendered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Visibility {
    Both,
    ColorOnly,
    ThermalOnly,
}

impl Visibility {
    pub fn name(self) -> &'static str {
        match self {
            Visibility::Both => "both",
            Visibility::ColorOnly => "color",
            Visibility::ThermalOnly => "thermal",
        }
    }

    pub fn in_color(self) -> bool {
        self != Visibility::ThermalOnly
    }

    pub fn in_thermal(self) -> bool {
        self != Visibility::ColorOnly
    }
}

impl FromStr for Visibility {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        [Visibility::Both, Visibility::ColorOnly, Visibility::ThermalOnly]
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("expected `both`, `color` or `thermal`, found `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnotatedObject<T> {
    pub gt: GroundTruth<T>,
    pub visibility: Option<Visibility>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord<T> {
    pub image_id: String,
    /// Relative to the annotation file's directory.
    pub color_path: String,
    pub thermal_path: String,
    pub condition: Condition,
    pub objects: Vec<AnnotatedObject<T>>,
}

impl<T: Scalar> AnnotationRecord<T> {
    pub fn gts(&self) -> Vec<GroundTruth<T>> {
        self.objects.iter().map(|o| o.gt).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationFile<T> {
    /// Height threshold of the reasonable setting for this dataset.
    pub min_height: f64,
    pub records: Vec<AnnotationRecord<T>>,
}

impl<T> Default for AnnotationFile<T> {
    fn default() -> Self {
        AnnotationFile { min_height: REASONABLE_MIN_HEIGHT, records: Vec::new() }
    }
}

fn check_token(s: &str, what: &str) -> Result<()> {
    if s.is_empty() || s.chars().any(|c| c.is_whitespace() || c == '=') {
        return Err(Error::contract(format!("{what} `{s}` must be non-empty without whitespace or `=`")));
    }
    Ok(())
}

pub fn format_annotations<T: Scalar>(file: &AnnotationFile<T>) -> Result<String> {
    let mut out = format!("{ANNOTATION_MAGIC} {ANNOTATION_VERSION}\nmin_height {}\n", file.min_height);
    for r in &file.records {
        check_token(&r.image_id, "image id")?;
        check_token(&r.color_path, "color path")?;
        check_token(&r.thermal_path, "thermal path")?;
        let _ = writeln!(out, "image {} color={} thermal={} condition={}", r.image_id, r.color_path, r.thermal_path, r.condition);
        for o in &r.objects {
            let b = o.gt.bbox;
            let _ = write!(out, "object {} {} {} {} occluded={} truncated={}", b.x1, b.y1, b.x2, b.y2, o.gt.occluded as u8, o.gt.truncated as u8);
            if let Some(v) = o.visibility {
                let _ = write!(out, " visible={}", v.name());
            }
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn save_annotations<T: Scalar>(path: &Path, file: &AnnotationFile<T>) -> Result<()> {
    write_atomic(path, format_annotations(file)?.as_bytes())
}

struct LineCtx<'a> {
    path: &'a str,
    line: usize,
}

impl LineCtx<'_> {
    fn err(&self, field: &str, message: impl Into<String>) -> Error {
        Error::Parse { path: self.path.to_string(), line: self.line, field: field.to_string(), message: message.into() }
    }

    fn parse<V: FromStr>(&self, field: &str, s: &str) -> Result<V>
    where
        V::Err: fmt::Display,
    {
        s.parse().map_err(|e| self.err(field, format!("`{s}`: {e}")))
    }

    fn keyed<'s>(&self, tok: Option<&'s str>, key: &str) -> Result<&'s str> {
        let tok = tok.ok_or_else(|| self.err(key, "missing"))?;
        tok.strip_prefix(key).and_then(|r| r.strip_prefix('=')).ok_or_else(|| self.err(key, format!("expected `{key}=...`, found `{tok}`")))
    }

    fn flag(&self, tok: Option<&str>, key: &str) -> Result<bool> {
        match self.keyed(tok, key)? {
            "0" => Ok(false),
            "1" => Ok(true),
            v => Err(self.err(key, format!("expected 0 or 1, found `{v}`"))),
        }
    }
}

pub fn parse_annotations<T: Scalar>(text: &str, path: &str) -> Result<AnnotationFile<T>> {
    let mut file = AnnotationFile::default();
    let mut seen_header = false;
    for (i, raw) in text.lines().enumerate() {
        let ctx = LineCtx { path, line: i + 1 };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let kind = toks.next().unwrap();
        if !seen_header {
            if kind != ANNOTATION_MAGIC {
                return Err(ctx.err("header", format!("expected `{ANNOTATION_MAGIC} <version>`")));
            }
            let found = toks.next().unwrap_or("");
            if found != ANNOTATION_VERSION.to_string() {
                return Err(Error::Version { path: path.to_string(), found: found.to_string(), expected: ANNOTATION_VERSION.to_string() });
            }
            seen_header = true;
            continue;
        }
        match kind {
            "min_height" => {
                let v: f64 = ctx.parse("min_height", toks.next().unwrap_or(""))?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(ctx.err("min_height", "must be a non-negative number"));
                }
                file.min_height = v;
            }
            "image" => {
                let image_id = toks.next().ok_or_else(|| ctx.err("image_id", "missing"))?.to_string();
                let color_path = ctx.keyed(toks.next(), "color")?.to_string();
                let thermal_path = ctx.keyed(toks.next(), "thermal")?.to_string();
                let condition = ctx.parse("condition", ctx.keyed(toks.next(), "condition")?)?;
                file.records.push(AnnotationRecord { image_id, color_path, thermal_path, condition, objects: Vec::new() });
            }
            "object" => {
                let mut c = [T::zero(); 4];
                for (v, field) in c.iter_mut().zip(["x1", "y1", "x2", "y2"]) {
                    let tok = toks.next().ok_or_else(|| ctx.err(field, "missing"))?;
                    *v = tok.parse().map_err(|_| ctx.err(field, format!("`{tok}` is not a number")))?;
                }
                let bbox = BBox::new(c[0], c[1], c[2], c[3]).map_err(|e| ctx.err("box", e.to_string()))?;
                let occluded = ctx.flag(toks.next(), "occluded")?;
                let truncated = ctx.flag(toks.next(), "truncated")?;
                let visibility = match toks.next() {
                    Some(t) => Some(ctx.parse("visible", ctx.keyed(Some(t), "visible")?)?),
                    None => None,
                };
                let rec = file.records.last_mut().ok_or_else(|| ctx.err("object", "object before any image line"))?;
                rec.objects.push(AnnotatedObject { gt: GroundTruth { bbox, occluded, truncated }, visibility });
            }
            other => return Err(ctx.err("record", format!("unknown record kind `{other}`"))),
        }
        if let Some(extra) = toks.next() {
            return Err(ctx.err("record", format!("unexpected trailing token `{extra}`")));
        }
    }
    if !seen_header {
        return Err(Error::Parse { path: path.to_string(), line: 1, field: "header".into(), message: "empty file".into() });
    }
    Ok(file)
}

pub fn load_annotations<T: Scalar>(path: &Path) -> Result<AnnotationFile<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, &path.display().to_string())
}
