//! Single-file model format: a text manifest terminated by `end`, followed
//! by every parameter tensor as little-endian scalars in manifest order.
//!
//! ```text
//! msfusion-model 1
//! dtype f32
//! stage halfway
//! widths 8 16 32 32 32
//! ...
//! param c5.weight 32 32 3 3
//! end
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::arch::{build_detector, DetectorConfig, DetectorModel, FusionStage};
use crate::io::write_atomic;
use crate::nn::Tensor;
use crate::{Error, Result, Scalar};

pub const MODEL_MAGIC: &str = "msfusion-model";
pub const MODEL_VERSION: u32 = 1;

fn join<V: std::fmt::Display>(v: &[V]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

fn opt<V: std::fmt::Display>(v: Option<V>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

pub fn encode_model<T: Scalar>(model: &DetectorModel<T>) -> Vec<u8> {
    let c = &model.config;
    let mut m = format!("{MODEL_MAGIC} {MODEL_VERSION}\ndtype {}\nstage {}\n", T::DTYPE, model.stage);
    let _ = writeln!(m, "widths {}", join(&c.widths));
    let _ = writeln!(m, "image {} {}", c.image_h, c.image_w);
    let _ = writeln!(m, "anchor_scales {}", join(&c.anchor_scales));
    let _ = writeln!(m, "anchor_ratios {}", join(&c.anchor_ratios));
    let _ = writeln!(m, "fc_width {}", c.fc_width);
    let _ = writeln!(m, "fusion_width {}", opt(c.fusion_width));
    let _ = writeln!(m, "rpn_width {}", c.rpn_width);
    let _ = writeln!(m, "roi_out {}", c.roi_out);
    let _ = writeln!(m, "rpn_top_k {}", c.rpn_top_k);
    let _ = writeln!(m, "rpn_pre_nms {}", c.rpn_pre_nms);
    let _ = writeln!(m, "rpn_nms {}", c.rpn_nms);
    let _ = writeln!(m, "weight_std {}", opt(c.weight_std));
    let _ = writeln!(m, "seed {}", c.seed);
    for (_, name, t) in model.params.iter() {
        let _ = writeln!(m, "param {name} {}", join(&t.shape()));
    }
    m.push_str("end\n");
    let mut out = m.into_bytes();
    for (_, _, t) in model.params.iter() {
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    out
}

pub fn save_model<T: Scalar>(path: &Path, model: &DetectorModel<T>) -> Result<()> {
    write_atomic(path, &encode_model(model))
}

pub fn decode_model<T: Scalar>(bytes: &[u8], path: &str) -> Result<DetectorModel<T>> {
    let marker = b"\nend\n";
    let split = bytes.windows(marker.len()).position(|w| w == marker).ok_or_else(|| Error::Parse {
        path: path.to_string(),
        line: 1,
        field: "manifest".into(),
        message: "missing `end` line".into(),
    })?;
    let manifest = std::str::from_utf8(&bytes[..split + 1]).map_err(|e| Error::Parse {
        path: path.to_string(),
        line: 1,
        field: "manifest".into(),
        message: e.to_string(),
    })?;
    let mut blob = &bytes[split + marker.len()..];

    let mut config = DetectorConfig::default();
    let mut stage = None;
    let mut params: Vec<(String, [usize; 4], usize)> = Vec::new();
    for (i, line) in manifest.lines().enumerate() {
        let err = |field: &str, message: String| Error::Parse { path: path.to_string(), line: i + 1, field: field.to_string(), message };
        let mut toks = line.split_whitespace();
        let key = toks.next().unwrap_or("");
        let rest: Vec<&str> = toks.collect();
        let one = || -> Result<&str> { rest.first().copied().filter(|_| rest.len() == 1).ok_or_else(|| err(key, "expected one value".into())) };
        let num = |s: &str| s.parse::<usize>().map_err(|e| err(key, format!("`{s}`: {e}")));
        let real = |s: &str| s.parse::<f64>().map_err(|e| err(key, format!("`{s}`: {e}")));
        if i == 0 {
            if key != MODEL_MAGIC {
                return Err(err("header", format!("not a model file (expected `{MODEL_MAGIC}`)")));
            }
            let found = rest.first().copied().unwrap_or("");
            if found != MODEL_VERSION.to_string() {
                return Err(Error::Version { path: path.to_string(), found: found.to_string(), expected: MODEL_VERSION.to_string() });
            }
            continue;
        }
        match key {
            "dtype" => {
                if one()? != T::DTYPE {
                    return Err(err("dtype", format!("file stores {}, expected {}", one()?, T::DTYPE)));
                }
            }
            "stage" => stage = Some(one()?.parse::<FusionStage>().map_err(|e| err("stage", e.to_string()))?),
            "widths" => {
                if rest.len() != config.widths.len() {
                    return Err(err("widths", format!("expected {} widths", config.widths.len())));
                }
                for (w, s) in config.widths.iter_mut().zip(&rest) {
                    *w = num(s)?;
                }
            }
            "image" => {
                if rest.len() != 2 {
                    return Err(err("image", "expected height and width".into()));
                }
                config.image_h = num(rest[0])?;
                config.image_w = num(rest[1])?;
            }
            "anchor_scales" => config.anchor_scales = rest.iter().map(|s| real(s)).collect::<Result<_>>()?,
            "anchor_ratios" => config.anchor_ratios = rest.iter().map(|s| real(s)).collect::<Result<_>>()?,
            "fc_width" => config.fc_width = num(one()?)?,
            "fusion_width" => config.fusion_width = if one()? == "none" { None } else { Some(num(one()?)?) },
            "rpn_width" => config.rpn_width = num(one()?)?,
            "roi_out" => config.roi_out = num(one()?)?,
            "rpn_top_k" => config.rpn_top_k = num(one()?)?,
            "rpn_pre_nms" => config.rpn_pre_nms = num(one()?)?,
            "rpn_nms" => config.rpn_nms = real(one()?)?,
            "weight_std" => config.weight_std = if one()? == "none" { None } else { Some(real(one()?)?) },
            "seed" => config.seed = one()?.parse().map_err(|e| err("seed", format!("{e}")))?,
            "param" => {
                if rest.len() != 5 {
                    return Err(err("param", "expected a name and four dimensions".into()));
                }
                let shape = [num(rest[1])?, num(rest[2])?, num(rest[3])?, num(rest[4])?];
                params.push((rest[0].to_string(), shape, i + 1));
            }
            other => return Err(err("manifest", format!("unknown key `{other}`"))),
        }
    }
    let stage = stage.ok_or_else(|| Error::Parse { path: path.to_string(), line: 1, field: "stage".into(), message: "missing".into() })?;
    let mut model = build_detector::<T>(&config, stage)?;
    if params.len() != model.params.len() {
        return Err(Error::Data(format!("{path}: file has {} parameters, a {stage} model has {}", params.len(), model.params.len())));
    }
    for (name, shape, line) in params {
        let id = model.params.id(&name).ok_or_else(|| Error::Parse {
            path: path.to_string(),
            line,
            field: "param".into(),
            message: format!("`{name}` is not a parameter of a {stage} model"),
        })?;
        let expected = model.params.get(id).shape();
        if expected != shape {
            return Err(Error::Parse { path: path.to_string(), line, field: "param".into(), message: format!("`{name}` has shape {shape:?}, expected {expected:?}") });
        }
        let n: usize = shape.iter().product();
        if blob.len() < n * T::BYTES {
            return Err(Error::Data(format!("{path}: parameter data truncated at `{name}`")));
        }
        let data = blob[..n * T::BYTES].chunks_exact(T::BYTES).map(T::read_le).collect();
        blob = &blob[n * T::BYTES..];
        *model.params.get_mut(id) = Tensor::from_vec(shape, data)?;
    }
    if !blob.is_empty() {
        return Err(Error::Data(format!("{path}: {} trailing bytes after parameter data", blob.len())));
    }
    Ok(model)
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<DetectorModel<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes, &path.display().to_string())
}
