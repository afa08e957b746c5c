//! Deterministic synthetic color/thermal pedestrian scenes.
//!
//! Pedestrians are upright head/torso/legs figures drawn into color, thermal
//! or both; distractors are wide or round shapes drawn into exactly one
//! modality. Night scenes darken the color image and flatten its contrast.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::arch::{iou, BBox, FEATURE_STRIDE};
use crate::eval::GroundTruth;
use crate::io::annotations::{save_annotations, AnnotatedObject, AnnotationFile, AnnotationRecord, Condition, Visibility};
use crate::io::pnm::{dequantize, quantize, write_pnm};
use crate::io::{write_atomic, ImagePair, Sample};
use crate::nn::Tensor;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    /// Total images; the last `test_fraction` of them form the test split.
    pub n_images: usize,
    pub test_fraction: f64,
    pub image_h: usize,
    pub image_w: usize,
    /// Inclusive range of pedestrians per image.
    pub peds_per_image: (usize, usize),
    /// Inclusive range of pedestrian heights in pixels.
    pub ped_height: (usize, usize),
    pub p_both: f64,
    pub p_color_only: f64,
    pub p_thermal_only: f64,
    /// Mean number of single-modality distractors per image.
    pub distractor_density: f64,
    /// Standard deviation of the additive pixel noise.
    pub noise: f64,
    pub night_fraction: f64,
    pub occlusion_prob: f64,
    pub truncation_prob: f64,
    /// Reasonable-setting height threshold written to the annotation files.
    pub min_height: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_images: 600,
            test_fraction: 1.0 / 6.0,
            image_h: 64,
            image_w: 80,
            peds_per_image: (1, 3),
            ped_height: (18, 44),
            p_both: 0.5,
            p_color_only: 0.25,
            p_thermal_only: 0.25,
            distractor_density: 1.5,
            noise: 0.03,
            night_fraction: 0.5,
            occlusion_prob: 0.1,
            truncation_prob: 0.1,
            min_height: 20.0,
            seed: 0,
        }
    }
}

fn prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config(format!("{name} must lie in [0, 1], got {p}")));
    }
    Ok(())
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        for (n, p) in [
            ("p_both", self.p_both),
            ("p_color_only", self.p_color_only),
            ("p_thermal_only", self.p_thermal_only),
            ("test_fraction", self.test_fraction),
            ("night_fraction", self.night_fraction),
            ("occlusion_prob", self.occlusion_prob),
            ("truncation_prob", self.truncation_prob),
        ] {
            prob(n, p)?;
        }
        let sum = self.p_both + self.p_color_only + self.p_thermal_only;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("visibility mix must sum to 1, got {sum}")));
        }
        if self.image_h == 0 || self.image_w == 0 || !self.image_h.is_multiple_of(FEATURE_STRIDE) || !self.image_w.is_multiple_of(FEATURE_STRIDE) {
            return Err(Error::config(format!(
                "image size {}x{} (h x w) must be a positive multiple of {FEATURE_STRIDE}",
                self.image_h, self.image_w
            )));
        }
        let (lo, hi) = self.ped_height;
        if lo < 8 || lo > hi || hi > self.image_h {
            return Err(Error::config(format!("pedestrian heights {lo}..={hi} must satisfy 8 <= lo <= hi <= image height")));
        }
        if self.peds_per_image.0 > self.peds_per_image.1 {
            return Err(Error::config("pedestrian count range is inverted"));
        }
        if !(self.distractor_density >= 0.0 && self.distractor_density.is_finite()) || !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::config("distractor density and noise must be non-negative"));
        }
        if !(self.min_height >= 0.0) {
            return Err(Error::config("min_height must be non-negative"));
        }
        Ok(())
    }

    pub fn n_test(&self) -> usize {
        (self.n_images as f64 * self.test_fraction).round() as usize
    }

    pub fn n_train(&self) -> usize {
        self.n_images - self.n_test()
    }
}

/// One generated image pair with its annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthImage<T> {
    pub pair: ImagePair<T>,
    pub objects: Vec<AnnotatedObject<T>>,
}

impl<T: Scalar> SynthImage<T> {
    pub fn to_sample(&self) -> Sample<T> {
        Sample { pair: self.pair.clone(), gts: self.objects.iter().map(|o| o.gt).collect() }
    }
}

struct Canvas {
    h: usize,
    w: usize,
    color: Vec<[f64; 3]>,
    thermal: Vec<f64>,
}

impl Canvas {
    /// Fills pixels `[x0, x1) x [y0, y1)` clipped to the canvas.
    fn rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, color: Option<[f64; 3]>, thermal: Option<f64>) {
        let (xa, xb) = (x0.max(0) as usize, (x1.max(0) as usize).min(self.w));
        let (ya, yb) = (y0.max(0) as usize, (y1.max(0) as usize).min(self.h));
        for y in ya..yb {
            for x in xa..xb {
                let i = y * self.w + x;
                if let Some(c) = color {
                    self.color[i] = c;
                }
                if let Some(t) = thermal {
                    self.thermal[i] = t;
                }
            }
        }
    }

    fn disc(&mut self, cx: f64, cy: f64, r: f64, color: Option<[f64; 3]>, thermal: Option<f64>) {
        for y in 0..self.h {
            for x in 0..self.w {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                if dx * dx + dy * dy <= r * r {
                    let i = y * self.w + x;
                    if let Some(c) = color {
                        self.color[i] = c;
                    }
                    if let Some(t) = thermal {
                        self.thermal[i] = t;
                    }
                }
            }
        }
    }
}

fn jitter(rng: &mut ChaCha8Rng, v: f64, amount: f64) -> f64 {
    (v + rng.random_range(-amount..=amount)).clamp(0.0, 1.0)
}

fn random_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)]
}

/// Head, torso and two legs inside the box `(x, y, w, h)`.
fn draw_pedestrian(cv: &mut Canvas, rng: &mut ChaCha8Rng, b: (i64, i64, i64, i64), vis: Visibility) {
    let (x, y, w, h) = b;
    let skin = [jitter(rng, 0.85, 0.08), jitter(rng, 0.62, 0.08), jitter(rng, 0.48, 0.08)];
    let shirt = random_color(rng);
    let trousers = [jitter(rng, 0.15, 0.1), jitter(rng, 0.15, 0.1), jitter(rng, 0.3, 0.1)];
    let warm = jitter(rng, 0.85, 0.07);
    let c = |col: [f64; 3]| vis.in_color().then_some(col);
    let t = |v: f64| vis.in_thermal().then_some(v);
    let fx = |f: f64| x + (f * w as f64).round() as i64;
    let fy = |f: f64| y + (f * h as f64).round() as i64;
    cv.rect(fx(0.28), y, fx(0.72), fy(0.18), c(skin), t(warm + 0.05));
    cv.rect(fx(0.08), fy(0.18), fx(0.92), fy(0.58), c(shirt), t(warm - 0.05));
    cv.rect(fx(0.15), fy(0.58), fx(0.45), y + h, c(trousers), t(warm - 0.1));
    cv.rect(fx(0.55), fy(0.58), fx(0.85), y + h, c(trousers), t(warm - 0.1));
}

fn sample_visibility(rng: &mut ChaCha8Rng, p: &SynthParams) -> Visibility {
    let u: f64 = rng.random();
    if u < p.p_both {
        Visibility::Both
    } else if u < p.p_both + p.p_color_only {
        Visibility::ColorOnly
    } else {
        Visibility::ThermalOnly
    }
}

fn generate_image<T: Scalar>(p: &SynthParams, index: usize, rng: &mut ChaCha8Rng) -> SynthImage<T> {
    let (h, w) = (p.image_h, p.image_w);
    let condition = if rng.random::<f64>() < p.night_fraction { Condition::Night } else { Condition::Day };
    let (top, bottom) = (random_color(rng), random_color(rng));
    let t_base = match condition {
        Condition::Day => rng.random_range(0.3..0.45),
        Condition::Night => rng.random_range(0.1..0.25),
    };
    let mut cv = Canvas { h, w, color: vec![[0.0; 3]; h * w], thermal: vec![0.0; h * w] };
    for y in 0..h {
        let f = y as f64 / (h - 1).max(1) as f64;
        for x in 0..w {
            let i = y * w + x;
            cv.color[i] = [0, 1, 2].map(|c| top[c] * (1.0 - f) + bottom[c] * f);
            cv.thermal[i] = t_base + 0.05 * f;
        }
    }
    // blocky background structures in both modalities
    for _ in 0..rng.random_range(1..=3) {
        let bw = rng.random_range(10..=30) as i64;
        let bh = rng.random_range(10..=h as i64);
        let bx = rng.random_range(-5..w as i64);
        let col = random_color(rng);
        let tv = jitter(rng, t_base, 0.06);
        cv.rect(bx, h as i64 - bh, bx + bw, h as i64, Some(col), Some(tv));
    }

    let n_peds = rng.random_range(p.peds_per_image.0..=p.peds_per_image.1);
    let mut placed: Vec<(BBox<f64>, Visibility, bool)> = Vec::new();
    for _ in 0..n_peds {
        let vis = sample_visibility(rng, p);
        let truncated = rng.random::<f64>() < p.truncation_prob;
        for _attempt in 0..20 {
            let ph = rng.random_range(p.ped_height.0..=p.ped_height.1) as i64;
            let pw = ((ph as f64) * rng.random_range(0.42..0.55)).round().max(4.0) as i64;
            let x = if truncated {
                let out = (pw as f64 * rng.random_range(0.2..0.5)).round() as i64;
                if rng.random::<bool>() { -out } else { w as i64 - pw + out }
            } else {
                rng.random_range(0..=(w as i64 - pw))
            };
            let y = rng.random_range(0..=(h as i64 - ph));
            let b = BBox::new(x as f64, y as f64, (x + pw) as f64, (y + ph) as f64).expect("positive size");
            if placed.iter().all(|(o, _, _)| iou(o, &b) <= 0.2) {
                placed.push((b, vis, truncated));
                break;
            }
        }
    }

    let n_distractors = if p.distractor_density > 0.0 {
        Poisson::new(p.distractor_density).expect("positive rate").sample(rng) as usize
    } else {
        0
    };
    for _ in 0..n_distractors {
        let in_color = rng.random::<bool>();
        for _attempt in 0..20 {
            let round = rng.random::<bool>();
            let (dw, dh) = if round {
                let d = rng.random_range(8..=20);
                (d, d)
            } else {
                let dw = rng.random_range(18..=40);
                (dw, ((dw as f64) * rng.random_range(0.35..0.6)).round() as i64)
            };
            let x = rng.random_range(-4..=(w as i64 - dw + 4));
            let y = rng.random_range(0..=(h as i64 - dh));
            let b = BBox::new(x as f64, y as f64, (x + dw) as f64, (y + dh) as f64).expect("positive size");
            if placed.iter().any(|(o, _, _)| b.intersection(o) > 0.0) {
                continue;
            }
            let col = in_color.then(|| random_color(rng));
            let tv = (!in_color).then(|| jitter(rng, 0.8, 0.1));
            if round {
                cv.disc(x as f64 + dw as f64 / 2.0, y as f64 + dh as f64 / 2.0, dw as f64 / 2.0, col, tv);
            } else {
                cv.rect(x, y, x + dw, y + dh, col, tv);
            }
            break;
        }
    }

    let mut objects = Vec::new();
    for (b, vis, truncated) in &placed {
        let (x, y, bw, bh) = (b.x1 as i64, b.y1 as i64, b.width() as i64, b.height() as i64);
        draw_pedestrian(&mut cv, rng, (x, y, bw, bh), *vis);
        let occluded = rng.random::<f64>() < p.occlusion_prob;
        if occluded {
            let cover = (bh as f64 * rng.random_range(0.4..0.6)).round() as i64;
            let col = random_color(rng);
            let tv = jitter(rng, t_base, 0.05);
            cv.rect(x - 3, y + bh - cover, x + bw + 3, y + bh, Some(col), Some(tv));
        }
        objects.push(AnnotatedObject {
            gt: GroundTruth { bbox: b.cast::<T>(), occluded, truncated: *truncated },
            visibility: Some(*vis),
        });
    }

    let noise = Normal::new(0.0, p.noise.max(1e-12)).expect("finite std");
    let noisy = |v: f64, rng: &mut ChaCha8Rng| {
        let n = if p.noise > 0.0 { noise.sample(rng) } else { 0.0 };
        dequantize::<T>(quantize(v + n))
    };
    let night = condition == Condition::Night;
    let mut color = Tensor::zeros([1, 3, h, w]);
    let mut thermal = Tensor::zeros([1, 1, h, w]);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            for c in 0..3 {
                let v = cv.color[i][c];
                let v = if night { 0.08 + 0.3 * v } else { v };
                color.set(0, c, y, x, noisy(v, rng));
            }
            thermal.set(0, 0, y, x, noisy(cv.thermal[i], rng));
        }
    }
    SynthImage {
        pair: ImagePair { image_id: format!("img{index:05}"), condition, color, thermal },
        objects,
    }
}

/// Generates all images in order; the same parameters always give the same images.
pub fn synth_images<T: Scalar>(p: &SynthParams) -> Result<Vec<SynthImage<T>>> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    Ok((0..p.n_images).map(|i| generate_image(p, i, &mut rng)).collect())
}

pub const DATASET_MAGIC: &str = "msfusion-dataset";
pub const DATASET_VERSION: u32 = 1;
pub const TRAIN_FILE: &str = "train.txt";
pub const TEST_FILE: &str = "test.txt";

/// Writes images under `images/`, `train.txt`/`test.txt` annotation files
/// and a `manifest.txt` listing the splits and generation parameters.
pub fn synth_dataset(p: &SynthParams, out: &Path) -> Result<()> {
    let images = synth_images::<f32>(p)?;
    let img_dir = out.join("images");
    std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let n_train = p.n_train();
    let mut splits = [AnnotationFile { min_height: p.min_height, records: Vec::new() }, AnnotationFile { min_height: p.min_height, records: Vec::new() }];
    for (i, im) in images.iter().enumerate() {
        let id = &im.pair.image_id;
        let (cp, tp) = (format!("images/{id}_color.ppm"), format!("images/{id}_thermal.pgm"));
        write_pnm(&out.join(&cp), &im.pair.color)?;
        write_pnm(&out.join(&tp), &im.pair.thermal)?;
        splits[usize::from(i >= n_train)].records.push(AnnotationRecord {
            image_id: id.clone(),
            color_path: cp,
            thermal_path: tp,
            condition: im.pair.condition,
            objects: im.objects.clone(),
        });
    }
    save_annotations(&out.join(TRAIN_FILE), &splits[0])?;
    save_annotations(&out.join(TEST_FILE), &splits[1])?;
    let mut m = format!("{DATASET_MAGIC} {DATASET_VERSION}\n");
    let _ = writeln!(m, "split train {TRAIN_FILE} {}", splits[0].records.len());
    let _ = writeln!(m, "split test {TEST_FILE} {}", splits[1].records.len());
    let _ = writeln!(m, "# {p:?}");
    write_atomic(&out.join("manifest.txt"), m.as_bytes())
}
