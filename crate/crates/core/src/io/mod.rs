//! Synthetic data generation and every on-disk format: images,
//! annotations, detections, models and curves.

pub mod annotations;
pub mod curves;
pub mod detections;
pub mod model_file;
pub mod pnm;
pub mod synth;

use std::path::{Path, PathBuf};

use crate::eval::GroundTruth;
use crate::nn::Tensor;
use crate::{Error, Result, Scalar};

pub use annotations::{load_annotations, save_annotations, AnnotatedObject, AnnotationFile, AnnotationRecord, Condition, Visibility};
pub use curves::{format_mr_curve, format_xy};
pub use detections::{load_detections, save_detections, DetectionSet};
pub use model_file::{load_model, save_model};
pub use pnm::{read_pnm, write_pnm};
pub use synth::{synth_dataset, synth_images, SynthImage, SynthParams, TEST_FILE, TRAIN_FILE};

/// Aligned color `(1, 3, h, w)` and thermal `(1, 1, h, w)` images in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair<T> {
    pub image_id: String,
    pub condition: Condition,
    pub color: Tensor<T>,
    pub thermal: Tensor<T>,
}

/// An image pair with its annotated ground truths.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub pair: ImagePair<T>,
    pub gts: Vec<GroundTruth<T>>,
}

/// A loaded split: annotation records and their images, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub min_height: f64,
    pub samples: Vec<Sample<T>>,
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Loads an annotation file and the images it references (paths relative to the file).
pub fn load_dataset<T: Scalar>(annotation_path: &Path) -> Result<Dataset<T>> {
    let file = load_annotations::<T>(annotation_path)?;
    let root = annotation_path.parent().unwrap_or(Path::new("."));
    let mut samples = Vec::with_capacity(file.records.len());
    for r in &file.records {
        let color: Tensor<T> = read_pnm(&root.join(&r.color_path))?;
        let thermal: Tensor<T> = read_pnm(&root.join(&r.thermal_path))?;
        if color.c() != 3 || thermal.c() != 1 {
            return Err(Error::Data(format!("image `{}`: expected a 3-channel color and 1-channel thermal image", r.image_id)));
        }
        if (color.h(), color.w()) != (thermal.h(), thermal.w()) {
            return Err(Error::Data(format!(
                "image `{}`: color is {}x{} but thermal is {}x{}",
                r.image_id,
                color.h(),
                color.w(),
                thermal.h(),
                thermal.w()
            )));
        }
        samples.push(Sample { pair: ImagePair { image_id: r.image_id.clone(), condition: r.condition, color, thermal }, gts: r.gts() });
    }
    Ok(Dataset { min_height: file.min_height, samples })
}
