use crate::arch::BBox;
use crate::{Error, Result, Scalar};

/// Default aspect ratios (height / width). Pedestrians are tall, so the
/// wide 0.5 ratio is never used.
pub const PEDESTRIAN_RATIOS: [f64; 2] = [1.0, 2.0];

/// Reference box tiled at one feature cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    /// Side length at ratio 1, pixels.
    pub scale: f64,
    /// height / width.
    pub ratio: f64,
    pub center: (f64, f64),
    pub stride: f64,
}

impl Anchor {
    /// `w = s / √r`, `h = s · √r`, so the area stays `s²`.
    pub fn to_bbox<T: Scalar>(&self) -> BBox<T> {
        let root = self.ratio.sqrt();
        BBox::from_center(
            T::lit(self.center.0),
            T::lit(self.center.1),
            T::lit(self.scale / root),
            T::lit(self.scale * root),
        )
    }
}

/// Anchors for every cell of a `feat_h × feat_w` map, ordered by row, column,
/// then scale-major over `scales × ratios`.
pub fn generate_anchors(feat_h: usize, feat_w: usize, stride: f64, scales: &[f64], ratios: &[f64]) -> Result<Vec<Anchor>> {
    if scales.is_empty() || ratios.is_empty() {
        return Err(Error::config("anchor scales and ratios must be non-empty"));
    }
    if let Some(r) = ratios.iter().find(|&&r| (r - 0.5).abs() < 1e-9) {
        return Err(Error::config(format!(
            "anchor ratio {r} (height/width) describes wide boxes; pedestrians are tall, so ratio 0.5 is not supported"
        )));
    }
    if scales.iter().chain(ratios).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::config("anchor scales and ratios must be positive"));
    }
    let mut out = Vec::with_capacity(feat_h * feat_w * scales.len() * ratios.len());
    for y in 0..feat_h {
        for x in 0..feat_w {
            let center = ((x as f64 + 0.5) * stride, (y as f64 + 0.5) * stride);
            for &scale in scales {
                for &ratio in ratios {
                    out.push(Anchor { scale, ratio, center, stride });
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_scales_two_ratios_on_10x10() {
        let a = generate_anchors(10, 10, 8.0, &[16.0, 24.0, 32.0], &PEDESTRIAN_RATIOS).unwrap();
        assert_eq!(a.len(), 600);
        assert!(a.iter().all(|a| a.ratio != 0.5));
    }

    #[test]
    fn square_anchor_at_origin_cell() {
        let a = generate_anchors(1, 1, 8.0, &[16.0], &[1.0]).unwrap();
        assert_eq!(a[0].to_bbox::<f64>(), BBox::new(-4.0, -4.0, 12.0, 12.0).unwrap());
    }

    #[test]
    fn tall_anchor_dimensions() {
        let a = generate_anchors(1, 1, 8.0, &[16.0], &[2.0]).unwrap();
        let b = a[0].to_bbox::<f64>();
        assert!((b.width() - 11.31).abs() < 0.01);
        assert!((b.height() - 22.63).abs() < 0.01);
        assert!((b.area() - 256.0).abs() < 1e-9);
        assert!((b.height() / b.width() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ratio_half_rejected_with_reason() {
        let err = generate_anchors(2, 2, 8.0, &[16.0], &[0.5, 1.0]).unwrap_err();
        assert!(err.to_string().contains("pedestrian"));
    }
}
