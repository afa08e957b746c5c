use crate::{Error, Result, Scalar};

/// Axis-aligned box in pixel coordinates, `x2 > x1`, `y2 > y1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox<T> {
    pub x1: T,
    pub y1: T,
    pub x2: T,
    pub y2: T,
}

impl<T: Scalar> BBox<T> {
    pub fn new(x1: T, y1: T, x2: T, y2: T) -> Result<Self> {
        let b = BBox { x1, y1, x2, y2 };
        if !b.is_valid() {
            return Err(Error::contract(format!("invalid box ({x1}, {y1}, {x2}, {y2}): needs x2 > x1 and y2 > y1")));
        }
        Ok(b)
    }

    pub fn is_valid(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite()) && self.x2 > self.x1 && self.y2 > self.y1
    }

    /// Box of the given size centered at `(cx, cy)`.
    pub fn from_center(cx: T, cy: T, w: T, h: T) -> Self {
        let half = T::lit(0.5);
        BBox {
            x1: cx - half * w,
            y1: cy - half * h,
            x2: cx + half * w,
            y2: cy + half * h,
        }
    }

    pub fn width(&self) -> T {
        self.x2 - self.x1
    }

    pub fn height(&self) -> T {
        self.y2 - self.y1
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn center(&self) -> (T, T) {
        let half = T::lit(0.5);
        (self.x1 + half * self.width(), self.y1 + half * self.height())
    }

    /// Restricts the box to `[0, w] × [0, h]`; `None` if nothing of positive area remains.
    pub fn clip(&self, w: T, h: T) -> Option<Self> {
        let zero = T::zero();
        let b = BBox {
            x1: self.x1.max(zero).min(w),
            y1: self.y1.max(zero).min(h),
            x2: self.x2.max(zero).min(w),
            y2: self.y2.max(zero).min(h),
        };
        b.is_valid().then_some(b)
    }

    pub fn intersection(&self, other: &Self) -> T {
        let iw = self.x2.min(other.x2) - self.x1.max(other.x1);
        let ih = self.y2.min(other.y2) - self.y1.max(other.y1);
        if iw <= T::zero() || ih <= T::zero() {
            T::zero()
        } else {
            iw * ih
        }
    }

    pub fn cast<U: Scalar>(&self) -> BBox<U> {
        BBox {
            x1: U::lit(self.x1.as_f64()),
            y1: U::lit(self.y1.as_f64()),
            x2: U::lit(self.x2.as_f64()),
            y2: U::lit(self.y2.as_f64()),
        }
    }
}

/// Intersection over union, in `[0, 1]`. Computed in f64 so thresholds
/// compare identically for every element type.
pub fn iou<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> f64 {
    let inter = a.intersection(b).as_f64();
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area().as_f64() + b.area().as_f64() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Regression offsets of `target` relative to `anchor`:
/// `(Δcx / w_a, Δcy / h_a, ln(w_t / w_a), ln(h_t / h_a))`.
pub fn encode_bbox<T: Scalar>(anchor: &BBox<T>, target: &BBox<T>) -> Result<[T; 4]> {
    if !anchor.is_valid() || !target.is_valid() {
        return Err(Error::contract(format!("encode_bbox needs valid boxes, got {anchor:?} and {target:?}")));
    }
    let (acx, acy) = anchor.center();
    let (tcx, tcy) = target.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    Ok([
        (tcx - acx) / aw,
        (tcy - acy) / ah,
        (target.width() / aw).ln(),
        (target.height() / ah).ln(),
    ])
}

/// Largest log-scale accepted by [`decode_bbox`], keeping `exp` finite.
pub const MAX_LOG_SCALE: f64 = 6.907_755_278_982_137; // ln(1000)

/// Inverse of [`encode_bbox`]. Log-scale terms are clamped to [`MAX_LOG_SCALE`].
pub fn decode_bbox<T: Scalar>(anchor: &BBox<T>, deltas: &[T; 4]) -> BBox<T> {
    let (acx, acy) = anchor.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    let cap = T::lit(MAX_LOG_SCALE);
    let cx = acx + deltas[0] * aw;
    let cy = acy + deltas[1] * ah;
    let w = aw * deltas[2].min(cap).exp();
    let h = ah * deltas[3].min(cap).exp();
    BBox::from_center(cx, cy, w, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox<f64> {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&b(0.0, 0.0, 10.0, 10.0), &b(0.0, 0.0, 10.0, 10.0)), 1.0);
        assert_eq!(iou(&b(0.0, 0.0, 10.0, 10.0), &b(20.0, 0.0, 30.0, 10.0)), 0.0);
        assert!((iou(&b(0.0, 0.0, 10.0, 10.0), &b(5.0, 0.0, 15.0, 10.0)) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert!(BBox::new(1.0f32, 0.0, 1.0, 5.0).is_err());
        assert!(BBox::new(0.0f32, 5.0, 1.0, 4.0).is_err());
        assert!(BBox::new(0.0f32, f32::NAN, 1.0, 4.0).is_err());
    }

    #[test]
    fn encode_identity_is_zero() {
        let a = b(3.0, 4.0, 13.0, 24.0);
        assert_eq!(encode_bbox(&a, &a).unwrap(), [0.0; 4]);
    }

    #[test]
    fn encode_shift_by_half_width() {
        let d = encode_bbox(&b(0.0, 0.0, 10.0, 10.0), &b(5.0, 5.0, 15.0, 15.0)).unwrap();
        assert_eq!(d, [0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn encode_rejects_degenerate() {
        let bad = BBox { x1: 0.0, y1: 0.0, x2: 0.0, y2: 1.0 };
        assert!(encode_bbox(&bad, &b(0.0, 0.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn clip_drops_outside_boxes() {
        assert_eq!(b(-5.0, -5.0, 5.0, 5.0).clip(80.0, 64.0), Some(b(0.0, 0.0, 5.0, 5.0)));
        assert_eq!(b(90.0, 5.0, 95.0, 10.0).clip(80.0, 64.0), None);
    }

    fn arb_box() -> impl Strategy<Value = BBox<f32>> {
        (-50.0f32..100.0, -50.0f32..100.0, 1.0f32..80.0, 1.0f32..80.0)
            .prop_map(|(x, y, w, h)| BBox { x1: x, y1: y, x2: x + w, y2: y + h })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn encode_decode_round_trip(anchor in arb_box(), target in arb_box()) {
            let back = decode_bbox(&anchor, &encode_bbox(&anchor, &target).unwrap());
            for (x, y) in [(back.x1, target.x1), (back.y1, target.y1), (back.x2, target.x2), (back.y2, target.y2)] {
                prop_assert!((x - y).abs() < 1e-4, "{back:?} vs {target:?}");
            }
        }

        #[test]
        fn iou_is_symmetric_and_bounded(a in arb_box(), c in arb_box()) {
            let v = iou(&a, &c);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, iou(&c, &a));
        }
    }
}
