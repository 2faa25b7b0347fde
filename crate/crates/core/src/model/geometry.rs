//! Axis-aligned boxes in image space and their rasterization.
//!
//! Coordinates are real-valued pixels with the origin at the top-left corner
//! and y growing downward. Pixel `(x, y)` is sampled at the lattice point
//! `(x, y)`; it belongs to a rect when `x1 <= x < x2` and `y1 <= y < y2`.

use serde::{Deserialize, Serialize};

use super::mask::MaskGrid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    /// Strict constructor: requires finite coordinates with `x1 < x2` and `y1 < y2`.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = Self { x1, y1, x2, y2 };
        if !b.is_finite() {
            return Err(Error::NonFinite("bbox"));
        }
        if !(x1 < x2 && y1 < y2) {
            return Err(Error::invalid(
                "bbox",
                format!("corners out of order: ({x1}, {y1}, {x2}, {y2})"),
            ));
        }
        Ok(b)
    }

    /// Box spanning the given corners; may be degenerate (zero width or height).
    pub fn spanning(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self {
            x1: x1.min(x2),
            y1: y1.min(y2),
            x2: x1.max(x2),
            y2: y1.max(y2),
        }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn is_finite(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite())
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        self.x1 <= x && x <= self.x2 && self.y1 <= y && y <= self.y2
    }

    /// Grows the box by `pad` on every side.
    pub fn expand(&self, pad: f64) -> Self {
        Self {
            x1: self.x1 - pad,
            y1: self.y1 - pad,
            x2: self.x2 + pad,
            y2: self.y2 + pad,
        }
    }

    pub fn intersects_canvas(&self, width: u32, height: u32) -> bool {
        clamp_rect(self, width, height).is_ok()
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

/// Intersects `rect` with the canvas `[0, width] x [0, height]`.
pub fn clamp_rect(rect: &BBox, width: u32, height: u32) -> Result<BBox> {
    let (w, h) = (width as f64, height as f64);
    let out = BBox {
        x1: rect.x1.clamp(0.0, w),
        y1: rect.y1.clamp(0.0, h),
        x2: rect.x2.clamp(0.0, w),
        y2: rect.y2.clamp(0.0, h),
    };
    if !rect.is_finite() || out.x1 >= out.x2 || out.y1 >= out.y2 {
        return Err(Error::EmptyIntersection { width, height });
    }
    Ok(out)
}

/// Inclusive-exclusive pixel index range `[lo, hi)` covered by `[a, b)`.
pub(crate) fn pixel_span(a: f64, b: f64, limit: u32) -> (u32, u32) {
    let lo = a.ceil().max(0.0).min(limit as f64) as u32;
    let hi = b.ceil().max(0.0).min(limit as f64) as u32;
    (lo, hi.max(lo))
}

/// Sets every pixel of `mask` that falls inside `rect`; returns the number of pixels set.
pub(crate) fn fill_rect(mask: &mut MaskGrid, rect: &BBox) -> usize {
    let (x0, x1) = pixel_span(rect.x1, rect.x2, mask.width());
    let (y0, y1) = pixel_span(rect.y1, rect.y2, mask.height());
    for y in y0..y1 {
        for x in x0..x1 {
            mask.set(x, y, true);
        }
    }
    ((x1 - x0) * (y1 - y0)) as usize
}

/// Rasterizes the clamped rect.
pub fn rect_to_mask(rect: &BBox, width: u32, height: u32) -> Result<MaskGrid> {
    let clamped = clamp_rect(rect, width, height)?;
    let mut mask = MaskGrid::empty(width, height);
    fill_rect(&mut mask, &clamped);
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox { x1, y1, x2, y2 }
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(
            clamp_rect(&bb(-10.0, 5.0, 50.0, 60.0), 40, 40).unwrap(),
            bb(0.0, 5.0, 40.0, 40.0)
        );
        assert_eq!(
            clamp_rect(&bb(0.0, 0.0, 40.0, 40.0), 40, 40).unwrap(),
            bb(0.0, 0.0, 40.0, 40.0)
        );
        assert!(matches!(
            clamp_rect(&bb(50.0, 50.0, 60.0, 60.0), 40, 40),
            Err(Error::EmptyIntersection { .. })
        ));
    }

    #[test]
    fn strict_constructor_rejects_reversed_corners() {
        assert!(BBox::new(5.0, 0.0, 1.0, 3.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::NAN, 3.0).is_err());
        assert!(BBox::new(0.0, 0.0, 1.0, 3.0).is_ok());
    }

    #[test]
    fn rasterize_top_left_square() {
        let m = rect_to_mask(&bb(0.0, 0.0, 2.0, 2.0), 4, 4).unwrap();
        let expected = MaskGrid::from_rows(&[
            &[1, 1, 0, 0],
            &[1, 1, 0, 0],
            &[0, 0, 0, 0],
            &[0, 0, 0, 0],
        ])
        .unwrap();
        assert_eq!(m, expected);
    }

    #[test]
    fn rasterize_full_cover() {
        let m = rect_to_mask(&bb(-3.0, -3.0, 10.0, 10.0), 4, 4).unwrap();
        assert_eq!(m, MaskGrid::full(4, 4));
    }

    #[test]
    fn rasterize_unit_rect_matches_enumeration() {
        let rect = bb(1.5, 1.5, 2.5, 2.5);
        let m = rect_to_mask(&rect, 4, 4).unwrap();
        // Enumerate every lattice sample point directly.
        let mut expected = MaskGrid::empty(4, 4);
        for y in 0..4u32 {
            for x in 0..4u32 {
                let (px, py) = (x as f64, y as f64);
                if rect.x1 <= px && px < rect.x2 && rect.y1 <= py && py < rect.y2 {
                    expected.set(x, y, true);
                }
            }
        }
        assert_eq!(m, expected);
        assert_eq!(m.count(), 1);
        assert!(m.get(2, 2));
    }

    #[test]
    fn rasterize_disjoint_is_error() {
        assert!(rect_to_mask(&bb(50.0, 50.0, 60.0, 60.0), 40, 40).is_err());
    }

    fn arb_rect() -> impl Strategy<Value = BBox> {
        (-20.0f64..60.0, -20.0f64..60.0, 0.1f64..40.0, 0.1f64..40.0)
            .prop_map(|(x, y, w, h)| bb(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn clamp_is_idempotent(r in arb_rect()) {
            if let Ok(c) = clamp_rect(&r, 40, 30) {
                prop_assert_eq!(clamp_rect(&c, 40, 30).unwrap(), c);
            }
        }

        #[test]
        fn rasterization_is_monotone(r in arb_rect(), grow in (0.0f64..5.0, 0.0f64..5.0, 0.0f64..5.0, 0.0f64..5.0)) {
            let big = bb(r.x1 - grow.0, r.y1 - grow.1, r.x2 + grow.2, r.y2 + grow.3);
            if let Ok(small) = rect_to_mask(&r, 40, 30) {
                let large = rect_to_mask(&big, 40, 30).unwrap();
                prop_assert!(small.is_subset_of(&large).unwrap());
            }
        }
    }
}
