//! Normalized axis-aligned boxes and the box-level losses built on them.

use serde::{Deserialize, Serialize};

use crate::math;

/// Axis-aligned rectangle given by its top-left and bottom-right corners,
/// normalized to the image size.
///
/// Serialized as `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

impl BBox {
    /// The unit square `(0, 0, 1, 1)`.
    pub const UNIT: BBox = BBox {
        x1: 0.0,
        y1: 0.0,
        x2: 1.0,
        y2: 1.0,
    };

    pub const fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// Corners ordered, all coordinates finite and inside `[0, 1]`.
    pub fn is_valid(&self) -> bool {
        let in_unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        in_unit(self.x1)
            && in_unit(self.y1)
            && in_unit(self.x2)
            && in_unit(self.y2)
            && self.x1 <= self.x2
            && self.y1 <= self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) * 0.5, (self.y1 + self.y2) * 0.5)
    }

    /// Overlap rectangle; `None` when the boxes do not intersect with positive area.
    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let b = BBox::new(
            self.x1.max(other.x1),
            self.y1.max(other.y1),
            self.x2.min(other.x2),
            self.y2.min(other.y2),
        );
        (b.x1 < b.x2 && b.y1 < b.y2).then_some(b)
    }

    /// Smallest box enclosing both.
    pub fn union(&self, other: &BBox) -> BBox {
        BBox::new(
            self.x1.min(other.x1),
            self.y1.min(other.y1),
            self.x2.max(other.x2),
            self.y2.max(other.y2),
        )
    }

    /// Each coordinate clamped into `[0, 1]` and corners re-ordered if needed.
    pub fn clipped(&self) -> BBox {
        let c = |v: f64| v.clamp(0.0, 1.0);
        let (x1, x2) = (c(self.x1), c(self.x2));
        let (y1, y2) = (c(self.y1), c(self.y2));
        BBox::new(x1.min(x2), y1.min(y2), x1.max(x2), y1.max(y2))
    }

    /// Whether the point lies in the half-open box `[x1, x2) x [y1, y2)`.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x1 && x < self.x2 && y >= self.y1 && y < self.y2
    }

    /// Whether the point lies in the closed box.
    pub fn contains_point_closed(&self, x: f64, y: f64) -> bool {
        x >= self.x1 && x <= self.x2 && y >= self.y1 && y <= self.y2
    }

    /// Express this box in the coordinate frame of `frame` (frame maps to the unit square).
    pub fn to_frame(&self, frame: &BBox) -> BBox {
        let (w, h) = (frame.width(), frame.height());
        BBox::new(
            (self.x1 - frame.x1) / w,
            (self.y1 - frame.y1) / h,
            (self.x2 - frame.x1) / w,
            (self.y2 - frame.y1) / h,
        )
    }

    /// Inverse of [`BBox::to_frame`].
    pub fn from_frame(&self, frame: &BBox) -> BBox {
        let (w, h) = (frame.width(), frame.height());
        BBox::new(
            frame.x1 + self.x1 * w,
            frame.y1 + self.y1 * h,
            frame.x1 + self.x2 * w,
            frame.y1 + self.y2 * h,
        )
    }
}

/// Intersection over union. Zero when the union has no area, including the
/// case of two identical degenerate boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b).map_or(0.0, |i| i.area());
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Generalized IoU: `iou - (enclosure - union) / enclosure`, in `[-1, 1]`.
pub fn giou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b).map_or(0.0, |i| i.area());
    let union = a.area() + b.area() - inter;
    let enclosure = a.union(b).area();
    let iou = if union <= 0.0 { 0.0 } else { inter / union };
    if enclosure <= 0.0 {
        iou
    } else {
        iou - (enclosure - union) / enclosure
    }
}

/// `1 - GIoU`, in `[0, 2]`.
pub fn giou_loss(pred: &BBox, gt: &BBox) -> f64 {
    1.0 - giou(pred, gt)
}

/// Mean absolute coordinate difference.
pub fn l1_box_loss(pred: &BBox, gt: &BBox) -> f64 {
    let p = pred.to_array();
    let g = gt.to_array();
    p.iter().zip(g.iter()).map(|(a, b)| math::abs(a - b)).sum::<f64>() / 4.0
}

/// Number of bins used when coordinates are written as integers into label strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscretizationConfig {
    bins: u32,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        DiscretizationConfig { bins: 1000 }
    }
}

impl DiscretizationConfig {
    /// `None` unless `bins >= 2`.
    pub fn new(bins: u32) -> Option<Self> {
        (bins >= 2).then_some(DiscretizationConfig { bins })
    }

    pub fn bins(&self) -> u32 {
        self.bins
    }

    /// `floor(v * bins)` clamped to `[0, bins - 1]`.
    pub fn bin(&self, v: f64) -> u32 {
        let k = math::floor(v * self.bins as f64);
        if k.is_nan() || k < 0.0 {
            0
        } else if k >= (self.bins - 1) as f64 {
            self.bins - 1
        } else {
            k as u32
        }
    }

    /// Center of bin `k`.
    pub fn center(&self, k: u32) -> f64 {
        (k.min(self.bins - 1) as f64 + 0.5) / self.bins as f64
    }

    pub fn discretize(&self, b: &BBox) -> [u32; 4] {
        [self.bin(b.x1), self.bin(b.y1), self.bin(b.x2), self.bin(b.y2)]
    }

    pub fn undiscretize(&self, k: [u32; 4]) -> BBox {
        BBox::new(
            self.center(k[0]),
            self.center(k[1]),
            self.center(k[2]),
            self.center(k[3]),
        )
    }
}
