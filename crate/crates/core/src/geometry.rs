//! Axis-aligned boxes and the two overlap measures used throughout the
//! tracker: intersection over union (symmetric) and intersection over itself
//! (asymmetric, measures how much of one box is covered by another).

use std::fmt;

use crate::error::GeometryError;

/// An axis-aligned box in continuous pixel coordinates, stored in the MOT
/// file convention `(left, top, width, height)`.
///
/// Width and height are always strictly positive; construct through
/// [`BoundingBox::new`] or [`BoundingBox::from_center`] to get that
/// guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
}

impl BoundingBox {
    pub fn new(left: f64, top: f64, width: f64, height: f64) -> Result<Self, GeometryError> {
        if !(left.is_finite() && top.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if !(width.is_finite() && height.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if width <= 0.0 || height <= 0.0 {
            return Err(GeometryError::Degenerate { width, height });
        }
        Ok(Self {
            left,
            top,
            width,
            height,
        })
    }

    /// Builds a box from its center and size.
    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Result<Self, GeometryError> {
        Self::new(cx - width / 2.0, cy - height / 2.0, width, height)
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn top(&self) -> f64 {
        self.top
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn right(&self) -> f64 {
        self.left + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn center(&self) -> (f64, f64) {
        (self.left + self.width / 2.0, self.top + self.height / 2.0)
    }

    /// Area of the overlap with `other`. Boxes that only share an edge
    /// overlap with zero area.
    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.right().min(other.right()) - self.left.max(other.left);
        let h = self.bottom().min(other.bottom()) - self.top.max(other.top);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Euclidean distance between the two box centers.
    pub fn center_distance(&self, other: &BoundingBox) -> f64 {
        let (ax, ay) = self.center();
        let (bx, by) = other.center();
        (ax - bx).hypot(ay - by)
    }

    /// `(left, top, width, height)`.
    pub fn to_tlwh(&self) -> [f64; 4] {
        [self.left, self.top, self.width, self.height]
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({:.2}, {:.2}, {:.2}, {:.2})",
            self.left, self.top, self.width, self.height
        )
    }
}

/// Intersection over union.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Intersection over itself: the fraction of `subject` covered by `other`.
///
/// ```
/// use maptrack::geometry::{ioi, BoundingBox};
///
/// let small = BoundingBox::new(0.0, 0.0, 5.0, 5.0).unwrap();
/// let large = BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
/// assert_eq!(ioi(&small, &large), 1.0);
/// assert_eq!(ioi(&large, &small), 0.25);
/// ```
pub fn ioi(subject: &BoundingBox, other: &BoundingBox) -> f64 {
    (subject.intersection_area(other) / subject.area()).clamp(0.0, 1.0)
}
