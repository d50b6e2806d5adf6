//! Appearance galleries and the cost matrices fed to the global assignment.

use std::collections::VecDeque;

use crate::assignment::{solve_assignment, Assignment, CostMatrix};
use crate::error::GalleryError;
use crate::geometry::{iou, BoundingBox};

/// Distance reported against an empty gallery. No gate accepts it.
pub const EMPTY_GALLERY_DISTANCE: f64 = 2.0;

/// A unit-norm appearance embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor(Vec<f32>);

impl Descriptor {
    /// Normalizes `v` to unit length.
    pub fn new(mut v: Vec<f32>) -> Result<Self, GalleryError> {
        let norm = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(GalleryError::ZeroDescriptor);
        }
        for x in &mut v {
            *x = (f64::from(*x) / norm) as f32;
        }
        Ok(Self(v))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &Descriptor) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum()
    }

    /// Cosine distance `1 - r_a . r_b`, in `[0, 2]`.
    pub fn cosine_distance(&self, other: &Descriptor) -> f64 {
        (1.0 - self.dot(other)).clamp(0.0, 2.0)
    }
}

/// Bounded FIFO of a track's most recent descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceGallery {
    capacity: usize,
    descriptors: VecDeque<Descriptor>,
}

impl AppearanceGallery {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            descriptors: VecDeque::with_capacity(capacity.min(128)),
        }
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Descriptor> {
        self.descriptors.iter()
    }

    /// Appends a descriptor, evicting the oldest beyond capacity.
    pub fn push(&mut self, d: Descriptor) -> Result<(), GalleryError> {
        if let Some(first) = self.descriptors.front() {
            if first.dim() != d.dim() {
                return Err(GalleryError::DimensionMismatch {
                    expected: first.dim(),
                    got: d.dim(),
                });
            }
        }
        if self.descriptors.len() == self.capacity {
            self.descriptors.pop_front();
        }
        self.descriptors.push_back(d);
        Ok(())
    }

    pub fn clear(&mut self) {
        self.descriptors.clear();
    }
}

/// Normalizes and appends a raw embedding.
pub fn gallery_push(gallery: &mut AppearanceGallery, raw: Vec<f32>) -> Result<(), GalleryError> {
    gallery.push(Descriptor::new(raw)?)
}

/// Smallest cosine distance between `query` and any stored descriptor;
/// [`EMPTY_GALLERY_DISTANCE`] for an empty gallery.
pub fn appearance_distance(gallery: &AppearanceGallery, query: &Descriptor) -> f64 {
    gallery
        .iter()
        .map(|r| query.cosine_distance(r))
        .fold(EMPTY_GALLERY_DISTANCE, f64::min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationConfig {
    /// Minimum IoU for an IoU-only match.
    pub iou_gate: f64,
    /// Maximum appearance distance for an appearance-only match.
    pub reid_gate: f64,
    /// Minimum IoU for a match that must pass both metrics.
    pub dual_iou_gate: f64,
    /// Maximum appearance distance for a match that must pass both metrics.
    pub dual_reid_gate: f64,
    /// Descriptors kept per track.
    pub gallery_capacity: usize,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self {
            iou_gate: 0.3,
            reid_gate: 0.25,
            dual_iou_gate: 0.45,
            dual_reid_gate: 0.2,
            gallery_capacity: 100,
        }
    }
}

/// `1 - IoU` for every pair; pairs with IoU below `gate` (or no overlap at
/// all) are infeasible.
pub fn iou_cost_matrix(tracks: &[BoundingBox], dets: &[BoundingBox], gate: f64) -> CostMatrix {
    let mut m = CostMatrix::new(tracks.len(), dets.len());
    for (i, t) in tracks.iter().enumerate() {
        for (j, d) in dets.iter().enumerate() {
            let o = iou(t, d);
            m.set(i, j, 1.0 - o);
            if o <= 0.0 || o < gate {
                m.forbid(i, j);
            }
        }
    }
    m
}

/// Appearance distance for every pair; pairs above `gate` or against an
/// empty gallery are infeasible.
pub fn appearance_cost_matrix(
    galleries: &[&AppearanceGallery],
    descriptors: &[&Descriptor],
    gate: f64,
) -> CostMatrix {
    CostMatrix::from_fn(galleries.len(), descriptors.len(), |i, j| {
        if galleries[i].is_empty() {
            return None;
        }
        let d = appearance_distance(galleries[i], descriptors[j]);
        (d <= gate).then_some(d)
    })
}

pub fn iou_associate(tracks: &[BoundingBox], dets: &[BoundingBox], gate: f64) -> Assignment {
    solve_assignment(&iou_cost_matrix(tracks, dets, gate))
}

pub fn reid_associate(
    galleries: &[&AppearanceGallery],
    descriptors: &[&Descriptor],
    gate: f64,
) -> Assignment {
    solve_assignment(&appearance_cost_matrix(galleries, descriptors, gate))
}

/// Association that only accepts pairs passing both the strict IoU gate and
/// the strict appearance gate. The assignment cost is the mean of `1 - IoU`
/// and the appearance distance.
///
/// Without descriptors the appearance half is dropped and only the strict
/// IoU gate applies.
pub fn dual_gate_associate(
    track_boxes: &[BoundingBox],
    galleries: &[&AppearanceGallery],
    det_boxes: &[BoundingBox],
    descriptors: Option<&[&Descriptor]>,
    cfg: &AssociationConfig,
) -> Assignment {
    let Some(descriptors) = descriptors else {
        return iou_associate(track_boxes, det_boxes, cfg.dual_iou_gate);
    };
    debug_assert_eq!(track_boxes.len(), galleries.len());
    debug_assert_eq!(det_boxes.len(), descriptors.len());
    let cost = CostMatrix::from_fn(track_boxes.len(), det_boxes.len(), |i, j| {
        let o = iou(&track_boxes[i], &det_boxes[j]);
        if o <= 0.0 || o < cfg.dual_iou_gate || galleries[i].is_empty() {
            return None;
        }
        let a = appearance_distance(galleries[i], descriptors[j]);
        (a <= cfg.dual_reid_gate).then_some(0.5 * (1.0 - o) + 0.5 * a)
    });
    solve_assignment(&cost)
}
