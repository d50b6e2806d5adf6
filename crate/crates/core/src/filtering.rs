//! Detection and track filters built on intersection over itself.
//!
//! All functions are pure: they take index-addressed snapshots of the frame
//! and return which indices survive. Match lists are `(track, detection)`
//! index pairs.

use std::collections::HashSet;

use crate::association::{appearance_distance, AppearanceGallery, Descriptor};
use crate::geometry::{ioi, BoundingBox};
use crate::maps::{in_probability_map, is_crowded, MapConfig, OccupancyGrid};

/// `(track, detection)` index pairs.
pub type Pairs = Vec<(usize, usize)>;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    /// IoI above which a detection is considered swallowed by another one.
    pub det_ioi_gate: f64,
    /// IoI above which an overlap counts towards the "two or more" rules.
    pub ambiguous_ioi_gate: f64,
    /// Appearance distances closer than this are ambiguous.
    pub reid_closeness_eps: f64,
    /// Maximum center distance, in detection widths, for a predicted-track match.
    pub thresh3: f64,
    /// Consecutive isolated frames before an uncrowded predicted track is deleted.
    pub far_ioi_zero_frames: u32,
    /// Master switch; when false the pipeline skips every filter.
    pub enabled: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            det_ioi_gate: 0.7,
            ambiguous_ioi_gate: 0.5,
            reid_closeness_eps: 0.05,
            thresh3: 3.0,
            far_ioi_zero_frames: 5,
            enabled: true,
        }
    }
}

/// Removes detections largely covered by another detection.
///
/// For a pair where only one box exceeds the gate, that box goes. When both
/// exceed it, the lower-confidence box goes; on equal confidence the smaller
/// one, then the later one. Returns the indices of surviving detections.
pub fn filter_detections_stage1(
    boxes: &[BoundingBox],
    confidences: &[f64],
    cfg: &FilterConfig,
) -> Vec<usize> {
    debug_assert_eq!(boxes.len(), confidences.len());
    let n = boxes.len();
    let mut removed = vec![false; n];
    for i in 0..n {
        for j in i + 1..n {
            let i_covered = ioi(&boxes[i], &boxes[j]) > cfg.det_ioi_gate;
            let j_covered = ioi(&boxes[j], &boxes[i]) > cfg.det_ioi_gate;
            let loser = match (i_covered, j_covered) {
                (false, false) => continue,
                (true, false) => i,
                (false, true) => j,
                (true, true) => {
                    if confidences[i] != confidences[j] {
                        if confidences[i] < confidences[j] {
                            i
                        } else {
                            j
                        }
                    } else if boxes[i].area() < boxes[j].area() {
                        i
                    } else {
                        j
                    }
                }
            };
            removed[loser] = true;
        }
    }
    (0..n).filter(|&i| !removed[i]).collect()
}

fn high_ioi_count(subject: &BoundingBox, others: &[BoundingBox], gate: f64) -> usize {
    others.iter().filter(|o| ioi(subject, o) > gate).count()
}

/// Keep-mask for tentative tracks: a tentative box heavily overlapping two or
/// more normal/predicted tracks is dropped.
pub fn filter_tentative_stage1(
    tentative: &[BoundingBox],
    established: &[BoundingBox],
    cfg: &FilterConfig,
) -> Vec<bool> {
    tentative
        .iter()
        .map(|t| high_ioi_count(t, established, cfg.ambiguous_ioi_gate) < 2)
        .collect()
}

/// Drops tentative matches whose detection was also claimed by a normal
/// track. Returns `(kept tentative matches, removed tentative tracks)`.
pub fn filter_tentative_stage2(
    matches_normal: &[(usize, usize)],
    matches_tentative: &[(usize, usize)],
) -> (Vec<(usize, usize)>, Vec<usize>) {
    let claimed: HashSet<usize> = matches_normal.iter().map(|&(_, d)| d).collect();
    let (removed, kept): (Vec<_>, Vec<_>) = matches_tentative
        .iter()
        .partition(|(_, d)| claimed.contains(d));
    (kept, removed.into_iter().map(|(t, _)| t).collect())
}

/// A normal or predicted track that may be near a matched detection.
#[derive(Debug, Clone, Copy)]
pub struct Neighbor<'a> {
    pub key: usize,
    pub bbox: BoundingBox,
    pub gallery: &'a AppearanceGallery,
}

/// Removes appearance matches whose detection looks about as much like a
/// nearby track as like the matched one.
///
/// `matches` pair a key of `neighbors` with a detection index. For each
/// match, distances to the matched track and to every other neighbor whose
/// box the detection overlaps are compared; if the two smallest differ by
/// less than `reid_closeness_eps` the match is removed.
/// Returns `(kept, removed)`.
pub fn filter_detections_stage2(
    matches: &[(usize, usize)],
    det_boxes: &[BoundingBox],
    descriptors: &[&Descriptor],
    neighbors: &[Neighbor<'_>],
    cfg: &FilterConfig,
) -> (Pairs, Pairs) {
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for &(track, det) in matches {
        let mut dists: Vec<f64> = Vec::new();
        for n in neighbors {
            if n.gallery.is_empty() {
                continue;
            }
            if n.key == track || ioi(&det_boxes[det], &n.bbox) > 0.0 {
                dists.push(appearance_distance(n.gallery, descriptors[det]));
            }
        }
        dists.sort_by(f64::total_cmp);
        let ambiguous = dists.len() >= 2 && dists[1] - dists[0] < cfg.reid_closeness_eps;
        if ambiguous {
            removed.push((track, det));
        } else {
            kept.push((track, det));
        }
    }
    (kept, removed)
}

/// Keep-mask for unmatched detections: a detection heavily overlapping two
/// or more remaining tracks is dropped.
pub fn filter_detections_stage3(
    det_boxes: &[BoundingBox],
    track_boxes: &[BoundingBox],
    cfg: &FilterConfig,
) -> Vec<bool> {
    det_boxes
        .iter()
        .map(|d| high_ioi_count(d, track_boxes, cfg.ambiguous_ioi_gate) < 2)
        .collect()
}

/// Snapshot of a predicted track for [`filter_predicted`].
#[derive(Debug, Clone, Copy)]
pub struct PredictedView {
    pub bbox: BoundingBox,
    /// Consecutive frames without IoI overlap with any normal track so far.
    pub frames_isolated: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictedFiltering {
    /// Accepted `(predicted track, detection)` matches.
    pub accepted: Vec<(usize, usize)>,
    pub disappear: Vec<usize>,
    pub delete: Vec<usize>,
    /// Updated isolation counter for every predicted track.
    pub frames_isolated: Vec<u32>,
}

/// Inputs of [`filter_predicted`] that describe the frame.
#[derive(Debug, Clone, Copy)]
pub struct PredictedContext<'a> {
    pub probability_map: &'a OccupancyGrid,
    pub prediction_map: &'a OccupancyGrid,
    pub normal_boxes: &'a [BoundingBox],
    pub map_cfg: &'a MapConfig,
}

fn within_distance_gate(track: &BoundingBox, det: &BoundingBox, cfg: &FilterConfig) -> bool {
    track.center_distance(det) / det.width() <= cfg.thresh3
}

/// Merges the IoU and appearance matches of predicted tracks and decides
/// the fate of the predicted tracks left unmatched.
///
/// Matches whose center distance exceeds `thresh3` detection widths are
/// dropped. Appearance matches win every conflict with IoU matches. An
/// unmatched track outside the probability map disappears; one that is not
/// crowded and has been isolated from all normal tracks for
/// `far_ioi_zero_frames` frames is deleted; the rest stay predicted.
pub fn filter_predicted(
    matches_reid: &[(usize, usize)],
    matches_iou: &[(usize, usize)],
    tracks: &[PredictedView],
    det_boxes: &[BoundingBox],
    ctx: &PredictedContext<'_>,
    cfg: &FilterConfig,
) -> PredictedFiltering {
    let gate = |&&(t, d): &&(usize, usize)| within_distance_gate(&tracks[t].bbox, &det_boxes[d], cfg);
    let mut accepted: Vec<(usize, usize)> = matches_reid.iter().filter(gate).copied().collect();
    let mut used_tracks: HashSet<usize> = accepted.iter().map(|&(t, _)| t).collect();
    let mut used_dets: HashSet<usize> = accepted.iter().map(|&(_, d)| d).collect();
    for &(t, d) in matches_iou.iter().filter(gate) {
        if !used_tracks.contains(&t) && !used_dets.contains(&d) {
            accepted.push((t, d));
            used_tracks.insert(t);
            used_dets.insert(d);
        }
    }
    accepted.sort_unstable();

    let mut out = PredictedFiltering {
        accepted,
        frames_isolated: tracks.iter().map(|t| t.frames_isolated).collect(),
        ..Default::default()
    };
    for (k, t) in tracks.iter().enumerate() {
        if used_tracks.contains(&k) {
            out.frames_isolated[k] = 0;
            continue;
        }
        if !in_probability_map(ctx.probability_map, &t.bbox, ctx.map_cfg) {
            out.disappear.push(k);
            continue;
        }
        let isolated = ctx.normal_boxes.iter().all(|n| ioi(&t.bbox, n) == 0.0);
        let count = if isolated { t.frames_isolated + 1 } else { 0 };
        out.frames_isolated[k] = count;
        if count >= cfg.far_ioi_zero_frames && !is_crowded(ctx.prediction_map, &t.bbox, ctx.map_cfg) {
            out.delete.push(k);
        }
    }
    out
}
