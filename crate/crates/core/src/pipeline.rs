//! Per-frame orchestration, track lifecycle and the feature repository.
//!
//! [`MapTracker::step`] runs the full association procedure for one frame:
//!
//! 1. drop detections swallowed by other detections, and feed the survivors
//!    to the probability map;
//! 2. predict every live track and rebuild the prediction map;
//! 3. drop tentative tracks sitting on two or more established tracks;
//! 4. associate tentative tracks by IoU and delete the unmatched ones;
//! 5. associate normal tracks with both IoU and appearance verified, and
//!    resolve detections also claimed by tentative tracks in favour of the
//!    normal track;
//! 6. associate the remaining normal tracks by IoU when uncrowded and by
//!    appearance when crowded, then drop ambiguous appearance matches;
//! 7. drop leftover detections that could belong to two or more tracks;
//! 8. associate predicted tracks by IoU and by appearance, merge with a
//!    preference for appearance, and retire lost predicted tracks;
//! 9. re-identify disappeared tracks by appearance;
//! 10. update matched tracks, spawn tentative tracks, and move unmatched
//!     normal tracks to predicted or disappeared depending on the
//!     probability map.
//!
//! [`BaselineTracker`] is a plain IoU tracker that deletes a track on its
//! first miss, for A/B comparisons.

use std::collections::BTreeMap;

use crate::association::{
    dual_gate_associate, iou_associate, reid_associate, AppearanceGallery, Descriptor,
};
use crate::config::PipelineConfig;
use crate::error::PipelineError;
use crate::filtering::{
    filter_detections_stage1, filter_detections_stage2, filter_detections_stage3,
    filter_predicted, filter_tentative_stage1, filter_tentative_stage2, Neighbor,
    PredictedContext, PredictedView,
};
use crate::formats::{FrameDetections, ResultRow, SequenceMeta};
use crate::geometry::BoundingBox;
use crate::kalman::{
    covariance_multiplier, deformation_ratio, init_state, predict, update, KalmanTrackState,
    TrackClass,
};
use crate::maps::{
    accumulate_probability, build_prediction_map, in_probability_map, is_crowded, OccupancyGrid,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrackStatus {
    Tentative,
    Normal,
    Predicted,
    Disappeared,
    Deleted,
}

impl TrackStatus {
    pub fn can_transition_to(self, to: TrackStatus) -> bool {
        use TrackStatus::*;
        matches!(
            (self, to),
            (Tentative, Normal | Deleted)
                | (Normal, Predicted | Disappeared)
                | (Predicted, Normal | Disappeared | Deleted)
                | (Disappeared, Normal | Deleted)
        )
    }

    /// Tracks with this status appear in the output.
    pub fn is_emitted(self) -> bool {
        matches!(self, TrackStatus::Normal | TrackStatus::Predicted)
    }
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    status: TrackStatus,
    pub kalman: KalmanTrackState,
    pub gallery: AppearanceGallery,
    /// Consecutive frames with an associated detection.
    pub hits: u32,
    pub frames_since_update: u32,
    /// Consecutive frames a predicted track has had no overlap with any normal track.
    pub frames_isolated: u32,
    /// Consecutive frames spent as predicted.
    pub frames_predicted: u32,
    pub age: u32,
    pub last_seen_frame: u32,
}

impl Track {
    fn new(id: u64, bbox: &BoundingBox, capacity: usize, frame: u32, cfg: &PipelineConfig) -> Self {
        Self {
            id,
            status: TrackStatus::Tentative,
            kalman: init_state(bbox, &cfg.noise),
            gallery: AppearanceGallery::new(capacity),
            hits: 1,
            frames_since_update: 0,
            frames_isolated: 0,
            frames_predicted: 0,
            age: 0,
            last_seen_frame: frame,
        }
    }

    pub fn status(&self) -> TrackStatus {
        self.status
    }

    pub fn bbox(&self) -> BoundingBox {
        self.kalman.to_box()
    }

    /// Moves along the lifecycle graph; any other move is an error.
    pub fn transition(&mut self, to: TrackStatus) -> Result<(), PipelineError> {
        if !self.status.can_transition_to(to) {
            return Err(PipelineError::IllegalTransition {
                id: self.id,
                from: self.status,
                to,
            });
        }
        self.status = to;
        Ok(())
    }
}

/// A disappeared track parked for re-identification.
#[derive(Debug, Clone)]
pub struct RepositoryEntry {
    pub track: Track,
    pub last_seen_frame: u32,
    pub last_box: BoundingBox,
}

/// Disappeared tracks keyed by id, bounded in size and age.
#[derive(Debug, Clone)]
pub struct FeatureRepository {
    entries: BTreeMap<u64, RepositoryEntry>,
    capacity: usize,
    max_age: u32,
}

impl FeatureRepository {
    pub fn new(capacity: usize, max_age: u32) -> Self {
        Self {
            entries: BTreeMap::new(),
            capacity,
            max_age,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: u64) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &RepositoryEntry> {
        self.entries.values()
    }

    fn insert(&mut self, track: Track) {
        let entry = RepositoryEntry {
            last_seen_frame: track.last_seen_frame,
            last_box: track.bbox(),
            track,
        };
        self.entries.insert(entry.track.id, entry);
    }

    fn remove(&mut self, id: u64) -> Option<RepositoryEntry> {
        self.entries.remove(&id)
    }

    /// Removes entries older than the age limit, then the least recently
    /// seen ones beyond capacity.
    fn evict(&mut self, frame: u32) -> Vec<Track> {
        let max_age = self.max_age;
        let stale: Vec<u64> = self
            .entries
            .values()
            .filter(|e| frame.saturating_sub(e.last_seen_frame) > max_age)
            .map(|e| e.track.id)
            .collect();
        let mut out: Vec<Track> = stale
            .into_iter()
            .filter_map(|id| self.entries.remove(&id))
            .map(|e| e.track)
            .collect();
        while self.entries.len() > self.capacity {
            let oldest = self
                .entries
                .values()
                .min_by_key(|e| (e.last_seen_frame, e.track.id))
                .map(|e| e.track.id)
                .expect("non-empty");
            out.push(self.entries.remove(&oldest).unwrap().track);
        }
        out
    }
}

/// One emitted `(id, box)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOutput {
    pub id: u64,
    pub bbox: BoundingBox,
}

/// Online tracker interface shared by both modes.
pub trait OnlineTracker {
    fn step(&mut self, frame: &FrameDetections) -> Result<Vec<TrackOutput>, PipelineError>;
}

/// Checks descriptors are either all present (same dimension) or all
/// absent. Returns whether appearance is available.
fn check_descriptors(
    frame: &FrameDetections,
    dim: &mut Option<usize>,
) -> Result<bool, PipelineError> {
    let with = frame.entries.iter().filter(|d| d.descriptor.is_some()).count();
    if with == 0 {
        return Ok(false);
    }
    if with != frame.entries.len() {
        return Err(PipelineError::BadDescriptors {
            frame: frame.frame,
            reason: format!("{} detections but {with} descriptors", frame.entries.len()),
        });
    }
    for d in &frame.entries {
        let n = d.descriptor.as_ref().unwrap().dim();
        match *dim {
            Some(expected) if expected != n => {
                return Err(PipelineError::BadDescriptors {
                    frame: frame.frame,
                    reason: format!("descriptor dimension {n}, sequence uses {expected}"),
                })
            }
            _ => *dim = Some(n),
        }
    }
    Ok(true)
}

fn check_order(last: Option<u32>, frame: u32) -> Result<(), PipelineError> {
    match last {
        Some(last) if frame <= last => Err(PipelineError::OutOfOrder { last, got: frame }),
        _ => Ok(()),
    }
}

/// What happens to a live track at the end of the frame.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Fate {
    Matched(usize),
    /// Unmatched normal track: predicted or disappeared, per the probability map.
    Lost,
    StayPredicted,
    Disappear,
    Delete,
}

/// The full tracker.
#[derive(Debug, Clone)]
pub struct MapTracker {
    config: PipelineConfig,
    frame_size: (f64, f64),
    tracks: Vec<Track>,
    repository: FeatureRepository,
    probability_map: OccupancyGrid,
    prediction_map: OccupancyGrid,
    next_id: u64,
    last_frame: Option<u32>,
    descriptor_dim: Option<usize>,
}

impl MapTracker {
    pub fn new(config: PipelineConfig, frame_size: (f64, f64)) -> Self {
        let repository = FeatureRepository::new(config.repository_capacity, config.repository_max_age);
        Self {
            frame_size,
            tracks: Vec::new(),
            repository,
            probability_map: OccupancyGrid::new(frame_size.0, frame_size.1),
            prediction_map: OccupancyGrid::new(frame_size.0, frame_size.1),
            next_id: 1,
            last_frame: None,
            descriptor_dim: None,
            config,
        }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Tentative, normal and predicted tracks.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn repository(&self) -> &FeatureRepository {
        &self.repository
    }

    pub fn probability_map(&self) -> &OccupancyGrid {
        &self.probability_map
    }

    /// Prediction map of the most recent frame.
    pub fn prediction_map(&self) -> &OccupancyGrid {
        &self.prediction_map
    }

    pub fn track(&self, id: u64) -> Option<&Track> {
        self.tracks
            .iter()
            .find(|t| t.id == id)
            .or_else(|| self.repository.entries.get(&id).map(|e| &e.track))
    }

    fn spawn(&mut self, bbox: &BoundingBox, frame: u32) -> Track {
        let t = Track::new(
            self.next_id,
            bbox,
            self.config.association.gallery_capacity,
            frame,
            &self.config,
        );
        self.next_id += 1;
        t
    }

    pub fn step(&mut self, frame: &FrameDetections) -> Result<Vec<TrackOutput>, PipelineError> {
        check_order(self.last_frame, frame.frame)?;
        let appearance = check_descriptors(frame, &mut self.descriptor_dim)?;
        let first_frame = self.last_frame.is_none();
        self.last_frame = Some(frame.frame);
        let cfg = self.config.clone();
        let filters_on = cfg.filters.enabled;

        // Detection filtering, then the probability map.
        let all_boxes: Vec<BoundingBox> = frame.entries.iter().map(|d| d.bbox).collect();
        let keep: Vec<usize> = if filters_on {
            let conf: Vec<f64> = frame.entries.iter().map(|d| d.confidence).collect();
            filter_detections_stage1(&all_boxes, &conf, &cfg.filters)
        } else {
            (0..all_boxes.len()).collect()
        };
        let det_boxes: Vec<BoundingBox> = keep.iter().map(|&i| all_boxes[i]).collect();
        let det_descs: Vec<&Descriptor> = if appearance {
            keep.iter()
                .map(|&i| frame.entries[i].descriptor.as_ref().unwrap())
                .collect()
        } else {
            Vec::new()
        };
        let det_conf: Vec<f64> = keep.iter().map(|&i| frame.entries[i].confidence).collect();
        accumulate_probability(&mut self.probability_map, det_boxes.iter());

        // Prediction.
        for t in &mut self.tracks {
            t.kalman = predict(&t.kalman, &cfg.noise);
            t.age += 1;
            t.frames_since_update += 1;
        }
        let boxes: Vec<BoundingBox> = self.tracks.iter().map(Track::bbox).collect();
        let with_status = |s: TrackStatus| -> Vec<usize> {
            (0..self.tracks.len())
                .filter(|&i| self.tracks[i].status == s)
                .collect()
        };
        let tentative = with_status(TrackStatus::Tentative);
        let normal = with_status(TrackStatus::Normal);
        let predicted = with_status(TrackStatus::Predicted);
        self.prediction_map = build_prediction_map(
            self.frame_size,
            normal.iter().chain(&predicted).map(|&i| &boxes[i]),
        );

        let mut fate: Vec<Option<Fate>> = vec![None; self.tracks.len()];
        let pick = |idx: &[usize]| -> Vec<BoundingBox> { idx.iter().map(|&i| boxes[i]).collect() };
        let galleries_of = |idx: &[usize]| -> Vec<&AppearanceGallery> {
            idx.iter().map(|&i| &self.tracks[i].gallery).collect()
        };

        // Tentative tracks: ambiguity filter, IoU association, deletion.
        let tentative: Vec<usize> = if filters_on {
            let established = pick(&[normal.as_slice(), predicted.as_slice()].concat());
            let mask = filter_tentative_stage1(&pick(&tentative), &established, &cfg.filters);
            let mut kept = Vec::new();
            for (k, &i) in tentative.iter().enumerate() {
                if mask[k] {
                    kept.push(i);
                } else {
                    fate[i] = Some(Fate::Delete);
                }
            }
            kept
        } else {
            tentative
        };
        let a = iou_associate(&pick(&tentative), &det_boxes, cfg.association.iou_gate);
        let m_tentative: Vec<(usize, usize)> =
            a.matches.iter().map(|&(r, d)| (tentative[r], d)).collect();
        for &r in &a.unmatched_rows {
            fate[tentative[r]] = Some(Fate::Delete);
        }

        // Normal tracks: both metrics must agree.
        let a = dual_gate_associate(
            &pick(&normal),
            &galleries_of(&normal),
            &det_boxes,
            appearance.then_some(det_descs.as_slice()),
            &cfg.association,
        );
        let m_normal: Vec<(usize, usize)> = a.matches.iter().map(|&(r, d)| (normal[r], d)).collect();
        let unmatched_normal: Vec<usize> = a.unmatched_rows.iter().map(|&r| normal[r]).collect();

        let (m_tentative, dropped) = filter_tentative_stage2(&m_normal, &m_tentative);
        for t in dropped {
            fate[t] = Some(Fate::Delete);
        }
        let mut claimed = vec![false; det_boxes.len()];
        for &(t, d) in m_normal.iter().chain(&m_tentative) {
            claimed[d] = true;
            fate[t] = Some(Fate::Matched(d));
        }
        let mut pool: Vec<usize> = (0..det_boxes.len()).filter(|&d| !claimed[d]).collect();

        // Remaining normal tracks, split by crowding.
        let (crowded, uncrowded): (Vec<usize>, Vec<usize>) = unmatched_normal
            .iter()
            .partition(|&&i| is_crowded(&self.prediction_map, &boxes[i], &cfg.maps));

        let pool_boxes = |pool: &[usize]| -> Vec<BoundingBox> { pool.iter().map(|&d| det_boxes[d]).collect() };
        let pool_descs = |pool: &[usize]| -> Vec<&Descriptor> { pool.iter().map(|&d| det_descs[d]).collect() };

        let a = iou_associate(&pick(&uncrowded), &pool_boxes(&pool), cfg.association.iou_gate);
        let mut left_normal: Vec<usize> = a.unmatched_rows.iter().map(|&r| uncrowded[r]).collect();
        for &(r, c) in &a.matches {
            fate[uncrowded[r]] = Some(Fate::Matched(pool[c]));
        }
        pool = a.unmatched_cols.iter().map(|&c| pool[c]).collect();

        let a = if appearance {
            reid_associate(&galleries_of(&crowded), &pool_descs(&pool), cfg.association.reid_gate)
        } else {
            iou_associate(&pick(&crowded), &pool_boxes(&pool), cfg.association.iou_gate)
        };
        let m_crowded: Vec<(usize, usize)> = a.matches.iter().map(|&(r, c)| (crowded[r], pool[c])).collect();
        left_normal.extend(a.unmatched_rows.iter().map(|&r| crowded[r]));
        pool = a.unmatched_cols.iter().map(|&c| pool[c]).collect();

        let m_crowded = if appearance && filters_on {
            let neighbors: Vec<Neighbor<'_>> = normal
                .iter()
                .chain(&predicted)
                .map(|&i| Neighbor {
                    key: i,
                    bbox: boxes[i],
                    gallery: &self.tracks[i].gallery,
                })
                .collect();
            let (kept, removed) =
                filter_detections_stage2(&m_crowded, &det_boxes, &det_descs, &neighbors, &cfg.filters);
            left_normal.extend(removed.iter().map(|&(t, _)| t));
            kept
        } else {
            m_crowded
        };
        for &(t, d) in &m_crowded {
            fate[t] = Some(Fate::Matched(d));
        }
        left_normal.sort_unstable();
        for &t in &left_normal {
            fate[t] = Some(Fate::Lost);
        }

        if filters_on {
            let remaining = pick(&[left_normal.as_slice(), predicted.as_slice()].concat());
            let mask = filter_detections_stage3(&pool_boxes(&pool), &remaining, &cfg.filters);
            pool = pool.iter().zip(mask).filter(|(_, k)| *k).map(|(&d, _)| d).collect();
        }

        // Predicted tracks.
        let p_boxes = pick(&predicted);
        let m_iou = iou_associate(&p_boxes, &pool_boxes(&pool), cfg.association.iou_gate).matches;
        let m_reid = if appearance {
            reid_associate(&galleries_of(&predicted), &pool_descs(&pool), cfg.association.reid_gate).matches
        } else {
            Vec::new()
        };
        let views: Vec<PredictedView> = predicted
            .iter()
            .map(|&i| PredictedView {
                bbox: boxes[i],
                frames_isolated: self.tracks[i].frames_isolated,
            })
            .collect();
        let normal_boxes = pick(&normal);
        let ctx = PredictedContext {
            probability_map: &self.probability_map,
            prediction_map: &self.prediction_map,
            normal_boxes: &normal_boxes,
            map_cfg: &cfg.maps,
        };
        let pf = filter_predicted(&m_reid, &m_iou, &views, &pool_boxes(&pool), &ctx, &cfg.filters);
        let mut taken = vec![false; pool.len()];
        for &(k, c) in &pf.accepted {
            fate[predicted[k]] = Some(Fate::Matched(pool[c]));
            taken[c] = true;
        }
        for (k, &i) in predicted.iter().enumerate() {
            self.tracks[i].frames_isolated = pf.frames_isolated[k];
        }
        for &k in &pf.disappear {
            fate[predicted[k]] = Some(Fate::Disappear);
        }
        for &k in &pf.delete {
            fate[predicted[k]] = Some(Fate::Delete);
        }
        for &i in &predicted {
            if fate[i].is_none() {
                let aged = self.tracks[i].frames_predicted >= cfg.max_predicted_age;
                fate[i] = Some(if aged { Fate::Disappear } else { Fate::StayPredicted });
            }
        }
        pool = pool.iter().zip(taken).filter(|(_, t)| !*t).map(|(&d, _)| d).collect();

        // Disappeared tracks: appearance only.
        let mut reidentified: Vec<(u64, usize)> = Vec::new();
        if appearance && !self.repository.is_empty() {
            let ids: Vec<u64> = self.repository.entries.keys().copied().collect();
            let galleries: Vec<&AppearanceGallery> =
                self.repository.entries.values().map(|e| &e.track.gallery).collect();
            let a = reid_associate(&galleries, &pool_descs(&pool), cfg.association.reid_gate);
            reidentified = a.matches.iter().map(|&(r, c)| (ids[r], pool[c])).collect();
            pool = a.unmatched_cols.iter().map(|&c| pool[c]).collect();
        }

        self.post_process(PostProcess {
            frame: frame.frame,
            first_frame,
            fate,
            boxes,
            reidentified,
            unmatched_dets: pool,
            det_boxes: &det_boxes,
            det_descs: &det_descs,
            det_conf: &det_conf,
        })
    }

    fn post_process(&mut self, p: PostProcess<'_>) -> Result<Vec<TrackOutput>, PipelineError> {
        let cfg = self.config.clone();
        let PostProcess {
            frame,
            first_frame,
            fate,
            boxes,
            reidentified,
            unmatched_dets,
            det_boxes,
            det_descs,
            det_conf: _,
        } = p;

        let mut survivors = Vec::with_capacity(self.tracks.len() + unmatched_dets.len());
        for (i, mut t) in std::mem::take(&mut self.tracks).into_iter().enumerate() {
            let fate = fate[i].expect("every live track gets a fate");
            match fate {
                Fate::Matched(d) => {
                    let class = match t.status {
                        TrackStatus::Predicted => TrackClass::Predicted,
                        _ => TrackClass::Normal,
                    };
                    let ratio = deformation_ratio(&boxes[i], &det_boxes[d]);
                    let m = covariance_multiplier(ratio, class, &cfg.noise)?;
                    t.kalman = update(&t.kalman, &det_boxes[d], m, &cfg.noise)?;
                    if let Some(desc) = det_descs.get(d) {
                        t.gallery.push((*desc).clone())?;
                    }
                    t.frames_since_update = 0;
                    t.frames_isolated = 0;
                    t.frames_predicted = 0;
                    t.last_seen_frame = frame;
                    match t.status {
                        TrackStatus::Tentative => {
                            t.hits += 1;
                            if t.hits >= cfg.n_init {
                                t.transition(TrackStatus::Normal)?;
                            }
                        }
                        TrackStatus::Normal => t.hits += 1,
                        _ => {
                            t.transition(TrackStatus::Normal)?;
                            t.hits = 1;
                        }
                    }
                    survivors.push(t);
                }
                Fate::Lost => {
                    t.hits = 0;
                    let coast = cfg.max_predicted_age > 0
                        && in_probability_map(&self.probability_map, &boxes[i], &cfg.maps);
                    if coast {
                        t.transition(TrackStatus::Predicted)?;
                        t.frames_predicted = 1;
                        t.frames_isolated = 0;
                        survivors.push(t);
                    } else {
                        t.transition(TrackStatus::Disappeared)?;
                        self.repository.insert(t);
                    }
                }
                Fate::StayPredicted => {
                    t.hits = 0;
                    t.frames_predicted += 1;
                    survivors.push(t);
                }
                Fate::Disappear => {
                    t.transition(TrackStatus::Disappeared)?;
                    self.repository.insert(t);
                }
                Fate::Delete => {
                    t.transition(TrackStatus::Deleted)?;
                }
            }
        }

        for (id, d) in reidentified {
            let mut t = self.repository.remove(id).expect("matched entry exists").track;
            t.kalman = init_state(&det_boxes[d], &cfg.noise);
            t.gallery.push(det_descs[d].clone())?;
            t.transition(TrackStatus::Normal)?;
            t.hits = 1;
            t.frames_since_update = 0;
            t.frames_isolated = 0;
            t.frames_predicted = 0;
            t.last_seen_frame = frame;
            survivors.push(t);
        }

        for d in unmatched_dets {
            let mut t = self.spawn(&det_boxes[d], frame);
            if let Some(desc) = det_descs.get(d) {
                t.gallery.push((*desc).clone())?;
            }
            if t.hits >= cfg.n_init || (first_frame && cfg.activate_first_frame) {
                t.transition(TrackStatus::Normal)?;
            }
            survivors.push(t);
        }

        for mut t in self.repository.evict(frame) {
            t.transition(TrackStatus::Deleted)?;
        }

        survivors.sort_by_key(|t| t.id);
        self.tracks = survivors;
        Ok(self.outputs())
    }

    fn outputs(&self) -> Vec<TrackOutput> {
        self.tracks
            .iter()
            .filter(|t| match t.status {
                TrackStatus::Normal => true,
                TrackStatus::Predicted => self.config.emit_predicted,
                _ => false,
            })
            .map(|t| TrackOutput {
                id: t.id,
                bbox: t.bbox(),
            })
            .collect()
    }
}

struct PostProcess<'a> {
    frame: u32,
    first_frame: bool,
    fate: Vec<Option<Fate>>,
    boxes: Vec<BoundingBox>,
    reidentified: Vec<(u64, usize)>,
    unmatched_dets: Vec<usize>,
    det_boxes: &'a [BoundingBox],
    det_descs: &'a [&'a Descriptor],
    #[allow(dead_code)]
    det_conf: &'a [f64],
}

impl OnlineTracker for MapTracker {
    fn step(&mut self, frame: &FrameDetections) -> Result<Vec<TrackOutput>, PipelineError> {
        MapTracker::step(self, frame)
    }
}

/// IoU-only tracker that deletes a track on its first missed frame.
#[derive(Debug, Clone)]
pub struct BaselineTracker {
    config: PipelineConfig,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<u32>,
}

impl BaselineTracker {
    pub fn new(config: PipelineConfig) -> Self {
        Self {
            config,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
        }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn step(&mut self, frame: &FrameDetections) -> Result<Vec<TrackOutput>, PipelineError> {
        check_order(self.last_frame, frame.frame)?;
        let first_frame = self.last_frame.is_none();
        self.last_frame = Some(frame.frame);
        let cfg = &self.config;

        for t in &mut self.tracks {
            t.kalman = predict(&t.kalman, &cfg.noise);
            t.age += 1;
            t.frames_since_update += 1;
        }
        let boxes: Vec<BoundingBox> = self.tracks.iter().map(Track::bbox).collect();
        let dets: Vec<BoundingBox> = frame.entries.iter().map(|d| d.bbox).collect();
        let a = iou_associate(&boxes, &dets, cfg.association.iou_gate);

        let mut matched: Vec<Option<usize>> = vec![None; self.tracks.len()];
        for &(t, d) in &a.matches {
            matched[t] = Some(d);
        }
        let mut survivors = Vec::with_capacity(self.tracks.len() + a.unmatched_cols.len());
        for (i, mut t) in std::mem::take(&mut self.tracks).into_iter().enumerate() {
            let Some(d) = matched[i] else {
                let to = if t.status == TrackStatus::Normal {
                    // Normal tracks cannot be deleted directly.
                    TrackStatus::Disappeared
                } else {
                    TrackStatus::Deleted
                };
                t.transition(to)?;
                continue;
            };
            t.kalman = update(&t.kalman, &dets[d], 1.0, &cfg.noise)?;
            t.frames_since_update = 0;
            t.last_seen_frame = frame.frame;
            t.hits += 1;
            if t.status == TrackStatus::Tentative && t.hits >= cfg.n_init {
                t.transition(TrackStatus::Normal)?;
            }
            survivors.push(t);
        }
        for &d in &a.unmatched_cols {
            let mut t = Track::new(
                self.next_id,
                &dets[d],
                cfg.association.gallery_capacity,
                frame.frame,
                cfg,
            );
            self.next_id += 1;
            if t.hits >= cfg.n_init || (first_frame && cfg.activate_first_frame) {
                t.transition(TrackStatus::Normal)?;
            }
            survivors.push(t);
        }
        self.tracks = survivors;
        Ok(self
            .tracks
            .iter()
            .filter(|t| t.status == TrackStatus::Normal)
            .map(|t| TrackOutput {
                id: t.id,
                bbox: t.bbox(),
            })
            .collect())
    }
}

impl OnlineTracker for BaselineTracker {
    fn step(&mut self, frame: &FrameDetections) -> Result<Vec<TrackOutput>, PipelineError> {
        BaselineTracker::step(self, frame)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrackerMode {
    #[default]
    MapTrack,
    Baseline,
}

/// Outputs of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame: u32,
    pub outputs: Vec<TrackOutput>,
}

pub fn make_tracker(
    mode: TrackerMode,
    config: PipelineConfig,
    meta: &SequenceMeta,
) -> Box<dyn OnlineTracker> {
    match mode {
        TrackerMode::MapTrack => Box::new(MapTracker::new(config, meta.frame_size())),
        TrackerMode::Baseline => Box::new(BaselineTracker::new(config)),
    }
}

/// Steps a tracker over frames `1..=meta.frame_count`, feeding an empty
/// frame wherever the input has none. Input frames must be strictly
/// increasing; frames past `frame_count` extend the run.
pub fn run_sequence<I>(
    frames: I,
    meta: &SequenceMeta,
    config: &PipelineConfig,
    mode: TrackerMode,
) -> Result<Vec<FrameResult>, PipelineError>
where
    I: IntoIterator<Item = FrameDetections>,
{
    let mut tracker = make_tracker(mode, config.clone(), meta);
    run_with(tracker.as_mut(), frames, meta.frame_count)
}

/// Same as [`run_sequence`] with a caller-owned tracker.
pub fn run_with<I>(
    tracker: &mut dyn OnlineTracker,
    frames: I,
    frame_count: u32,
) -> Result<Vec<FrameResult>, PipelineError>
where
    I: IntoIterator<Item = FrameDetections>,
{
    let mut results = Vec::new();
    let mut next = 1u32;
    for f in frames {
        if f.frame < next {
            return Err(PipelineError::OutOfOrder {
                last: next - 1,
                got: f.frame,
            });
        }
        while next < f.frame {
            results.push(FrameResult {
                frame: next,
                outputs: tracker.step(&FrameDetections::empty(next))?,
            });
            next += 1;
        }
        results.push(FrameResult {
            frame: f.frame,
            outputs: tracker.step(&f)?,
        });
        next = f.frame + 1;
    }
    while next <= frame_count {
        results.push(FrameResult {
            frame: next,
            outputs: tracker.step(&FrameDetections::empty(next))?,
        });
        next += 1;
    }
    Ok(results)
}

/// Flattens per-frame results into result rows.
pub fn result_rows(results: &[FrameResult]) -> Vec<ResultRow> {
    results
        .iter()
        .flat_map(|r| {
            r.outputs.iter().map(move |o| ResultRow {
                frame: r.frame,
                id: o.id,
                bbox: o.bbox,
            })
        })
        .collect()
}
