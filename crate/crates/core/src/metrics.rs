//! CLEAR-MOT and identity metrics.
//!
//! Per frame, ground truth and hypotheses are matched on IoU. Pairings from
//! the previous frame are kept while their IoU stays above the threshold;
//! the rest are matched with a minimum-cost assignment on `1 - IoU`. Identity
//! F1 uses one global assignment between ground-truth and hypothesis ids.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use crate::assignment::{solve_assignment, CostMatrix};
use crate::error::FormatError;
use crate::formats::{read_mot_rows, MotRow};
use crate::geometry::{iou, BoundingBox};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Per ground-truth trajectory figures.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GtStats {
    /// Frames in which the trajectory is annotated.
    pub frames: usize,
    /// Frames in which it was matched to some hypothesis.
    pub matched: usize,
    pub idsw: usize,
    pub frag: usize,
    /// Identity F1 of this trajectory against its globally assigned hypothesis id.
    pub idf1: f64,
    /// Hypothesis ids it was matched to, over the whole sequence.
    pub hyp_ids: BTreeSet<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mota: f64,
    pub idf1: f64,
    pub idsw: usize,
    pub frag: usize,
    pub fp: usize,
    pub fn_: usize,
    pub gt_count: usize,
    /// Identity-level true positives, false positives and false negatives.
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
    pub per_gt: BTreeMap<u64, GtStats>,
}

impl EvalReport {
    /// `(name, value)` pairs in display order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("MOTA", format!("{:.3}", self.mota)),
            ("IDF1", format!("{:.3}", self.idf1)),
            ("IDSW", self.idsw.to_string()),
            ("Frag", self.frag.to_string()),
            ("FP", self.fp.to_string()),
            ("FN", self.fn_.to_string()),
            ("GT", self.gt_count.to_string()),
        ]
    }
}

/// Whether a ground-truth row counts: rows flagged "ignore" (first flag
/// column 0) or carrying a class other than pedestrian are dropped.
fn is_pedestrian(row: &MotRow) -> bool {
    if row.confidence == 0.0 {
        return false;
    }
    matches!(row.class, None | Some(1) | Some(-1))
}

type FrameBoxes = BTreeMap<u32, Vec<(u64, BoundingBox)>>;

fn group(rows: &[MotRow], keep: impl Fn(&MotRow) -> bool) -> FrameBoxes {
    let mut out = FrameBoxes::new();
    for r in rows.iter().filter(|r| keep(r)) {
        out.entry(r.frame).or_default().push((r.id as u64, r.bbox));
    }
    out
}

pub fn evaluate(gt: &Path, res: &Path, iou_threshold: f64) -> Result<EvalReport, FormatError> {
    let gt = read_mot_rows(gt)?;
    let res = read_mot_rows(res)?;
    Ok(evaluate_rows(&gt, &res, iou_threshold))
}

pub fn evaluate_rows(gt: &[MotRow], res: &[MotRow], iou_threshold: f64) -> EvalReport {
    let gt = group(gt, is_pedestrian);
    let hyp = group(res, |_| true);
    let frames: BTreeSet<u32> = gt.keys().chain(hyp.keys()).copied().collect();
    let empty = Vec::new();

    let mut fp = 0;
    let mut fn_ = 0;
    let mut idsw = 0;
    let mut gt_count = 0;
    let mut per_gt: BTreeMap<u64, GtStats> = BTreeMap::new();
    // Tracked flag per annotated frame, for fragmentation.
    let mut tracked: BTreeMap<u64, Vec<bool>> = BTreeMap::new();
    let mut last_match: HashMap<u64, u64> = HashMap::new();
    let mut prev_pairs: HashMap<u64, u64> = HashMap::new();
    // Frame-level overlaps for identity matching.
    let mut pair_counts: HashMap<(u64, u64), usize> = HashMap::new();
    let mut gt_frames: BTreeMap<u64, usize> = BTreeMap::new();
    let mut hyp_frames: BTreeMap<u64, usize> = BTreeMap::new();

    for f in frames {
        let g = gt.get(&f).unwrap_or(&empty);
        let h = hyp.get(&f).unwrap_or(&empty);
        gt_count += g.len();
        for (gid, _) in g {
            *gt_frames.entry(*gid).or_default() += 1;
        }
        for (hid, _) in h {
            *hyp_frames.entry(*hid).or_default() += 1;
        }
        for (gid, gb) in g {
            for (hid, hb) in h {
                if iou(gb, hb) >= iou_threshold {
                    *pair_counts.entry((*gid, *hid)).or_default() += 1;
                }
            }
        }

        let mut g_used = vec![false; g.len()];
        let mut h_used = vec![false; h.len()];
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for (gi, (gid, gb)) in g.iter().enumerate() {
            let Some(&prev_h) = prev_pairs.get(gid) else {
                continue;
            };
            let found = h
                .iter()
                .position(|(hid, hb)| *hid == prev_h && iou(gb, hb) >= iou_threshold);
            if let Some(hi) = found {
                if !h_used[hi] {
                    g_used[gi] = true;
                    h_used[hi] = true;
                    pairs.push((gi, hi));
                }
            }
        }
        let g_free: Vec<usize> = (0..g.len()).filter(|&i| !g_used[i]).collect();
        let h_free: Vec<usize> = (0..h.len()).filter(|&i| !h_used[i]).collect();
        let cost = CostMatrix::from_fn(g_free.len(), h_free.len(), |i, j| {
            let o = iou(&g[g_free[i]].1, &h[h_free[j]].1);
            (o >= iou_threshold).then_some(1.0 - o)
        });
        pairs.extend(
            solve_assignment(&cost)
                .matches
                .into_iter()
                .map(|(i, j)| (g_free[i], h_free[j])),
        );

        prev_pairs.clear();
        let mut matched_g = vec![false; g.len()];
        for &(gi, hi) in &pairs {
            let gid = g[gi].0;
            let hid = h[hi].0;
            matched_g[gi] = true;
            prev_pairs.insert(gid, hid);
            let stats = per_gt.entry(gid).or_default();
            stats.matched += 1;
            stats.hyp_ids.insert(hid);
            if let Some(prev) = last_match.insert(gid, hid) {
                if prev != hid {
                    idsw += 1;
                    stats.idsw += 1;
                }
            }
        }
        for (gi, (gid, _)) in g.iter().enumerate() {
            per_gt.entry(*gid).or_default().frames += 1;
            tracked.entry(*gid).or_default().push(matched_g[gi]);
        }
        fn_ += g.len() - pairs.len();
        fp += h.len() - pairs.len();
    }

    let mut frag = 0;
    for (gid, flags) in &tracked {
        let (Some(first), Some(last)) = (
            flags.iter().position(|&t| t),
            flags.iter().rposition(|&t| t),
        ) else {
            continue;
        };
        let n = flags[first..=last]
            .windows(2)
            .filter(|w| w[0] && !w[1])
            .count();
        frag += n;
        per_gt.get_mut(gid).unwrap().frag = n;
    }

    let (idtp, id_pairs) = identity_matching(&gt_frames, &hyp_frames, &pair_counts);
    let n_gt_boxes: usize = gt_frames.values().sum();
    let n_hyp_boxes: usize = hyp_frames.values().sum();
    let idf1 = if n_gt_boxes + n_hyp_boxes == 0 {
        1.0
    } else {
        2.0 * idtp as f64 / (n_gt_boxes + n_hyp_boxes) as f64
    };
    for (gid, stats) in per_gt.iter_mut() {
        stats.idf1 = match id_pairs.get(gid) {
            Some(&(hid, tp)) => 2.0 * tp as f64 / (gt_frames[gid] + hyp_frames[&hid]) as f64,
            None => 0.0,
        };
    }

    let errors = (fp + fn_ + idsw) as f64;
    let mota = if gt_count > 0 {
        1.0 - errors / gt_count as f64
    } else if errors == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    EvalReport {
        mota,
        idf1,
        idsw,
        frag,
        fp,
        fn_,
        gt_count,
        idtp,
        idfp: n_hyp_boxes - idtp,
        idfn: n_gt_boxes - idtp,
        per_gt,
    }
}

/// Maximum-overlap one-to-one assignment of ground-truth ids to hypothesis
/// ids. Returns the total overlap and the pair chosen for each ground-truth
/// id, with its overlap.
fn identity_matching(
    gt_frames: &BTreeMap<u64, usize>,
    hyp_frames: &BTreeMap<u64, usize>,
    pair_counts: &HashMap<(u64, u64), usize>,
) -> (usize, BTreeMap<u64, (u64, usize)>) {
    let gids: Vec<u64> = gt_frames.keys().copied().collect();
    let hids: Vec<u64> = hyp_frames.keys().copied().collect();
    // Every pair is feasible so the solver's cardinality preference cannot
    // trade overlap for more pairs.
    let cost = CostMatrix::from_fn(gids.len(), hids.len(), |i, j| {
        let c = pair_counts.get(&(gids[i], hids[j])).copied().unwrap_or(0);
        Some(-(c as f64))
    });
    let mut total = 0;
    let mut chosen = BTreeMap::new();
    for (i, j) in solve_assignment(&cost).matches {
        let c = pair_counts.get(&(gids[i], hids[j])).copied().unwrap_or(0);
        if c > 0 {
            total += c;
            chosen.insert(gids[i], (hids[j], c));
        }
    }
    (total, chosen)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(frame: u32, id: i64, left: f64) -> MotRow {
        MotRow {
            frame,
            id,
            bbox: BoundingBox::new(left, 10.0, 20.0, 40.0).unwrap(),
            confidence: 1.0,
            class: None,
            visibility: None,
        }
    }

    #[test]
    fn perfect_tracker() {
        let gt: Vec<MotRow> = (1..=10).flat_map(|f| [row(f, 1, 0.0), row(f, 2, 100.0)]).collect();
        let r = evaluate_rows(&gt, &gt, 0.5);
        assert_eq!(r.mota, 1.0);
        assert_eq!(r.idf1, 1.0);
        assert_eq!((r.idsw, r.frag, r.fp, r.fn_, r.gt_count), (0, 0, 0, 0, 20));
    }

    #[test]
    fn all_miss() {
        let gt: Vec<MotRow> = (1..=7).map(|f| row(f, 1, 0.0)).collect();
        let r = evaluate_rows(&gt, &[], 0.5);
        assert_eq!(r.fn_, 7);
        assert_eq!(r.mota, 0.0);
        assert_eq!(r.idf1, 0.0);
    }

    #[test]
    fn id_switch_halfway() {
        let gt: Vec<MotRow> = (1..=10).map(|f| row(f, 1, 0.0)).collect();
        let res: Vec<MotRow> = (1..=10).map(|f| row(f, if f <= 5 { 7 } else { 8 }, 0.0)).collect();
        let r = evaluate_rows(&gt, &res, 0.5);
        assert_eq!(r.idsw, 1);
        assert_eq!(r.idf1, 0.5);
        assert!((r.mota - 0.9).abs() < 1e-12);
        assert_eq!(r.per_gt[&1].hyp_ids.len(), 2);
    }

    #[test]
    fn fragmentation_counts_interior_gaps_only() {
        let gt: Vec<MotRow> = (1..=10).map(|f| row(f, 1, 0.0)).collect();
        // tracked 2..=3, gap 4, tracked 5..=6, gap 7..=8, tracked 9; frames 1 and 10 missed
        let res: Vec<MotRow> = [2, 3, 5, 6, 9].iter().map(|&f| row(f, 1, 0.0)).collect();
        let r = evaluate_rows(&gt, &res, 0.5);
        assert_eq!(r.frag, 2);
        assert_eq!(r.idsw, 0);
        assert_eq!(r.fn_, 5);
    }

    #[test]
    fn persistence_keeps_previous_pairing() {
        // Frame 2: hyp 8 overlaps the GT better, but hyp 7 still clears the threshold.
        let gt = vec![row(1, 1, 0.0), row(2, 1, 0.0)];
        let mut res = vec![row(1, 7, 0.0), row(2, 7, 4.0), row(2, 8, 0.0)];
        let r = evaluate_rows(&gt, &res, 0.5);
        assert_eq!((r.idsw, r.fp), (0, 1));
        // Once the old pairing drops below the threshold the switch is counted.
        res[1] = row(2, 7, 15.0);
        let r = evaluate_rows(&gt, &res, 0.5);
        assert_eq!(r.idsw, 1);
    }

    #[test]
    fn ignored_gt_rows() {
        let mut gt = vec![row(1, 1, 0.0), row(1, 2, 100.0), row(1, 3, 200.0)];
        gt[1].confidence = 0.0;
        gt[2].class = Some(7);
        let r = evaluate_rows(&gt, &[], 0.5);
        assert_eq!(r.gt_count, 1);
    }

    #[test]
    fn identity_matching_prefers_weight_over_cardinality() {
        // gt 1 overlaps hyp 10 for 8 frames and hyp 11 for 1; gt 2 overlaps hyp 10 for 1.
        let mut gt = Vec::new();
        let mut res = Vec::new();
        for f in 1..=8 {
            gt.push(row(f, 1, 0.0));
            res.push(row(f, 10, 0.0));
        }
        gt.push(row(9, 1, 0.0));
        res.push(row(9, 11, 0.0));
        gt.push(row(10, 2, 300.0));
        res.push(row(10, 10, 300.0));
        let r = evaluate_rows(&gt, &res, 0.5);
        assert_eq!(r.idtp, 8);
    }
}
