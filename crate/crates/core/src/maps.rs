//! Coarse occupancy grids at one tenth of the frame resolution.
//!
//! The same grid type backs two maps:
//!
//! * the **probability map**, accumulated from every surviving detection over
//!   the whole sequence. It answers "could an object plausibly still be here?"
//!   and decides whether an undetected track coasts (predicted) or is parked
//!   for re-identification (disappeared);
//! * the **prediction map**, rebuilt each frame from the predicted boxes of
//!   normal and predicted tracks. It answers "is this track in a crowd?".

use std::fmt::Write as _;
use std::ops::Range;

use crate::geometry::BoundingBox;

/// Pixels per grid cell along each axis.
pub const CELL_SIZE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MapConfig {
    /// Minimum summed cell frequency under a box for it to count as inside
    /// the probability map.
    pub thresh1: f64,
    /// Crowding ratio above which a track is considered crowded.
    pub thresh2: f64,
    /// Boxes whose center is within this many cells of a frame edge are
    /// treated as leaving the image.
    pub border_margin_cells: u32,
    /// Until this many frames have been accumulated every in-frame box is
    /// considered inside the probability map.
    pub warmup_frames: u64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            thresh1: 0.05,
            thresh2: 1.25,
            border_margin_cells: 1,
            warmup_frames: 30,
        }
    }
}

/// A grid of non-negative counts covering a `width x height` frame.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    rows: usize,
    cols: usize,
    cells: Vec<u32>,
    frame_size: (f64, f64),
    frames_accumulated: u64,
}

impl OccupancyGrid {
    /// Zeroed grid with `ceil(height / 10)` rows and `ceil(width / 10)` columns.
    pub fn new(frame_width: f64, frame_height: f64) -> Self {
        let cols = (frame_width / CELL_SIZE).ceil().max(1.0) as usize;
        let rows = (frame_height / CELL_SIZE).ceil().max(1.0) as usize;
        Self {
            rows,
            cols,
            cells: vec![0; rows * cols],
            frame_size: (frame_width, frame_height),
            frames_accumulated: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn frame_size(&self) -> (f64, f64) {
        self.frame_size
    }

    pub fn frames_accumulated(&self) -> u64 {
        self.frames_accumulated
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.cells[row * self.cols + col]
    }

    /// Row and column ranges of the cells a box's extent overlaps with
    /// positive area, clamped to the grid. Empty when the box lies outside.
    pub fn covered_cells(&self, b: &BoundingBox) -> (Range<usize>, Range<usize>) {
        (
            Self::span(b.top(), b.bottom(), self.rows),
            Self::span(b.left(), b.right(), self.cols),
        )
    }

    fn span(lo: f64, hi: f64, len: usize) -> Range<usize> {
        let first = (lo / CELL_SIZE).floor().max(0.0);
        let last = (hi / CELL_SIZE).ceil().min(len as f64);
        if last <= first {
            return 0..0;
        }
        first as usize..last as usize
    }

    pub fn covered_cell_count(&self, b: &BoundingBox) -> usize {
        let (r, c) = self.covered_cells(b);
        r.len() * c.len()
    }

    fn increment(&mut self, b: &BoundingBox) {
        let (rows, cols) = self.covered_cells(b);
        for r in rows {
            for c in cols.clone() {
                self.cells[r * self.cols + c] += 1;
            }
        }
    }

    fn sum_under(&self, b: &BoundingBox) -> u64 {
        let (rows, cols) = self.covered_cells(b);
        rows.map(|r| {
            self.cells[r * self.cols + cols.start..r * self.cols + cols.end]
                .iter()
                .map(|&v| u64::from(v))
                .sum::<u64>()
        })
        .sum()
    }

    /// Plain-text matrix, one grid row per line, space-separated.
    pub fn dump(&self) -> String {
        let mut out = String::with_capacity(self.cells.len() * 2);
        for r in 0..self.rows {
            for c in 0..self.cols {
                if c > 0 {
                    out.push(' ');
                }
                write!(out, "{}", self.get(r, c)).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Adds one frame of detections to the probability map.
pub fn accumulate_probability<'a, I>(grid: &mut OccupancyGrid, detections: I)
where
    I: IntoIterator<Item = &'a BoundingBox>,
{
    for b in detections {
        grid.increment(b);
    }
    grid.frames_accumulated += 1;
}

/// True when the box center is outside the frame or within the border margin.
pub fn is_leaving_frame(frame_size: (f64, f64), b: &BoundingBox, cfg: &MapConfig) -> bool {
    let margin = f64::from(cfg.border_margin_cells) * CELL_SIZE;
    let (cx, cy) = b.center();
    let (w, h) = frame_size;
    cx < margin || cy < margin || cx > w - margin || cy > h - margin
}

/// Whether a track box lies in a region where objects have been observed.
///
/// The sum over covered cells of `count / frames_accumulated` is compared
/// against `thresh1`. Boxes leaving the frame are always outside; before the
/// warm-up period ends every other box is inside.
pub fn in_probability_map(grid: &OccupancyGrid, b: &BoundingBox, cfg: &MapConfig) -> bool {
    if is_leaving_frame(grid.frame_size, b, cfg) {
        return false;
    }
    if grid.frames_accumulated == 0 || grid.frames_accumulated < cfg.warmup_frames {
        return true;
    }
    let freq = grid.sum_under(b) as f64 / grid.frames_accumulated as f64;
    freq >= cfg.thresh1
}

/// Fresh grid with every given track box stamped once.
pub fn build_prediction_map<'a, I>(frame_size: (f64, f64), tracks: I) -> OccupancyGrid
where
    I: IntoIterator<Item = &'a BoundingBox>,
{
    let mut grid = OccupancyGrid::new(frame_size.0, frame_size.1);
    for b in tracks {
        grid.increment(b);
    }
    grid
}

/// Mean prediction-map value under the box, the box's own contribution
/// included. `None` when the box covers no cell.
pub fn crowding_ratio(pred_map: &OccupancyGrid, b: &BoundingBox) -> Option<f64> {
    let n = pred_map.covered_cell_count(b);
    if n == 0 {
        return None;
    }
    Some(pred_map.sum_under(b) as f64 / n as f64)
}

pub fn is_crowded(pred_map: &OccupancyGrid, b: &BoundingBox, cfg: &MapConfig) -> bool {
    crowding_ratio(pred_map, b).is_some_and(|r| r > cfg.thresh2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bb(l: f64, t: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(l, t, w, h).unwrap()
    }

    #[test]
    fn grid_dimensions_are_tenth_of_frame() {
        let g = OccupancyGrid::new(1920.0, 1080.0);
        assert_eq!((g.rows(), g.cols()), (108, 192));
        let g = OccupancyGrid::new(641.0, 95.0);
        assert_eq!((g.rows(), g.cols()), (10, 65));
    }

    #[test]
    fn accumulate_marks_covered_cells() {
        let mut g = OccupancyGrid::new(100.0, 100.0);
        let b = bb(0.0, 0.0, 20.0, 20.0);
        accumulate_probability(&mut g, [&b]);
        for r in 0..g.rows() {
            for c in 0..g.cols() {
                assert_eq!(g.get(r, c), u32::from(r < 2 && c < 2));
            }
        }
        for _ in 1..50 {
            accumulate_probability(&mut g, [&b]);
        }
        assert_eq!(g.get(1, 1), 50);
        assert_eq!(g.frames_accumulated(), 50);
    }

    #[test]
    fn one_frame_counts_once() {
        let mut g = OccupancyGrid::new(100.0, 100.0);
        let a = bb(0.0, 0.0, 15.0, 15.0);
        let b = bb(60.0, 60.0, 15.0, 15.0);
        accumulate_probability(&mut g, [&a, &b]);
        assert_eq!(g.frames_accumulated(), 1);
    }

    #[test]
    fn outside_box_contributes_nothing() {
        let mut g = OccupancyGrid::new(100.0, 100.0);
        accumulate_probability(&mut g, [&bb(200.0, 200.0, 10.0, 10.0)]);
        assert!(g.cells.iter().all(|&v| v == 0));
        assert_eq!(g.frames_accumulated(), 1);
    }

    #[test]
    fn probability_map_membership() {
        let cfg = MapConfig::default();
        let mut g = OccupancyGrid::new(200.0, 200.0);
        let busy = bb(50.0, 50.0, 20.0, 20.0);
        let empty = bb(120.0, 120.0, 20.0, 20.0);
        assert!(in_probability_map(&g, &busy, &cfg), "warm-up");
        for _ in 0..100 {
            accumulate_probability(&mut g, [&busy]);
        }
        assert!(in_probability_map(&g, &busy, &cfg));
        assert!(!in_probability_map(&g, &empty, &cfg));
        assert!(!in_probability_map(&g, &bb(195.0, 50.0, 20.0, 20.0), &cfg));
        assert!(!in_probability_map(&g, &bb(-30.0, 50.0, 20.0, 20.0), &cfg));
        // center 5 px from the left edge is within the one-cell margin
        assert!(!in_probability_map(&g, &bb(-5.0, 50.0, 20.0, 20.0), &cfg));
    }

    #[test]
    fn leaving_frame_overrides_warmup() {
        let g = OccupancyGrid::new(200.0, 200.0);
        let cfg = MapConfig::default();
        assert!(!in_probability_map(&g, &bb(250.0, 50.0, 20.0, 20.0), &cfg));
    }

    #[test]
    fn prediction_map_construction() {
        let g = build_prediction_map((100.0, 100.0), std::iter::empty());
        assert!(g.cells.iter().all(|&v| v == 0));
        let b = bb(10.0, 10.0, 20.0, 30.0);
        let g = build_prediction_map((100.0, 100.0), [&b]);
        assert_eq!(g.cells.iter().filter(|&&v| v == 1).count(), 6);
        let g = build_prediction_map((100.0, 100.0), [&b, &b]);
        assert_eq!(g.cells.iter().filter(|&&v| v == 2).count(), 6);
        assert_eq!(g.cells.iter().sum::<u32>(), 12);
    }

    #[test]
    fn crowding_examples() {
        let cfg = MapConfig::default();
        let a = bb(0.0, 0.0, 50.0, 20.0); // 5 x 2 = 10 cells
        let map = build_prediction_map((100.0, 100.0), [&a]);
        assert_eq!(crowding_ratio(&map, &a), Some(1.0));
        assert!(!is_crowded(&map, &a, &cfg));

        let map = build_prediction_map((100.0, 100.0), [&a, &a]);
        assert_eq!(crowding_ratio(&map, &a), Some(2.0));
        assert!(is_crowded(&map, &a, &cfg));

        // `b` covers exactly 2 of a's 10 cells (column 4, rows 0..2).
        let b = bb(40.0, 0.0, 30.0, 20.0);
        let map = build_prediction_map((100.0, 100.0), [&a, &b]);
        let mut shared = 0;
        let (ra, ca) = map.covered_cells(&a);
        let (rb, cb) = map.covered_cells(&b);
        for r in ra.clone() {
            for c in ca.clone() {
                if rb.contains(&r) && cb.contains(&c) {
                    shared += 1;
                }
            }
        }
        assert_eq!(shared, 2);
        assert_eq!(crowding_ratio(&map, &a), Some(1.2));
        assert!(!is_crowded(&map, &a, &cfg));

        assert!(!is_crowded(&map, &bb(500.0, 500.0, 10.0, 10.0), &cfg));
    }

    /// Cells reached by any unit pixel whose square overlaps the box with
    /// positive area.
    fn raster_cells(b: &BoundingBox, rows: usize, cols: usize) -> Vec<(usize, usize)> {
        let mut out = std::collections::BTreeSet::new();
        let px_lo = b.left().floor() as i64 - 1;
        let px_hi = b.right().ceil() as i64 + 1;
        let py_lo = b.top().floor() as i64 - 1;
        let py_hi = b.bottom().ceil() as i64 + 1;
        for py in py_lo..=py_hi {
            for px in px_lo..=px_hi {
                let (x, y) = (px as f64, py as f64);
                let overlaps = x < b.right() && x + 1.0 > b.left() && y < b.bottom() && y + 1.0 > b.top();
                if !overlaps || px < 0 || py < 0 {
                    continue;
                }
                let (r, c) = ((py / 10) as usize, (px / 10) as usize);
                if r < rows && c < cols {
                    out.insert((r, c));
                }
            }
        }
        out.into_iter().collect()
    }

    #[test]
    fn covered_cells_match_pixel_raster() {
        let g = OccupancyGrid::new(320.0, 240.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            // Integer-aligned boxes so the pixel raster is exact.
            let b = bb(
                rng.random_range(-40..330) as f64,
                rng.random_range(-40..250) as f64,
                rng.random_range(1..90) as f64,
                rng.random_range(1..90) as f64,
            );
            let (rr, cc) = g.covered_cells(&b);
            let mut mine = Vec::new();
            for r in rr {
                for c in cc.clone() {
                    mine.push((r, c));
                }
            }
            assert_eq!(mine, raster_cells(&b, g.rows(), g.cols()), "box {b}");
        }
    }

    #[test]
    fn dump_is_row_major_text() {
        let b = bb(0.0, 0.0, 10.0, 10.0);
        let g = build_prediction_map((30.0, 20.0), [&b]);
        assert_eq!(g.dump(), "1 0 0\n0 0 0\n");
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (-20.0..220.0f64, -20.0..220.0f64, 1.0..60.0f64, 1.0..60.0f64)
            .prop_map(|(l, t, w, h)| bb(l, t, w, h))
    }

    proptest! {
        #[test]
        fn accumulation_is_order_independent(boxes in prop::collection::vec(arb_box(), 0..8)) {
            let mut a = OccupancyGrid::new(200.0, 200.0);
            let mut b = a.clone();
            accumulate_probability(&mut a, boxes.iter());
            accumulate_probability(&mut b, boxes.iter().rev());
            prop_assert_eq!(a, b);
        }

        #[test]
        fn membership_is_monotone(history in prop::collection::vec(arb_box(), 1..40), extra in arb_box(), probe in arb_box()) {
            let cfg = MapConfig { warmup_frames: 0, ..MapConfig::default() };
            let mut g = OccupancyGrid::new(200.0, 200.0);
            for b in &history {
                accumulate_probability(&mut g, [b]);
            }
            let before = in_probability_map(&g, &probe, &cfg);
            // More detections in the same frame count can only raise the sum.
            let mut more = g.clone();
            more.increment(&extra);
            prop_assert!(!before || in_probability_map(&more, &probe, &cfg));
        }

        #[test]
        fn lone_track_is_never_crowded(b in arb_box(), thresh2 in 1.0001..3.0f64) {
            let cfg = MapConfig { thresh2, ..MapConfig::default() };
            let map = build_prediction_map((200.0, 200.0), [&b]);
            prop_assert!(!is_crowded(&map, &b, &cfg));
        }
    }
}
