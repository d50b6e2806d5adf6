//! Deterministic synthetic sequences: ground truth, corrupted detections
//! and appearance embeddings.
//!
//! Agents move along piecewise-linear center waypoints. Detections are the
//! ground-truth boxes with Gaussian jitter, minus occlusion windows, with
//! deformation windows shrinking or growing the box area around a fixed
//! center, plus Poisson false positives. Embeddings are a per-identity seed
//! vector plus Gaussian noise.
//!
//! Several agent entries may share an `id`; together they describe one
//! identity that leaves the scene and comes back.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::FormatError;
use crate::formats::{
    encode_embeddings, format_seqinfo, write_mot_rows, DetectionSet, EmbeddingRow, MotRow,
    SequenceMeta,
};
use crate::geometry::BoundingBox;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub frame: u32,
    /// Box center.
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: u64,
    /// Ordered by frame; the agent exists from the first to the last.
    pub waypoints: Vec<Waypoint>,
    pub width: f64,
    pub height: f64,
    /// Appearance seed; drawn at random when absent.
    #[serde(default)]
    pub embedding: Option<Vec<f32>>,
}

impl Agent {
    pub fn first_frame(&self) -> u32 {
        self.waypoints.first().map_or(0, |w| w.frame)
    }

    pub fn last_frame(&self) -> u32 {
        self.waypoints.last().map_or(0, |w| w.frame)
    }

    /// Interpolated ground-truth box, `None` outside the agent's lifetime.
    pub fn box_at(&self, frame: u32) -> Option<BoundingBox> {
        let (x, y) = match self.waypoints.as_slice() {
            [] => return None,
            [only] if only.frame == frame => (only.x, only.y),
            wps => {
                let k = wps.windows(2).find(|w| w[0].frame <= frame && frame <= w[1].frame)?;
                let (a, b) = (k[0], k[1]);
                let t = f64::from(frame - a.frame) / f64::from(b.frame - a.frame);
                (a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
            }
        };
        BoundingBox::from_center(x, y, self.width, self.height).ok()
    }
}

/// Detections of `agent` are suppressed on frames `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcclusionWindow {
    pub agent: u64,
    pub start: u32,
    pub end: u32,
}

/// Detections of `agent` on frames `start..=end` have their area scaled by
/// `factor`, center kept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeformationWindow {
    pub agent: u64,
    pub start: u32,
    pub end: u32,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub frame_width: f64,
    pub frame_height: f64,
    pub frame_count: u32,
    pub agents: Vec<Agent>,
    #[serde(default)]
    pub occlusions: Vec<OcclusionWindow>,
    #[serde(default)]
    pub deformations: Vec<DeformationWindow>,
    /// Std of the Gaussian jitter on detection center and size, px.
    #[serde(default)]
    pub jitter_std: f64,
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    #[serde(default)]
    pub embedding_noise_std: f64,
    /// Mean false positives per frame.
    #[serde(default)]
    pub false_positive_rate: f64,
    pub seed: u64,
}

fn default_embedding_dim() -> usize {
    32
}

impl ScenarioSpec {
    pub fn meta(&self) -> SequenceMeta {
        SequenceMeta::new(self.frame_width, self.frame_height, self.frame_count)
    }

    pub fn from_toml(text: &str) -> Result<Self, FormatError> {
        let spec: Self = toml::from_str(text).map_err(|e| FormatError::Row {
            line: 0,
            reason: format!("scenario spec: {e}"),
        })?;
        spec.check()?;
        Ok(spec)
    }

    pub fn read(path: &Path) -> Result<Self, FormatError> {
        let text = fs::read_to_string(path).map_err(|source| FormatError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    fn check(&self) -> Result<(), FormatError> {
        let bad = |reason: String| FormatError::Row { line: 0, reason };
        for a in &self.agents {
            if a.waypoints.is_empty() {
                return Err(bad(format!("agent {} has no waypoints", a.id)));
            }
            if a.waypoints.windows(2).any(|w| w[0].frame >= w[1].frame) {
                return Err(bad(format!("agent {} waypoints are not increasing", a.id)));
            }
            for w in &a.waypoints {
                let inside = (0.0..=self.frame_width).contains(&w.x)
                    && (0.0..=self.frame_height).contains(&w.y)
                    && (1..=self.frame_count).contains(&w.frame);
                if !inside {
                    return Err(bad(format!("agent {} waypoint outside the sequence", a.id)));
                }
            }
            if !(a.width > 0.0 && a.height > 0.0) {
                return Err(bad(format!("agent {} has an empty box", a.id)));
            }
        }
        Ok(())
    }
}

/// One generated sequence, held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub meta: SequenceMeta,
    pub gt: Vec<MotRow>,
    pub detections: Vec<MotRow>,
    pub embedding_dim: usize,
    pub embeddings: Vec<EmbeddingRow>,
    /// Appearance seed per identity.
    pub seeds: BTreeMap<u64, Vec<f32>>,
}

impl SyntheticSequence {
    pub fn gt_text(&self) -> String {
        rows_text(&self.gt, true)
    }

    pub fn det_text(&self) -> String {
        rows_text(&self.detections, false)
    }

    pub fn embedding_bytes(&self) -> Vec<u8> {
        encode_embeddings(self.embedding_dim, &self.embeddings)
    }

    /// Parsed detections as the tracker would read them from disk, with or
    /// without descriptors.
    pub fn detection_set(&self, with_embeddings: bool) -> Result<DetectionSet, FormatError> {
        let rows = crate::formats::parse_mot_rows(&self.det_text())?;
        let mut set = DetectionSet::from_rows(&rows, 0.0);
        if with_embeddings {
            let table = crate::formats::embeddings_from_bytes(&self.embedding_bytes(), &set.raw_counts)?;
            set.attach(&table)?;
        }
        Ok(set)
    }

    /// Writes `gt.txt`, `det.txt`, `emb.bin` and `seqinfo.ini` into `dir`.
    pub fn write_to_dir(&self, dir: &Path, name: &str) -> Result<(), FormatError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| FormatError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let files: [(&str, Vec<u8>); 4] = [
            ("gt.txt", self.gt_text().into_bytes()),
            ("det.txt", self.det_text().into_bytes()),
            ("emb.bin", self.embedding_bytes()),
            ("seqinfo.ini", format_seqinfo(name, &self.meta).into_bytes()),
        ];
        for (file, bytes) in files {
            let path = dir.join(file);
            fs::write(&path, bytes).map_err(io(&path))?;
        }
        Ok(())
    }
}

fn rows_text(rows: &[MotRow], gt_style: bool) -> String {
    let mut buf = Vec::new();
    write_mot_rows(&mut buf, rows, gt_style).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Seed vector plus isotropic noise, renormalized.
pub fn noisy_embedding(seed: &[f32], std: f64, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let v: Vec<f32> = seed
        .iter()
        .map(|&s| s + (std * rng.sample::<f64, _>(StandardNormal)) as f32)
        .collect();
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if n > 1e-6 {
        v.into_iter().map(|x| x / n).collect()
    } else {
        seed.to_vec()
    }
}

fn in_window(frame: u32, start: u32, end: u32) -> bool {
    (start..=end).contains(&frame)
}

pub fn generate(spec: &ScenarioSpec) -> SyntheticSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.embedding_dim;

    let mut seeds: BTreeMap<u64, Vec<f32>> = BTreeMap::new();
    for a in &spec.agents {
        if let Some(e) = &a.embedding {
            seeds.insert(a.id, e.clone());
        }
    }
    for a in &spec.agents {
        seeds.entry(a.id).or_insert_with(|| unit_gaussian(&mut rng, dim));
    }

    let jitter = Normal::new(0.0, spec.jitter_std.max(0.0)).expect("finite std");
    let fp_count = (spec.false_positive_rate > 0.0)
        .then(|| Poisson::new(spec.false_positive_rate).expect("positive rate"));

    let mut gt = Vec::new();
    let mut detections = Vec::new();
    let mut embeddings = Vec::new();
    for frame in 1..=spec.frame_count {
        let mut index = 0u32;
        let mut emit = |bbox: BoundingBox, values: Vec<f32>, detections: &mut Vec<MotRow>| {
            detections.push(MotRow {
                frame,
                id: -1,
                bbox,
                confidence: 1.0,
                class: None,
                visibility: None,
            });
            embeddings.push(EmbeddingRow {
                frame,
                index,
                values,
            });
            index += 1;
        };
        for a in &spec.agents {
            let Some(truth) = a.box_at(frame) else {
                continue;
            };
            gt.push(MotRow {
                frame,
                id: a.id as i64,
                bbox: truth,
                confidence: 1.0,
                class: Some(1),
                visibility: Some(1.0),
            });
            let occluded = spec
                .occlusions
                .iter()
                .any(|o| o.agent == a.id && in_window(frame, o.start, o.end));
            if occluded {
                continue;
            }
            let scale = spec
                .deformations
                .iter()
                .filter(|d| d.agent == a.id && in_window(frame, d.start, d.end))
                .map(|d| d.factor.sqrt())
                .product::<f64>();
            let (cx, cy) = truth.center();
            let mut draw = || {
                if spec.jitter_std > 0.0 {
                    jitter.sample(&mut rng)
                } else {
                    0.0
                }
            };
            let (dx, dy, dw, dh) = (draw(), draw(), draw(), draw());
            let w = ((a.width + dw) * scale).max(1.0);
            let h = ((a.height + dh) * scale).max(1.0);
            let bbox = BoundingBox::from_center(cx + dx, cy + dy, w, h).expect("finite box");
            let values = noisy_embedding(&seeds[&a.id], spec.embedding_noise_std, &mut rng);
            emit(bbox, values, &mut detections);
        }
        let n_fp = fp_count.map_or(0, |p| p.sample(&mut rng) as u32);
        for _ in 0..n_fp {
            let w = rng.random_range(20.0..60.0);
            let h = rng.random_range(50.0..150.0);
            let l = rng.random_range(0.0..(spec.frame_width - w).max(1.0));
            let t = rng.random_range(0.0..(spec.frame_height - h).max(1.0));
            let bbox = BoundingBox::new(l, t, w, h).expect("finite box");
            let values = unit_gaussian(&mut rng, dim);
            emit(bbox, values, &mut detections);
        }
    }

    SyntheticSequence {
        meta: spec.meta(),
        gt,
        detections,
        embedding_dim: dim,
        embeddings,
        seeds,
    }
}

fn wp(frame: u32, x: f64, y: f64) -> Waypoint {
    Waypoint { frame, x, y }
}

fn agent(id: u64, waypoints: Vec<Waypoint>, width: f64, height: f64) -> Agent {
    Agent {
        id,
        waypoints,
        width,
        height,
        embedding: None,
    }
}

/// Two agents walking towards each other on nearly the same line; agent 2
/// passes behind agent 1 and is undetected for five frames around the
/// crossing.
pub fn occlusion_5() -> ScenarioSpec {
    ScenarioSpec {
        name: "occlusion-5".into(),
        frame_width: 1280.0,
        frame_height: 720.0,
        frame_count: 100,
        agents: vec![
            agent(1, vec![wp(1, 200.0, 400.0), wp(100, 794.0, 400.0)], 40.0, 100.0),
            agent(2, vec![wp(1, 800.0, 390.0), wp(100, 206.0, 390.0)], 40.0, 100.0),
        ],
        occlusions: vec![OcclusionWindow {
            agent: 2,
            start: 49,
            end: 53,
        }],
        deformations: Vec::new(),
        jitter_std: 1.0,
        embedding_dim: 32,
        embedding_noise_std: 0.05,
        false_positive_rate: 0.0,
        seed: 1,
    }
}

/// Two agents crossing; agent 1's detections shrink to 65% of their area
/// while they overlap.
pub fn crowd_cross() -> ScenarioSpec {
    ScenarioSpec {
        name: "crowd-cross".into(),
        frame_width: 1280.0,
        frame_height: 720.0,
        frame_count: 100,
        agents: vec![
            agent(1, vec![wp(1, 300.0, 400.0), wp(100, 696.0, 400.0)], 50.0, 120.0),
            agent(2, vec![wp(1, 700.0, 340.0), wp(100, 304.0, 340.0)], 50.0, 120.0),
        ],
        occlusions: Vec::new(),
        deformations: vec![DeformationWindow {
            agent: 1,
            start: 44,
            end: 57,
            factor: 0.65,
        }],
        jitter_std: 3.0,
        embedding_dim: 32,
        embedding_noise_std: 0.05,
        false_positive_rate: 0.0,
        seed: 2,
    }
}

/// Agent 1 walks out of the left edge and comes back 30 frames later;
/// agent 2 walks elsewhere the whole time.
pub fn exit_reenter() -> ScenarioSpec {
    ScenarioSpec {
        name: "exit-reenter".into(),
        frame_width: 1280.0,
        frame_height: 720.0,
        frame_count: 120,
        agents: vec![
            agent(1, vec![wp(1, 300.0, 360.0), wp(41, 4.0, 360.0)], 40.0, 100.0),
            agent(1, vec![wp(72, 4.0, 380.0), wp(120, 300.0, 380.0)], 40.0, 100.0),
            agent(2, vec![wp(1, 900.0, 200.0), wp(120, 1000.0, 500.0)], 40.0, 100.0),
        ],
        occlusions: Vec::new(),
        deformations: Vec::new(),
        jitter_std: 1.0,
        embedding_dim: 32,
        embedding_noise_std: 0.05,
        false_positive_rate: 0.0,
        seed: 3,
    }
}

/// Five overlapping, nearly static agents.
pub fn static_crowd() -> ScenarioSpec {
    let agents = (0..5)
        .map(|i| {
            let x = 500.0 + 25.0 * i as f64;
            let y = 360.0 + if i % 2 == 0 { 0.0 } else { 15.0 };
            agent(i + 1, vec![wp(1, x, y), wp(100, x + 4.0, y - 3.0)], 40.0, 100.0)
        })
        .collect();
    ScenarioSpec {
        name: "static-crowd".into(),
        frame_width: 1280.0,
        frame_height: 720.0,
        frame_count: 100,
        agents,
        occlusions: Vec::new(),
        deformations: Vec::new(),
        jitter_std: 1.0,
        embedding_dim: 32,
        embedding_noise_std: 0.05,
        false_positive_rate: 0.0,
        seed: 4,
    }
}

/// Twenty agents wandering for 1000 frames, with false positives.
pub fn swarm() -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let agents = (1..=20)
        .map(|id| {
            let waypoints = (0..=10)
                .map(|k| {
                    let frame = if k == 0 { 1 } else { k * 100 };
                    wp(frame, rng.random_range(60.0..1220.0), rng.random_range(80.0..640.0))
                })
                .collect();
            agent(id, waypoints, rng.random_range(30.0..50.0), rng.random_range(80.0..130.0))
        })
        .collect();
    ScenarioSpec {
        name: "swarm".into(),
        frame_width: 1280.0,
        frame_height: 720.0,
        frame_count: 1000,
        agents,
        occlusions: Vec::new(),
        deformations: Vec::new(),
        jitter_std: 2.0,
        embedding_dim: 32,
        embedding_noise_std: 0.05,
        false_positive_rate: 0.5,
        seed: 5,
    }
}

/// Accepts `S1`..`S4` or the preset names, plus `swarm`.
pub fn preset(name: &str) -> Option<ScenarioSpec> {
    match name.to_ascii_lowercase().as_str() {
        "s1" | "occlusion-5" => Some(occlusion_5()),
        "s2" | "crowd-cross" => Some(crowd_cross()),
        "s3" | "exit-reenter" => Some(exit_reenter()),
        "s4" | "static-crowd" => Some(static_crowd()),
        "swarm" => Some(swarm()),
        _ => None,
    }
}

pub const PRESET_NAMES: [&str; 5] = ["occlusion-5", "crowd-cross", "exit-reenter", "static-crowd", "swarm"];
