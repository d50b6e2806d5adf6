//! MOT-Challenge text files, the binary embedding sidecar and `seqinfo.ini`.
//!
//! Detection and result rows share the MOT layout
//! `frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z`. Ground-truth rows
//! reuse the first six columns and carry a consider flag, a class and a
//! visibility in columns seven to nine.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::association::Descriptor;
use crate::error::FormatError;
use crate::geometry::BoundingBox;

/// Confidence below which detections are dropped on read.
pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.25;

/// Four-byte tag at the start of an embedding sidecar.
pub const SIDECAR_MAGIC: &[u8; 4] = b"MTEB";

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub descriptor: Option<Descriptor>,
    /// Position of the row among all rows of its frame in the source file,
    /// before confidence filtering.
    pub source_index: usize,
}

impl Detection {
    pub fn new(bbox: BoundingBox, confidence: f64) -> Self {
        Self {
            bbox,
            confidence,
            descriptor: None,
            source_index: 0,
        }
    }

    pub fn with_descriptor(mut self, d: Descriptor) -> Self {
        self.descriptor = Some(d);
        self
    }
}

/// All detections of one frame, in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameDetections {
    pub frame: u32,
    pub entries: Vec<Detection>,
}

impl FrameDetections {
    pub fn new(frame: u32, entries: Vec<Detection>) -> Self {
        Self { frame, entries }
    }

    pub fn empty(frame: u32) -> Self {
        Self {
            frame,
            entries: Vec::new(),
        }
    }
}

/// One parsed MOT row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotRow {
    pub frame: u32,
    pub id: i64,
    pub bbox: BoundingBox,
    /// Column 7: detector confidence, or the consider flag in ground truth.
    pub confidence: f64,
    /// Column 8 when present; the object class in ground truth.
    pub class: Option<i64>,
    /// Column 9 when present; visibility in ground truth.
    pub visibility: Option<f64>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, line: usize, name: &str) -> Result<T, FormatError> {
    let raw = field.ok_or_else(|| FormatError::Row {
        line,
        reason: format!("missing column `{name}`"),
    })?;
    raw.trim().parse().map_err(|_| FormatError::Row {
        line,
        reason: format!("column `{name}`: cannot parse {raw:?}"),
    })
}

/// Parses MOT rows. Blank lines are skipped; at least six columns are
/// required and column 7 defaults to 1 when absent.
pub fn parse_mot_rows(text: &str) -> Result<Vec<MotRow>, FormatError> {
    let mut rows = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split(',').collect();
        if cols.len() < 6 {
            return Err(FormatError::Row {
                line,
                reason: format!("expected at least 6 columns, found {}", cols.len()),
            });
        }
        let frame: i64 = parse_field(cols.first().copied(), line, "frame")?;
        if frame < 1 || frame > i64::from(u32::MAX) {
            return Err(FormatError::Row {
                line,
                reason: format!("frame index {frame} out of range"),
            });
        }
        let id: f64 = parse_field(cols.get(1).copied(), line, "id")?;
        let l: f64 = parse_field(cols.get(2).copied(), line, "bb_left")?;
        let t: f64 = parse_field(cols.get(3).copied(), line, "bb_top")?;
        let w: f64 = parse_field(cols.get(4).copied(), line, "bb_width")?;
        let h: f64 = parse_field(cols.get(5).copied(), line, "bb_height")?;
        let confidence = match cols.get(6) {
            Some(c) => parse_field(Some(c), line, "conf")?,
            None => 1.0,
        };
        let class = match cols.get(7) {
            Some(c) => Some(parse_field::<f64>(Some(c), line, "class")? as i64),
            None => None,
        };
        let visibility = match cols.get(8) {
            Some(c) => Some(parse_field(Some(c), line, "visibility")?),
            None => None,
        };
        let bbox = BoundingBox::new(l, t, w, h).map_err(|e| FormatError::Row {
            line,
            reason: e.to_string(),
        })?;
        rows.push(MotRow {
            frame: frame as u32,
            id: id as i64,
            bbox,
            confidence,
            class,
            visibility,
        });
    }
    Ok(rows)
}

pub fn read_mot_rows(path: &Path) -> Result<Vec<MotRow>, FormatError> {
    parse_mot_rows(&fs::read_to_string(path).map_err(io_err(path))?)
}

/// Parsed detection file: confidence-filtered frames plus the raw per-frame
/// row counts the embedding sidecar is aligned against.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionSet {
    /// Frames with at least one raw row, ascending.
    pub frames: Vec<FrameDetections>,
    pub raw_counts: BTreeMap<u32, usize>,
}

impl DetectionSet {
    pub fn from_rows(rows: &[MotRow], min_confidence: f64) -> Self {
        let mut by_frame: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
        let mut raw_counts: BTreeMap<u32, usize> = BTreeMap::new();
        for r in rows {
            let n = raw_counts.entry(r.frame).or_default();
            let source_index = *n;
            *n += 1;
            let dets = by_frame.entry(r.frame).or_default();
            if r.confidence >= min_confidence {
                dets.push(Detection {
                    bbox: r.bbox,
                    confidence: r.confidence,
                    descriptor: None,
                    source_index,
                });
            }
        }
        Self {
            frames: by_frame
                .into_iter()
                .map(|(frame, entries)| FrameDetections { frame, entries })
                .collect(),
            raw_counts,
        }
    }

    /// Attaches descriptors by `(frame, source_index)`.
    pub fn attach(&mut self, embeddings: &EmbeddingTable) -> Result<(), FormatError> {
        for f in &mut self.frames {
            let raw = self.raw_counts.get(&f.frame).copied().unwrap_or(0);
            let descs = embeddings.get(&f.frame).map_or(&[][..], Vec::as_slice);
            if descs.len() != raw {
                return Err(FormatError::CountMismatch {
                    frame: f.frame,
                    detections: raw,
                    descriptors: descs.len(),
                });
            }
            for d in &mut f.entries {
                d.descriptor = Some(descs[d.source_index].clone());
            }
        }
        Ok(())
    }

    pub fn last_frame(&self) -> u32 {
        self.raw_counts.keys().next_back().copied().unwrap_or(0)
    }
}

/// Reads a MOT detection file, dropping rows below `min_confidence`.
/// Frames come out ascending regardless of row order in the file.
pub fn read_mot_detections(path: &Path, min_confidence: f64) -> Result<DetectionSet, FormatError> {
    Ok(DetectionSet::from_rows(&read_mot_rows(path)?, min_confidence))
}

/// Descriptors per frame, indexed by raw row position within the frame.
pub type EmbeddingTable = BTreeMap<u32, Vec<Descriptor>>;

/// One sidecar row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub frame: u32,
    pub index: u32,
    pub values: Vec<f32>,
}

/// Serializes the sidecar: magic, `u32` dimension, `u64` row count, then per
/// row `u32` frame, `u32` index-within-frame and the floats, all little-endian.
pub fn encode_embeddings(dim: usize, rows: &[EmbeddingRow]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + rows.len() * (8 + 4 * dim));
    out.extend_from_slice(SIDECAR_MAGIC);
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(rows.len() as u64).to_le_bytes());
    for r in rows {
        debug_assert_eq!(r.values.len(), dim);
        out.extend_from_slice(&r.frame.to_le_bytes());
        out.extend_from_slice(&r.index.to_le_bytes());
        for v in &r.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_embeddings(path: &Path, dim: usize, rows: &[EmbeddingRow]) -> Result<(), FormatError> {
    fs::write(path, encode_embeddings(dim, rows)).map_err(io_err(path))
}

fn take<'a>(buf: &mut &'a [u8], n: usize) -> Result<&'a [u8], FormatError> {
    if buf.len() < n {
        return Err(FormatError::Sidecar("truncated file".into()));
    }
    let (head, tail) = buf.split_at(n);
    *buf = tail;
    Ok(head)
}

fn take_u32(buf: &mut &[u8]) -> Result<u32, FormatError> {
    Ok(u32::from_le_bytes(take(buf, 4)?.try_into().unwrap()))
}

/// Decodes a sidecar without normalizing.
pub fn decode_embeddings(bytes: &[u8]) -> Result<(usize, Vec<EmbeddingRow>), FormatError> {
    let mut buf = bytes;
    if take(&mut buf, 4)? != SIDECAR_MAGIC {
        return Err(FormatError::Sidecar("bad magic".into()));
    }
    let dim = take_u32(&mut buf)? as usize;
    if dim == 0 {
        return Err(FormatError::Sidecar("zero descriptor dimension".into()));
    }
    let count = u64::from_le_bytes(take(&mut buf, 8)?.try_into().unwrap());
    let row_bytes = 8 + 4 * dim;
    if (buf.len() as u64) != count.saturating_mul(row_bytes as u64) {
        return Err(FormatError::Sidecar(format!(
            "header announces {count} rows of dimension {dim}, body has {} bytes",
            buf.len()
        )));
    }
    let mut rows = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let frame = take_u32(&mut buf)?;
        let index = take_u32(&mut buf)?;
        let values = take(&mut buf, 4 * dim)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        rows.push(EmbeddingRow {
            frame,
            index,
            values,
        });
    }
    Ok((dim, rows))
}

/// Loads a sidecar, normalizes every descriptor and checks that each frame
/// carries exactly `expected_counts[frame]` descriptors with contiguous
/// indices.
pub fn read_embeddings(
    path: &Path,
    expected_counts: &BTreeMap<u32, usize>,
) -> Result<EmbeddingTable, FormatError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    embeddings_from_bytes(&bytes, expected_counts)
}

pub fn embeddings_from_bytes(
    bytes: &[u8],
    expected_counts: &BTreeMap<u32, usize>,
) -> Result<EmbeddingTable, FormatError> {
    let (_, rows) = decode_embeddings(bytes)?;
    let mut slots: BTreeMap<u32, Vec<Option<Descriptor>>> = expected_counts
        .iter()
        .map(|(&f, &n)| (f, vec![None; n]))
        .collect();
    for r in rows {
        let Some(frame_slots) = slots.get_mut(&r.frame) else {
            return Err(FormatError::CountMismatch {
                frame: r.frame,
                detections: 0,
                descriptors: 1,
            });
        };
        let n = frame_slots.len();
        let slot = frame_slots
            .get_mut(r.index as usize)
            .ok_or(FormatError::CountMismatch {
                frame: r.frame,
                detections: n,
                descriptors: r.index as usize + 1,
            })?;
        if slot.is_some() {
            return Err(FormatError::Sidecar(format!(
                "frame {}: duplicate index {}",
                r.frame, r.index
            )));
        }
        let d = Descriptor::new(r.values).map_err(|e| {
            FormatError::Sidecar(format!("frame {} index {}: {e}", r.frame, r.index))
        })?;
        *slot = Some(d);
    }
    let mut table = EmbeddingTable::new();
    for (frame, frame_slots) in slots {
        let expected = frame_slots.len();
        let present: Vec<Descriptor> = frame_slots.into_iter().flatten().collect();
        if present.len() != expected {
            return Err(FormatError::CountMismatch {
                frame,
                detections: expected,
                descriptors: present.len(),
            });
        }
        table.insert(frame, present);
    }
    Ok(table)
}

/// One output row of the tracker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultRow {
    pub frame: u32,
    pub id: u64,
    pub bbox: BoundingBox,
}

/// Formats result rows frame-major, id-ascending, with two decimals.
pub fn format_mot_results(rows: &[ResultRow]) -> String {
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by_key(|r| (r.frame, r.id));
    let mut out = String::with_capacity(rows.len() * 48);
    for r in sorted {
        let [l, t, w, h] = r.bbox.to_tlwh();
        writeln!(out, "{},{},{:.2},{:.2},{:.2},{:.2},1,-1,-1,-1", r.frame, r.id, l, t, w, h).unwrap();
    }
    out
}

pub fn write_mot_results(path: &Path, rows: &[ResultRow]) -> Result<(), FormatError> {
    fs::write(path, format_mot_results(rows)).map_err(io_err(path))
}

/// Writes arbitrary MOT rows with the given trailing columns.
pub fn write_mot_rows(mut w: impl Write, rows: &[MotRow], gt_style: bool) -> io::Result<()> {
    for r in rows {
        let [l, t, bw, bh] = r.bbox.to_tlwh();
        if gt_style {
            writeln!(
                w,
                "{},{},{:.2},{:.2},{:.2},{:.2},{},{},{}",
                r.frame,
                r.id,
                l,
                t,
                bw,
                bh,
                r.confidence,
                r.class.unwrap_or(1),
                r.visibility.unwrap_or(1.0)
            )?;
        } else {
            writeln!(
                w,
                "{},{},{:.2},{:.2},{:.2},{:.2},{},-1,-1,-1",
                r.frame, r.id, l, t, bw, bh, r.confidence
            )?;
        }
    }
    Ok(())
}

/// Frame geometry and length of a sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceMeta {
    pub frame_width: f64,
    pub frame_height: f64,
    pub frame_count: u32,
    pub frame_rate: f64,
}

impl SequenceMeta {
    pub fn new(frame_width: f64, frame_height: f64, frame_count: u32) -> Self {
        Self {
            frame_width,
            frame_height,
            frame_count,
            frame_rate: 30.0,
        }
    }

    pub fn frame_size(&self) -> (f64, f64) {
        (self.frame_width, self.frame_height)
    }
}

/// Partial metadata from a `seqinfo.ini`; absent keys stay `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SeqInfo {
    pub frame_width: Option<f64>,
    pub frame_height: Option<f64>,
    pub frame_count: Option<u32>,
    pub frame_rate: Option<f64>,
}

pub fn parse_seqinfo(text: &str) -> Result<SeqInfo, FormatError> {
    let mut info = SeqInfo::default();
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('[') || line.starts_with(';') || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            continue;
        };
        let v = v.trim();
        let bad = |key: &str| FormatError::SeqInfo(format!("`{key}` has invalid value {v:?}"));
        match k.trim().to_ascii_lowercase().as_str() {
            "imwidth" => info.frame_width = Some(v.parse().map_err(|_| bad("imWidth"))?),
            "imheight" => info.frame_height = Some(v.parse().map_err(|_| bad("imHeight"))?),
            "seqlength" => info.frame_count = Some(v.parse().map_err(|_| bad("seqLength"))?),
            "framerate" => info.frame_rate = Some(v.parse().map_err(|_| bad("frameRate"))?),
            _ => {}
        }
    }
    Ok(info)
}

pub fn read_seqinfo(path: &Path) -> Result<SeqInfo, FormatError> {
    parse_seqinfo(&fs::read_to_string(path).map_err(io_err(path))?)
}

pub fn format_seqinfo(name: &str, meta: &SequenceMeta) -> String {
    format!(
        "[Sequence]\nname={name}\nframeRate={}\nseqLength={}\nimWidth={}\nimHeight={}\n",
        meta.frame_rate, meta.frame_count, meta.frame_width, meta.frame_height
    )
}
