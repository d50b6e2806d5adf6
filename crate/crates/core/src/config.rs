//! Flat `key = value` configuration file (TOML syntax).
//!
//! Every key is optional; missing keys keep their defaults and unknown keys
//! are rejected. Example:
//!
//! ```text
//! thresh2 = 1.5
//! coef1 = 12
//! gallery_capacity = 50
//! ```

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::association::AssociationConfig;
use crate::error::{ConfigError, FormatError};
use crate::filtering::FilterConfig;
use crate::formats::DEFAULT_MIN_CONFIDENCE;
use crate::kalman::{CoefficientSet, NoiseConfig};
use crate::maps::MapConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Consecutive hits that promote a tentative track to normal.
    pub n_init: u32,
    /// Frames a track may coast as predicted before it is parked as
    /// disappeared. With 0, lost normal tracks skip the predicted state.
    pub max_predicted_age: u32,
    /// Maximum number of disappeared tracks kept for re-identification.
    pub repository_capacity: usize,
    /// Frames after which a disappeared track is dropped.
    pub repository_max_age: u32,
    /// Emit predicted tracks in the results.
    pub emit_predicted: bool,
    /// Confirm tracks born on the first processed frame immediately.
    pub activate_first_frame: bool,
    /// Detections below this confidence are dropped when reading files.
    pub min_confidence: f64,
    pub noise: NoiseConfig,
    pub maps: MapConfig,
    pub association: AssociationConfig,
    pub filters: FilterConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_init: 3,
            max_predicted_age: 60,
            repository_capacity: 200,
            repository_max_age: 900,
            emit_predicted: true,
            activate_first_frame: true,
            min_confidence: DEFAULT_MIN_CONFIDENCE,
            noise: NoiseConfig::default(),
            maps: MapConfig::default(),
            association: AssociationConfig::default(),
            filters: FilterConfig::default(),
        }
    }
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

fn check_gate(key: &'static str, v: f64, upper_closed: bool) -> Result<(), ConfigError> {
    let ok = v > 0.0 && if upper_closed { v <= 1.0 } else { v < 1.0 };
    if ok {
        Ok(())
    } else {
        Err(invalid(key, format!("{v} is outside the allowed range")))
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_init < 1 {
            return Err(invalid("n_init", "must be at least 1"));
        }
        if !self.noise.normal.is_valid() {
            return Err(invalid("coef1", "need coef1 >= coef2 >= coef3 >= 1"));
        }
        if !self.noise.predicted.is_valid() {
            return Err(invalid("predicted_coef1", "need coef1 >= coef2 >= coef3 >= 1"));
        }
        if !(0.0..1.0).contains(&self.noise.beta) {
            return Err(invalid("beta", "must lie in [0, 1)"));
        }
        if !(self.noise.frame_interval > 0.0) {
            return Err(invalid("frame_interval", "must be positive"));
        }
        if !(self.maps.thresh1 >= 0.0) {
            return Err(invalid("thresh1", "must be non-negative"));
        }
        if !(self.maps.thresh2 >= 1.0) {
            return Err(invalid("thresh2", "must be at least 1"));
        }
        let a = &self.association;
        check_gate("iou_gate", a.iou_gate, false)?;
        check_gate("reid_gate", a.reid_gate, false)?;
        check_gate("dual_iou_gate", a.dual_iou_gate, false)?;
        check_gate("dual_reid_gate", a.dual_reid_gate, false)?;
        if a.gallery_capacity == 0 {
            return Err(invalid("gallery_capacity", "must be at least 1"));
        }
        let f = &self.filters;
        check_gate("det_ioi_gate", f.det_ioi_gate, true)?;
        check_gate("ambiguous_ioi_gate", f.ambiguous_ioi_gate, true)?;
        check_gate("reid_closeness_eps", f.reid_closeness_eps, true)?;
        if !(f.thresh3 > 0.0) {
            return Err(invalid("thresh3", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n_init: Option<u32>,
    max_predicted_age: Option<u32>,
    repository_capacity: Option<usize>,
    repository_max_age: Option<u32>,
    emit_predicted: Option<bool>,
    activate_first_frame: Option<bool>,
    min_confidence: Option<f64>,

    coef1: Option<f64>,
    coef2: Option<f64>,
    coef3: Option<f64>,
    predicted_coef1: Option<f64>,
    predicted_coef2: Option<f64>,
    predicted_coef3: Option<f64>,
    beta: Option<f64>,
    frame_interval: Option<f64>,
    measurement_std: Option<[f64; 4]>,
    process_std: Option<[f64; 6]>,
    initial_std: Option<[f64; 6]>,

    thresh1: Option<f64>,
    thresh2: Option<f64>,
    border_margin_cells: Option<u32>,
    warmup_frames: Option<u64>,

    iou_gate: Option<f64>,
    reid_gate: Option<f64>,
    dual_iou_gate: Option<f64>,
    dual_reid_gate: Option<f64>,
    gallery_capacity: Option<usize>,

    det_ioi_gate: Option<f64>,
    ambiguous_ioi_gate: Option<f64>,
    reid_closeness_eps: Option<f64>,
    thresh3: Option<f64>,
    far_ioi_zero_frames: Option<u32>,
    filters_enabled: Option<bool>,
}

macro_rules! apply {
    ($raw:ident, $target:expr, $($key:ident),+ $(,)?) => {
        $( if let Some(v) = $raw.$key { $target.$key = v; } )+
    };
}

/// Parses config text on top of the defaults.
pub fn parse_config(text: &str) -> Result<PipelineConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let mut cfg = PipelineConfig::default();
    apply!(
        raw,
        cfg,
        n_init,
        max_predicted_age,
        repository_capacity,
        repository_max_age,
        emit_predicted,
        activate_first_frame,
        min_confidence,
    );
    apply!(raw, cfg.noise, beta, frame_interval, measurement_std, process_std, initial_std);
    apply!(raw, cfg.maps, thresh1, thresh2, border_margin_cells, warmup_frames);
    apply!(raw, cfg.association, iou_gate, reid_gate, dual_iou_gate, dual_reid_gate, gallery_capacity);
    apply!(
        raw,
        cfg.filters,
        det_ioi_gate,
        ambiguous_ioi_gate,
        reid_closeness_eps,
        thresh3,
        far_ioi_zero_frames,
    );
    if let Some(v) = raw.filters_enabled {
        cfg.filters.enabled = v;
    }
    let n = cfg.noise.normal;
    cfg.noise.normal = CoefficientSet::new(
        raw.coef1.unwrap_or(n.coef1),
        raw.coef2.unwrap_or(n.coef2),
        raw.coef3.unwrap_or(n.coef3),
    );
    let p = cfg.noise.predicted;
    cfg.noise.predicted = CoefficientSet::new(
        raw.predicted_coef1.unwrap_or(p.coef1),
        raw.predicted_coef2.unwrap_or(p.coef2),
        raw.predicted_coef3.unwrap_or(p.coef3),
    );
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_config(path: &Path) -> Result<PipelineConfig, FormatError> {
    let text = fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_config(&text)?)
}
