#![allow(dead_code)]

use maptrack::config::PipelineConfig;
use maptrack::formats::{format_mot_results, MotRow};
use maptrack::metrics::{evaluate_rows, EvalReport};
use maptrack::pipeline::{result_rows, run_sequence, FrameResult, TrackerMode};
use maptrack::synth::{generate, ScenarioSpec, SyntheticSequence};

pub struct Run {
    pub seq: SyntheticSequence,
    pub results: Vec<FrameResult>,
}

impl Run {
    pub fn text(&self) -> String {
        format_mot_results(&result_rows(&self.results))
    }

    pub fn rows(&self) -> Vec<MotRow> {
        result_rows(&self.results)
            .into_iter()
            .map(|r| MotRow {
                frame: r.frame,
                id: r.id as i64,
                bbox: r.bbox,
                confidence: 1.0,
                class: None,
                visibility: None,
            })
            .collect()
    }

    pub fn report(&self) -> EvalReport {
        evaluate_rows(&self.seq.gt, &self.rows(), 0.5)
    }
}

pub fn run(spec: &ScenarioSpec, cfg: &PipelineConfig, mode: TrackerMode, embeddings: bool) -> Run {
    let seq = generate(spec);
    let set = seq.detection_set(embeddings).expect("generated input parses");
    let results = run_sequence(set.frames, &seq.meta, cfg, mode).expect("tracker runs");
    Run { seq, results }
}
