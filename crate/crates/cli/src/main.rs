use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use maptrack::formats::{read_embeddings, read_mot_detections, read_seqinfo, write_mot_results, SequenceMeta};
use maptrack::metrics::{evaluate, DEFAULT_IOU_THRESHOLD};
use maptrack::pipeline::{result_rows, run_with, BaselineTracker, FrameResult, OnlineTracker};
use maptrack::synth::{self, generate, ScenarioSpec};
use maptrack::{read_config, MapTracker, PipelineConfig, TrackerMode};

#[derive(Parser)]
#[command(name = "maptrack", version, about = "Online multi-object tracker with occupancy maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Maptrack,
    Baseline,
}

#[derive(Subcommand)]
enum Command {
    /// Track a MOT detection file and write a result file.
    Track {
        #[arg(long)]
        det: PathBuf,
        /// Binary embedding sidecar aligned with the detection rows.
        #[arg(long)]
        emb: Option<PathBuf>,
        #[arg(long)]
        seqinfo: Option<PathBuf>,
        #[arg(long)]
        width: Option<f64>,
        #[arg(long)]
        height: Option<f64>,
        /// Sequence length; defaults to seqinfo, then to the last detection frame.
        #[arg(long)]
        frames: Option<u32>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        min_confidence: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "maptrack")]
        mode: Mode,
        /// Directory for plain-text dumps of the final probability and prediction maps.
        #[arg(long)]
        dump_maps: Option<PathBuf>,
    },
    /// Score a result file against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        res: PathBuf,
        #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
        iou: f64,
        /// Print `key=value` lines instead of a table.
        #[arg(long)]
        kv: bool,
    },
    /// Generate a synthetic sequence (gt.txt, det.txt, emb.bin, seqinfo.ini).
    Synth {
        /// S1..S4, a preset name, or `swarm`.
        #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
        preset: Option<String>,
        /// TOML scenario file.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a few fast internal consistency checks.
    Selfcheck,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Track {
            det,
            emb,
            seqinfo,
            width,
            height,
            frames,
            config,
            min_confidence,
            out,
            mode,
            dump_maps,
        } => track(TrackArgs {
            det,
            emb,
            seqinfo,
            width,
            height,
            frames,
            config,
            min_confidence,
            out,
            mode,
            dump_maps,
        }),
        Command::Eval { gt, res, iou, kv } => eval(&gt, &res, iou, kv),
        Command::Synth { preset, spec, out } => synthesize(preset.as_deref(), spec.as_deref(), &out),
        Command::Selfcheck => selfcheck(),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

struct TrackArgs {
    det: PathBuf,
    emb: Option<PathBuf>,
    seqinfo: Option<PathBuf>,
    width: Option<f64>,
    height: Option<f64>,
    frames: Option<u32>,
    config: Option<PathBuf>,
    min_confidence: Option<f64>,
    out: PathBuf,
    mode: Mode,
    dump_maps: Option<PathBuf>,
}

fn track(a: TrackArgs) -> Result<(), Failure> {
    let mut cfg = match &a.config {
        Some(p) => read_config(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(c) = a.min_confidence {
        cfg.min_confidence = c;
        cfg.validate()?;
    }
    let info = a.seqinfo.as_deref().map(read_seqinfo).transpose()?.unwrap_or_default();
    let (Some(w), Some(h)) = (a.width.or(info.frame_width), a.height.or(info.frame_height)) else {
        return Err(Failure::Usage(
            "frame size unknown: pass --seqinfo or both --width and --height".into(),
        ));
    };
    if !(w > 0.0 && h > 0.0) {
        return Err(Failure::Usage("frame size must be positive".into()));
    }

    let mut set = read_mot_detections(&a.det, cfg.min_confidence)?;
    if let Some(p) = &a.emb {
        let table = read_embeddings(p, &set.raw_counts)?;
        set.attach(&table)?;
    }
    let count = a.frames.or(info.frame_count).unwrap_or_else(|| set.last_frame());
    let mut meta = SequenceMeta::new(w, h, count);
    if let Some(r) = info.frame_rate {
        meta.frame_rate = r;
    }

    let start = Instant::now();
    let (results, maps) = match a.mode {
        Mode::Maptrack => {
            let mut t = MapTracker::new(cfg, meta.frame_size());
            let r = run_with(&mut t, set.frames, meta.frame_count)?;
            let maps = (t.probability_map().dump(), t.prediction_map().dump());
            (r, Some(maps))
        }
        Mode::Baseline => {
            let mut t = BaselineTracker::new(cfg);
            (run_with(&mut t as &mut dyn OnlineTracker, set.frames, meta.frame_count)?, None)
        }
    };
    let elapsed = start.elapsed().as_secs_f64();

    write_mot_results(&a.out, &result_rows(&results))?;
    if let Some(dir) = &a.dump_maps {
        let Some((prob, pred)) = maps else {
            return Err(Failure::Usage("--dump-maps needs --mode maptrack".into()));
        };
        fs::create_dir_all(dir)?;
        fs::write(dir.join("probability_map.txt"), prob)?;
        fs::write(dir.join("prediction_map.txt"), pred)?;
    }
    print_summary(&results, elapsed, tracker_mode(a.mode));
    Ok(())
}

fn tracker_mode(m: Mode) -> TrackerMode {
    match m {
        Mode::Maptrack => TrackerMode::MapTrack,
        Mode::Baseline => TrackerMode::Baseline,
    }
}

fn print_summary(results: &[FrameResult], secs: f64, mode: TrackerMode) {
    let mut ids: Vec<u64> = results.iter().flat_map(|r| r.outputs.iter().map(|o| o.id)).collect();
    ids.sort_unstable();
    ids.dedup();
    let fps = if secs > 0.0 { results.len() as f64 / secs } else { f64::INFINITY };
    println!(
        "mode={mode:?} frames={} tracks={} time={secs:.3}s fps={fps:.1}",
        results.len(),
        ids.len()
    );
}

fn eval(gt: &Path, res: &Path, iou: f64, kv: bool) -> Result<(), Failure> {
    if !(iou > 0.0 && iou <= 1.0) {
        return Err(Failure::Usage(format!("--iou must be in (0, 1], got {iou}")));
    }
    let report = evaluate(gt, res, iou)?;
    let entries = report.entries();
    if kv {
        for (k, v) in entries {
            println!("{}={v}", k.to_lowercase());
        }
    } else {
        let header: Vec<String> = entries.iter().map(|(k, v)| format!("{k:>w$}", w = v.len().max(k.len()))).collect();
        let values: Vec<String> = entries.iter().map(|(k, v)| format!("{v:>w$}", w = v.len().max(k.len()))).collect();
        println!("{}", header.join("  "));
        println!("{}", values.join("  "));
    }
    Ok(())
}

fn synthesize(preset: Option<&str>, spec: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let (spec, name) = match (preset, spec) {
        (Some(p), _) => {
            let s = synth::preset(p).ok_or_else(|| {
                Failure::Usage(format!("unknown preset `{p}` (known: {})", synth::PRESET_NAMES.join(", ")))
            })?;
            let name = s.name.clone();
            (s, name)
        }
        (None, Some(path)) => {
            let s = ScenarioSpec::read(path)?;
            let name = s.name.clone();
            (s, name)
        }
        (None, None) => return Err(Failure::Usage("pass --preset or --spec".into())),
    };
    let seq = generate(&spec);
    fs::create_dir_all(out)?;
    seq.write_to_dir(out, &name)?;
    println!(
        "{name}: {} frames, {} gt rows, {} detections -> {}",
        spec.frame_count,
        seq.gt.len(),
        seq.detections.len(),
        out.display()
    );
    Ok(())
}

fn selfcheck() -> Result<(), Failure> {
    let mut failed = 0;
    let mut check = |name: &str, ok: bool| {
        println!("{} {name}", if ok { "ok  " } else { "FAIL" });
        failed += (!ok) as usize;
    };

    let a = maptrack::BoundingBox::new(0.0, 0.0, 10.0, 10.0)?;
    let b = maptrack::BoundingBox::new(5.0, 0.0, 10.0, 10.0)?;
    check("iou of half-shifted squares is 1/3", (maptrack::iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    check("ioi of half-shifted squares is 1/2", (maptrack::ioi(&a, &b) - 0.5).abs() < 1e-12);

    let spec = synth::occlusion_5();
    let seq = generate(&spec);
    let cfg = PipelineConfig::default();
    let run = |mode| -> Result<Vec<FrameResult>, Failure> {
        let set = seq.detection_set(true)?;
        Ok(maptrack::run_sequence(set.frames, &spec.meta(), &cfg, mode)?)
    };
    let first = run(TrackerMode::MapTrack)?;
    check("runs are deterministic", first == run(TrackerMode::MapTrack)?);
    let ids = |rs: &[FrameResult]| {
        let mut v: Vec<u64> = rs.iter().flat_map(|r| r.outputs.iter().map(|o| o.id)).collect();
        v.sort_unstable();
        v.dedup();
        v.len()
    };
    check("occlusion preset keeps two identities", ids(&first) == 2);
    check(
        "baseline loses the occluded identity",
        ids(&run(TrackerMode::Baseline)?) > 2,
    );

    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} self-check(s) failed")));
    }
    Ok(())
}
