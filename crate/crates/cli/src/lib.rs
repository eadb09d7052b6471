//! Subcommand implementations for the `flame` binary.
//!
//! Each command returns a [`CliError`] whose [`CliError::exit_code`] is what
//! the process exits with: 1 for bad input, 2 when nothing could be scored.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use flame_core::dataset::{
    apply_latency_model, DatasetFile, FrameFile, PredictionEntryFile, PredictionFile, SequenceFile,
};
use flame_core::latency::read_latency_trace;
use flame_core::synth::{PredictorKind, Scene, SceneSpec, SimPredictor};
use flame_core::{
    evaluate, frame_offset, load_manifest, load_predictions, resolve_target_frame, write_labelmap,
    EvalError, EvalMode, EvalReport, FrameTiming, LatencyModel, TargetFrame,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("empty evaluation: {0}")]
    Empty(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Empty(_) => 2,
        }
    }

    fn input(e: impl std::fmt::Display) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        if e.is_empty_evaluation() {
            CliError::Empty(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

/// Where per-prediction latencies come from when not taken from the
/// prediction manifest.
#[derive(Debug, Clone, PartialEq)]
pub enum LatencyOverride {
    Constant(f64),
    Trace(PathBuf),
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub dataset: PathBuf,
    pub predictions: PathBuf,
    pub mode: EvalMode,
    pub out: Option<PathBuf>,
    pub jobs: usize,
    pub latency: Option<LatencyOverride>,
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Scores a prediction manifest against a dataset manifest and writes the
/// JSON report to `args.out` when given.
pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport, CliError> {
    let manifest = load_manifest(&args.dataset).map_err(CliError::input)?;
    let mut predictions = load_predictions(&args.predictions).map_err(CliError::input)?;
    if let Some(source) = &args.latency {
        let model = match source {
            LatencyOverride::Constant(ms) => LatencyModel::constant(*ms),
            LatencyOverride::Trace(path) => read_latency_trace(path).and_then(|rows| {
                LatencyModel::per_prediction(
                    rows.into_iter().map(|r| (r.frame_index, r.latency_ms)),
                )
            }),
        }
        .map_err(CliError::input)?;
        apply_latency_model(&mut predictions, &model).map_err(CliError::input)?;
    }
    let report = evaluate(&manifest, &predictions, args.mode, args.jobs)?;
    if let Some(out) = &args.out {
        fs::write(out, report.to_json() + "\n").map_err(|e| io_err(out, e))?;
    }
    Ok(report)
}

/// Scene file accepted by `synth`: a scene spec plus the frame interval and
/// the predictors to simulate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    #[serde(flatten)]
    pub scene: SceneSpec,
    #[serde(default = "default_interval_ms")]
    pub interval_ms: f64,
    #[serde(default)]
    pub predictors: Vec<SimPredictor>,
}

fn default_interval_ms() -> f64 {
    60.0
}

pub const SYNTH_SEQUENCE_ID: &str = "synthetic";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub dataset_manifest: PathBuf,
    pub prediction_manifests: Vec<PathBuf>,
}

pub fn load_synth_config(path: &Path) -> Result<SynthConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Renders the scene in `spec_path` into `out_dir`:
///
/// ```text
/// dataset.json
/// gt/frame_0000.pgm ...
/// predictions_00_delayed_oracle.json
/// pred/00_delayed_oracle/frame_0000.pgm ...
/// ```
///
/// Each predictor gets one prediction per input frame it can serve: its
/// target frame lies inside the scene and, for the extrapolating oracle, a
/// previous frame exists.
pub fn cmd_synth(spec_path: &Path, out_dir: &Path) -> Result<SynthOutput, CliError> {
    let config = load_synth_config(spec_path)?;
    materialize(&config, out_dir)
}

pub fn materialize(config: &SynthConfig, out_dir: &Path) -> Result<SynthOutput, CliError> {
    let timing = FrameTiming::uniform(config.interval_ms).map_err(CliError::input)?;
    let scene = Scene::render(&config.scene).map_err(CliError::input)?;
    let n = scene.num_frames();

    let gt_dir = out_dir.join("gt");
    fs::create_dir_all(&gt_dir).map_err(|e| io_err(&gt_dir, e))?;
    let mut frames = Vec::with_capacity(n as usize);
    for (t, map) in scene.frames().iter().enumerate() {
        let rel = format!("gt/frame_{t:04}.pgm");
        write_labelmap(map, out_dir.join(&rel)).map_err(CliError::input)?;
        frames.push(FrameFile {
            index: t as u32,
            image: None,
            gt: Some(rel),
        });
    }
    let dataset = DatasetFile {
        num_classes: config.scene.num_classes,
        sequences: vec![SequenceFile {
            sequence_id: SYNTH_SEQUENCE_ID.into(),
            interval_ms: config.interval_ms,
            timestamps_ms: None,
            frames,
        }],
    };
    let dataset_manifest = out_dir.join("dataset.json");
    write_json(&dataset_manifest, &dataset)?;

    let mut prediction_manifests = Vec::new();
    for (i, predictor) in config.predictors.iter().enumerate() {
        let predictor =
            SimPredictor::new(predictor.kind, predictor.latency_ms).map_err(CliError::input)?;
        let name = format!("{i:02}_{}", predictor.kind.as_str());
        let pred_dir = out_dir.join("pred").join(&name);
        fs::create_dir_all(&pred_dir).map_err(|e| io_err(&pred_dir, e))?;
        let mut entries = Vec::new();
        for t in 0..n {
            let TargetFrame::InSequence(target) =
                resolve_target_frame(t, predictor.latency_ms, &timing, n)
                    .map_err(CliError::input)?
            else {
                continue;
            };
            if predictor.kind == PredictorKind::ExtrapolatingOracle && t == 0 {
                continue;
            }
            let map = predictor
                .predict(&scene, t, target - t)
                .map_err(CliError::input)?;
            let rel = format!("pred/{name}/frame_{t:04}.pgm");
            write_labelmap(&map, out_dir.join(&rel)).map_err(CliError::input)?;
            entries.push(PredictionEntryFile {
                sequence_id: SYNTH_SEQUENCE_ID.into(),
                input_frame_index: t,
                latency_ms: predictor.latency_ms,
                pred: rel,
            });
        }
        let path = out_dir.join(format!("predictions_{name}.json"));
        write_json(
            &path,
            &PredictionFile {
                predictions: entries,
            },
        )?;
        prediction_manifests.push(path);
    }
    Ok(SynthOutput {
        dataset_manifest,
        prediction_manifests,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(CliError::input)? + "\n";
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Text printed by `offset`: the frame offset and the bounds it satisfies.
pub fn cmd_offset(latency_ms: f64, interval_ms: f64) -> Result<String, CliError> {
    let k = frame_offset(latency_ms, interval_ms).map_err(CliError::input)?;
    let bounds = if k == 0 {
        format!("l = {latency_ms} (zero latency, input frame)")
    } else {
        format!(
            "(k-1)*d < l <= k*d: {} < {latency_ms} <= {}",
            (k - 1) as f64 * interval_ms,
            k as f64 * interval_ms
        )
    };
    Ok(format!("{k}\n{bounds}\n"))
}
