//! Dataset and prediction manifests, and pairing predictions with the
//! ground truth they are scored against.
//!
//! Dataset manifest:
//!
//! ```json
//! { "num_classes": 19,
//!   "sequences": [ { "sequence_id": "s0", "interval_ms": 60,
//!                    "timestamps_ms": [0, 60, ...],
//!                    "frames": [ { "index": 19, "image": "i.png", "gt": "g.png" } ] } ] }
//! ```
//!
//! Prediction manifest:
//!
//! ```json
//! { "predictions": [ { "sequence_id": "s0", "input_frame_index": 16,
//!                      "latency_ms": 195, "pred": "p.png" } ] }
//! ```
//!
//! Relative paths resolve against the manifest's directory. A sequence
//! spans frame indices `0..=max listed index`; `timestamps_ms`, when given,
//! holds one stamp per index in that range.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labelmap::ClassSet;
use crate::latency::{
    frame_offset, resolve_target_frame, FrameTiming, LatencyError, LatencyModel, TargetFrame,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error(transparent)]
    Latency(#[from] LatencyError),
    #[error("no latency for sequence {sequence_id:?} frame {frame_index}")]
    MissingLatency {
        sequence_id: String,
        frame_index: u32,
    },
    #[error("frame offset {offset} exceeds annotated index {annotated_index}")]
    OffsetExceedsIndex { offset: u32, annotated_index: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameEntry {
    pub index: u32,
    pub image_path: Option<PathBuf>,
    pub gt_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceManifest {
    pub sequence_id: String,
    pub timing: FrameTiming,
    frames: Vec<FrameEntry>,
}

impl SequenceManifest {
    pub fn new(
        sequence_id: impl Into<String>,
        timing: FrameTiming,
        frames: Vec<FrameEntry>,
    ) -> Result<Self, DatasetError> {
        let sequence_id = sequence_id.into();
        if frames.is_empty() {
            return Err(DatasetError::Schema(format!(
                "sequence {sequence_id:?} has no frames"
            )));
        }
        if let Some(w) = frames.windows(2).find(|w| w[1].index <= w[0].index) {
            return Err(DatasetError::Schema(format!(
                "sequence {sequence_id:?}: frame indices not strictly increasing ({} then {})",
                w[0].index, w[1].index
            )));
        }
        if frames.iter().all(|f| f.gt_path.is_none()) {
            return Err(DatasetError::Schema(format!(
                "sequence {sequence_id:?} has no annotated frame"
            )));
        }
        let seq = Self {
            sequence_id,
            timing,
            frames,
        };
        if let Some(ts) = seq.timing.timestamps_ms() {
            if ts.len() != seq.len() as usize {
                return Err(DatasetError::Schema(format!(
                    "sequence {:?}: {} timestamps for {} frame indices",
                    seq.sequence_id,
                    ts.len(),
                    seq.len()
                )));
            }
        }
        Ok(seq)
    }

    pub fn frames(&self) -> &[FrameEntry] {
        &self.frames
    }

    /// Number of frame indices spanned, `0..=last listed index`.
    pub fn len(&self) -> u32 {
        self.frames.last().map_or(0, |f| f.index + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, index: u32) -> Option<&FrameEntry> {
        self.frames
            .binary_search_by_key(&index, |f| f.index)
            .ok()
            .map(|i| &self.frames[i])
    }

    pub fn gt_path(&self, index: u32) -> Option<&Path> {
        self.frame(index).and_then(|f| f.gt_path.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub classes: ClassSet,
    pub sequences: Vec<SequenceManifest>,
}

impl DatasetManifest {
    pub fn sequence(&self, id: &str) -> Option<&SequenceManifest> {
        self.sequences.iter().find(|s| s.sequence_id == id)
    }

    /// The shared frame interval, when every sequence uses the same one.
    pub fn common_interval_ms(&self) -> Option<f64> {
        let first = self.sequences.first()?.timing.interval_ms();
        self.sequences
            .iter()
            .all(|s| s.timing.interval_ms() == first)
            .then_some(first)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub sequence_id: String,
    pub input_frame_index: u32,
    pub latency_ms: f64,
    pub pred_path: PathBuf,
}

// On-disk schemas.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub num_classes: usize,
    pub sequences: Vec<SequenceFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceFile {
    pub sequence_id: String,
    pub interval_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamps_ms: Option<Vec<f64>>,
    pub frames: Vec<FrameFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameFile {
    pub index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionFile {
    pub predictions: Vec<PredictionEntryFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionEntryFile {
    pub sequence_id: String,
    pub input_frame_index: u32,
    pub latency_ms: f64,
    pub pred: String,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| DatasetError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Parses and validates a dataset manifest. Referenced label maps are not
/// opened here.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, DatasetError> {
    let path = path.as_ref();
    let file: DatasetFile = read_json(path)?;
    manifest_from_file(file, &base_dir(path))
}

pub fn manifest_from_file(file: DatasetFile, base: &Path) -> Result<DatasetManifest, DatasetError> {
    let classes =
        ClassSet::new(file.num_classes).map_err(|e| DatasetError::Schema(e.to_string()))?;
    if file.sequences.is_empty() {
        return Err(DatasetError::Schema("no sequences".into()));
    }
    let mut seen = HashSet::new();
    let mut sequences = Vec::with_capacity(file.sequences.len());
    for s in file.sequences {
        if !seen.insert(s.sequence_id.clone()) {
            return Err(DatasetError::Schema(format!(
                "duplicate sequence_id {:?}",
                s.sequence_id
            )));
        }
        let timing = match s.timestamps_ms {
            Some(ts) => FrameTiming::with_timestamps(s.interval_ms, ts)?,
            None => FrameTiming::uniform(s.interval_ms)?,
        };
        let frames = s
            .frames
            .into_iter()
            .map(|f| FrameEntry {
                index: f.index,
                image_path: f.image.map(|p| base.join(p)),
                gt_path: f.gt.map(|p| base.join(p)),
            })
            .collect();
        sequences.push(SequenceManifest::new(s.sequence_id, timing, frames)?);
    }
    Ok(DatasetManifest { classes, sequences })
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>, DatasetError> {
    let path = path.as_ref();
    let file: PredictionFile = read_json(path)?;
    let base = base_dir(path);
    file.predictions
        .into_iter()
        .map(|p| {
            if !(p.latency_ms.is_finite() && p.latency_ms >= 0.0) {
                return Err(DatasetError::Schema(format!(
                    "prediction {:?} frame {}: latency_ms must be non-negative, got {}",
                    p.sequence_id, p.input_frame_index, p.latency_ms
                )));
            }
            Ok(PredictionRecord {
                sequence_id: p.sequence_id,
                input_frame_index: p.input_frame_index,
                latency_ms: p.latency_ms,
                pred_path: base.join(p.pred),
            })
        })
        .collect()
}

/// Replaces each record's latency with the one `model` gives for its input
/// frame. Every record must be covered.
pub fn apply_latency_model(
    predictions: &mut [PredictionRecord],
    model: &LatencyModel,
) -> Result<(), DatasetError> {
    for p in predictions.iter_mut() {
        p.latency_ms =
            model
                .latency_for(p.input_frame_index)
                .ok_or_else(|| DatasetError::MissingLatency {
                    sequence_id: p.sequence_id.clone(),
                    frame_index: p.input_frame_index,
                })?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Static,
    Flame,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::Static => "static",
            EvalMode::Flame => "flame",
        })
    }
}

/// Why a prediction produced no scored pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    UnknownSequence,
    UnknownFrame,
    OutOfSequence,
    MissingGt,
    InsufficientHistory,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::UnknownSequence => "unknown_sequence",
            ExclusionReason::UnknownFrame => "unknown_frame",
            ExclusionReason::OutOfSequence => "out_of_sequence",
            ExclusionReason::MissingGt => "missing_gt",
            ExclusionReason::InsufficientHistory => "insufficient_history",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub sequence_id: String,
    pub pred_path: PathBuf,
    pub gt_path: PathBuf,
    pub input_index: u32,
    pub target_index: u32,
    pub offset_used: u32,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pairing {
    pub pairs: Vec<EvalPair>,
    pub exclusions: BTreeMap<ExclusionReason, usize>,
}

impl Pairing {
    pub fn excluded(&self) -> usize {
        self.exclusions.values().sum()
    }
}

/// Matches every prediction to its ground truth.
///
/// Static mode scores against the input frame; flame mode against the frame
/// current once the prediction's latency has elapsed. Predictions without a
/// usable ground truth are counted per reason instead of being scored.
/// Output is sorted by sequence id, then input index, then prediction path.
pub fn pair_predictions(
    manifest: &DatasetManifest,
    predictions: &[PredictionRecord],
    mode: EvalMode,
) -> Result<Pairing, DatasetError> {
    let mut out = Pairing::default();
    for p in predictions {
        match pair_one(manifest, p, mode)? {
            Ok(pair) => out.pairs.push(pair),
            Err(reason) => *out.exclusions.entry(reason).or_default() += 1,
        }
    }
    out.pairs.sort_by(|a, b| {
        (&a.sequence_id, a.input_index, &a.pred_path).cmp(&(
            &b.sequence_id,
            b.input_index,
            &b.pred_path,
        ))
    });
    Ok(out)
}

fn pair_one(
    manifest: &DatasetManifest,
    p: &PredictionRecord,
    mode: EvalMode,
) -> Result<Result<EvalPair, ExclusionReason>, DatasetError> {
    let Some(seq) = manifest.sequence(&p.sequence_id) else {
        return Ok(Err(ExclusionReason::UnknownSequence));
    };
    if seq.frame(p.input_frame_index).is_none() {
        return Ok(Err(ExclusionReason::UnknownFrame));
    }
    let target = match mode {
        EvalMode::Static => p.input_frame_index,
        EvalMode::Flame => {
            match resolve_target_frame(p.input_frame_index, p.latency_ms, &seq.timing, seq.len())? {
                TargetFrame::InSequence(t) => t,
                TargetFrame::OutOfSequence => return Ok(Err(ExclusionReason::OutOfSequence)),
            }
        }
    };
    let Some(gt) = seq.gt_path(target) else {
        return Ok(Err(ExclusionReason::MissingGt));
    };
    Ok(Ok(EvalPair {
        sequence_id: p.sequence_id.clone(),
        pred_path: p.pred_path.clone(),
        gt_path: gt.to_path_buf(),
        input_index: p.input_frame_index,
        target_index: target,
        offset_used: target - p.input_frame_index,
        latency_ms: p.latency_ms,
    }))
}

/// Input frame to feed a model so that its output lands on the annotated
/// frame: `annotated_index - frame_offset(latency, interval)`.
pub fn cityscapes_input_index(
    annotated_index: u32,
    latency_ms: f64,
    interval_ms: f64,
) -> Result<u32, DatasetError> {
    let offset = frame_offset(latency_ms, interval_ms)?;
    annotated_index
        .checked_sub(offset)
        .ok_or(DatasetError::OffsetExceedsIndex {
            offset,
            annotated_index,
        })
}
