//! Latency-aware evaluation of video semantic segmentation.
//!
//! A prediction computed from frame `t` with latency `l` is scored against
//! the ground truth of frame `t + ceil(l / d)`, the first frame current once
//! processing has finished (`d` is the frame interval). With `l = 0` this is
//! the usual static evaluation. Scores are dataset-level mIoU: intersections
//! and unions are summed over every scored pair before dividing.
//!
//! Modules:
//!
//! * [`labelmap`]: class-index maps, PGM/PNG I/O;
//! * [`metrics`]: confusion matrices, IoU and mIoU;
//! * [`latency`]: frame offsets and target-frame resolution;
//! * [`dataset`]: manifests and prediction pairing;
//! * [`eval`] / [`report`]: scoring from disk and the report format;
//! * [`synth`]: synthetic scenes and simulated predictors.

pub mod dataset;
pub mod eval;
pub mod labelmap;
pub mod latency;
pub mod metrics;
pub mod report;
pub mod synth;

pub use dataset::{
    cityscapes_input_index, load_manifest, load_predictions, pair_predictions, DatasetManifest,
    EvalMode, EvalPair, ExclusionReason, PredictionRecord, SequenceManifest,
};
pub use eval::{evaluate, EvalError};
pub use labelmap::{read_labelmap, write_labelmap, ClassSet, LabelMap, IGNORE};
pub use latency::{frame_offset, resolve_target_frame, FrameTiming, LatencyModel, TargetFrame};
pub use metrics::{ClassIoU, ConfusionMatrix, MiouResult};
pub use report::EvalReport;
pub use synth::{render_scene, simulate_experiment, Scene, SceneSpec, SimPredictor};
