//! Synthetic scenes of translating rectangles and simulated predictors.
//!
//! Scenes give exact ground truth for every frame, so latency effects on the
//! score can be computed in closed form. Three predictors stand in for
//! networks:
//!
//! * `oracle` returns the ground truth of the frame current when its
//!   latency has elapsed (upper bound);
//! * `delayed_oracle` returns the perfect segmentation of its input frame,
//!   i.e. a conventionally trained model that is correct but stale;
//! * `extrapolating_oracle` moves each object by its last per-frame
//!   displacement times the frame offset, i.e. a two-frame model that
//!   infers direction and speed.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{EvalMode, ExclusionReason};
use crate::labelmap::{ClassSet, LabelMap, LabelMapError};
use crate::latency::{resolve_target_frame, FrameTiming, LatencyError, TargetFrame};
use crate::metrics::{ConfusionMatrix, MetricsError};
use crate::report::{EvalReport, PairStat};

/// Class painted wherever no object is present.
pub const BACKGROUND_CLASS: u8 = 0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("scene has degenerate dimensions {width}x{height} or no frames")]
    DegenerateScene { width: u32, height: u32 },
    #[error(transparent)]
    Classes(#[from] LabelMapError),
    #[error("object {index}: class {class_id} must be in 1..{num_classes}")]
    InvalidObjectClass {
        index: usize,
        class_id: u8,
        num_classes: usize,
    },
    #[error("object {index}: {w}x{h} rectangle larger than {width}x{height} frame")]
    ObjectLargerThanFrame {
        index: usize,
        w: u32,
        h: u32,
        width: u32,
        height: u32,
    },
    #[error("object {index}: does not fit within the frame at frame 0")]
    ObjectOutsideFrame { index: usize },
    #[error("frame index {index} out of range for {num_frames} frames")]
    IndexOutOfRange { index: u64, num_frames: u32 },
    #[error("extrapolating predictor needs a previous frame; input index {0}")]
    InsufficientHistory(u32),
    #[error("{given} timestamps for {num_frames} frames")]
    TimestampCount { given: usize, num_frames: u32 },
    #[error(transparent)]
    Latency(#[from] LatencyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Rectangle { w: u32, h: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub class_id: u8,
    pub shape: Shape,
    /// Top-left corner at frame 0; drawn uniformly inside the frame from
    /// the scene seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_position: Option<(i64, i64)>,
    /// Pixels per frame.
    #[serde(default)]
    pub velocity: (i64, i64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub num_frames: u32,
    pub num_classes: usize,
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PlacedObject {
    class_id: u8,
    w: u32,
    h: u32,
    origin: (i64, i64),
    velocity: (i64, i64),
}

impl PlacedObject {
    fn position(&self, t: i64) -> (i64, i64) {
        (
            self.origin.0 + t * self.velocity.0,
            self.origin.1 + t * self.velocity.1,
        )
    }
}

/// A rendered scene: resolved object trajectories plus one ground-truth map
/// per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    width: u32,
    height: u32,
    classes: ClassSet,
    objects: Vec<PlacedObject>,
    frames: Vec<LabelMap>,
}

impl Scene {
    pub fn render(spec: &SceneSpec) -> Result<Self, SynthError> {
        let (width, height) = (spec.width, spec.height);
        if width == 0 || height == 0 || spec.num_frames == 0 {
            return Err(SynthError::DegenerateScene { width, height });
        }
        let classes = ClassSet::new(spec.num_classes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut objects = Vec::with_capacity(spec.objects.len());
        for (index, o) in spec.objects.iter().enumerate() {
            if o.class_id == BACKGROUND_CLASS || o.class_id as usize >= spec.num_classes {
                return Err(SynthError::InvalidObjectClass {
                    index,
                    class_id: o.class_id,
                    num_classes: spec.num_classes,
                });
            }
            let Shape::Rectangle { w, h } = o.shape;
            if w == 0 || h == 0 || w > width || h > height {
                return Err(SynthError::ObjectLargerThanFrame {
                    index,
                    w,
                    h,
                    width,
                    height,
                });
            }
            let (max_x, max_y) = ((width - w) as i64, (height - h) as i64);
            let origin = match o.initial_position {
                Some((x, y)) => {
                    if !(0..=max_x).contains(&x) || !(0..=max_y).contains(&y) {
                        return Err(SynthError::ObjectOutsideFrame { index });
                    }
                    (x, y)
                }
                None => (rng.random_range(0..=max_x), rng.random_range(0..=max_y)),
            };
            objects.push(PlacedObject {
                class_id: o.class_id,
                w,
                h,
                origin,
                velocity: o.velocity,
            });
        }
        let mut scene = Self {
            width,
            height,
            classes,
            objects,
            frames: Vec::new(),
        };
        scene.frames = (0..spec.num_frames as i64)
            .map(|t| {
                let positions: Vec<_> = scene.objects.iter().map(|o| o.position(t)).collect();
                scene.render_positions(&positions)
            })
            .collect();
        Ok(scene)
    }

    pub fn frames(&self) -> &[LabelMap] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<LabelMap> {
        self.frames
    }

    pub fn num_frames(&self) -> u32 {
        self.frames.len() as u32
    }

    pub fn classes(&self) -> ClassSet {
        self.classes
    }

    /// Top-left corner of every object at frame `t`, in list order.
    pub fn positions_at(&self, t: i64) -> Vec<(i64, i64)> {
        self.objects.iter().map(|o| o.position(t)).collect()
    }

    /// Paints the background, then each object clipped to the frame; later
    /// objects cover earlier ones.
    pub fn render_positions(&self, positions: &[(i64, i64)]) -> LabelMap {
        let (w, h) = (self.width as i64, self.height as i64);
        let mut values = vec![BACKGROUND_CLASS; (w * h) as usize];
        for (o, &(x, y)) in self.objects.iter().zip(positions) {
            let (x0, x1) = (x.max(0), (x + o.w as i64).min(w));
            let (y0, y1) = (y.max(0), (y + o.h as i64).min(h));
            if x0 >= x1 || y0 >= y1 {
                continue;
            }
            for row in y0..y1 {
                let start = (row * w + x0) as usize;
                values[start..start + (x1 - x0) as usize].fill(o.class_id);
            }
        }
        LabelMap::from_parts_unchecked(self.width, self.height, values)
    }

    fn frame(&self, index: u64) -> Result<&LabelMap, SynthError> {
        self.frames
            .get(index as usize)
            .ok_or(SynthError::IndexOutOfRange {
                index,
                num_frames: self.num_frames(),
            })
    }
}

/// Ground-truth maps for every frame of `spec`.
pub fn render_scene(spec: &SceneSpec) -> Result<Vec<LabelMap>, SynthError> {
    Ok(Scene::render(spec)?.into_frames())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Oracle,
    DelayedOracle,
    ExtrapolatingOracle,
}

impl PredictorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PredictorKind::Oracle => "oracle",
            PredictorKind::DelayedOracle => "delayed_oracle",
            PredictorKind::ExtrapolatingOracle => "extrapolating_oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimPredictor {
    pub kind: PredictorKind,
    pub latency_ms: f64,
}

impl SimPredictor {
    pub fn new(kind: PredictorKind, latency_ms: f64) -> Result<Self, SynthError> {
        if !(latency_ms.is_finite() && latency_ms >= 0.0) {
            return Err(LatencyError::InvalidLatency(latency_ms).into());
        }
        Ok(Self { kind, latency_ms })
    }

    /// Output for input frame `input_index` when `offset` frames pass
    /// during processing.
    pub fn predict(
        &self,
        scene: &Scene,
        input_index: u32,
        offset: u32,
    ) -> Result<LabelMap, SynthError> {
        let t = input_index as u64;
        scene.frame(t)?;
        match self.kind {
            PredictorKind::Oracle => scene.frame(t + offset as u64).cloned(),
            PredictorKind::DelayedOracle => scene.frame(t).cloned(),
            PredictorKind::ExtrapolatingOracle => {
                if input_index == 0 {
                    return Err(SynthError::InsufficientHistory(input_index));
                }
                let now = scene.positions_at(t as i64);
                let before = scene.positions_at(t as i64 - 1);
                let k = offset as i64;
                let projected: Vec<_> = now
                    .iter()
                    .zip(&before)
                    .map(|(&(x, y), &(px, py))| (x + k * (x - px), y + k * (y - py)))
                    .collect();
                Ok(scene.render_positions(&projected))
            }
        }
    }
}

/// Latency-aware score of `predictor` over every admissible frame of the
/// scene described by `spec`.
pub fn simulate_experiment(
    spec: &SceneSpec,
    predictor: &SimPredictor,
    timing: &FrameTiming,
) -> Result<EvalReport, SynthError> {
    simulate_experiment_with_mode(spec, predictor, timing, EvalMode::Flame)
}

enum FrameOutcome {
    Scored(ConfusionMatrix, PairStat),
    Excluded(ExclusionReason),
}

/// As [`simulate_experiment`], but `EvalMode::Static` scores against each
/// input frame's own ground truth.
pub fn simulate_experiment_with_mode(
    spec: &SceneSpec,
    predictor: &SimPredictor,
    timing: &FrameTiming,
    mode: EvalMode,
) -> Result<EvalReport, SynthError> {
    let scene = Scene::render(spec)?;
    let n = scene.num_frames();
    if let Some(ts) = timing.timestamps_ms() {
        if ts.len() != n as usize {
            return Err(SynthError::TimestampCount {
                given: ts.len(),
                num_frames: n,
            });
        }
    }
    let k = spec.num_classes;
    let outcomes = (0..n)
        .into_par_iter()
        .map(|t| -> Result<FrameOutcome, SynthError> {
            let target = match mode {
                EvalMode::Static => t,
                EvalMode::Flame => {
                    match resolve_target_frame(t, predictor.latency_ms, timing, n)? {
                        TargetFrame::InSequence(target) => target,
                        TargetFrame::OutOfSequence => {
                            return Ok(FrameOutcome::Excluded(ExclusionReason::OutOfSequence))
                        }
                    }
                }
            };
            if predictor.kind == PredictorKind::ExtrapolatingOracle && t == 0 {
                return Ok(FrameOutcome::Excluded(ExclusionReason::InsufficientHistory));
            }
            let pred = predictor.predict(&scene, t, target - t)?;
            let mut cm = ConfusionMatrix::new(k);
            cm.accumulate(&scene.frames[target as usize], &pred)?;
            Ok(FrameOutcome::Scored(
                cm,
                PairStat {
                    offset: target - t,
                    latency_ms: predictor.latency_ms,
                },
            ))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut cm = ConfusionMatrix::new(k);
    let mut stats = Vec::new();
    let mut exclusions = BTreeMap::new();
    for o in outcomes {
        match o {
            FrameOutcome::Scored(m, s) => {
                cm.merge_from(&m)?;
                stats.push(s);
            }
            FrameOutcome::Excluded(r) => *exclusions.entry(r).or_default() += 1,
        }
    }
    Ok(EvalReport::build(
        mode,
        &cm,
        &stats,
        exclusions,
        Some(timing.interval_ms()),
    )?)
}
