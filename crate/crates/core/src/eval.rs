//! Scores paired predictions from disk into an [`EvalReport`].

use std::path::PathBuf;

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{
    pair_predictions, DatasetError, DatasetManifest, EvalMode, Pairing, PredictionRecord,
};
use crate::labelmap::{read_labelmap, ClassSet, LabelMapError};
use crate::metrics::{ConfusionMatrix, MetricsError};
use crate::report::{EvalReport, PairStat};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    LabelMap(#[from] LabelMapError),
    #[error("{pred} vs {gt}: {source}")]
    Pair {
        pred: PathBuf,
        gt: PathBuf,
        #[source]
        source: MetricsError,
    },
    #[error(transparent)]
    Metrics(MetricsError),
    #[error("no evaluable pairs: {0}")]
    Empty(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl EvalError {
    /// True when inputs were valid but nothing could be scored.
    pub fn is_empty_evaluation(&self) -> bool {
        matches!(self, EvalError::Empty(_))
    }
}

/// Pairs `predictions` with ground truth and scores them, loading label maps
/// on up to `jobs` worker threads.
pub fn evaluate(
    manifest: &DatasetManifest,
    predictions: &[PredictionRecord],
    mode: EvalMode,
    jobs: usize,
) -> Result<EvalReport, EvalError> {
    let pairing = pair_predictions(manifest, predictions, mode)?;
    evaluate_pairing(
        manifest.classes,
        pairing,
        mode,
        manifest.common_interval_ms(),
        jobs,
    )
}

pub fn evaluate_pairing(
    classes: ClassSet,
    pairing: Pairing,
    mode: EvalMode,
    dataset_interval_ms: Option<f64>,
    jobs: usize,
) -> Result<EvalReport, EvalError> {
    if pairing.pairs.is_empty() {
        return Err(EvalError::Empty(format!(
            "all {} predictions excluded",
            pairing.excluded()
        )));
    }
    let k = classes.num_classes();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| EvalError::ThreadPool(e.to_string()))?;
    let cm = pool.install(|| {
        pairing
            .pairs
            .par_iter()
            .try_fold(
                || ConfusionMatrix::new(k),
                |mut cm, pair| {
                    let gt = read_labelmap(&pair.gt_path, &classes)?;
                    let pred = read_labelmap(&pair.pred_path, &classes)?;
                    cm.accumulate(&gt, &pred)
                        .map_err(|source| EvalError::Pair {
                            pred: pair.pred_path.clone(),
                            gt: pair.gt_path.clone(),
                            source,
                        })?;
                    Ok::<_, EvalError>(cm)
                },
            )
            .try_reduce(
                || ConfusionMatrix::new(k),
                |mut a, b| {
                    a.merge_from(&b).expect("workers share one class count");
                    Ok(a)
                },
            )
    })?;
    let stats: Vec<PairStat> = pairing
        .pairs
        .iter()
        .map(|p| PairStat {
            offset: p.offset_used,
            latency_ms: p.latency_ms,
        })
        .collect();
    EvalReport::build(mode, &cm, &stats, pairing.exclusions, dataset_interval_ms).map_err(|e| {
        match e {
            MetricsError::EmptyEvaluation => {
                EvalError::Empty("every ground-truth pixel is ignored".into())
            }
            other => EvalError::Metrics(other),
        }
    })
}
