//! Evaluation report: the JSON document and the aligned text table are both
//! rendered from [`EvalReport`], so they cannot disagree.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{EvalMode, ExclusionReason};
use crate::metrics::{format_decimal, ClassIoU, ConfusionMatrix, MetricsError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub min_ms: f64,
    pub max_ms: f64,
    pub mean_ms: f64,
}

impl LatencySummary {
    pub fn from_latencies(latencies: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut n = 0usize;
        let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for l in latencies {
            n += 1;
            min = min.min(l);
            max = max.max(l);
            sum += l;
        }
        (n > 0).then(|| Self {
            min_ms: min,
            max_ms: max,
            mean_ms: sum / n as f64,
        })
    }

    /// Throughput implied by the mean latency; `None` at zero latency.
    pub fn fps(&self) -> Option<f64> {
        (self.mean_ms > 0.0).then(|| 1000.0 / self.mean_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ReportRepr", try_from = "ReportRepr")]
pub struct EvalReport {
    pub mode: EvalMode,
    pub miou: f64,
    pub num_defined_classes: usize,
    pub per_class: Vec<ClassIoU>,
    pub total_predictions: usize,
    pub pairs_evaluated: usize,
    pub exclusions: BTreeMap<ExclusionReason, usize>,
    pub offsets_histogram: BTreeMap<u32, usize>,
    pub latency_summary: LatencySummary,
    pub dataset_interval_ms: Option<f64>,
}

/// One scored pair as seen by the report: its frame offset and latency.
#[derive(Debug, Clone, Copy)]
pub struct PairStat {
    pub offset: u32,
    pub latency_ms: f64,
}

impl EvalReport {
    /// Assembles a report from an accumulated matrix and the scored pairs.
    /// Fails with [`MetricsError::EmptyEvaluation`] when nothing was scored.
    pub fn build(
        mode: EvalMode,
        cm: &ConfusionMatrix,
        pairs: &[PairStat],
        exclusions: BTreeMap<ExclusionReason, usize>,
        dataset_interval_ms: Option<f64>,
    ) -> Result<Self, MetricsError> {
        let latency_summary = LatencySummary::from_latencies(pairs.iter().map(|p| p.latency_ms))
            .ok_or(MetricsError::EmptyEvaluation)?;
        let m = cm.miou()?;
        let mut offsets_histogram = BTreeMap::new();
        for p in pairs {
            *offsets_histogram.entry(p.offset).or_default() += 1;
        }
        Ok(Self {
            mode,
            miou: m.miou,
            num_defined_classes: m.num_defined_classes,
            per_class: m.per_class,
            total_predictions: pairs.len() + exclusions.values().sum::<usize>(),
            pairs_evaluated: pairs.len(),
            exclusions,
            offsets_histogram,
            latency_summary,
            dataset_interval_ms,
        })
    }

    pub fn fps(&self) -> Option<f64> {
        self.latency_summary.fps()
    }

    pub fn class_iou(&self, class_id: usize) -> Option<&ClassIoU> {
        self.per_class.iter().find(|c| c.class_id == class_id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Aligned plain-text rendering. Ratios use the same four-decimal form
    /// as the JSON `*_decimal` / `iou` fields.
    pub fn render_table(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("mode".into(), self.mode.to_string()),
            (
                "miou".into(),
                format!(
                    "{} ({} of {} classes defined)",
                    format_decimal(self.miou),
                    self.num_defined_classes,
                    self.per_class.len()
                ),
            ),
            ("predictions".into(), self.total_predictions.to_string()),
            ("pairs evaluated".into(), self.pairs_evaluated.to_string()),
        ];
        for (reason, n) in &self.exclusions {
            rows.push((format!("excluded {}", reason.as_str()), n.to_string()));
        }
        for (k, n) in &self.offsets_histogram {
            rows.push((format!("frame offset k={k}"), n.to_string()));
        }
        let l = &self.latency_summary;
        rows.push((
            "latency ms min/mean/max".into(),
            format!(
                "{} / {} / {}",
                format_decimal(l.min_ms),
                format_decimal(l.mean_ms),
                format_decimal(l.max_ms)
            ),
        ));
        rows.push((
            "fps".into(),
            self.fps().map_or_else(|| "-".into(), format_decimal),
        ));
        rows.push((
            "frame interval ms".into(),
            self.dataset_interval_ms
                .map_or_else(|| "mixed".into(), format_decimal),
        ));

        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in &rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "{:>5}  {:>14}  {:>14}  {:>6}",
            "class", "intersection", "union", "iou"
        );
        for c in &self.per_class {
            let _ = writeln!(
                out,
                "{:>5}  {:>14}  {:>14}  {:>6}",
                c.class_id,
                c.intersection,
                c.union,
                c.iou().map_or_else(|| "-".into(), format_decimal)
            );
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct ReportRepr {
    mode: EvalMode,
    miou: f64,
    miou_decimal: String,
    num_defined_classes: usize,
    per_class: Vec<ClassIoU>,
    total_predictions: usize,
    pairs_evaluated: usize,
    exclusions: BTreeMap<ExclusionReason, usize>,
    offsets_histogram: BTreeMap<u32, usize>,
    latency_summary: LatencySummary,
    fps: Option<f64>,
    dataset_interval_ms: Option<f64>,
}

impl From<EvalReport> for ReportRepr {
    fn from(r: EvalReport) -> Self {
        Self {
            mode: r.mode,
            miou: r.miou,
            miou_decimal: format_decimal(r.miou),
            num_defined_classes: r.num_defined_classes,
            per_class: r.per_class,
            total_predictions: r.total_predictions,
            pairs_evaluated: r.pairs_evaluated,
            exclusions: r.exclusions,
            offsets_histogram: r.offsets_histogram,
            fps: r.latency_summary.fps(),
            latency_summary: r.latency_summary,
            dataset_interval_ms: r.dataset_interval_ms,
        }
    }
}

impl TryFrom<ReportRepr> for EvalReport {
    type Error = String;

    fn try_from(r: ReportRepr) -> Result<Self, String> {
        if !(0.0..=1.0).contains(&r.miou) {
            return Err(format!("miou {} outside [0, 1]", r.miou));
        }
        let excluded: usize = r.exclusions.values().sum();
        if r.pairs_evaluated + excluded != r.total_predictions {
            return Err(format!(
                "pairs_evaluated {} + exclusions {excluded} != total_predictions {}",
                r.pairs_evaluated, r.total_predictions
            ));
        }
        let histogram_total: usize = r.offsets_histogram.values().sum();
        if histogram_total != r.pairs_evaluated {
            return Err(format!(
                "offsets_histogram totals {histogram_total}, expected {}",
                r.pairs_evaluated
            ));
        }
        Ok(Self {
            mode: r.mode,
            miou: r.miou,
            num_defined_classes: r.num_defined_classes,
            per_class: r.per_class,
            total_predictions: r.total_predictions,
            pairs_evaluated: r.pairs_evaluated,
            exclusions: r.exclusions,
            offsets_histogram: r.offsets_histogram,
            latency_summary: r.latency_summary,
            dataset_interval_ms: r.dataset_interval_ms,
        })
    }
}
