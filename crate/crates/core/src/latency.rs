//! From processing latency to the ground-truth frame a prediction is scored
//! against: the first frame that is current once processing has finished.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LatencyError {
    #[error("latency must be finite and non-negative, got {0}")]
    InvalidLatency(f64),
    #[error("frame interval must be finite and positive, got {0}")]
    InvalidInterval(f64),
    #[error("timestamps must be finite and strictly increasing (index {0})")]
    NonIncreasingTimestamps(usize),
    #[error("frame {0} listed twice with different latencies")]
    ConflictingLatency(u32),
    #[error("latency trace {path}: {message}")]
    Trace { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn check_latency(latency_ms: f64) -> Result<(), LatencyError> {
    if latency_ms.is_finite() && latency_ms >= 0.0 {
        Ok(())
    } else {
        Err(LatencyError::InvalidLatency(latency_ms))
    }
}

fn check_interval(interval_ms: f64) -> Result<(), LatencyError> {
    if interval_ms.is_finite() && interval_ms > 0.0 {
        Ok(())
    } else {
        Err(LatencyError::InvalidInterval(interval_ms))
    }
}

/// Number of frames elapsed while a prediction is computed: the smallest
/// `k >= 0` with `k * interval_ms >= latency_ms`, i.e. `ceil(latency / interval)`.
///
/// A latency that is an exact multiple of the interval maps to that multiple;
/// the frame arriving exactly as processing ends counts as the next frame.
pub fn frame_offset(latency_ms: f64, interval_ms: f64) -> Result<u32, LatencyError> {
    check_latency(latency_ms)?;
    check_interval(interval_ms)?;
    let mut k = (latency_ms / interval_ms).ceil();
    // The quotient can land one ulp off an integer; settle on the product test.
    while k > 0.0 && (k - 1.0) * interval_ms >= latency_ms {
        k -= 1.0;
    }
    while k * interval_ms < latency_ms {
        k += 1.0;
    }
    if k > u32::MAX as f64 {
        return Err(LatencyError::InvalidLatency(latency_ms));
    }
    Ok(k as u32)
}

/// Frame spacing of a sequence: a uniform interval, optionally refined by
/// explicit per-frame timestamps (one per frame index, starting at 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTiming {
    interval_ms: f64,
    timestamps_ms: Option<Vec<f64>>,
}

impl FrameTiming {
    pub fn uniform(interval_ms: f64) -> Result<Self, LatencyError> {
        check_interval(interval_ms)?;
        Ok(Self {
            interval_ms,
            timestamps_ms: None,
        })
    }

    pub fn with_timestamps(
        interval_ms: f64,
        timestamps_ms: Vec<f64>,
    ) -> Result<Self, LatencyError> {
        check_interval(interval_ms)?;
        for (i, t) in timestamps_ms.iter().enumerate() {
            if !t.is_finite() || (i > 0 && *t <= timestamps_ms[i - 1]) {
                return Err(LatencyError::NonIncreasingTimestamps(i));
            }
        }
        Ok(Self {
            interval_ms,
            timestamps_ms: Some(timestamps_ms),
        })
    }

    pub fn interval_ms(&self) -> f64 {
        self.interval_ms
    }

    pub fn timestamps_ms(&self) -> Option<&[f64]> {
        self.timestamps_ms.as_deref()
    }

    pub fn fps(&self) -> f64 {
        1000.0 / self.interval_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetFrame {
    InSequence(u32),
    OutOfSequence,
}

impl TargetFrame {
    pub fn index(self) -> Option<u32> {
        match self {
            TargetFrame::InSequence(i) => Some(i),
            TargetFrame::OutOfSequence => None,
        }
    }
}

/// Frame whose ground truth a prediction made from `input_index` is scored
/// against, in a sequence of frames `0..sequence_length`.
///
/// With explicit timestamps this is the first frame stamped at or after
/// `timestamp(input) + latency`; otherwise `input + frame_offset(latency, interval)`.
pub fn resolve_target_frame(
    input_index: u32,
    latency_ms: f64,
    timing: &FrameTiming,
    sequence_length: u32,
) -> Result<TargetFrame, LatencyError> {
    check_latency(latency_ms)?;
    if input_index >= sequence_length {
        return Ok(TargetFrame::OutOfSequence);
    }
    match timing.timestamps_ms() {
        Some(ts) => {
            let usable = &ts[..ts.len().min(sequence_length as usize)];
            let Some(&start) = usable.get(input_index as usize) else {
                return Ok(TargetFrame::OutOfSequence);
            };
            let due = start + latency_ms;
            let first =
                input_index as usize + usable[input_index as usize..].partition_point(|&t| t < due);
            Ok(if first < usable.len() {
                TargetFrame::InSequence(first as u32)
            } else {
                TargetFrame::OutOfSequence
            })
        }
        None => {
            let k = frame_offset(latency_ms, timing.interval_ms)?;
            Ok(match input_index.checked_add(k) {
                Some(t) if t < sequence_length => TargetFrame::InSequence(t),
                _ => TargetFrame::OutOfSequence,
            })
        }
    }
}

/// Where latencies come from: one figure for every prediction, or a
/// measured value per input frame.
#[derive(Debug, Clone, PartialEq)]
pub enum LatencyModel {
    Constant(f64),
    PerPrediction(BTreeMap<u32, f64>),
}

impl LatencyModel {
    pub fn constant(latency_ms: f64) -> Result<Self, LatencyError> {
        check_latency(latency_ms)?;
        Ok(Self::Constant(latency_ms))
    }

    pub fn per_prediction(
        entries: impl IntoIterator<Item = (u32, f64)>,
    ) -> Result<Self, LatencyError> {
        let mut map = BTreeMap::new();
        for (frame, l) in entries {
            check_latency(l)?;
            if map.insert(frame, l).is_some_and(|prev| prev != l) {
                return Err(LatencyError::ConflictingLatency(frame));
            }
        }
        Ok(Self::PerPrediction(map))
    }

    pub fn latency_for(&self, frame_index: u32) -> Option<f64> {
        match self {
            LatencyModel::Constant(l) => Some(*l),
            LatencyModel::PerPrediction(m) => m.get(&frame_index).copied(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub frame_index: u32,
    pub latency_ms: f64,
}

/// Reads a `frame_index,latency_ms` CSV trace.
pub fn read_latency_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRow>, LatencyError> {
    let path = path.as_ref();
    let trace_err = |message: String| LatencyError::Trace {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| trace_err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| trace_err(e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["frame_index", "latency_ms"] {
        return Err(trace_err(format!(
            "expected header frame_index,latency_ms, got {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for row in reader.deserialize::<TraceRow>() {
        let row = row.map_err(|e| trace_err(e.to_string()))?;
        check_latency(row.latency_ms)?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_latency_trace(path: impl AsRef<Path>, rows: &[TraceRow]) -> Result<(), LatencyError> {
    let path = path.as_ref();
    let trace_err = |message: String| LatencyError::Trace {
        path: path.to_path_buf(),
        message,
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| trace_err(e.to_string()))?;
    if rows.is_empty() {
        w.write_record(["frame_index", "latency_ms"])
            .map_err(|e| trace_err(e.to_string()))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| trace_err(e.to_string()))?;
    }
    w.flush().map_err(|source| LatencyError::Io {
        path: path.to_path_buf(),
        source,
    })
}
