//! Evaluation of tracking runs: orientation error angles (absolute and
//! relative), joint position errors, batched MAE drift analysis,
//! convergence-time detection, and cross-trial aggregation.
//!
//! Orientation errors are radians internally; report writers convert to
//! degrees for human-facing output.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::so3::{RotationMatrix, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("error series shorter than one batch after the skipped transient")]
    SeriesTooShort,
    #[error("no trials to aggregate")]
    EmptyInput,
    #[error("trial reports carry mismatched labels")]
    LabelMismatch,
}

/// What an error series measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SeriesLabel {
    /// Error angle of one IMU's global orientation.
    AbsoluteOrientation { imu: usize },
    /// Error angle of the relative orientation across one joint.
    RelativeOrientation { joint: (usize, usize) },
    /// Euclidean error of one IMU-centered joint position.
    JointPosition { joint: (usize, usize), side_imu: usize },
}

impl std::fmt::Display for SeriesLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SeriesLabel::AbsoluteOrientation { imu } => write!(f, "abs_orientation_imu{imu}"),
            SeriesLabel::RelativeOrientation { joint } => {
                write!(f, "rel_orientation_joint{}_{}", joint.0, joint.1)
            }
            SeriesLabel::JointPosition { joint, side_imu } => {
                write!(f, "joint_pos_{}_{}_imu{side_imu}", joint.0, joint.1)
            }
        }
    }
}

impl SeriesLabel {
    pub fn is_orientation(&self) -> bool {
        !matches!(self, SeriesLabel::JointPosition { .. })
    }
}

/// Per-timestep error values for one labeled quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    pub label: SeriesLabel,
    pub times: Vec<f64>,
    /// Radians for orientation labels, meters for position labels; always
    /// non-negative.
    pub values: Vec<f64>,
}

/// Error angle between an estimate and the ground truth: the angle of
/// `truth * est^T`. Always non-negative.
pub fn orientation_error(est: &RotationMatrix, truth: &RotationMatrix) -> f64 {
    (*truth * est.transposed()).angle()
}

/// Relative (joint) orientation between two IMUs: `R_i^T R_j`.
pub fn relative_orientation(est_i: &RotationMatrix, est_j: &RotationMatrix) -> RotationMatrix {
    est_i.transposed() * *est_j
}

/// Euclidean joint position error.
pub fn joint_position_error(est: &Vec3, truth: &Vec3) -> f64 {
    (est - truth).norm()
}

/// MAE per batch over the series tail after `skip_initial_s`, plus the
/// drift indicator (last-batch MAE minus first-batch MAE).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub label: SeriesLabel,
    pub batch_length_s: f64,
    pub skip_initial_s: f64,
    pub batch_maes: Vec<f64>,
    /// MAE over the whole evaluated (post-skip) interval.
    pub trial_mae: f64,
    /// Last-batch MAE minus first-batch MAE; near zero for drift-free runs.
    pub drift: f64,
}

/// Splits the series into consecutive batches of `batch_length_s` after
/// dropping the first `skip_initial_s` (convergence transient) and computes
/// the mean absolute error per batch. Only full batches count.
pub fn batch_mae(
    series: &ErrorSeries,
    batch_length_s: f64,
    skip_initial_s: f64,
) -> Result<BatchReport, MetricsError> {
    if series.times.is_empty() {
        return Err(MetricsError::SeriesTooShort);
    }
    let t0 = series.times[0] + skip_initial_s;
    let mut batch_maes = Vec::new();
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut batch_sum = 0.0;
    let mut batch_count = 0usize;
    let mut batch_end = t0 + batch_length_s;
    for (&t, &v) in series.times.iter().zip(&series.values) {
        if t < t0 {
            continue;
        }
        while t >= batch_end {
            if batch_count > 0 {
                batch_maes.push(batch_sum / batch_count as f64);
            }
            batch_sum = 0.0;
            batch_count = 0;
            batch_end += batch_length_s;
        }
        batch_sum += v.abs();
        batch_count += 1;
        sum += v.abs();
        count += 1;
    }
    // count a trailing batch when it reaches the nominal length (within one
    // sample)
    if batch_count > 0 {
        let dt = if series.times.len() > 1 { series.times[1] - series.times[0] } else { 0.0 };
        let last_t = *series.times.last().unwrap();
        if last_t + dt >= batch_end - 1e-9 {
            batch_maes.push(batch_sum / batch_count as f64);
        }
    }
    if batch_maes.is_empty() {
        return Err(MetricsError::SeriesTooShort);
    }
    let drift = batch_maes.last().unwrap() - batch_maes.first().unwrap();
    Ok(BatchReport {
        label: series.label,
        batch_length_s,
        skip_initial_s,
        batch_maes,
        trial_mae: sum / count as f64,
        drift,
    })
}

/// First time the error stays below `threshold` for `hold_s` consecutive
/// seconds, relative to the series start; `None` when it never does.
pub fn convergence_time(series: &ErrorSeries, threshold: f64, hold_s: f64) -> Option<f64> {
    let mut below_since: Option<f64> = None;
    for (&t, &v) in series.times.iter().zip(&series.values) {
        if v < threshold {
            let start = *below_since.get_or_insert(t);
            if t - start >= hold_s {
                return Some(start - series.times[0]);
            }
        } else {
            below_since = None;
        }
    }
    None
}

/// Median and standard deviation of per-trial MAEs for one label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAggregate {
    pub label: SeriesLabel,
    pub median_mae: f64,
    pub std_mae: f64,
    pub trial_maes: Vec<f64>,
    /// Median over trials of each batch's MAE, index-aligned across trials.
    pub median_batch_maes: Vec<f64>,
}

/// Cross-trial aggregation of per-label batch reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub trials: usize,
    pub labels: Vec<LabelAggregate>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var =
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64;
    var.sqrt()
}

/// Aggregates one batch-report set per trial (same label set in each trial)
/// into per-label median and standard deviation of the trial MAEs.
pub fn aggregate_trials(trials: &[Vec<BatchReport>]) -> Result<AggregateReport, MetricsError> {
    if trials.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut labels: Vec<SeriesLabel> = trials[0].iter().map(|r| r.label).collect();
    labels.sort();
    for trial in trials {
        let mut l: Vec<SeriesLabel> = trial.iter().map(|r| r.label).collect();
        l.sort();
        if l != labels {
            return Err(MetricsError::LabelMismatch);
        }
    }
    let aggregates = labels
        .iter()
        .map(|&label| {
            let reports: Vec<&BatchReport> =
                trials.iter().map(|t| t.iter().find(|r| r.label == label).unwrap()).collect();
            let trial_maes: Vec<f64> = reports.iter().map(|r| r.trial_mae).collect();
            let n_batches = reports.iter().map(|r| r.batch_maes.len()).min().unwrap_or(0);
            let median_batch_maes = (0..n_batches)
                .map(|b| median(&reports.iter().map(|r| r.batch_maes[b]).collect::<Vec<_>>()))
                .collect();
            LabelAggregate {
                label,
                median_mae: median(&trial_maes),
                std_mae: std_dev(&trial_maes),
                trial_maes,
                median_batch_maes,
            }
        })
        .collect();
    Ok(AggregateReport { trials: trials.len(), labels: aggregates })
}
