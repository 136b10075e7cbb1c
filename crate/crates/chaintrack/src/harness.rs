//! Experiment harness: simulate trials to disk, track recorded trials,
//! run Monte Carlo batteries, and merge reports across configurations.
//!
//! All entry points are plain functions over [`ExperimentConfig`]; the CLI
//! binary is a thin argument-parsing wrapper. Errors are grouped into
//! configuration, data and numerical classes so the CLI can map them to
//! distinct exit codes.

use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainGeometry, ChainTopology, PoseSeries};
use crate::config::{
    ConfigError, ExperimentConfig, JointInitMode, OrientationInitMode, SourceKind,
};
use crate::filter::{
    init_state, run_filter, FilterError, FilterRun, FilterState, JointInit, MeasurementFrame,
    StateMean,
};
use crate::io::{self, IoError};
use crate::metrics::{
    aggregate_trials, batch_mae, convergence_time, joint_position_error, median,
    orientation_error, relative_orientation, AggregateReport, BatchReport, ErrorSeries,
    MetricsError, SeriesLabel,
};
use crate::sim::{
    derive_geometry, resimulate_from_poses, simulate_manipulator, SimError, SimulatedTrial,
};
use crate::so3::{Mrp, UnitQuaternion, Vec3};

/// Environment variable limiting the Monte Carlo worker count.
pub const WORKERS_ENV: &str = "CHAINTRACK_WORKERS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] IoError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{failed} of {total} Monte Carlo trials failed; first error: {first}")]
    TrialFailures { failed: usize, total: usize, first: String },
    #[error("{0}")]
    Other(String),
}

impl HarnessError {
    /// CLI exit code: 2 configuration, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Data(_) | HarnessError::Sim(_) | HarnessError::Other(_) => 3,
            HarnessError::Filter(_) | HarnessError::Metrics(_) | HarnessError::TrialFailures { .. } => 4,
        }
    }
}

/// File names inside a trial directory.
pub mod files {
    pub const MEASUREMENTS: &str = "measurements.csv";
    pub const ABS_ORIENTATION: &str = "abs_orientation.csv";
    pub const GT_POSES: &str = "ground_truth_poses.csv";
    pub const GT_GEOMETRY: &str = "ground_truth_geometry.csv";
    pub const EFFECTIVE_CONFIG: &str = "effective_config.toml";
    pub const EST_ORIENTATIONS: &str = "estimated_orientations.csv";
    pub const EST_JOINTS: &str = "estimated_joints.csv";
    pub const TRIAL_REPORT: &str = "report.json";
    pub const AGGREGATE_REPORT: &str = "aggregate_report.json";
    pub const REPORT_TEXT: &str = "report.txt";
    pub const REPORT_CSV: &str = "report.csv";
}

/// Per-step runtime statistics (seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub steps: usize,
    pub mean_s: f64,
    pub median_s: f64,
    pub p95_s: f64,
}

impl RuntimeStats {
    pub fn from_step_seconds(step_seconds: &[f64]) -> Self {
        let mut sorted = step_seconds.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len();
        Self {
            steps: n,
            mean_s: sorted.iter().sum::<f64>() / n.max(1) as f64,
            median_s: if n == 0 { 0.0 } else { sorted[n / 2] },
            p95_s: if n == 0 { 0.0 } else { sorted[(n * 95 / 100).min(n - 1)] },
        }
    }
}

/// Everything measured about one tracked trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialReport {
    pub seed: u64,
    pub batches: Vec<BatchReport>,
    pub convergence_times: Vec<(SeriesLabel, Option<f64>)>,
    pub runtime: RuntimeStats,
    pub unconverged_steps: usize,
}

/// A measurement stream loaded from disk, with whatever ground truth was
/// present alongside it.
pub struct LoadedTrial {
    pub times: Vec<f64>,
    pub frames: Vec<MeasurementFrame>,
    pub poses: Option<PoseSeries>,
    pub geometry: Option<ChainGeometry>,
}

impl LoadedTrial {
    pub fn dt(&self) -> Result<f64, HarnessError> {
        if self.times.len() < 2 {
            return Err(HarnessError::Other("trial has fewer than two frames".into()));
        }
        let dt = self.times[1] - self.times[0];
        for w in self.times.windows(2) {
            if (w[1] - w[0] - dt).abs() > 1e-9 {
                return Err(HarnessError::Other("trial is not uniformly sampled".into()));
            }
        }
        Ok(dt)
    }
}

/// Builds the trial described by the config, either via forward kinematics
/// or by re-simulating a pose CSV.
pub fn build_trial(config: &ExperimentConfig, seed: u64) -> Result<SimulatedTrial, HarnessError> {
    let noise = crate::sim::NoiseSpec { seed, ..config.sim_noise };
    match config.source.kind {
        SourceKind::Manipulator => {
            let spec = config.manipulator_spec();
            let geometry = config.source.geometry.clone().unwrap_or_else(|| {
                ChainGeometry::symmetric(config.topology.joint_count(), config.source.lever_arm_m)
            });
            Ok(simulate_manipulator(
                &spec,
                &geometry,
                config.source.duration_s,
                config.source.rate_hz,
                &noise,
            )?)
        }
        SourceKind::Poses => {
            let path = config.source.pose_csv.as_ref().ok_or_else(|| {
                HarnessError::Config(ConfigError::Invalid {
                    field: "source.pose_csv".into(),
                    message: "required".into(),
                })
            })?;
            let poses = io::read_poses(path)?;
            let mut trial = resimulate_from_poses(&poses, &config.topology, &noise)?;
            trial.geometry = derive_geometry(&poses, &config.topology).ok();
            Ok(trial)
        }
    }
}

/// `simulate`: writes measurement and ground-truth CSVs for one trial.
pub fn cmd_simulate(config: &ExperimentConfig, out_dir: &Path) -> Result<(), HarnessError> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| HarnessError::Other(format!("{}: {e}", out_dir.display())))?;
    let trial = build_trial(config, config.sim_noise.seed)?;
    io::write_measurements(&out_dir.join(files::MEASUREMENTS), &trial.times, &trial.frames)?;
    io::write_orientation_stream(
        &out_dir.join(files::ABS_ORIENTATION),
        &trial.times,
        trial.frames.iter().map(|f| f.orientation),
    )?;
    io::write_poses(&out_dir.join(files::GT_POSES), &trial.poses)?;
    if let Some(geometry) = &trial.geometry {
        io::write_geometry(&out_dir.join(files::GT_GEOMETRY), &trial.topology, geometry)?;
    }
    config.save(&out_dir.join(files::EFFECTIVE_CONFIG))?;
    Ok(())
}

/// Loads a trial directory written by [`cmd_simulate`].
pub fn load_trial(config: &ExperimentConfig, trial_dir: &Path) -> Result<LoadedTrial, HarnessError> {
    let n = config.topology.imu_count;
    let (times, accel, gyro) = io::read_measurements(&trial_dir.join(files::MEASUREMENTS), n)?;
    let (otimes, quats) = io::read_orientation_stream(&trial_dir.join(files::ABS_ORIENTATION))?;
    if otimes.len() != times.len() {
        return Err(HarnessError::Other(format!(
            "absolute orientation stream has {} rows, measurements {}",
            otimes.len(),
            times.len()
        )));
    }
    let frames = (0..times.len())
        .map(|t| MeasurementFrame {
            accel: accel[t].clone(),
            gyro: gyro[t].clone(),
            orientation: quats[t],
        })
        .collect();
    let poses_path = trial_dir.join(files::GT_POSES);
    let poses = poses_path.exists().then(|| io::read_poses(&poses_path)).transpose()?;
    let geom_path = trial_dir.join(files::GT_GEOMETRY);
    let geometry = geom_path
        .exists()
        .then(|| io::read_geometry(&geom_path, &config.topology))
        .transpose()?;
    Ok(LoadedTrial { times, frames, poses, geometry })
}

/// Builds the initial filter state per the configured policy.
pub fn build_init_state(
    config: &ExperimentConfig,
    init_seed: u64,
    poses: Option<&PoseSeries>,
    geometry: Option<&ChainGeometry>,
) -> Result<FilterState, HarnessError> {
    let topo = &config.topology;
    let orientations: Vec<Mrp> = match config.init.orientation_mode {
        OrientationInitMode::Identity => vec![Mrp::zero(); topo.imu_count],
        OrientationInitMode::Truth | OrientationInitMode::TruthPerturbed => {
            let poses = poses.ok_or_else(|| {
                HarnessError::Other(
                    "orientation init from truth requires ground-truth poses".into(),
                )
            })?;
            let mut rng = ChaCha8Rng::seed_from_u64(init_seed ^ 0xA511_E9B3);
            poses.samples[0]
                .iter()
                .map(|s| {
                    let mut q = s.orientation;
                    if config.init.orientation_mode == OrientationInitMode::TruthPerturbed {
                        let axis = Vec3::new(
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                        );
                        let angle = config.init.orientation_perturbation_deg.to_radians();
                        q = q * UnitQuaternion::from_axis_angle(&axis, angle);
                    }
                    q.to_mrp()
                })
                .collect()
        }
    };
    let joint_init = match config.init.joint_mode {
        JointInitMode::Random => {
            JointInit::Random { seed: init_seed, range: config.init.joint_range_m }
        }
        JointInitMode::Truth => {
            let geometry = geometry.ok_or_else(|| {
                HarnessError::Other("joint init from truth requires ground-truth geometry".into())
            })?;
            JointInit::Explicit(geometry.joints.clone())
        }
    };
    Ok(init_state(topo, &config.filter, &orientations, &joint_init)?)
}

/// Error series of one run against ground truth: absolute orientation per
/// IMU, relative orientation per joint, and joint position per side.
pub fn evaluate_run(
    topo: &ChainTopology,
    times: &[f64],
    means: &[StateMean],
    poses: &PoseSeries,
    geometry: &ChainGeometry,
) -> Vec<ErrorSeries> {
    let n_steps = means.len();
    let mut series = Vec::new();
    for imu in 0..topo.imu_count {
        let values = (0..n_steps)
            .map(|t| {
                let est = means[t].orientation(imu).to_rotation_matrix();
                let truth = poses.samples[t][imu].orientation.to_rotation_matrix();
                orientation_error(&est, &truth)
            })
            .collect();
        series.push(ErrorSeries {
            label: SeriesLabel::AbsoluteOrientation { imu },
            times: times.to_vec(),
            values,
        });
    }
    for (k, &(i, j)) in topo.joints.iter().enumerate() {
        let values = (0..n_steps)
            .map(|t| {
                let est = relative_orientation(
                    &means[t].orientation(i).to_rotation_matrix(),
                    &means[t].orientation(j).to_rotation_matrix(),
                );
                let truth = relative_orientation(
                    &poses.samples[t][i].orientation.to_rotation_matrix(),
                    &poses.samples[t][j].orientation.to_rotation_matrix(),
                );
                orientation_error(&est, &truth)
            })
            .collect();
        series.push(ErrorSeries {
            label: SeriesLabel::RelativeOrientation { joint: (i, j) },
            times: times.to_vec(),
            values,
        });
        for (side_imu, pick) in [
            (i, &(|m: &StateMean| m.joints[k].in_i) as &dyn Fn(&StateMean) -> Vec3),
            (j, &(|m: &StateMean| m.joints[k].in_j)),
        ] {
            let truth = if side_imu == i { geometry.joints[k].in_i } else { geometry.joints[k].in_j };
            let values = (0..n_steps).map(|t| joint_position_error(&pick(&means[t]), &truth)).collect();
            series.push(ErrorSeries {
                label: SeriesLabel::JointPosition { joint: (i, j), side_imu },
                times: times.to_vec(),
                values,
            });
        }
    }
    series
}

/// Runs the filter over loaded frames and evaluates against ground truth
/// when present.
fn track_frames(
    config: &ExperimentConfig,
    times: &[f64],
    frames: &[MeasurementFrame],
    dt: f64,
    poses: Option<&PoseSeries>,
    geometry: Option<&ChainGeometry>,
    seed: u64,
) -> Result<(FilterRun, Option<TrialReport>), HarnessError> {
    let init = build_init_state(config, seed, poses, geometry)?;
    let run = run_filter(&config.topology, &config.filter, &config.solver, init, frames, dt)?;
    let report = match (poses, geometry) {
        (Some(poses), Some(geometry)) => {
            let series = evaluate_run(&config.topology, times, &run.means, poses, geometry);
            let mc = &config.montecarlo;
            let mut batches = Vec::with_capacity(series.len());
            for s in &series {
                batches.push(batch_mae(s, mc.batch_length_s, mc.skip_initial_s)?);
            }
            let convergence_times = series
                .iter()
                .filter(|s| matches!(s.label, SeriesLabel::JointPosition { .. }))
                .map(|s| {
                    (s.label, convergence_time(s, mc.convergence_threshold_m, mc.convergence_hold_s))
                })
                .collect();
            Some(TrialReport {
                seed,
                batches,
                convergence_times,
                runtime: RuntimeStats::from_step_seconds(&run.step_seconds),
                unconverged_steps: run.unconverged_steps,
            })
        }
        _ => None,
    };
    Ok((run, report))
}

/// `track`: runs the filter over a trial directory, writes estimates and,
/// when ground truth is present, a metrics report.
pub fn cmd_track(
    config: &ExperimentConfig,
    trial_dir: &Path,
    out_dir: &Path,
) -> Result<Option<TrialReport>, HarnessError> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| HarnessError::Other(format!("{}: {e}", out_dir.display())))?;
    let trial = load_trial(config, trial_dir)?;
    let dt = trial.dt()?;
    let (run, report) = track_frames(
        config,
        &trial.times,
        &trial.frames,
        dt,
        trial.poses.as_ref(),
        trial.geometry.as_ref(),
        config.sim_noise.seed,
    )?;
    io::write_estimated_orientations(
        &out_dir.join(files::EST_ORIENTATIONS),
        &trial.times,
        &run.means,
    )?;
    io::write_estimated_joints(
        &out_dir.join(files::EST_JOINTS),
        &trial.times,
        &config.topology,
        &run.means,
    )?;
    config.save(&out_dir.join(files::EFFECTIVE_CONFIG))?;
    if let Some(report) = &report {
        write_json(&out_dir.join(files::TRIAL_REPORT), report)?;
        let aggregate = aggregate_trials(std::slice::from_ref(&report.batches))?;
        write_json(&out_dir.join(files::AGGREGATE_REPORT), &aggregate)?;
        std::fs::write(out_dir.join(files::REPORT_TEXT), render_trial_report(report))
            .map_err(|e| HarnessError::Other(e.to_string()))?;
    }
    Ok(report)
}

/// Outcome of a Monte Carlo battery.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloOutcome {
    pub aggregate: AggregateReport,
    pub trial_reports: Vec<TrialReport>,
    pub failed_trials: usize,
}

/// `montecarlo`: N independent simulate+track trials with different noise
/// seeds and state initializations, aggregated per label. Trials run in
/// parallel up to the configured worker count; per-trial failures are
/// collected without aborting the battery.
pub fn cmd_montecarlo(
    config: &ExperimentConfig,
    seeds_override: Option<usize>,
    out_dir: Option<&Path>,
) -> Result<MonteCarloOutcome, HarnessError> {
    config.validate()?;
    let n = seeds_override.unwrap_or(config.montecarlo.seeds);
    if n == 0 {
        return Err(HarnessError::Config(ConfigError::Invalid {
            field: "montecarlo.seeds".into(),
            message: "at least one seed".into(),
        }));
    }
    let pool = worker_pool()?;
    let results: Vec<Result<TrialReport, HarnessError>> = pool.install(|| {
        (0..n as u64)
            .into_par_iter()
            .map(|k| run_one_mc_trial(config, k))
            .collect()
    });
    let total = results.len();
    let mut trial_reports = Vec::new();
    let mut first_error = None;
    for r in results {
        match r {
            Ok(report) => trial_reports.push(report),
            Err(e) => {
                first_error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let failed = total - trial_reports.len();
    if trial_reports.is_empty() {
        return Err(HarnessError::TrialFailures {
            failed,
            total,
            first: first_error.unwrap_or_default(),
        });
    }
    let aggregate =
        aggregate_trials(&trial_reports.iter().map(|r| r.batches.clone()).collect::<Vec<_>>())?;
    let outcome = MonteCarloOutcome { aggregate, trial_reports, failed_trials: failed };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| HarnessError::Other(format!("{}: {e}", dir.display())))?;
        write_json(&dir.join(files::AGGREGATE_REPORT), &outcome.aggregate)?;
        std::fs::write(dir.join(files::REPORT_TEXT), render_aggregate(&outcome))
            .map_err(|e| HarnessError::Other(e.to_string()))?;
        std::fs::write(dir.join(files::REPORT_CSV), render_aggregate_csv(&outcome.aggregate))
            .map_err(|e| HarnessError::Other(e.to_string()))?;
        config.save(&dir.join(files::EFFECTIVE_CONFIG))?;
    }
    if failed > 0 {
        return Err(HarnessError::TrialFailures {
            failed,
            total,
            first: first_error.unwrap_or_default(),
        });
    }
    Ok(outcome)
}

fn run_one_mc_trial(config: &ExperimentConfig, k: u64) -> Result<TrialReport, HarnessError> {
    let sim_seed = config.sim_noise.seed.wrapping_add(k);
    let trial = build_trial(config, sim_seed)?;
    let init_seed = if config.montecarlo.randomize_init_per_seed {
        sim_seed ^ 0x9E37_79B9_7F4A_7C15
    } else {
        config.sim_noise.seed ^ 0x9E37_79B9_7F4A_7C15
    };
    let geometry = trial.geometry.clone();
    let (_, report) = track_frames(
        config,
        &trial.times,
        &trial.frames,
        trial.dt(),
        Some(&trial.poses),
        geometry.as_ref(),
        init_seed,
    )?;
    report.ok_or_else(|| HarnessError::Other("trial lacks ground truth for evaluation".into()))
}

fn worker_pool() -> Result<rayon::ThreadPool, HarnessError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let workers: usize = v.parse().map_err(|_| {
            HarnessError::Config(ConfigError::Invalid {
                field: WORKERS_ENV.into(),
                message: format!("not a worker count: {v:?}"),
            })
        })?;
        builder = builder.num_threads(workers.max(1));
    }
    builder.build().map_err(|e| HarnessError::Other(e.to_string()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| HarnessError::Other(e.to_string()))?;
    std::fs::write(path, text)
        .map_err(|e| HarnessError::Other(format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Other(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| HarnessError::Other(format!("{}: {e}", path.display())))
}

/// Human-readable value with the right unit: degrees for orientations,
/// centimeters for positions.
fn display_value(label: &SeriesLabel, v: f64) -> String {
    if label.is_orientation() {
        format!("{:.4} deg", v.to_degrees())
    } else {
        format!("{:.4} cm", v * 100.0)
    }
}

pub fn render_trial_report(report: &TrialReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("seed: {}\n", report.seed));
    out.push_str(&format!(
        "runtime per step: mean {:.3} ms, median {:.3} ms, p95 {:.3} ms over {} steps\n",
        report.runtime.mean_s * 1e3,
        report.runtime.median_s * 1e3,
        report.runtime.p95_s * 1e3,
        report.runtime.steps
    ));
    out.push_str(&format!("solver iteration-cap hits: {}\n", report.unconverged_steps));
    out.push_str("label, trial MAE, drift (last-first batch), batch MAEs\n");
    for b in &report.batches {
        out.push_str(&format!(
            "{}, {}, {}, [{}]\n",
            b.label,
            display_value(&b.label, b.trial_mae),
            display_value(&b.label, b.drift),
            b.batch_maes
                .iter()
                .map(|m| display_value(&b.label, *m))
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
    for (label, time) in &report.convergence_times {
        match time {
            Some(t) => out.push_str(&format!("{label} converged at {t:.2} s\n")),
            None => out.push_str(&format!("{label} did not converge\n")),
        }
    }
    out
}

pub fn render_aggregate(outcome: &MonteCarloOutcome) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "trials: {} ({} failed)\n",
        outcome.aggregate.trials, outcome.failed_trials
    ));
    let runtimes: Vec<f64> =
        outcome.trial_reports.iter().map(|r| r.runtime.median_s).collect();
    if !runtimes.is_empty() {
        out.push_str(&format!(
            "median per-step runtime across trials: {:.3} ms\n",
            median(&runtimes) * 1e3
        ));
    }
    out.push_str("label, median MAE, std MAE, median batch MAEs\n");
    for l in &outcome.aggregate.labels {
        out.push_str(&format!(
            "{}, {}, {}, [{}]\n",
            l.label,
            display_value(&l.label, l.median_mae),
            display_value(&l.label, l.std_mae),
            l.median_batch_maes
                .iter()
                .map(|m| display_value(&l.label, *m))
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
    // joint-position convergence: median and worst across trials per label
    let mut conv_labels: Vec<SeriesLabel> = outcome
        .trial_reports
        .first()
        .map(|r| r.convergence_times.iter().map(|(l, _)| *l).collect())
        .unwrap_or_default();
    conv_labels.sort();
    for label in conv_labels {
        let times: Vec<Option<f64>> = outcome
            .trial_reports
            .iter()
            .flat_map(|r| r.convergence_times.iter().filter(|(l, _)| *l == label))
            .map(|(_, t)| *t)
            .collect();
        if times.iter().any(|t| t.is_none()) {
            out.push_str(&format!("{label} convergence: not reached in some trials\n"));
        } else {
            let mut vals: Vec<f64> = times.into_iter().map(|t| t.unwrap()).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            out.push_str(&format!(
                "{label} convergence: median {:.2} s, worst {:.2} s\n",
                median(&vals),
                vals.last().unwrap()
            ));
        }
    }
    out
}

pub fn render_aggregate_csv(aggregate: &AggregateReport) -> String {
    let mut out = String::from("label,median_mae,std_mae,unit\n");
    for l in &aggregate.labels {
        let (median_v, std_v, unit) = if l.label.is_orientation() {
            (l.median_mae.to_degrees(), l.std_mae.to_degrees(), "deg")
        } else {
            (l.median_mae * 100.0, l.std_mae * 100.0, "cm")
        };
        out.push_str(&format!("{},{},{},{}\n", l.label, median_v, std_v, unit));
    }
    out
}

/// `report`: merges aggregate reports from several result directories into
/// one side-by-side comparison (text and CSV).
pub fn cmd_report(dirs: &[PathBuf]) -> Result<(String, String), HarnessError> {
    if dirs.is_empty() {
        return Err(HarnessError::Other("no result directories given".into()));
    }
    let mut reports = Vec::new();
    for dir in dirs {
        let aggregate: AggregateReport = read_json(&dir.join(files::AGGREGATE_REPORT))?;
        reports.push((dir.display().to_string(), aggregate));
    }
    let labels: Vec<SeriesLabel> = reports[0].1.labels.iter().map(|l| l.label).collect();
    for (name, r) in &reports {
        let theirs: Vec<SeriesLabel> = r.labels.iter().map(|l| l.label).collect();
        if theirs != labels {
            return Err(HarnessError::Other(format!(
                "label set of {name} does not match the first report"
            )));
        }
    }
    let mut text = String::from("label");
    let mut csv = String::from("label");
    for (name, _) in &reports {
        text.push_str(&format!(" | {name}"));
        csv.push_str(&format!(",{name}"));
    }
    text.push('\n');
    csv.push('\n');
    for (idx, label) in labels.iter().enumerate() {
        text.push_str(&label.to_string());
        csv.push_str(&label.to_string());
        for (_, r) in &reports {
            let l = &r.labels[idx];
            text.push_str(&format!(" | {} (m) {} (s)",
                display_value(label, l.median_mae), display_value(label, l.std_mae)));
            let v = if label.is_orientation() { l.median_mae.to_degrees() } else { l.median_mae * 100.0 };
            csv.push_str(&format!(",{v}"));
        }
        text.push('\n');
        csv.push('\n');
    }
    Ok((text, csv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn temp_dir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("chaintrack_harness_{name}"));
        std::fs::remove_dir_all(&dir).ok();
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn small_config() -> ExperimentConfig {
        let mut config = ExperimentConfig::default();
        config.source.duration_s = 15.0;
        config.montecarlo.batch_length_s = 2.0;
        config.montecarlo.skip_initial_s = 10.0;
        config
    }

    #[test]
    fn simulate_track_pipeline_round_trip() {
        let dir = temp_dir("pipeline");
        let config = small_config();
        cmd_simulate(&config, &dir).unwrap();
        for f in [
            files::MEASUREMENTS,
            files::ABS_ORIENTATION,
            files::GT_POSES,
            files::GT_GEOMETRY,
            files::EFFECTIVE_CONFIG,
        ] {
            assert!(dir.join(f).exists(), "{f} missing");
        }
        // effective config reloads to an equal config
        let reloaded = ExperimentConfig::load(&dir.join(files::EFFECTIVE_CONFIG)).unwrap();
        assert_eq!(reloaded, config);

        let out = temp_dir("pipeline_out");
        let report = cmd_track(&config, &dir, &out).unwrap().expect("ground truth present");
        assert!(out.join(files::EST_ORIENTATIONS).exists());
        assert!(out.join(files::EST_JOINTS).exists());
        assert!(out.join(files::TRIAL_REPORT).exists());
        assert!(report.runtime.steps == 1500);
        // per-step runtime line is part of the rendered report
        let text = render_trial_report(&report);
        assert!(text.contains("runtime per step"));
        std::fs::remove_dir_all(&dir).ok();
        std::fs::remove_dir_all(&out).ok();
    }

    #[test]
    fn simulate_is_deterministic_per_seed() {
        let dir_a = temp_dir("det_a");
        let dir_b = temp_dir("det_b");
        let config = small_config();
        cmd_simulate(&config, &dir_a).unwrap();
        cmd_simulate(&config, &dir_b).unwrap();
        let a = std::fs::read_to_string(dir_a.join(files::MEASUREMENTS)).unwrap();
        let b = std::fs::read_to_string(dir_b.join(files::MEASUREMENTS)).unwrap();
        assert_eq!(a, b);
        std::fs::remove_dir_all(&dir_a).ok();
        std::fs::remove_dir_all(&dir_b).ok();
    }

    #[test]
    fn montecarlo_single_seed_degenerate_aggregation() {
        let config = small_config();
        let outcome = cmd_montecarlo(&config, Some(1), None).unwrap();
        assert_eq!(outcome.aggregate.trials, 1);
        for label in &outcome.aggregate.labels {
            assert_eq!(label.std_mae, 0.0);
        }
    }

    #[test]
    fn report_passthrough_and_comparison() {
        let dir = temp_dir("report_single");
        let config = small_config();
        let _ = cmd_montecarlo(&config, Some(2), Some(&dir)).unwrap();
        let (text, csv) = cmd_report(std::slice::from_ref(&dir)).unwrap();
        assert!(text.contains("abs_orientation_imu0"));
        assert!(csv.lines().count() > 3);
        // two directories: two columns
        let dir2 = temp_dir("report_second");
        let mut noisier = config.clone();
        noisier.sim_noise.gyro_variance *= 4.0;
        let _ = cmd_montecarlo(&noisier, Some(2), Some(&dir2)).unwrap();
        let (text2, csv2) = cmd_report(&[dir.clone(), dir2.clone()]).unwrap();
        assert!(text2.lines().next().unwrap().matches('|').count() == 2);
        assert!(csv2.lines().next().unwrap().matches(',').count() == 2);
        std::fs::remove_dir_all(&dir).ok();
        std::fs::remove_dir_all(&dir2).ok();
    }

    #[test]
    fn pose_source_round_trip_through_files() {
        // simulate, then re-simulate from the exported poses
        let dir = temp_dir("pose_source");
        let config = small_config();
        cmd_simulate(&config, &dir).unwrap();
        let mut pose_config = config.clone();
        pose_config.source.kind = SourceKind::Poses;
        pose_config.source.pose_csv = Some(dir.join(files::GT_POSES));
        pose_config.sim_noise = crate::sim::NoiseSpec::noiseless(0);
        let trial = build_trial(&pose_config, 0).unwrap();
        assert_eq!(trial.len(), 1500);
        assert!(trial.geometry.is_some(), "geometry derived from rigid poses");
        let derived = trial.geometry.unwrap();
        for (d, g) in derived.joints.iter().zip(
            ChainGeometry::symmetric(2, 0.26).joints.iter(),
        ) {
            assert!((d.in_i - g.in_i).norm() < 1e-6);
            assert!((d.in_j - g.in_j).norm() < 1e-6);
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
