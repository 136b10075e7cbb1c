//! Python bindings: simulate kinematic-chain IMU trials and track them,
//! returning per-label error summaries.
//!
//! ```python
//! import chaintrack_py as ct
//! trial = ct.simulate_chain(imu_count=3, duration_s=30.0, seed=1)
//! result = ct.track(trial)
//! print(result.orientation_mae_deg, result.joint_position_mae_cm)
//! ```

use std::collections::HashMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use chaintrack::chain::ChainGeometry;
use chaintrack::filter::{init_state, run_filter, JointInit, NoiseConfig, SolverConfig};
use chaintrack::harness::evaluate_run;
use chaintrack::metrics::{batch_mae, convergence_time, SeriesLabel};
use chaintrack::sim::{simulate_manipulator, ManipulatorSpec, NoiseSpec, SimulatedTrial};
use chaintrack::so3::Mrp;

/// A simulated trial: measurement frames plus ground truth.
#[pyclass]
struct Trial {
    inner: SimulatedTrial,
    geometry: ChainGeometry,
}

#[pymethods]
impl Trial {
    #[getter]
    fn imu_count(&self) -> usize {
        self.inner.topology.imu_count
    }

    #[getter]
    fn rate_hz(&self) -> f64 {
        self.inner.rate_hz
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Gyro sample of one IMU at one timestep (rad/s).
    fn gyro(&self, t: usize, imu: usize) -> PyResult<(f64, f64, f64)> {
        let v = self
            .inner
            .frames
            .get(t)
            .and_then(|f| f.gyro.get(imu))
            .ok_or_else(|| PyValueError::new_err("index out of range"))?;
        Ok((v.x, v.y, v.z))
    }

    /// Specific-force sample of one IMU at one timestep (m/s^2).
    fn accel(&self, t: usize, imu: usize) -> PyResult<(f64, f64, f64)> {
        let v = self
            .inner
            .frames
            .get(t)
            .and_then(|f| f.accel.get(imu))
            .ok_or_else(|| PyValueError::new_err("index out of range"))?;
        Ok((v.x, v.y, v.z))
    }

    /// Ground-truth orientation of one IMU, scalar-first `(w, x, y, z)`.
    fn truth_orientation(&self, t: usize, imu: usize) -> PyResult<(f64, f64, f64, f64)> {
        if t >= self.inner.len() || imu >= self.inner.topology.imu_count {
            return Err(PyValueError::new_err("index out of range"));
        }
        let q = self.inner.truth_orientation(t, imu);
        Ok((q.w, q.x, q.y, q.z))
    }
}

/// Tracking summary: per-label MAEs after the convergence transient,
/// joint-position convergence times, and runtime.
#[pyclass]
struct TrackResult {
    #[pyo3(get)]
    orientation_mae_deg: HashMap<String, f64>,
    #[pyo3(get)]
    joint_position_mae_cm: HashMap<String, f64>,
    #[pyo3(get)]
    convergence_time_s: HashMap<String, Option<f64>>,
    #[pyo3(get)]
    median_step_ms: f64,
}

#[pymethods]
impl TrackResult {
    fn __repr__(&self) -> String {
        format!(
            "TrackResult(orientation_mae_deg={:?}, joint_position_mae_cm={:?}, \
             median_step_ms={:.3})",
            self.orientation_mae_deg, self.joint_position_mae_cm, self.median_step_ms
        )
    }
}

/// Simulates the default sinusoidally driven chain with `imu_count`
/// segments (26 cm lever arms) and measurement noise per the reference
/// settings; `noisy=False` disables the noise.
#[pyfunction]
#[pyo3(signature = (imu_count=3, duration_s=30.0, rate_hz=100.0, seed=0, noisy=true))]
fn simulate_chain(
    imu_count: usize,
    duration_s: f64,
    rate_hz: f64,
    seed: u64,
    noisy: bool,
) -> PyResult<Trial> {
    if imu_count < 2 {
        return Err(PyValueError::new_err("need at least two IMUs"));
    }
    let spec = ManipulatorSpec::chain(imu_count);
    let geometry = spec.default_geometry();
    let noise =
        if noisy { NoiseSpec { seed, ..NoiseSpec::default() } } else { NoiseSpec::noiseless(seed) };
    let inner = simulate_manipulator(&spec, &geometry, duration_s, rate_hz, &noise)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(Trial { inner, geometry })
}

/// Runs the filter over a trial (identity orientation init, random joint
/// init) and evaluates against the trial's ground truth. MAEs skip the
/// first `skip_initial_s` seconds.
#[pyfunction]
#[pyo3(signature = (trial, init_seed=1, skip_initial_s=10.0))]
fn track(trial: &Trial, init_seed: u64, skip_initial_s: f64) -> PyResult<TrackResult> {
    let topo = &trial.inner.topology;
    let noise = NoiseConfig::default();
    let init = init_state(
        topo,
        &noise,
        &vec![Mrp::zero(); topo.imu_count],
        &JointInit::Random { seed: init_seed, range: 0.3 },
    )
    .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let run = run_filter(
        topo,
        &noise,
        &SolverConfig::default(),
        init,
        &trial.inner.frames,
        trial.inner.dt(),
    )
    .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;

    let series =
        evaluate_run(topo, &trial.inner.times, &run.means, &trial.inner.poses, &trial.geometry);
    let eval_span = trial.inner.times.last().copied().unwrap_or(0.0) - skip_initial_s;
    if eval_span <= 0.0 {
        return Err(PyValueError::new_err("trial shorter than the skipped transient"));
    }
    let mut orientation_mae_deg = HashMap::new();
    let mut joint_position_mae_cm = HashMap::new();
    let mut convergence_time_s = HashMap::new();
    for s in &series {
        let report = batch_mae(s, eval_span, skip_initial_s)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        match s.label {
            SeriesLabel::JointPosition { .. } => {
                joint_position_mae_cm.insert(s.label.to_string(), report.trial_mae * 100.0);
                convergence_time_s
                    .insert(s.label.to_string(), convergence_time(s, 0.02, 2.0));
            }
            _ => {
                orientation_mae_deg.insert(s.label.to_string(), report.trial_mae.to_degrees());
            }
        }
    }
    let mut sorted = run.step_seconds.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_step_ms = sorted.get(sorted.len() / 2).copied().unwrap_or(0.0) * 1e3;
    Ok(TrackResult {
        orientation_mae_deg,
        joint_position_mae_cm,
        convergence_time_s,
        median_step_ms,
    })
}

#[pymodule]
fn chaintrack_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Trial>()?;
    m.add_class::<TrackResult>()?;
    m.add_function(wrap_pyfunction!(simulate_chain, m)?)?;
    m.add_function(wrap_pyfunction!(track, m)?)?;
    Ok(())
}
