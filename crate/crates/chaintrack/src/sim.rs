//! Synthetic IMU data generation for kinematic chains.
//!
//! Two paths produce the same trial format: forward kinematics of a
//! Denavit-Hartenberg manipulator driven by sinusoidal joint angles, and
//! re-simulation from externally supplied pose trajectories (numerical
//! differentiation of positions and orientations). Both emit specific-force
//! accelerometer samples `R^T (p_ddot - g)`, body-frame gyro samples, and a
//! noise-free absolute orientation stream for the external IMU.
//!
//! The angular kinematics of the manipulator are propagated exactly through
//! the link recursion (no numerical differentiation), so noiseless trials
//! satisfy the shared-joint acceleration constraint to machine precision.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainGeometry, ChainTopology, ImuPoseSample, JointGeometry, PoseSeries};
use crate::filter::MeasurementFrame;
use crate::so3::{rotation_between, UnitQuaternion, Vec3};

/// Navigation-frame gravity: z-axis up, gravity pulls along -z.
pub const GRAVITY: Vec3 = Vec3::new(0.0, 0.0, -9.81);

#[derive(Debug, Error)]
pub enum SimError {
    #[error("sample rate must be positive, got {0}")]
    InvalidRate(f64),
    #[error("manipulator specification has no segments")]
    EmptySpec,
    #[error("invalid joint motion: {0}")]
    InvalidMotion(String),
    #[error("geometry incompatible with the link chain: {0}")]
    GeometryMismatch(String),
    #[error("pose series must be uniformly sampled")]
    NonUniformSampling,
    #[error("pose series too short: {0} samples, need at least 5")]
    TooShort(usize),
    #[error("joint ({0}, {1}) is not part of the chain")]
    UnknownJoint(usize, usize),
    #[error("trial carries no ground-truth geometry")]
    MissingGeometry,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("pose series lacks the relative motion needed to identify the geometry")]
    DegenerateMotion,
}

/// Angle trajectory of one rotational degree of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum JointMotion {
    /// Rigid link (no actuation).
    Fixed,
    /// `amplitude * sin(2 pi f t + phase)`, radians.
    Sinusoid { amplitude: f64, frequency_hz: f64, phase: f64 },
    /// Constant angular rate (rad/s); used by analytic oracles.
    ConstantRate { rate: f64 },
}

impl JointMotion {
    /// Angle, angular rate, angular acceleration at time `t`.
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        match *self {
            JointMotion::Fixed => (0.0, 0.0, 0.0),
            JointMotion::Sinusoid { amplitude, frequency_hz, phase } => {
                let w = 2.0 * std::f64::consts::PI * frequency_hz;
                let arg = w * t + phase;
                (amplitude * arg.sin(), amplitude * w * arg.cos(), -amplitude * w * w * arg.sin())
            }
            JointMotion::ConstantRate { rate } => (rate * t, rate, 0.0),
        }
    }
}

/// One Denavit-Hartenberg link: `Rz(theta) Tz(d) Tx(a) Rx(alpha)` with
/// `theta = theta_offset + motion(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhLink {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    pub theta_offset: f64,
    pub motion: JointMotion,
}

/// One rigid segment carrying an IMU. Multi-DOF joints are expressed as
/// leading zero-length links; the IMU is rigidly attached to the frame of
/// the last link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DhSegment {
    pub links: Vec<DhLink>,
}

/// Full manipulator description: one segment per IMU, chained in order,
/// rooted at a fixed base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManipulatorSpec {
    pub segments: Vec<DhSegment>,
    /// Fixed base orientation as `(w, x, y, z)`; rotates the whole trial.
    #[serde(default)]
    pub base_orientation: Option<[f64; 4]>,
}

impl ManipulatorSpec {
    /// The three-segment chain used by the default experiments.
    pub fn default_three_link() -> Self {
        Self::chain(3)
    }

    /// A default chain with `n` segments. Every segment starts with a
    /// two-DOF joint (two orthogonal rotation axes via alternating twists)
    /// so that each IMU sees multi-axis rotation, which the joint-position
    /// identification needs. Frequencies rise along the chain and the
    /// last segment's amplitude tapers off; phases and angle offsets are
    /// paired so the chain starts from rest in the aligned zero pose (the
    /// filter's default identity initialization matches the first frame,
    /// and there is no angular-rate step at t = 0).
    pub fn chain(n: usize) -> Self {
        let half_pi = std::f64::consts::FRAC_PI_2;
        let mut dof = 0usize;
        let segments = (0..n)
            .map(|s| DhSegment {
                links: (0..2)
                    .map(|d| {
                        let amplitude =
                            if s + 1 == n && n > 1 { 30f64 } else { 40f64 }.to_radians();
                        let sign = if dof.is_multiple_of(2) { 1.0 } else { -1.0 };
                        dof += 1;
                        DhLink {
                            a: if d == 1 { 0.52 } else { 0.0 },
                            alpha: if d % 2 == 0 { half_pi } else { -half_pi },
                            d: 0.0,
                            theta_offset: -sign * amplitude,
                            motion: JointMotion::Sinusoid {
                                amplitude,
                                frequency_hz: 0.35 + 0.15 * s as f64 + 0.1 * d as f64,
                                phase: sign * half_pi,
                            },
                        }
                    })
                    .collect(),
            })
            .collect();
        Self { segments, base_orientation: None }
    }

    pub fn imu_count(&self) -> usize {
        self.segments.len()
    }

    pub fn topology(&self) -> ChainTopology {
        ChainTopology::linear(self.segments.len())
    }

    /// Default 26 cm lever arms matching [`ManipulatorSpec::chain`].
    pub fn default_geometry(&self) -> ChainGeometry {
        ChainGeometry::symmetric(self.segments.len().saturating_sub(1), 0.26)
    }

    fn base_quat(&self) -> UnitQuaternion {
        match self.base_orientation {
            Some([w, x, y, z]) => UnitQuaternion::new_normalized(w, x, y, z),
            None => UnitQuaternion::identity(),
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.segments.is_empty() {
            return Err(SimError::EmptySpec);
        }
        let mut freqs: Vec<f64> = Vec::new();
        for seg in &self.segments {
            if seg.links.is_empty() {
                return Err(SimError::InvalidMotion("segment with no links".into()));
            }
            for link in &seg.links {
                if let JointMotion::Sinusoid { amplitude, frequency_hz, .. } = link.motion {
                    if frequency_hz <= 0.0 {
                        return Err(SimError::InvalidMotion(format!(
                            "frequency must be positive, got {frequency_hz}"
                        )));
                    }
                    if amplitude <= 0.0 || amplitude >= std::f64::consts::PI {
                        return Err(SimError::InvalidMotion(format!(
                            "amplitude must lie in (0, pi), got {amplitude}"
                        )));
                    }
                    if freqs.contains(&frequency_hz) {
                        return Err(SimError::InvalidMotion(format!(
                            "sinusoid frequencies must be distinct, {frequency_hz} repeats"
                        )));
                    }
                    freqs.push(frequency_hz);
                }
            }
        }
        Ok(())
    }
}

/// Measurement noise injected by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Gyro noise variance ((rad/s)^2).
    pub gyro_variance: f64,
    /// Accelerometer noise variance ((m/s^2)^2).
    pub accel_variance: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    // Gyro default is 8.25e-5 (deg/s)^2 converted to (rad/s)^2. At the
    // (rad/s)^2 reading the backward-difference angular-acceleration input
    // carries ~1.3 rad/s^2 of white noise, which biases the lever-arm
    // constraint by several centimeters for any trajectory.
    fn default() -> Self {
        Self {
            gyro_variance: 8.25e-5 * (std::f64::consts::PI / 180.0).powi(2),
            accel_variance: 7.5e-3,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn noiseless(seed: u64) -> Self {
        Self { gyro_variance: 0.0, accel_variance: 0.0, seed }
    }
}

/// A simulated trial: noisy measurement frames plus full noise-free ground
/// truth (poses, body rates, angular accelerations, specific forces).
#[derive(Debug, Clone)]
pub struct SimulatedTrial {
    pub topology: ChainTopology,
    pub rate_hz: f64,
    pub times: Vec<f64>,
    pub frames: Vec<MeasurementFrame>,
    pub poses: PoseSeries,
    pub geometry: Option<ChainGeometry>,
    /// Ground-truth body-frame angular velocity, `[t][imu]`.
    pub gt_body_rate: Vec<Vec<Vec3>>,
    /// Ground-truth body-frame angular acceleration, `[t][imu]`.
    pub gt_body_rate_dot: Vec<Vec<Vec3>>,
    /// Ground-truth (noise-free) specific force, `[t][imu]`.
    pub gt_specific_force: Vec<Vec<Vec3>>,
}

impl SimulatedTrial {
    pub fn dt(&self) -> f64 {
        1.0 / self.rate_hz
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn truth_orientation(&self, t: usize, imu: usize) -> UnitQuaternion {
        self.poses.samples[t][imu].orientation
    }
}

/// Which side of a joint an IMU-centered quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointSide {
    I,
    J,
}

/// Nav-frame state of one DH frame while walking the chain.
#[derive(Clone, Copy)]
struct FrameState {
    orientation: UnitQuaternion,
    origin: Vec3,
    omega: Vec3,
    omega_dot: Vec3,
    accel: Vec3,
}

impl FrameState {
    fn base(orientation: UnitQuaternion) -> Self {
        Self {
            orientation,
            origin: Vec3::zeros(),
            omega: Vec3::zeros(),
            omega_dot: Vec3::zeros(),
            accel: Vec3::zeros(),
        }
    }

    /// Advances across one link at time `t`. Exact rigid-body recursion:
    /// consecutive frame origins lie on the revolute axes, so velocity and
    /// acceleration transfer with the new link's angular kinematics.
    fn advance(&self, link: &DhLink, t: f64) -> Self {
        let (theta_m, dtheta, ddtheta) = link.motion.eval(t);
        let theta = link.theta_offset + theta_m;
        let axis = self.orientation.rotate(&Vec3::z());
        let after_rz = self.orientation * UnitQuaternion::from_axis_angle(&Vec3::z(), theta);
        let origin = self.origin + after_rz.rotate(&Vec3::new(link.a, 0.0, link.d));
        let omega = self.omega + dtheta * axis;
        let omega_dot = self.omega_dot + ddtheta * axis + dtheta * self.omega.cross(&axis);
        let lever = origin - self.origin;
        let accel = self.accel + omega_dot.cross(&lever) + omega.cross(&omega.cross(&lever));
        Self {
            orientation: after_rz * UnitQuaternion::from_axis_angle(&Vec3::x(), link.alpha),
            origin,
            omega,
            omega_dot,
            accel,
        }
    }
}

/// IMU mounting in its segment's final link frame.
#[derive(Debug, Clone, Copy)]
struct Mounting {
    orientation: UnitQuaternion,
    position: Vec3,
}

/// Walks the whole chain at time `t`, returning each segment's final frame.
fn chain_frames(spec: &ManipulatorSpec, t: f64) -> Vec<FrameState> {
    let mut state = FrameState::base(spec.base_quat());
    let mut out = Vec::with_capacity(spec.segments.len());
    for seg in &spec.segments {
        for link in &seg.links {
            state = state.advance(link, t);
        }
        out.push(state);
    }
    out
}

/// Realizes the requested joint geometry as IMU mounting poses. The joint
/// between segments `s` and `s+1` sits at segment `s`'s final frame origin;
/// interior segments must request lever arms whose difference matches the
/// link length.
fn realize_mountings(
    spec: &ManipulatorSpec,
    geometry: &ChainGeometry,
) -> Result<Vec<Mounting>, SimError> {
    let n = spec.segments.len();
    if geometry.joints.len() + 1 != n {
        return Err(SimError::GeometryMismatch(format!(
            "{} joints specified for {} segments",
            geometry.joints.len(),
            n
        )));
    }
    let frames = chain_frames(spec, 0.0);
    let mut mountings = Vec::with_capacity(n);
    for s in 0..n {
        // proximal joint center expressed in this segment's final frame
        let prox = (s > 0).then(|| {
            let f = &frames[s];
            f.orientation.conjugate().rotate(&(frames[s - 1].origin - f.origin))
        });
        let dist = (s + 1 < n).then(|| geometry.joints[s].in_i);
        let mounting = match (prox, dist) {
            (None, Some(j_d)) => {
                Mounting { orientation: UnitQuaternion::identity(), position: -j_d }
            }
            (Some(p), None) => {
                let j_p = geometry.joints[s - 1].in_j;
                Mounting { orientation: UnitQuaternion::identity(), position: p - j_p }
            }
            (Some(p), Some(j_d)) => {
                let j_p = geometry.joints[s - 1].in_j;
                let span = j_p - j_d;
                if (span.norm() - p.norm()).abs() > 1e-9 * (1.0 + p.norm()) {
                    return Err(SimError::GeometryMismatch(format!(
                        "segment {s}: requested joint separation {} differs from link length {}",
                        span.norm(),
                        p.norm()
                    )));
                }
                let orientation = rotation_between(&span, &p);
                Mounting { orientation, position: -orientation.rotate(&j_d) }
            }
            (None, None) => {
                Mounting { orientation: UnitQuaternion::identity(), position: Vec3::zeros() }
            }
        };
        mountings.push(mounting);
    }
    Ok(mountings)
}

/// Generates a manipulator trial: forward kinematics at each timestep,
/// specific-force accelerometer and body-rate gyro samples with i.i.d.
/// Gaussian noise, and the ground-truth orientation of the external IMU as
/// the absolute orientation stream.
pub fn simulate_manipulator(
    spec: &ManipulatorSpec,
    geometry: &ChainGeometry,
    duration_s: f64,
    rate_hz: f64,
    noise: &NoiseSpec,
) -> Result<SimulatedTrial, SimError> {
    spec.validate()?;
    if rate_hz <= 0.0 {
        return Err(SimError::InvalidRate(rate_hz));
    }
    let mountings = realize_mountings(spec, geometry)?;
    let topology = spec.topology();
    let n_imus = spec.segments.len();
    let steps = (duration_s * rate_hz).round() as usize;
    let dt = 1.0 / rate_hz;

    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let gyro_noise = rand_distr::Normal::new(0.0, noise.gyro_variance.sqrt()).unwrap();
    let accel_noise = rand_distr::Normal::new(0.0, noise.accel_variance.sqrt()).unwrap();

    let mut times = Vec::with_capacity(steps);
    let mut frames = Vec::with_capacity(steps);
    let mut pose_samples = Vec::with_capacity(steps);
    let mut gt_body_rate = Vec::with_capacity(steps);
    let mut gt_body_rate_dot = Vec::with_capacity(steps);
    let mut gt_specific_force = Vec::with_capacity(steps);

    for k in 0..steps {
        let t = k as f64 * dt;
        let chain = chain_frames(spec, t);
        let mut poses = Vec::with_capacity(n_imus);
        let mut rates = Vec::with_capacity(n_imus);
        let mut rate_dots = Vec::with_capacity(n_imus);
        let mut forces = Vec::with_capacity(n_imus);
        let mut gyro = Vec::with_capacity(n_imus);
        let mut accel = Vec::with_capacity(n_imus);
        for (frame, mounting) in chain.iter().zip(&mountings) {
            let q_imu = frame.orientation * mounting.orientation;
            let lever = frame.orientation.rotate(&mounting.position);
            let p_imu = frame.origin + lever;
            let p_ddot = frame.accel
                + frame.omega_dot.cross(&lever)
                + frame.omega.cross(&frame.omega.cross(&lever));
            let body_rate = q_imu.conjugate().rotate(&frame.omega);
            let body_rate_dot = q_imu.conjugate().rotate(&frame.omega_dot);
            let force = q_imu.conjugate().rotate(&(p_ddot - GRAVITY));
            poses.push(ImuPoseSample { position: p_imu, orientation: q_imu });
            let g_sample = Vec3::new(
                gyro_noise.sample(&mut rng),
                gyro_noise.sample(&mut rng),
                gyro_noise.sample(&mut rng),
            );
            let a_sample = Vec3::new(
                accel_noise.sample(&mut rng),
                accel_noise.sample(&mut rng),
                accel_noise.sample(&mut rng),
            );
            gyro.push(body_rate + g_sample);
            accel.push(force + a_sample);
            rates.push(body_rate);
            rate_dots.push(body_rate_dot);
            forces.push(force);
        }
        let orientation = poses[topology.external_imu].orientation;
        times.push(t);
        frames.push(MeasurementFrame { accel, gyro, orientation });
        pose_samples.push(poses);
        gt_body_rate.push(rates);
        gt_body_rate_dot.push(rate_dots);
        gt_specific_force.push(forces);
    }

    Ok(SimulatedTrial {
        topology,
        rate_hz,
        times: times.clone(),
        frames,
        poses: PoseSeries { times, samples: pose_samples },
        geometry: Some(geometry.clone()),
        gt_body_rate,
        gt_body_rate_dot,
        gt_specific_force,
    })
}

/// Central-difference kinematics of one IMU's pose series: body-frame
/// angular velocity from quaternion differences and nav-frame linear
/// acceleration from second differences of the position. Endpoints use the
/// one-sided (adjacent interior) stencils.
pub fn differentiate_poses(samples: &[ImuPoseSample], dt: f64) -> (Vec<Vec3>, Vec<Vec3>) {
    let n = samples.len();
    let mut omegas = vec![Vec3::zeros(); n];
    let mut accels = vec![Vec3::zeros(); n];
    for t in 0..n {
        omegas[t] = if t == 0 {
            (samples[0].orientation.conjugate() * samples[1].orientation).rotation_vector() / dt
        } else if t == n - 1 {
            (samples[n - 2].orientation.conjugate() * samples[n - 1].orientation)
                .rotation_vector()
                / dt
        } else {
            (samples[t - 1].orientation.conjugate() * samples[t + 1].orientation)
                .rotation_vector()
                / (2.0 * dt)
        };
        let c = t.clamp(1, n - 2);
        accels[t] = (samples[c + 1].position - 2.0 * samples[c].position
            + samples[c - 1].position)
            / (dt * dt);
    }
    (omegas, accels)
}

/// Re-simulates IMU data from recorded poses: numerical differentiation for
/// rates and accelerations, specific-force conversion, Gaussian noise, and
/// the recorded orientation of the external IMU as the absolute stream.
/// Ground-truth geometry is not part of the input; see [`derive_geometry`].
pub fn resimulate_from_poses(
    poses: &PoseSeries,
    topology: &ChainTopology,
    noise: &NoiseSpec,
) -> Result<SimulatedTrial, SimError> {
    if poses.len() < 5 {
        return Err(SimError::TooShort(poses.len()));
    }
    let dt = poses.uniform_dt().ok_or(SimError::NonUniformSampling)?;
    if poses.imu_count() != topology.imu_count {
        return Err(SimError::DimensionMismatch(format!(
            "{} IMUs in pose series, topology expects {}",
            poses.imu_count(),
            topology.imu_count
        )));
    }
    let n = poses.len();
    let n_imus = topology.imu_count;

    let mut per_imu: Vec<(Vec<Vec3>, Vec<Vec3>)> = Vec::with_capacity(n_imus);
    for imu in 0..n_imus {
        let series: Vec<ImuPoseSample> = (0..n).map(|t| poses.samples[t][imu]).collect();
        per_imu.push(differentiate_poses(&series, dt));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let gyro_noise = rand_distr::Normal::new(0.0, noise.gyro_variance.sqrt()).unwrap();
    let accel_noise = rand_distr::Normal::new(0.0, noise.accel_variance.sqrt()).unwrap();

    let mut frames = Vec::with_capacity(n);
    let mut gt_body_rate = Vec::with_capacity(n);
    let mut gt_body_rate_dot = Vec::with_capacity(n);
    let mut gt_specific_force = Vec::with_capacity(n);
    for t in 0..n {
        let mut gyro = Vec::with_capacity(n_imus);
        let mut accel = Vec::with_capacity(n_imus);
        let mut rates = Vec::with_capacity(n_imus);
        let mut rate_dots = Vec::with_capacity(n_imus);
        let mut forces = Vec::with_capacity(n_imus);
        for (imu, (omegas, accels)) in per_imu.iter().enumerate() {
            let q = poses.samples[t][imu].orientation;
            let force = q.conjugate().rotate(&(accels[t] - GRAVITY));
            let c = t.clamp(1, n - 2);
            let rate_dot = (omegas[c + 1] - omegas[c - 1]) / (2.0 * dt);
            let g_sample = Vec3::new(
                gyro_noise.sample(&mut rng),
                gyro_noise.sample(&mut rng),
                gyro_noise.sample(&mut rng),
            );
            let a_sample = Vec3::new(
                accel_noise.sample(&mut rng),
                accel_noise.sample(&mut rng),
                accel_noise.sample(&mut rng),
            );
            gyro.push(omegas[t] + g_sample);
            accel.push(force + a_sample);
            rates.push(omegas[t]);
            rate_dots.push(rate_dot);
            forces.push(force);
        }
        let orientation = poses.samples[t][topology.external_imu].orientation;
        frames.push(MeasurementFrame { accel, gyro, orientation });
        gt_body_rate.push(rates);
        gt_body_rate_dot.push(rate_dots);
        gt_specific_force.push(forces);
    }

    Ok(SimulatedTrial {
        topology: topology.clone(),
        rate_hz: 1.0 / dt,
        times: poses.times.clone(),
        frames,
        poses: poses.clone(),
        geometry: None,
        gt_body_rate,
        gt_body_rate_dot,
        gt_specific_force,
    })
}

/// Recovers the true joint positions from rigid pose trajectories by least
/// squares: for every timestep, `p_i + R_i J_i = p_j + R_j J_j` at the
/// shared joint center. Exact for rigid, noise-free poses with relative
/// rotation between the segments.
pub fn derive_geometry(
    poses: &PoseSeries,
    topology: &ChainTopology,
) -> Result<ChainGeometry, SimError> {
    use nalgebra::{DMatrix, DVector};
    if poses.len() < 2 {
        return Err(SimError::TooShort(poses.len()));
    }
    let n = poses.len();
    let stride = (n / 200).max(1);
    let mut joints = Vec::with_capacity(topology.joints.len());
    for &(i, j) in &topology.joints {
        let rows = 3 * n.div_ceil(stride);
        let mut a = DMatrix::zeros(rows, 6);
        let mut b = DVector::zeros(rows);
        let mut row = 0;
        for t in (0..n).step_by(stride) {
            let si = &poses.samples[t][i];
            let sj = &poses.samples[t][j];
            a.fixed_view_mut::<3, 3>(row, 0).copy_from(&si.orientation.to_rotation_matrix().0);
            a.fixed_view_mut::<3, 3>(row, 3)
                .copy_from(&(-sj.orientation.to_rotation_matrix().0));
            b.fixed_rows_mut::<3>(row).copy_from(&(sj.position - si.position));
            row += 3;
        }
        let ata = a.transpose() * &a;
        let atb = a.transpose() * b;
        let chol = nalgebra::linalg::Cholesky::new(ata).ok_or(SimError::DegenerateMotion)?;
        let x = chol.solve(&atb);
        joints.push(JointGeometry {
            in_i: Vec3::new(x[0], x[1], x[2]),
            in_j: Vec3::new(x[3], x[4], x[5]),
        });
    }
    Ok(ChainGeometry { joints })
}

/// Nav-frame acceleration of a joint center (gravity-corrected) evaluated
/// from one side: the measured specific force transferred to the joint
/// point with ground-truth orientation, rates and geometry. For noise-free
/// trials the two sides coincide.
pub fn compute_ground_truth_joint_accel(
    trial: &SimulatedTrial,
    joint: (usize, usize),
    side: JointSide,
) -> Result<Vec<Vec3>, SimError> {
    let k = trial
        .topology
        .joints
        .iter()
        .position(|&p| p == joint)
        .ok_or(SimError::UnknownJoint(joint.0, joint.1))?;
    let geometry = trial.geometry.as_ref().ok_or(SimError::MissingGeometry)?;
    let (imu, lever) = match side {
        JointSide::I => (joint.0, geometry.joints[k].in_i),
        JointSide::J => (joint.1, geometry.joints[k].in_j),
    };
    Ok((0..trial.len())
        .map(|t| {
            let w = trial.gt_body_rate[t][imu];
            let wd = trial.gt_body_rate_dot[t][imu];
            let a_c =
                trial.frames[t].accel[imu] + w.cross(&w.cross(&lever)) + wd.cross(&lever);
            trial.truth_orientation(t, imu).rotate(&a_c)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn static_spec() -> ManipulatorSpec {
        let mut spec = ManipulatorSpec::default_three_link();
        for seg in &mut spec.segments {
            for link in &mut seg.links {
                link.motion = JointMotion::Fixed;
            }
        }
        spec
    }

    #[test]
    fn static_chain_reads_gravity_only() {
        let spec = static_spec();
        let geometry = spec.default_geometry();
        let trial =
            simulate_manipulator(&spec, &geometry, 1.0, 100.0, &NoiseSpec::noiseless(0)).unwrap();
        assert_eq!(trial.len(), 100);
        for frame in &trial.frames {
            for i in 0..3 {
                assert!(frame.gyro[i].norm() < 1e-12);
                assert!((frame.accel[i].norm() - 9.81).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_rate_joint_gives_centripetal_reading() {
        // one fixed root link, one distal link spinning at constant rate
        let rate = 1.5;
        let spec = ManipulatorSpec {
            segments: vec![
                DhSegment {
                    links: vec![DhLink {
                        a: 0.4,
                        alpha: 0.0,
                        d: 0.0,
                        theta_offset: 0.0,
                        motion: JointMotion::Fixed,
                    }],
                },
                DhSegment {
                    links: vec![DhLink {
                        a: 0.5,
                        alpha: 0.0,
                        d: 0.0,
                        theta_offset: 0.0,
                        motion: JointMotion::ConstantRate { rate },
                    }],
                },
            ],
            base_orientation: None,
        };
        let geometry = ChainGeometry {
            joints: vec![JointGeometry {
                in_i: Vec3::new(0.2, 0.0, 0.0),
                in_j: Vec3::new(-0.25, 0.0, 0.0),
            }],
        };
        let trial =
            simulate_manipulator(&spec, &geometry, 2.0, 100.0, &NoiseSpec::noiseless(0)).unwrap();
        for t in 0..trial.len() {
            let frame = &trial.frames[t];
            // distal IMU: gyro reads the joint rate about its z axis
            assert!((frame.gyro[1] - Vec3::new(0.0, 0.0, rate)).norm() < 1e-12);
            // specific force minus the gravity reaction equals the
            // centripetal term -w^2 rho, rho the 0.25 m lever to the axis
            let q = trial.truth_orientation(t, 1);
            let dynamic = frame.accel[1] - q.conjugate().rotate(&-GRAVITY);
            let expected =
                q.conjugate().rotate(&(-rate * rate * q.rotate(&Vec3::new(0.25, 0.0, 0.0))));
            assert!((dynamic - expected).norm() < 1e-9, "t={t}");
            assert!((dynamic.norm() - rate * rate * 0.25).abs() < 1e-9);
            // root IMU stays static
            assert!(frame.gyro[0].norm() < 1e-12);
        }
    }

    #[test]
    fn ten_minute_trial_shape_and_noise_statistics() {
        let spec = ManipulatorSpec::default_three_link();
        let geometry = spec.default_geometry();
        let noise = NoiseSpec::default();
        let trial = simulate_manipulator(&spec, &geometry, 600.0, 100.0, &noise).unwrap();
        assert_eq!(trial.len(), 60_000);
        let mut gyro_sq = 0.0;
        let mut accel_sq = 0.0;
        let mut count = 0usize;
        for t in 0..trial.len() {
            for i in 0..3 {
                let dg = trial.frames[t].gyro[i] - trial.gt_body_rate[t][i];
                let da = trial.frames[t].accel[i] - trial.gt_specific_force[t][i];
                gyro_sq += dg.norm_squared();
                accel_sq += da.norm_squared();
                count += 3;
            }
        }
        let gyro_var = gyro_sq / count as f64;
        let accel_var = accel_sq / count as f64;
        assert!((gyro_var - noise.gyro_variance).abs() < 0.05 * noise.gyro_variance);
        assert!((accel_var - noise.accel_variance).abs() < 0.05 * noise.accel_variance);
    }

    #[test]
    fn noiseless_joint_acceleration_constraint_holds() {
        let spec = ManipulatorSpec::default_three_link();
        let geometry = spec.default_geometry();
        let trial =
            simulate_manipulator(&spec, &geometry, 5.0, 100.0, &NoiseSpec::noiseless(0)).unwrap();
        for &joint in &trial.topology.joints.clone() {
            let side_i = compute_ground_truth_joint_accel(&trial, joint, JointSide::I).unwrap();
            let side_j = compute_ground_truth_joint_accel(&trial, joint, JointSide::J).unwrap();
            for t in 0..trial.len() {
                assert!(
                    (side_i[t] - side_j[t]).norm() < 1e-6,
                    "joint {joint:?} t={t}: {}",
                    (side_i[t] - side_j[t]).norm()
                );
            }
        }
        assert!(matches!(
            compute_ground_truth_joint_accel(&trial, (0, 2), JointSide::I),
            Err(SimError::UnknownJoint(0, 2))
        ));
    }

    #[test]
    fn noisy_joint_acceleration_disagreement_is_zero_mean() {
        let spec = ManipulatorSpec::default_three_link();
        let geometry = spec.default_geometry();
        let trial =
            simulate_manipulator(&spec, &geometry, 60.0, 100.0, &NoiseSpec::default()).unwrap();
        let side_i = compute_ground_truth_joint_accel(&trial, (0, 1), JointSide::I).unwrap();
        let side_j = compute_ground_truth_joint_accel(&trial, (0, 1), JointSide::J).unwrap();
        let mut mean = Vec3::zeros();
        for t in 0..trial.len() {
            mean += side_i[t] - side_j[t];
        }
        mean /= trial.len() as f64;
        // per-axis noise sigma ~0.087 m/s^2; the mean of 6000 samples should
        // be well within 0.01
        assert!(mean.norm() < 0.01, "mean disagreement {}", mean.norm());
    }

    #[test]
    fn static_chain_joint_acceleration_equals_gravity_reaction() {
        let spec = static_spec();
        let geometry = spec.default_geometry();
        let trial =
            simulate_manipulator(&spec, &geometry, 0.5, 100.0, &NoiseSpec::noiseless(0)).unwrap();
        let side_i = compute_ground_truth_joint_accel(&trial, (0, 1), JointSide::I).unwrap();
        for a in side_i {
            assert!((a - -GRAVITY).norm() < 1e-9);
        }
    }

    #[test]
    fn geometry_is_realized_exactly_and_rigidly() {
        let spec = ManipulatorSpec::default_three_link();
        // non-trivial lever arms with the same 0.52 m joint separation
        let geometry = ChainGeometry {
            joints: vec![
                JointGeometry {
                    in_i: Vec3::new(0.2, 0.1, 0.1),
                    in_j: Vec3::new(-0.26, 0.1, 0.05),
                },
                JointGeometry {
                    in_i: Vec3::new(0.26, 0.1, 0.05),
                    in_j: Vec3::new(-0.22, -0.1, 0.08),
                },
            ],
        };
        let span = (geometry.joints[0].in_j - geometry.joints[1].in_i).norm();
        assert!((span - 0.52).abs() < 1e-9, "test geometry must be compatible, got {span}");
        let trial =
            simulate_manipulator(&spec, &geometry, 2.0, 50.0, &NoiseSpec::noiseless(0)).unwrap();
        // the world joint point computed from either side agrees at every step
        for (k, &(i, j)) in trial.topology.joints.clone().iter().enumerate() {
            for t in 0..trial.len() {
                let pi = &trial.poses.samples[t][i];
                let pj = &trial.poses.samples[t][j];
                let wi = pi.position + pi.orientation.rotate(&geometry.joints[k].in_i);
                let wj = pj.position + pj.orientation.rotate(&geometry.joints[k].in_j);
                assert!((wi - wj).norm() < 1e-9, "joint {k} t={t}");
            }
        }
    }

    #[test]
    fn incompatible_geometry_is_rejected() {
        let spec = ManipulatorSpec::default_three_link();
        let geometry = ChainGeometry {
            joints: vec![
                JointGeometry {
                    in_i: Vec3::new(0.2, 0.0, 0.0),
                    in_j: Vec3::new(-0.2, 0.0, 0.0), // 0.4 separation vs 0.52 link
                },
                JointGeometry {
                    in_i: Vec3::new(0.2, 0.0, 0.0),
                    in_j: Vec3::new(-0.26, 0.0, 0.0),
                },
            ],
        };
        assert!(matches!(
            simulate_manipulator(&spec, &geometry, 1.0, 100.0, &NoiseSpec::noiseless(0)),
            Err(SimError::GeometryMismatch(_))
        ));
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let empty = ManipulatorSpec { segments: vec![], base_orientation: None };
        assert!(matches!(
            simulate_manipulator(
                &empty,
                &ChainGeometry { joints: vec![] },
                1.0,
                100.0,
                &NoiseSpec::noiseless(0)
            ),
            Err(SimError::EmptySpec)
        ));
        let spec = ManipulatorSpec::default_three_link();
        assert!(matches!(
            simulate_manipulator(
                &spec,
                &spec.default_geometry(),
                1.0,
                0.0,
                &NoiseSpec::noiseless(0)
            ),
            Err(SimError::InvalidRate(_))
        ));
        let mut dup = ManipulatorSpec::default_three_link();
        let first = match dup.segments[0].links[0].motion {
            JointMotion::Sinusoid { frequency_hz, .. } => frequency_hz,
            _ => unreachable!(),
        };
        if let JointMotion::Sinusoid { frequency_hz, .. } = &mut dup.segments[1].links[0].motion {
            *frequency_hz = first; // collides with segment 0
        }
        assert!(matches!(
            simulate_manipulator(
                &dup,
                &dup.default_geometry(),
                1.0,
                100.0,
                &NoiseSpec::noiseless(0)
            ),
            Err(SimError::InvalidMotion(_))
        ));
    }

    #[test]
    fn same_seed_reproduces_bitwise() {
        let spec = ManipulatorSpec::default_three_link();
        let geometry = spec.default_geometry();
        let noise = NoiseSpec { seed: 7, ..NoiseSpec::default() };
        let a = simulate_manipulator(&spec, &geometry, 1.0, 100.0, &noise).unwrap();
        let b = simulate_manipulator(&spec, &geometry, 1.0, 100.0, &noise).unwrap();
        for t in 0..a.len() {
            assert_eq!(a.frames[t], b.frames[t]);
        }
    }

    #[test]
    fn resimulation_matches_analytic_path() {
        // single-DOF joints at 0.2/0.3/0.5 Hz: at 100 Hz the second-order
        // difference error stays below the stated 1e-3 rad/s, 1e-2 m/s^2
        let amplitude = 30f64.to_radians();
        let spec = ManipulatorSpec {
            segments: [0.2, 0.3, 0.5]
                .iter()
                .map(|&frequency_hz| DhSegment {
                    links: vec![DhLink {
                        a: 0.52,
                        alpha: std::f64::consts::FRAC_PI_2,
                        d: 0.0,
                        theta_offset: 0.0,
                        motion: JointMotion::Sinusoid { amplitude, frequency_hz, phase: 0.0 },
                    }],
                })
                .collect(),
            base_orientation: None,
        };
        let geometry = spec.default_geometry();
        let direct =
            simulate_manipulator(&spec, &geometry, 5.0, 100.0, &NoiseSpec::noiseless(0)).unwrap();
        let resim =
            resimulate_from_poses(&direct.poses, &direct.topology, &NoiseSpec::noiseless(0))
                .unwrap();
        for t in 2..direct.len() - 2 {
            for imu in 0..3 {
                let dg = (resim.frames[t].gyro[imu] - direct.gt_body_rate[t][imu]).norm();
                let da = (resim.frames[t].accel[imu] - direct.gt_specific_force[t][imu]).norm();
                assert!(dg < 1e-3, "gyro mismatch {dg} at t={t} imu={imu}");
                assert!(da < 1e-2, "accel mismatch {da} at t={t} imu={imu}");
            }
        }
    }

    #[test]
    fn constant_poses_resimulate_to_gravity_only() {
        let sample = ImuPoseSample {
            position: Vec3::new(0.3, -0.2, 1.0),
            orientation: UnitQuaternion::from_axis_angle(&Vec3::y(), 0.4),
        };
        let poses = PoseSeries {
            times: (0..50).map(|k| k as f64 * 0.01).collect(),
            samples: vec![vec![sample, sample]; 50],
        };
        let topo = ChainTopology::linear(2);
        let trial = resimulate_from_poses(&poses, &topo, &NoiseSpec::noiseless(0)).unwrap();
        for frame in &trial.frames {
            for imu in 0..2 {
                assert!(frame.gyro[imu].norm() < 1e-12);
                let expected = sample.orientation.conjugate().rotate(&-GRAVITY);
                assert!((frame.accel[imu] - expected).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn circular_translation_matches_analytic_magnitude() {
        // pure translation on a circle: accel magnitude sqrt((W^2 r)^2 + g^2)
        let radius = 0.5;
        let big_omega = 2.0;
        let dt = 0.01;
        let n = 200;
        let samples: Vec<ImuPoseSample> = (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                ImuPoseSample {
                    position: Vec3::new(
                        radius * (big_omega * t).cos(),
                        radius * (big_omega * t).sin(),
                        0.0,
                    ),
                    orientation: UnitQuaternion::identity(),
                }
            })
            .collect();
        let (omegas, accels) = differentiate_poses(&samples, dt);
        let expected =
            ((big_omega * big_omega * radius).powi(2) + GRAVITY.norm_squared()).sqrt();
        for t in 1..n - 1 {
            assert!(omegas[t].norm() < 1e-9);
            let force = (accels[t] - GRAVITY).norm();
            assert!((force - expected).abs() < 0.005 * expected, "t={t}: {force} vs {expected}");
        }
    }

    #[test]
    fn heading_rotation_leaves_body_measurements_unchanged() {
        let spec = ManipulatorSpec::default_three_link();
        let geometry = spec.default_geometry();
        let direct =
            simulate_manipulator(&spec, &geometry, 2.0, 100.0, &NoiseSpec::noiseless(0)).unwrap();
        let heading = UnitQuaternion::from_axis_angle(&Vec3::z(), std::f64::consts::FRAC_PI_2);
        let rotated = PoseSeries {
            times: direct.poses.times.clone(),
            samples: direct
                .poses
                .samples
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|s| ImuPoseSample {
                            position: heading.rotate(&s.position),
                            orientation: heading * s.orientation,
                        })
                        .collect()
                })
                .collect(),
        };
        let a = resimulate_from_poses(&direct.poses, &direct.topology, &NoiseSpec::noiseless(0))
            .unwrap();
        let b =
            resimulate_from_poses(&rotated, &direct.topology, &NoiseSpec::noiseless(0)).unwrap();
        for t in 0..a.len() {
            for imu in 0..3 {
                assert!((a.frames[t].gyro[imu] - b.frames[t].gyro[imu]).norm() < 1e-9);
                assert!((a.frames[t].accel[imu] - b.frames[t].accel[imu]).norm() < 1e-9);
            }
            let expected = heading * a.frames[t].orientation;
            assert!(expected.angle_to(&b.frames[t].orientation) < 1e-9);
        }
    }

    #[test]
    fn derive_geometry_recovers_true_levers() {
        let spec = ManipulatorSpec::default_three_link();
        let geometry = spec.default_geometry();
        let trial =
            simulate_manipulator(&spec, &geometry, 4.0, 100.0, &NoiseSpec::noiseless(0)).unwrap();
        let derived = derive_geometry(&trial.poses, &trial.topology).unwrap();
        for (d, g) in derived.joints.iter().zip(&geometry.joints) {
            assert!((d.in_i - g.in_i).norm() < 1e-6);
            assert!((d.in_j - g.in_j).norm() < 1e-6);
        }
    }

    #[test]
    fn resimulate_input_validation() {
        let sample =
            ImuPoseSample { position: Vec3::zeros(), orientation: UnitQuaternion::identity() };
        let topo = ChainTopology::linear(2);
        let short = PoseSeries { times: vec![0.0, 0.01], samples: vec![vec![sample, sample]; 2] };
        assert!(matches!(
            resimulate_from_poses(&short, &topo, &NoiseSpec::noiseless(0)),
            Err(SimError::TooShort(2))
        ));
        let uneven = PoseSeries {
            times: vec![0.0, 0.01, 0.02, 0.04, 0.05],
            samples: vec![vec![sample, sample]; 5],
        };
        assert!(matches!(
            resimulate_from_poses(&uneven, &topo, &NoiseSpec::noiseless(0)),
            Err(SimError::NonUniformSampling)
        ));
    }
}
