//! Calibration-free inertial tracking of a kinematic chain.
//!
//! The crate simulates IMU data for chains of rigid segments (forward
//! kinematics of a sinusoidally driven manipulator, or re-simulation from
//! recorded poses) and estimates, per timestep, every IMU's global
//! orientation and angular velocity together with the joint positions
//! expressed in the adjacent IMU frames. The estimator is a recursive
//! Bayesian filter: an EKF-style time update followed by a Gauss-Newton
//! maximum a-posteriori solve over the full state. No IMU-to-segment
//! calibration, segment lengths, or magnetometers are required; a single
//! absolute orientation stream anchors the chain's heading.

pub mod chain;
pub mod config;
pub mod filter;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod sim;
pub mod so3;
