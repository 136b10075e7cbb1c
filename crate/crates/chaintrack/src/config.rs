//! Experiment configuration: one TOML file describing topology, data
//! source, noise, filter weights, solver settings, initialization policy
//! and the Monte Carlo protocol. Every run writes its fully resolved
//! configuration back out, so results are self-documenting.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainGeometry, ChainTopology};
use crate::filter::{NoiseConfig, SolverConfig};
use crate::sim::{ManipulatorSpec, NoiseSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config field {field}: {message}")]
    Invalid { field: String, message: String },
}

/// Where the measurement data comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    /// Forward-kinematics manipulator simulation.
    #[default]
    Manipulator,
    /// Re-simulation from a pose CSV.
    Poses,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceConfig {
    pub kind: SourceKind,
    /// Pose CSV path for `kind = "poses"`.
    pub pose_csv: Option<PathBuf>,
    pub duration_s: f64,
    pub rate_hz: f64,
    /// Lever arm magnitude of the default symmetric geometry (m).
    pub lever_arm_m: f64,
    /// Explicit true joint geometry; defaults to the symmetric layout with
    /// `lever_arm_m` levers.
    pub geometry: Option<ChainGeometry>,
    /// Explicit manipulator spec; defaults to the built-in chain matching
    /// the topology's IMU count.
    pub manipulator: Option<ManipulatorSpec>,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            kind: SourceKind::Manipulator,
            pose_csv: None,
            duration_s: 120.0,
            rate_hz: 100.0,
            lever_arm_m: 0.26,
            geometry: None,
            manipulator: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum JointInitMode {
    /// Uniform random per axis in `[-joint_range_m, joint_range_m]`.
    #[default]
    Random,
    /// Ground-truth joint positions (requires geometry on disk).
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OrientationInitMode {
    #[default]
    Identity,
    /// Ground-truth initial orientations (requires poses on disk).
    Truth,
    /// Ground truth perturbed by a random rotation of the configured angle.
    TruthPerturbed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    pub joint_mode: JointInitMode,
    pub joint_range_m: f64,
    pub orientation_mode: OrientationInitMode,
    pub orientation_perturbation_deg: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            joint_mode: JointInitMode::Random,
            joint_range_m: 0.3,
            orientation_mode: OrientationInitMode::Identity,
            orientation_perturbation_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonteCarloConfig {
    pub seeds: usize,
    pub batch_length_s: f64,
    /// Convergence transient excluded from MAE batches.
    pub skip_initial_s: f64,
    pub convergence_threshold_m: f64,
    pub convergence_hold_s: f64,
    /// Re-draw the random joint initialization per seed.
    pub randomize_init_per_seed: bool,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            seeds: 10,
            batch_length_s: 55.0,
            skip_initial_s: 10.0,
            convergence_threshold_m: 0.02,
            convergence_hold_s: 2.0,
            randomize_init_per_seed: true,
        }
    }
}

/// The complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    pub topology: ChainTopology,
    pub source: SourceConfig,
    pub sim_noise: NoiseSpec,
    pub filter: NoiseConfig,
    pub solver: SolverConfig,
    pub init: InitConfig,
    pub montecarlo: MonteCarloConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let config: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        let text = toml::to_string_pretty(self).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        std::fs::write(path, text)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })
    }

    /// The manipulator spec in effect: explicit if given, otherwise the
    /// built-in default chain sized to the topology.
    pub fn manipulator_spec(&self) -> ManipulatorSpec {
        self.source
            .manipulator
            .clone()
            .unwrap_or_else(|| ManipulatorSpec::chain(self.topology.imu_count))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.topology.validate().map_err(|e| ConfigError::Invalid {
            field: "topology".into(),
            message: e.to_string(),
        })?;
        if self.source.rate_hz <= 0.0 {
            return Err(ConfigError::Invalid {
                field: "source.rate_hz".into(),
                message: "must be positive".into(),
            });
        }
        if self.source.duration_s <= 0.0 {
            return Err(ConfigError::Invalid {
                field: "source.duration_s".into(),
                message: "must be positive".into(),
            });
        }
        if let Some(spec) = &self.source.manipulator {
            if spec.imu_count() != self.topology.imu_count {
                return Err(ConfigError::Invalid {
                    field: "source.manipulator".into(),
                    message: format!(
                        "{} segments for {} IMUs",
                        spec.imu_count(),
                        self.topology.imu_count
                    ),
                });
            }
        }
        if let Some(geometry) = &self.source.geometry {
            if geometry.joints.len() != self.topology.joint_count() {
                return Err(ConfigError::Invalid {
                    field: "source.geometry".into(),
                    message: format!(
                        "{} joints specified, topology has {}",
                        geometry.joints.len(),
                        self.topology.joint_count()
                    ),
                });
            }
        }
        if self.source.kind == SourceKind::Poses && self.source.pose_csv.is_none() {
            return Err(ConfigError::Invalid {
                field: "source.pose_csv".into(),
                message: "required when source.kind = \"poses\"".into(),
            });
        }
        if self.montecarlo.seeds == 0 {
            return Err(ConfigError::Invalid {
                field: "montecarlo.seeds".into(),
                message: "at least one seed".into(),
            });
        }
        for (field, v) in [
            ("filter.sigma_omega", self.filter.sigma_omega),
            ("filter.sigma_accel", self.filter.sigma_accel),
            ("filter.sigma_orientation", self.filter.sigma_orientation),
        ] {
            if v <= 0.0 {
                return Err(ConfigError::Invalid {
                    field: field.into(),
                    message: "must be positive".into(),
                });
            }
        }
        if self.solver.max_iterations == 0 {
            return Err(ConfigError::Invalid {
                field: "solver.max_iterations".into(),
                message: "at least one iteration".into(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_covariances() {
        let config = ExperimentConfig::default();
        assert_eq!(config.filter.p0_mrp, 1e-6);
        assert_eq!(config.filter.p0_omega, 1e-1);
        assert_eq!(config.filter.p0_joint, 1e-4);
        assert_eq!(config.filter.q_omega, 1e-8);
        assert_eq!(config.filter.sigma_omega, 1e-3);
        assert_eq!(config.filter.sigma_accel, 1e-1);
        let deg2 = (std::f64::consts::PI / 180.0).powi(2);
        assert!((config.sim_noise.gyro_variance - 8.25e-5 * deg2).abs() < 1e-20);
        assert_eq!(config.sim_noise.accel_variance, 7.5e-3);
        assert!(config.validate().is_ok());
    }

    #[test]
    fn toml_round_trip_is_identity() {
        let dir = std::env::temp_dir().join("chaintrack_config_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("config.toml");
        let mut config = ExperimentConfig::default();
        config.source.manipulator = Some(crate::sim::ManipulatorSpec::chain(3));
        config.montecarlo.seeds = 7;
        config.save(&path).unwrap();
        let back = ExperimentConfig::load(&path).unwrap();
        assert_eq!(config, back);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let config: ExperimentConfig = toml::from_str(
            r#"
            [topology]
            imu_count = 2
            joints = [[0, 1]]
            external_imu = 0

            [montecarlo]
            seeds = 3
            "#,
        )
        .unwrap();
        assert_eq!(config.topology.imu_count, 2);
        assert_eq!(config.montecarlo.seeds, 3);
        assert_eq!(config.filter.sigma_accel, 1e-1);
        assert_eq!(config.source.rate_hz, 100.0);
    }

    #[test]
    fn validation_reports_field_paths() {
        let mut config = ExperimentConfig::default();
        config.topology.external_imu = 9;
        match config.validate() {
            Err(ConfigError::Invalid { field, .. }) => assert_eq!(field, "topology"),
            other => panic!("expected invalid topology, got {other:?}"),
        }
        let mut config = ExperimentConfig::default();
        config.source.kind = SourceKind::Poses;
        match config.validate() {
            Err(ConfigError::Invalid { field, .. }) => assert_eq!(field, "source.pose_csv"),
            other => panic!("expected missing pose_csv, got {other:?}"),
        }
    }
}
