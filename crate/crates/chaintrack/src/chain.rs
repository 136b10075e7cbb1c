//! Kinematic chain description: the IMU set, joint connectivity, the IMU
//! receiving absolute orientation measurements, and ground-truth geometry
//! used by the simulator and the evaluation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::so3::{UnitQuaternion, Vec3};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("a chain needs at least two IMUs, got {0}")]
    TooFewImus(usize),
    #[error("expected {expected} joints for {imus} IMUs, got {got}")]
    BadJointCount { imus: usize, expected: usize, got: usize },
    #[error("joint ({0}, {1}) connects an IMU to itself")]
    SelfJoint(usize, usize),
    #[error("joint ({0}, {1}) references an IMU index out of range")]
    BadJointIndex(usize, usize),
    #[error("the joint graph contains a cycle (duplicate or redundant connection)")]
    CyclicChain,
    #[error("the joint graph is disconnected")]
    DisconnectedChain,
    #[error("external orientation IMU index {0} is out of range")]
    BadExternalIndex(usize),
}

/// IMU count, joint connectivity and the designated external-orientation IMU.
///
/// Joints form a connected acyclic graph over the IMUs with exactly
/// `imu_count - 1` edges; a linear chain is the common case but stars/trees
/// (e.g. a pelvis with two legs) satisfy the same invariants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainTopology {
    pub imu_count: usize,
    pub joints: Vec<(usize, usize)>,
    pub external_imu: usize,
}

impl Default for ChainTopology {
    /// The three-IMU, two-joint chain of the default experiments.
    fn default() -> Self {
        ChainTopology::linear(3)
    }
}

impl ChainTopology {
    /// A linear chain `0 - 1 - ... - n-1` with the root as external IMU.
    pub fn linear(imu_count: usize) -> Self {
        Self {
            imu_count,
            joints: (0..imu_count.saturating_sub(1)).map(|i| (i, i + 1)).collect(),
            external_imu: 0,
        }
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    /// Confirms every structural invariant, naming the violated rule.
    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.imu_count < 2 {
            return Err(TopologyError::TooFewImus(self.imu_count));
        }
        if self.joints.len() != self.imu_count - 1 {
            return Err(TopologyError::BadJointCount {
                imus: self.imu_count,
                expected: self.imu_count - 1,
                got: self.joints.len(),
            });
        }
        if self.external_imu >= self.imu_count {
            return Err(TopologyError::BadExternalIndex(self.external_imu));
        }
        for &(i, j) in &self.joints {
            if i == j {
                return Err(TopologyError::SelfJoint(i, j));
            }
            if i >= self.imu_count || j >= self.imu_count {
                return Err(TopologyError::BadJointIndex(i, j));
            }
        }
        // Union-find over imu indices; an edge inside one component is a cycle.
        let mut parent: Vec<usize> = (0..self.imu_count).collect();
        fn find(parent: &mut [usize], mut a: usize) -> usize {
            while parent[a] != a {
                parent[a] = parent[parent[a]];
                a = parent[a];
            }
            a
        }
        for &(i, j) in &self.joints {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri == rj {
                return Err(TopologyError::CyclicChain);
            }
            parent[ri] = rj;
        }
        let root = find(&mut parent, 0);
        for k in 1..self.imu_count {
            if find(&mut parent, k) != root {
                return Err(TopologyError::DisconnectedChain);
            }
        }
        Ok(())
    }

    /// Graph distance (number of joints) from the external IMU to each IMU.
    pub fn distances_from_external(&self) -> Vec<usize> {
        let mut adj = vec![Vec::new(); self.imu_count];
        for &(i, j) in &self.joints {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut dist = vec![usize::MAX; self.imu_count];
        let mut queue = std::collections::VecDeque::from([self.external_imu]);
        dist[self.external_imu] = 0;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout::new(self)
    }
}

/// Deterministic offsets of every state block.
///
/// Per IMU `i`: MRP (3) then angular velocity (3); then per joint `(i, j)`:
/// the joint position in frame `I_i` (3) then in frame `I_j` (3). Blocks are
/// contiguous and non-overlapping; total dimension `6 N_I + 6 (N_I - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub imu_count: usize,
    pub joint_count: usize,
}

impl StateLayout {
    pub fn new(topo: &ChainTopology) -> Self {
        Self { imu_count: topo.imu_count, joint_count: topo.joints.len() }
    }

    pub fn dim(&self) -> usize {
        6 * self.imu_count + 6 * self.joint_count
    }

    pub fn mrp_offset(&self, imu: usize) -> usize {
        debug_assert!(imu < self.imu_count);
        6 * imu
    }

    pub fn omega_offset(&self, imu: usize) -> usize {
        debug_assert!(imu < self.imu_count);
        6 * imu + 3
    }

    /// Offset of the side-`i` joint position block of joint `k`.
    pub fn joint_i_offset(&self, k: usize) -> usize {
        debug_assert!(k < self.joint_count);
        6 * self.imu_count + 6 * k
    }

    /// Offset of the side-`j` joint position block of joint `k`.
    pub fn joint_j_offset(&self, k: usize) -> usize {
        6 * self.imu_count + 6 * k + 3
    }
}

/// True joint positions in both adjacent IMU frames, ordered as the
/// topology's joint list. Simulation and evaluation only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainGeometry {
    pub joints: Vec<JointGeometry>,
}

/// One joint's position expressed in each adjacent IMU frame (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointGeometry {
    pub in_i: Vec3,
    pub in_j: Vec3,
}

impl ChainGeometry {
    /// Symmetric default: every joint sits `lever` meters ahead of the
    /// proximal IMU along +x and the same distance behind the distal IMU.
    pub fn symmetric(joint_count: usize, lever: f64) -> Self {
        Self {
            joints: (0..joint_count)
                .map(|_| JointGeometry {
                    in_i: Vec3::new(lever, 0.0, 0.0),
                    in_j: Vec3::new(-lever, 0.0, 0.0),
                })
                .collect(),
        }
    }
}

/// Pose of one IMU at one timestep: position and orientation in the
/// navigation frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuPoseSample {
    pub position: Vec3,
    pub orientation: UnitQuaternion,
}

/// Uniformly sampled pose trajectories for every IMU.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSeries {
    pub times: Vec<f64>,
    /// `samples[t][imu]`
    pub samples: Vec<Vec<ImuPoseSample>>,
}

impl PoseSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn imu_count(&self) -> usize {
        self.samples.first().map_or(0, |s| s.len())
    }

    /// Sampling interval; requires timestamps strictly increasing and
    /// uniform within 1e-9 s.
    pub fn uniform_dt(&self) -> Option<f64> {
        if self.times.len() < 2 {
            return None;
        }
        let dt = self.times[1] - self.times[0];
        if dt <= 0.0 {
            return None;
        }
        for w in self.times.windows(2) {
            if (w[1] - w[0] - dt).abs() > 1e-9 {
                return None;
            }
        }
        Some(dt)
    }
}
