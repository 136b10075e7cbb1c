//! Longer-horizon invariants of the filter and the CLI binary's exit codes.

use chaintrack::filter::{
    compute_angular_accel, init_state, residuals, run_filter, Filter, JointInit, NoiseConfig,
    PriorMode, SolverConfig,
};
use chaintrack::sim::{simulate_manipulator, JointMotion, ManipulatorSpec, NoiseSpec};
use chaintrack::so3::{Mrp, Vec3};

/// Covariance stays symmetric and positive semidefinite over 60 000 steps
/// of full covariance recursion.
#[test]
fn covariance_health_over_sixty_thousand_steps() {
    let spec = ManipulatorSpec::default_three_link();
    let geometry = spec.default_geometry();
    let trial =
        simulate_manipulator(&spec, &geometry, 600.0, 100.0, &NoiseSpec::default()).unwrap();
    let topo = trial.topology.clone();
    let noise = NoiseConfig::default();
    let solver = SolverConfig { prior: PriorMode::Recursive, ..SolverConfig::default() };
    let init = init_state(
        &topo,
        &noise,
        &vec![Mrp::zero(); topo.imu_count],
        &JointInit::Random { seed: 2, range: 0.3 },
    )
    .unwrap();
    let mut filter = Filter::new(topo, noise, solver, trial.dt(), init).unwrap();
    for (step, frame) in trial.frames.iter().enumerate() {
        filter.step(frame).unwrap();
        if step % 2000 == 0 || step + 1 == trial.len() {
            let p = &filter.state().covariance;
            assert!((p - p.transpose()).amax() < 1e-9, "asymmetry at step {step}");
            let eig = nalgebra::linalg::SymmetricEigen::new(p.clone());
            assert!(
                eig.eigenvalues.min() > -1e-9,
                "covariance not PSD at step {step}: {}",
                eig.eigenvalues.min()
            );
        }
    }
}

/// On noiseless data the joint-acceleration constraint residual at the
/// posterior settles below 1e-3 m/s^2. The bound is only meaningful in the
/// quasi-static regime: at higher rates the zero-order-hold propagation
/// leaves relative-orientation errors whose product with gravity dominates
/// the residual. A wrong lever-arm sign convention would leave residuals
/// near 2 C J instead.
#[test]
fn joint_constraint_residual_converges_on_noiseless_data() {
    let amplitude = 1.5f64.to_radians();
    let spec = ManipulatorSpec {
        segments: (0..3)
            .map(|s| chaintrack::sim::DhSegment {
                links: (0..2)
                    .map(|d| chaintrack::sim::DhLink {
                        a: if d == 1 { 0.52 } else { 0.0 },
                        alpha: if d % 2 == 0 {
                            std::f64::consts::FRAC_PI_2
                        } else {
                            -std::f64::consts::FRAC_PI_2
                        },
                        d: 0.0,
                        theta_offset: 0.0,
                        motion: JointMotion::Sinusoid {
                            amplitude,
                            frequency_hz: 0.1 + 0.02 * (2 * s + d) as f64,
                            phase: 0.0,
                        },
                    })
                    .collect(),
            })
            .collect(),
        base_orientation: None,
    };
    let geometry = spec.default_geometry();
    let trial =
        simulate_manipulator(&spec, &geometry, 40.0, 100.0, &NoiseSpec::noiseless(0)).unwrap();
    let topo = trial.topology.clone();
    let noise = NoiseConfig::default();
    let init = init_state(
        &topo,
        &noise,
        &[Mrp::zero(); 3],
        &JointInit::Explicit(geometry.joints.clone()),
    )
    .unwrap();
    let run = run_filter(&topo, &noise, &SolverConfig::default(), init, &trial.frames, trial.dt())
        .unwrap();

    // evaluate the unwhitened joint rows of the residual at the posterior
    let mut prev_omega = vec![Vec3::zeros(); 3];
    let mut late = Vec::new();
    let unit = NoiseConfig { sigma_accel: 1.0, ..noise };
    for (t, mean) in run.means.iter().enumerate() {
        let frame = &trial.frames[t];
        let omega_dot: Vec<Vec3> = (0..3)
            .map(|i| compute_angular_accel(&frame.gyro[i], &prev_omega[i], trial.dt()).unwrap())
            .collect();
        let state = chaintrack::filter::FilterState {
            mrps: mean.mrps.clone(),
            omegas: mean.omegas.clone(),
            joints: mean.joints.clone(),
            covariance: nalgebra::DMatrix::zeros(30, 30),
            step: t,
        };
        let r = residuals(&state, &topo, frame, &omega_dot, &unit);
        prev_omega = mean.omegas.clone();
        if t >= 1000 {
            // joint rows sit between the gyro rows and the orientation rows
            late.push(r.rows(9, 6).amax());
        }
    }
    late.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = late[late.len() / 2];
    assert!(median < 1e-3, "median joint residual {median} m/s^2 after convergence");
}

fn s_ok_config_body(path: &std::path::Path) {
    std::fs::write(
        path,
        "[source]\nduration_s = 3.0\n\n[montecarlo]\nbatch_length_s = 1.0\nskip_initial_s = 0.5\n",
    )
    .unwrap();
}

/// CLI exit codes: 0 success, 2 config error, 3 data error.
#[test]
fn cli_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_chaintrack");
    let dir = std::env::temp_dir().join("chaintrack_cli_test");
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();

    // config error: malformed topology
    let bad_config = dir.join("bad.toml");
    std::fs::write(&bad_config, "[topology]\nimu_count = 1\njoints = []\nexternal_imu = 0\n")
        .unwrap();
    let out = std::process::Command::new(bin)
        .args(["simulate", "--config"])
        .arg(&bad_config)
        .arg("--out")
        .arg(dir.join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    // data error: missing trial directory
    let ok_config = dir.join("ok.toml");
    s_ok_config_body(&ok_config);
    let out = std::process::Command::new(bin)
        .args(["track", "--config"])
        .arg(&ok_config)
        .arg("--trial")
        .arg(dir.join("missing"))
        .arg("--out")
        .arg(dir.join("y"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    // success: simulate then track
    let trial_dir = dir.join("trial");
    let out = std::process::Command::new(bin)
        .args(["simulate", "--config"])
        .arg(&ok_config)
        .arg("--out")
        .arg(&trial_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = std::process::Command::new(bin)
        .args(["track", "--config"])
        .arg(&ok_config)
        .arg("--trial")
        .arg(&trial_dir)
        .arg("--out")
        .arg(dir.join("est"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("runtime per step"), "report should include the runtime line");

    std::fs::remove_dir_all(&dir).ok();
}
