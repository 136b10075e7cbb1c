//! CSV readers and writers for trials, poses, estimates and ground truth.
//!
//! Floats are written with 17 significant digits (`{:.16e}`) so files
//! round-trip bit-exactly; parse errors carry the file path and line number.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::chain::{ChainGeometry, ChainTopology, ImuPoseSample, JointGeometry, PoseSeries};
use crate::filter::{MeasurementFrame, StateMean};
use crate::so3::{UnitQuaternion, Vec3};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

impl IoError {
    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
        move |source| IoError::Io { path: path.to_path_buf(), source }
    }

    fn parse(path: &Path, line: usize, message: impl Into<String>) -> IoError {
        IoError::Parse { path: path.to_path_buf(), line, message: message.into() }
    }
}

/// 17 significant digits: enough to reproduce any f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(field: &str, path: &Path, line: usize) -> Result<f64, IoError> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|e| IoError::parse(path, line, format!("bad float {field:?}: {e}")))
}

fn parse_usize(field: &str, path: &Path, line: usize) -> Result<usize, IoError> {
    field
        .trim()
        .parse::<usize>()
        .map_err(|e| IoError::parse(path, line, format!("bad index {field:?}: {e}")))
}

fn split_expect<'a>(
    line_text: &'a str,
    n: usize,
    path: &Path,
    line: usize,
) -> Result<Vec<&'a str>, IoError> {
    let fields: Vec<&str> = line_text.split(',').collect();
    if fields.len() != n {
        return Err(IoError::parse(path, line, format!("expected {n} fields, got {}", fields.len())));
    }
    Ok(fields)
}

fn open_reader(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>, IoError> {
    let file = File::open(path).map_err(IoError::io(path))?;
    Ok(BufReader::new(file).lines().enumerate().map(|(i, l)| (i + 1, l)))
}

/// Writes `t,imu,ax,ay,az,gx,gy,gz` for every timestep and IMU.
pub fn write_measurements(
    path: &Path,
    times: &[f64],
    frames: &[MeasurementFrame],
) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path).map_err(IoError::io(path))?);
    let mut run = || -> std::io::Result<()> {
        writeln!(w, "t,imu,ax,ay,az,gx,gy,gz")?;
        for (t, frame) in times.iter().zip(frames) {
            for imu in 0..frame.accel.len() {
                let a = frame.accel[imu];
                let g = frame.gyro[imu];
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    fmt_f64(*t),
                    imu,
                    fmt_f64(a.x),
                    fmt_f64(a.y),
                    fmt_f64(a.z),
                    fmt_f64(g.x),
                    fmt_f64(g.y),
                    fmt_f64(g.z)
                )?;
            }
        }
        w.flush()
    };
    run().map_err(IoError::io(path))
}

/// Timestamps plus per-timestep, per-IMU accelerometer and gyro samples.
pub type MeasurementColumns = (Vec<f64>, Vec<Vec<Vec3>>, Vec<Vec<Vec3>>);

/// Reads measurements back into per-timestep frames (without the absolute
/// orientation, which lives in its own file).
pub fn read_measurements(path: &Path, imu_count: usize) -> Result<MeasurementColumns, IoError> {
    let mut times: Vec<f64> = Vec::new();
    let mut accel: Vec<Vec<Vec3>> = Vec::new();
    let mut gyro: Vec<Vec<Vec3>> = Vec::new();
    for (lineno, line) in open_reader(path)? {
        let line = line.map_err(IoError::io(path))?;
        if lineno == 1 {
            if line.trim() != "t,imu,ax,ay,az,gx,gy,gz" {
                return Err(IoError::parse(path, lineno, "unexpected header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f = split_expect(&line, 8, path, lineno)?;
        let t = parse_f64(f[0], path, lineno)?;
        let imu = parse_usize(f[1], path, lineno)?;
        if imu >= imu_count {
            return Err(IoError::parse(path, lineno, format!("IMU index {imu} out of range")));
        }
        if times.last().is_none_or(|&last| t > last) {
            times.push(t);
            accel.push(vec![Vec3::zeros(); imu_count]);
            gyro.push(vec![Vec3::zeros(); imu_count]);
        }
        let row = accel.len() - 1;
        accel[row][imu] = Vec3::new(
            parse_f64(f[2], path, lineno)?,
            parse_f64(f[3], path, lineno)?,
            parse_f64(f[4], path, lineno)?,
        );
        gyro[row][imu] = Vec3::new(
            parse_f64(f[5], path, lineno)?,
            parse_f64(f[6], path, lineno)?,
            parse_f64(f[7], path, lineno)?,
        );
    }
    Ok((times, accel, gyro))
}

/// Writes the absolute-orientation stream `t,qw,qx,qy,qz`.
pub fn write_orientation_stream(
    path: &Path,
    times: &[f64],
    orientations: impl Iterator<Item = UnitQuaternion>,
) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path).map_err(IoError::io(path))?);
    let run = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "t,qw,qx,qy,qz")?;
        for (t, q) in times.iter().zip(orientations) {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_f64(*t),
                fmt_f64(q.w),
                fmt_f64(q.x),
                fmt_f64(q.y),
                fmt_f64(q.z)
            )?;
        }
        w.flush()
    };
    run(&mut w).map_err(IoError::io(path))
}

pub fn read_orientation_stream(path: &Path) -> Result<(Vec<f64>, Vec<UnitQuaternion>), IoError> {
    let mut times = Vec::new();
    let mut quats = Vec::new();
    for (lineno, line) in open_reader(path)? {
        let line = line.map_err(IoError::io(path))?;
        if lineno == 1 {
            if line.trim() != "t,qw,qx,qy,qz" {
                return Err(IoError::parse(path, lineno, "unexpected header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f = split_expect(&line, 5, path, lineno)?;
        times.push(parse_f64(f[0], path, lineno)?);
        quats.push(UnitQuaternion::new_normalized(
            parse_f64(f[1], path, lineno)?,
            parse_f64(f[2], path, lineno)?,
            parse_f64(f[3], path, lineno)?,
            parse_f64(f[4], path, lineno)?,
        ));
    }
    Ok((times, quats))
}

/// Writes IMU poses `t,imu,px,py,pz,qw,qx,qy,qz` (SI units, scalar-first).
pub fn write_poses(path: &Path, poses: &PoseSeries) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path).map_err(IoError::io(path))?);
    let run = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "t,imu,px,py,pz,qw,qx,qy,qz")?;
        for (t, row) in poses.times.iter().zip(&poses.samples) {
            for (imu, s) in row.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{}",
                    fmt_f64(*t),
                    imu,
                    fmt_f64(s.position.x),
                    fmt_f64(s.position.y),
                    fmt_f64(s.position.z),
                    fmt_f64(s.orientation.w),
                    fmt_f64(s.orientation.x),
                    fmt_f64(s.orientation.y),
                    fmt_f64(s.orientation.z)
                )?;
            }
        }
        w.flush()
    };
    run(&mut w).map_err(IoError::io(path))
}

pub fn read_poses(path: &Path) -> Result<PoseSeries, IoError> {
    let mut times: Vec<f64> = Vec::new();
    let mut rows: Vec<Vec<(usize, ImuPoseSample)>> = Vec::new();
    for (lineno, line) in open_reader(path)? {
        let line = line.map_err(IoError::io(path))?;
        if lineno == 1 {
            if line.trim() != "t,imu,px,py,pz,qw,qx,qy,qz" {
                return Err(IoError::parse(path, lineno, "unexpected header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f = split_expect(&line, 9, path, lineno)?;
        let t = parse_f64(f[0], path, lineno)?;
        let imu = parse_usize(f[1], path, lineno)?;
        let sample = ImuPoseSample {
            position: Vec3::new(
                parse_f64(f[2], path, lineno)?,
                parse_f64(f[3], path, lineno)?,
                parse_f64(f[4], path, lineno)?,
            ),
            orientation: UnitQuaternion::new_normalized(
                parse_f64(f[5], path, lineno)?,
                parse_f64(f[6], path, lineno)?,
                parse_f64(f[7], path, lineno)?,
                parse_f64(f[8], path, lineno)?,
            ),
        };
        if times.last().is_none_or(|&last| t > last) {
            times.push(t);
            rows.push(Vec::new());
        }
        rows.last_mut().unwrap().push((imu, sample));
    }
    let mut samples = Vec::with_capacity(rows.len());
    for (idx, mut row) in rows.into_iter().enumerate() {
        row.sort_by_key(|(imu, _)| *imu);
        let expected = row.len();
        for (k, (imu, _)) in row.iter().enumerate() {
            if *imu != k {
                return Err(IoError::parse(
                    path,
                    idx + 2,
                    format!("IMU indices of one timestep must be 0..{expected}"),
                ));
            }
        }
        samples.push(row.into_iter().map(|(_, s)| s).collect());
    }
    Ok(PoseSeries { times, samples })
}

/// Writes true joint positions `joint,imu,jx,jy,jz` (one row per side).
pub fn write_geometry(
    path: &Path,
    topo: &ChainTopology,
    geometry: &ChainGeometry,
) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path).map_err(IoError::io(path))?);
    let run = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "joint,imu,jx,jy,jz")?;
        for (k, &(i, j)) in topo.joints.iter().enumerate() {
            let g = &geometry.joints[k];
            for (imu, v) in [(i, g.in_i), (j, g.in_j)] {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    k,
                    imu,
                    fmt_f64(v.x),
                    fmt_f64(v.y),
                    fmt_f64(v.z)
                )?;
            }
        }
        w.flush()
    };
    run(&mut w).map_err(IoError::io(path))
}

pub fn read_geometry(path: &Path, topo: &ChainTopology) -> Result<ChainGeometry, IoError> {
    let mut joints = vec![
        JointGeometry { in_i: Vec3::zeros(), in_j: Vec3::zeros() };
        topo.joints.len()
    ];
    for (lineno, line) in open_reader(path)? {
        let line = line.map_err(IoError::io(path))?;
        if lineno == 1 {
            if line.trim() != "joint,imu,jx,jy,jz" {
                return Err(IoError::parse(path, lineno, "unexpected header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f = split_expect(&line, 5, path, lineno)?;
        let k = parse_usize(f[0], path, lineno)?;
        let imu = parse_usize(f[1], path, lineno)?;
        if k >= topo.joints.len() {
            return Err(IoError::parse(path, lineno, format!("joint index {k} out of range")));
        }
        let v = Vec3::new(
            parse_f64(f[2], path, lineno)?,
            parse_f64(f[3], path, lineno)?,
            parse_f64(f[4], path, lineno)?,
        );
        let (i, j) = topo.joints[k];
        if imu == i {
            joints[k].in_i = v;
        } else if imu == j {
            joints[k].in_j = v;
        } else {
            return Err(IoError::parse(
                path,
                lineno,
                format!("IMU {imu} is not adjacent to joint {k}"),
            ));
        }
    }
    Ok(ChainGeometry { joints })
}

/// Writes estimated orientations and angular velocities:
/// `t,imu,qw,qx,qy,qz,wx,wy,wz`.
pub fn write_estimated_orientations(
    path: &Path,
    times: &[f64],
    means: &[StateMean],
) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path).map_err(IoError::io(path))?);
    let run = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "t,imu,qw,qx,qy,qz,wx,wy,wz")?;
        for (t, mean) in times.iter().zip(means) {
            for imu in 0..mean.mrps.len() {
                let q = mean.orientation(imu);
                let omega = mean.omegas[imu];
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{}",
                    fmt_f64(*t),
                    imu,
                    fmt_f64(q.w),
                    fmt_f64(q.x),
                    fmt_f64(q.y),
                    fmt_f64(q.z),
                    fmt_f64(omega.x),
                    fmt_f64(omega.y),
                    fmt_f64(omega.z)
                )?;
            }
        }
        w.flush()
    };
    run(&mut w).map_err(IoError::io(path))
}

/// Writes estimated joint positions `t,joint,side,jx,jy,jz`, where `side`
/// is the IMU index the vector is expressed in.
pub fn write_estimated_joints(
    path: &Path,
    times: &[f64],
    topo: &ChainTopology,
    means: &[StateMean],
) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path).map_err(IoError::io(path))?);
    let run = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "t,joint,side,jx,jy,jz")?;
        for (t, mean) in times.iter().zip(means) {
            for (k, &(i, j)) in topo.joints.iter().enumerate() {
                for (imu, v) in [(i, mean.joints[k].in_i), (j, mean.joints[k].in_j)] {
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        fmt_f64(*t),
                        k,
                        imu,
                        fmt_f64(v.x),
                        fmt_f64(v.y),
                        fmt_f64(v.z)
                    )?;
                }
            }
        }
        w.flush()
    };
    run(&mut w).map_err(IoError::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate_manipulator, ManipulatorSpec, NoiseSpec};

    #[test]
    fn measurement_round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join("chaintrack_io_test_meas");
        std::fs::create_dir_all(&dir).unwrap();
        let spec = ManipulatorSpec::default_three_link();
        let trial = simulate_manipulator(
            &spec,
            &spec.default_geometry(),
            0.5,
            100.0,
            &NoiseSpec::default(),
        )
        .unwrap();
        let path = dir.join("measurements.csv");
        write_measurements(&path, &trial.times, &trial.frames).unwrap();
        let (times, accel, gyro) = read_measurements(&path, 3).unwrap();
        assert_eq!(times, trial.times);
        for t in 0..trial.len() {
            for imu in 0..3 {
                assert_eq!(accel[t][imu], trial.frames[t].accel[imu]);
                assert_eq!(gyro[t][imu], trial.frames[t].gyro[imu]);
            }
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn pose_round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join("chaintrack_io_test_poses");
        std::fs::create_dir_all(&dir).unwrap();
        let spec = ManipulatorSpec::default_three_link();
        let trial = simulate_manipulator(
            &spec,
            &spec.default_geometry(),
            0.3,
            100.0,
            &NoiseSpec::noiseless(0),
        )
        .unwrap();
        let path = dir.join("poses.csv");
        write_poses(&path, &trial.poses).unwrap();
        let back = read_poses(&path).unwrap();
        assert_eq!(back.times, trial.poses.times);
        for t in 0..trial.len() {
            for imu in 0..3 {
                assert_eq!(back.samples[t][imu].position, trial.poses.samples[t][imu].position);
                let a = back.samples[t][imu].orientation;
                let b = trial.poses.samples[t][imu].orientation;
                assert_eq!((a.w, a.x, a.y, a.z), (b.w, b.x, b.y, b.z));
            }
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = std::env::temp_dir().join("chaintrack_io_test_err");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.csv");
        std::fs::write(&path, "t,qw,qx,qy,qz\n0.0,1.0,0.0,0.0,0.0\n0.01,nope,0,0,0\n").unwrap();
        let err = read_orientation_stream(&path).unwrap_err();
        match err {
            IoError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn f64_formatting_round_trips() {
        for v in [0.0, -9.81, 8.25e-5, std::f64::consts::PI, 1.0 / 3.0, 1e-308] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }
}
