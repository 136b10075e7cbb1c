#!/usr/bin/env python3
"""Smoke test for the chaintrack Python bindings.

Builds the extension module if needed, simulates a short three-IMU trial,
tracks it, and checks that the errors land in the expected ranges.

Run from the repository root:

    python3 python/smoke_test.py
"""

import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def ensure_module():
    lib = REPO / "target" / "release" / "libchaintrack_py.so"
    if not lib.exists():
        print("building chaintrack-py (release)...")
        subprocess.run(
            ["cargo", "build", "--release", "-p", "chaintrack-py"],
            cwd=REPO,
            check=True,
        )
    stage = Path(tempfile.mkdtemp(prefix="chaintrack_py_"))
    shutil.copy(lib, stage / "chaintrack_py.so")
    sys.path.insert(0, str(stage))


def main():
    ensure_module()
    import chaintrack_py as ct

    trial = ct.simulate_chain(imu_count=3, duration_s=30.0, rate_hz=100.0, seed=1)
    assert trial.imu_count == 3
    assert len(trial) == 3000

    # raw sample access; the chain starts from rest (zero rates) but at the
    # sinusoids' peak displacement, so the accelerometers see gravity plus a
    # strong angular-acceleration term
    gx, gy, gz = trial.gyro(0, 0)
    ax, ay, az = trial.accel(0, 0)
    qw, qx, qy, qz = trial.truth_orientation(0, 0)
    assert abs((qw**2 + qx**2 + qy**2 + qz**2) - 1.0) < 1e-9
    assert (gx**2 + gy**2 + gz**2) ** 0.5 < 0.05, "starts from rest"
    assert 5.0 < (ax**2 + ay**2 + az**2) ** 0.5 < 40.0

    result = ct.track(trial, init_seed=7)
    print("orientation MAE (deg):")
    for label, mae in sorted(result.orientation_mae_deg.items()):
        print(f"  {label}: {mae:.3f}")
    print("joint position MAE (cm):")
    for label, mae in sorted(result.joint_position_mae_cm.items()):
        print(f"  {label}: {mae:.3f}")
    print(f"median step time: {result.median_step_ms:.3f} ms")

    for label, mae in result.orientation_mae_deg.items():
        assert mae < 2.0, f"{label} orientation MAE {mae} deg out of range"
    for label, mae in result.joint_position_mae_cm.items():
        assert mae < 3.0, f"{label} joint MAE {mae} cm out of range"
    assert result.median_step_ms < 5.0

    print("smoke test OK")


if __name__ == "__main__":
    main()
