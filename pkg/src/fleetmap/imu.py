"""IMU preintegration: midpoint-integrated rotation/velocity/position deltas.

Deltas live in the frame of the first sample; gravity is removed there
assuming that frame is level (ground vehicles, yaw-dominant motion). The
preintegrated rotation angle uses the quaternion form atan2(|xyz|, w), which
is what the kinematic weight gate consumes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    Pose,
    quat_from_matrix,
    quat_identity,
    quat_multiply,
    quat_normalize,
    quat_rotate,
    quat_to_matrix,
    so3_exp,
)
from .sensors import GRAVITY_VEC


@dataclass
class PreintegratedDelta:
    dq: np.ndarray = field(default_factory=quat_identity)
    dv: np.ndarray = field(default_factory=lambda: np.zeros(3))
    dp: np.ndarray = field(default_factory=lambda: np.zeros(3))
    duration: float = 0.0
    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.dq = quat_normalize(np.asarray(self.dq, dtype=float))
        self.dv = np.asarray(self.dv, dtype=float)
        self.dp = np.asarray(self.dp, dtype=float)

    @property
    def rotation_angle(self) -> float:
        """atan2(|xyz|, w) of the delta quaternion; in [0, pi]."""
        return float(np.arctan2(np.linalg.norm(self.dq[1:]), self.dq[0]))


def preintegrate(
    samples: list[tuple[float, np.ndarray, np.ndarray]],
    gyro_bias: np.ndarray | None = None,
    accel_bias: np.ndarray | None = None,
) -> PreintegratedDelta:
    """Integrate (t, gyro, accel) samples into a PreintegratedDelta.

    Requires >= 2 samples with strictly increasing timestamps. Midpoint rule:
    each interval uses the mean of its endpoint measurements.
    """
    if len(samples) < 2:
        raise ValueError("need at least two IMU samples")
    bg = np.zeros(3) if gyro_bias is None else np.asarray(gyro_bias, dtype=float)
    ba = np.zeros(3) if accel_bias is None else np.asarray(accel_bias, dtype=float)
    times = np.array([s[0] for s in samples], dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError("IMU timestamps must be strictly increasing")

    R = np.eye(3)
    dv = np.zeros(3)
    dp = np.zeros(3)
    for k in range(len(samples) - 1):
        t0, w0, a0 = samples[k]
        t1, w1, a1 = samples[k + 1]
        dt = float(t1 - t0)
        w_mid = 0.5 * (np.asarray(w0, dtype=float) + np.asarray(w1, dtype=float)) - bg
        R_next = R @ so3_exp(w_mid * dt)
        f0 = R @ (np.asarray(a0, dtype=float) - ba)
        f1 = R_next @ (np.asarray(a1, dtype=float) - ba)
        a_local = 0.5 * (f0 + f1) + GRAVITY_VEC
        dp = dp + dv * dt + 0.5 * a_local * dt * dt
        dv = dv + a_local * dt
        R = R_next

    return PreintegratedDelta(
        dq=quat_from_matrix(R),
        dv=dv,
        dp=dp,
        duration=float(times[-1] - times[0]),
        gyro_bias=bg,
        accel_bias=ba,
    )


def compose_deltas(a: PreintegratedDelta, b: PreintegratedDelta) -> PreintegratedDelta:
    """Chain two consecutive deltas (valid for yaw-dominant motion)."""
    Ra = quat_to_matrix(a.dq)
    return PreintegratedDelta(
        dq=quat_multiply(a.dq, b.dq),
        dv=a.dv + Ra @ b.dv,
        dp=a.dp + a.dv * b.duration + Ra @ b.dp,
        duration=a.duration + b.duration,
        gyro_bias=a.gyro_bias,
        accel_bias=a.accel_bias,
    )


def predict(pose: Pose, velocity: np.ndarray, delta: PreintegratedDelta) -> tuple[Pose, np.ndarray]:
    """Propagate a pose and world-frame velocity through a delta."""
    q = quat_multiply(pose.q, delta.dq)
    p = pose.t + velocity * delta.duration + quat_rotate(pose.q, delta.dp)
    v = velocity + quat_rotate(pose.q, delta.dv)
    return Pose(q, p, pose.stamp + delta.duration), v
