"""Simulated LiDAR, IMU, UWB range, and RSSI observations with exact ground truth."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, quat_to_matrix
from .ranging import RangeMeasurement
from .world import WorldModel, raycast_world, segment_blocked

GRAVITY = 9.81
GRAVITY_VEC = np.array([0.0, 0.0, -GRAVITY])


@dataclass
class LidarModel:
    rings: int = 16
    vfov_deg: tuple[float, float] = (-15.0, 15.0)
    horiz_step_deg: float = 0.2
    max_range: float = 100.0
    sigma: float = 0.02
    rate_hz: float = 10.0
    sweep_distortion: bool = False  # per-azimuth time offsets within one sweep

    def directions(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Unit ray directions in the sensor frame, with ring and azimuth index."""
        v = np.deg2rad(np.linspace(self.vfov_deg[0], self.vfov_deg[1], self.rings))
        h = np.deg2rad(np.arange(0.0, 360.0, self.horiz_step_deg))
        ring_idx = np.repeat(np.arange(self.rings), len(h))
        az_idx = np.tile(np.arange(len(h)), self.rings)
        vv = np.repeat(v, len(h))
        hh = np.tile(h, self.rings)
        dirs = np.stack([np.cos(vv) * np.cos(hh), np.cos(vv) * np.sin(hh), np.sin(vv)], axis=1)
        return dirs, ring_idx, az_idx


@dataclass
class ImuModel:
    rate_hz: float = 200.0
    gyro_noise_density: float = 0.0  # rad/s/sqrt(Hz)
    accel_noise_density: float = 0.0  # m/s^2/sqrt(Hz)
    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.gyro_bias = np.asarray(self.gyro_bias, dtype=float)
        self.accel_bias = np.asarray(self.accel_bias, dtype=float)
        if self.rate_hz <= 0:
            raise ValueError("IMU rate must be positive")


@dataclass
class UwbModel:
    rate_hz: float = 10.0
    sigma: float = 0.05
    max_range: float = 60.0
    los_required: bool = True

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


@dataclass
class RssiModel:
    p0_dbm: float = -40.0  # received power at 1 m
    path_loss_exponent: float = 2.0


@dataclass
class PointCloud:
    xyz: np.ndarray
    ring: np.ndarray
    t_offset: np.ndarray

    def __post_init__(self):
        self.xyz = np.asarray(self.xyz, dtype=float).reshape(-1, 3)
        self.ring = np.asarray(self.ring, dtype=int).reshape(-1)
        self.t_offset = np.asarray(self.t_offset, dtype=float).reshape(-1)
        if not (len(self.xyz) == len(self.ring) == len(self.t_offset)):
            raise ValueError("xyz, ring, and t_offset must have equal length")

    def __len__(self) -> int:
        return len(self.xyz)

    @property
    def ranges(self) -> np.ndarray:
        return np.linalg.norm(self.xyz, axis=1)

    @staticmethod
    def empty() -> "PointCloud":
        return PointCloud(np.zeros((0, 3)), np.zeros(0, dtype=int), np.zeros(0))


def raycast_scan(
    world: WorldModel, pose: Pose, lidar: LidarModel, rng: np.random.Generator
) -> PointCloud:
    """One LiDAR sweep from the given pose. Misses are omitted.

    Points are in the sensor frame; ranges carry additive Gaussian noise along
    the ray. With sweep_distortion all points share the sweep-end timestamp
    offset 0; otherwise azimuth maps linearly to [-1/rate, 0].
    """
    dirs_s, ring_idx, az_idx = lidar.directions()
    R = quat_to_matrix(pose.q)
    dirs_w = dirs_s @ R.T
    s = raycast_world(pose.t, dirs_w, world)
    hit = s <= lidar.max_range
    if not np.any(hit):
        return PointCloud.empty()
    s_hit = s[hit]
    if lidar.sigma > 0:
        s_hit = s_hit + rng.normal(0.0, lidar.sigma, size=len(s_hit))
    xyz = dirs_s[hit] * s_hit[:, None]
    if lidar.sweep_distortion:
        n_az = int(round(360.0 / lidar.horiz_step_deg))
        t_off = (az_idx[hit] / max(n_az, 1) - 1.0) / lidar.rate_hz
    else:
        t_off = np.zeros(int(hit.sum()))
    return PointCloud(xyz, ring_idx[hit], t_off)


def simulate_imu(
    traj, imu: ImuModel, t0: float, t1: float, rng: np.random.Generator
) -> list[tuple[float, np.ndarray, np.ndarray]]:
    """Body-frame gyro and specific-force samples over [t0, t1] at the IMU rate."""
    if t1 <= t0:
        raise ValueError("t1 must exceed t0")
    dt = 1.0 / imu.rate_hz
    n = int(np.floor((t1 - t0) / dt + 1e-9))
    times = t0 + np.arange(n + 1) * dt
    if times[-1] < t1 - 1e-9:
        times = np.append(times, t1)
    sigma_g = imu.gyro_noise_density * np.sqrt(imu.rate_hz)
    sigma_a = imu.accel_noise_density * np.sqrt(imu.rate_hz)
    out = []
    for t in times:
        yaw = traj.yaw(t)
        c, s = np.cos(yaw), np.sin(yaw)
        Rwb = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        omega_world = np.array([0.0, 0.0, traj.yaw_rate(t)])
        gyro = Rwb.T @ omega_world + imu.gyro_bias
        accel = Rwb.T @ (traj.acceleration(t) - GRAVITY_VEC) + imu.accel_bias
        if sigma_g > 0:
            gyro = gyro + rng.normal(0.0, sigma_g, size=3)
        if sigma_a > 0:
            accel = accel + rng.normal(0.0, sigma_a, size=3)
        out.append((float(t), gyro, accel))
    return out


def simulate_range(
    world: WorldModel,
    pose_a: Pose,
    pose_b: Pose,
    uwb: UwbModel,
    rng: np.random.Generator,
    pair: tuple[int, int] = (0, 1),
    stamp: float = 0.0,
) -> RangeMeasurement | None:
    """UWB range between two vehicles; None when out of range or occluded."""
    d = float(np.linalg.norm(pose_a.t - pose_b.t))
    if d > uwb.max_range:
        return None
    if uwb.los_required and segment_blocked(pose_a.t, pose_b.t, world):
        return None
    u = d + (rng.normal(0.0, uwb.sigma) if uwb.sigma > 0 else 0.0)
    return RangeMeasurement(
        vehicle_j=pair[0],
        vehicle_k=pair[1],
        stamp=float(stamp),
        raw=max(u, 0.0),
        sigma=max(uwb.sigma, 1e-6),
        los=True,
    )


def rssi(distance: float, model: RssiModel) -> float:
    """Log-distance path-loss received power in dBm."""
    if distance <= 0:
        raise ValueError("distance must be positive")
    return model.p0_dbm - 10.0 * model.path_loss_exponent * np.log10(distance)


class CircleScript:
    """Exact circular-arc motion (analytic kinematics, no spline error).

    The vehicle moves counter-clockwise at constant angular rate omega on a
    circle, heading tangent to the path.
    """

    def __init__(self, center, radius: float, omega: float, t0: float, t1: float, phase: float = 0.0):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.omega = float(omega)
        self.t0 = float(t0)
        self.t1 = float(t1)
        self.phase = float(phase)

    def _theta(self, t: float) -> float:
        return self.phase + self.omega * (t - self.t0)

    def position(self, t: float) -> np.ndarray:
        th = self._theta(t)
        return self.center + self.radius * np.array([np.cos(th), np.sin(th), 0.0])

    def velocity(self, t: float) -> np.ndarray:
        th = self._theta(t)
        return self.radius * self.omega * np.array([-np.sin(th), np.cos(th), 0.0])

    def acceleration(self, t: float) -> np.ndarray:
        th = self._theta(t)
        return -self.radius * self.omega**2 * np.array([np.cos(th), np.sin(th), 0.0])

    def yaw(self, t: float) -> float:
        return self._theta(t) + np.pi / 2.0

    def yaw_rate(self, t: float) -> float:
        return self.omega

    def pose(self, t: float) -> Pose:
        from .geometry import quat_from_yaw

        return Pose(quat_from_yaw(self.yaw(t)), self.position(t), stamp=float(t))
