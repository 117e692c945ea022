"""Scripted ground-truth motion: cubic position splines plus a yaw spline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .geometry import Pose, quat_from_yaw


@dataclass
class MotionLimits:
    max_speed: float = 5.0
    max_yaw_rate: float = 3.0


class TrajectoryScript:
    """Piecewise-cubic position and yaw vs time with analytic derivatives."""

    def __init__(self, times: np.ndarray, positions: np.ndarray, yaws: np.ndarray):
        times = np.asarray(times, dtype=float)
        positions = np.asarray(positions, dtype=float).reshape(len(times), 3)
        yaws = np.unwrap(np.asarray(yaws, dtype=float))
        if len(times) < 2:
            raise ValueError("need at least two knots")
        if np.any(np.diff(times) <= 0):
            raise ValueError("knot times must be strictly increasing")
        self._knot_times = times
        self._knot_positions = positions
        self._knot_yaws = yaws
        self.t0 = float(times[0])
        self.t1 = float(times[-1])
        self._pos = CubicSpline(times, positions, axis=0, bc_type="clamped")
        self._yaw = CubicSpline(times, yaws, bc_type="clamped")
        self._vel = self._pos.derivative(1)
        self._acc = self._pos.derivative(2)
        self._yaw_rate = self._yaw.derivative(1)

    def _check(self, t: float):
        if t < self.t0 - 1e-9 or t > self.t1 + 1e-9:
            raise ValueError(f"time {t} outside script domain [{self.t0}, {self.t1}]")

    def position(self, t: float) -> np.ndarray:
        self._check(t)
        return np.asarray(self._pos(t), dtype=float)

    def velocity(self, t: float) -> np.ndarray:
        self._check(t)
        return np.asarray(self._vel(t), dtype=float)

    def acceleration(self, t: float) -> np.ndarray:
        self._check(t)
        return np.asarray(self._acc(t), dtype=float)

    def yaw(self, t: float) -> float:
        self._check(t)
        return float(self._yaw(t))

    def yaw_rate(self, t: float) -> float:
        self._check(t)
        return float(self._yaw_rate(t))

    def pose(self, t: float) -> Pose:
        return Pose(quat_from_yaw(self.yaw(t)), self.position(t), stamp=float(t))

    def check_limits(self, limits: MotionLimits, samples: int = 200):
        ts = np.linspace(self.t0, self.t1, samples)
        speeds = np.linalg.norm(self._vel(ts), axis=1)
        rates = np.abs(self._yaw_rate(ts))
        if float(speeds.max()) > limits.max_speed + 1e-9:
            raise ValueError(f"script exceeds max speed: {speeds.max():.3f}")
        if float(rates.max()) > limits.max_yaw_rate + 1e-9:
            raise ValueError(f"script exceeds max yaw rate: {rates.max():.3f}")

    def to_dict(self) -> dict:
        # Serialize the defining knots, not spline coefficients.
        return {
            "times": self._knot_times.tolist(),
            "positions": self._knot_positions.tolist(),
            "yaws": self._knot_yaws.tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> "TrajectoryScript":
        return TrajectoryScript(np.array(d["times"]), np.array(d["positions"]), np.array(d["yaws"]))


def waypoints(times, positions, yaws) -> TrajectoryScript:
    return TrajectoryScript(np.asarray(times), np.asarray(positions), np.asarray(yaws))


def hold(position, yaw: float, t0: float, t1: float) -> TrajectoryScript:
    """Stationary script (the anchor posture)."""
    times = [t0, 0.5 * (t0 + t1), t1]
    return TrajectoryScript(np.array(times), np.array([position] * 3), np.array([yaw] * 3))


def straight_line(p0, p1, yaw: float, t0: float, t1: float, n_knots: int = 5) -> TrajectoryScript:
    ts = np.linspace(t0, t1, n_knots)
    alphas = (ts - t0) / (t1 - t0)
    # Smoothstep easing keeps endpoint velocities zero (clamped spline friendly).
    ease = alphas * alphas * (3 - 2 * alphas)
    pos = np.outer(1 - ease, np.asarray(p0, dtype=float)) + np.outer(ease, np.asarray(p1, dtype=float))
    return TrajectoryScript(ts, pos, np.full(n_knots, yaw))
