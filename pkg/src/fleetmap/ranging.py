"""Inter-vehicle range streams: smoothing, residuals, and outlier handling."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .geometry import Pose, transform_point


@dataclass
class RangeMeasurement:
    vehicle_j: int
    vehicle_k: int
    stamp: float
    raw: float
    sigma: float
    los: bool = True
    smoothed: float | None = None

    def __post_init__(self):
        if self.raw < 0:
            raise ValueError("range must be non-negative")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


class RangeWindow:
    """Ring buffer of the last W raw samples for one vehicle pair.

    ``smooth(t)`` fits an ordinary least-squares line over the window and
    evaluates it at t; with a single sample it returns that sample. Samples
    deviating more than ``outlier_sigmas``·sigma from the first fit are dropped
    and the line is refit once.
    """

    def __init__(self, window: int = 10, outlier_sigmas: float = 5.0):
        if window < 2:
            raise ValueError("window must hold at least two samples")
        self.window = int(window)
        self.outlier_sigmas = float(outlier_sigmas)
        self._buf: deque[tuple[float, float]] = deque(maxlen=self.window)
        self._last_sigma = 0.0

    def __len__(self) -> int:
        return len(self._buf)

    def push(self, stamp: float, raw: float, sigma: float):
        if self._buf and stamp <= self._buf[-1][0]:
            raise ValueError("timestamps must be strictly increasing")
        self._buf.append((float(stamp), float(raw)))
        self._last_sigma = float(sigma)

    @staticmethod
    def _fit(ts: np.ndarray, us: np.ndarray) -> tuple[float, float, float]:
        """Least-squares line u = a + b*(t - t_mean); returns (a, b, t_mean)."""
        t_mean = float(ts.mean())
        x = ts - t_mean
        denom = float(x @ x)
        if denom < 1e-15:
            return float(us.mean()), 0.0, t_mean
        b = float(x @ (us - us.mean())) / denom
        a = float(us.mean())
        return a, b, t_mean

    def smooth(self, t_query: float) -> float:
        if not self._buf:
            raise ValueError("empty range window")
        ts = np.array([t for t, _ in self._buf])
        us = np.array([u for _, u in self._buf])
        if len(ts) < 2:
            return float(us[-1])
        a, b, t_mean = self._fit(ts, us)
        if self._last_sigma > 0 and len(ts) >= 3 and np.isfinite(self.outlier_sigmas):
            resid = np.abs(us - (a + b * (ts - t_mean)))
            offenders = np.where(resid > self.outlier_sigmas * self._last_sigma)[0]
            if offenders.size:
                # A large spike skews the first fit enough to implicate inliers;
                # drop at most the worst half so the refit stays anchored.
                max_drop = len(ts) // 2
                worst = offenders[np.argsort(resid[offenders])[::-1][:max_drop]]
                keep = np.setdiff1d(np.arange(len(ts)), worst)
                if keep.size >= 2:
                    a, b, t_mean = self._fit(ts[keep], us[keep])
        return float(a + b * (t_query - t_mean))


def residual(x_j: np.ndarray, x_k: np.ndarray, u: float) -> float:
    """|x_j - x_k| - u."""
    return float(np.linalg.norm(np.asarray(x_j, dtype=float) - np.asarray(x_k, dtype=float)) - u)


def residual_with_transforms(
    x_j: np.ndarray, x_k: np.ndarray, t_vj: Pose, t_vk: Pose, u: float
) -> float:
    """Range residual with both local positions mapped through vehicle frames."""
    return residual(transform_point(t_vj, x_j), transform_point(t_vk, x_k), u)
