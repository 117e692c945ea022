"""Weighted scan-to-map registration and keyframe selection.

Each feature point gets a convex combination of three weights (range,
neighbor-density, kinematic) that scales its point-to-plane residual inside a
Huber loss. Registration is damped Gauss-Newton on a 6-dof increment with
step acceptance; a candidate step is taken only if the mean Huber cost under
re-association does not increase, which keeps the accepted-cost trace
non-increasing.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import FeatureCloud, voxel_downsample
from .geometry import (
    Pose,
    SpatialIndex,
    VoxelOctree,
    quat_from_matrix,
    quat_to_matrix,
    so3_exp,
    transform_points,
)
from .sensors import PointCloud

# ---------------------------------------------------------------------------
# Multi-metric weights
# ---------------------------------------------------------------------------


@dataclass
class WeightContext:
    """Per-scan quantities feeding the feature weights."""

    l_q2: float
    l_q3: float
    n_neighbor_threshold: int = 5
    theta_th: float = np.deg2rad(3.0)
    eta: tuple[float, float, float] = (0.5, 0.2, 0.3)

    def __post_init__(self):
        if self.l_q2 > self.l_q3:
            raise ValueError("l_q2 must not exceed l_q3")
        if abs(sum(self.eta) - 1.0) > 1e-9:
            raise ValueError("eta weights must sum to 1")

    @staticmethod
    def from_scan(features: FeatureCloud, **kwargs) -> "WeightContext":
        if len(features) == 0:
            return WeightContext(l_q2=1.0, l_q3=1.0, **kwargs)
        q2 = float(np.percentile(features.ranges, 50))
        q3 = float(np.percentile(features.ranges, 75))
        return WeightContext(l_q2=q2, l_q3=max(q3, 1e-9), **kwargs)


def weight_range(r, l_q2: float, l_q3: float):
    """Sigmoid in range, midpoint at the second quartile; favors far points."""
    if l_q3 <= 0:
        raise ValueError("l_q3 must be positive")
    return 1.0 / (1.0 + np.exp(-(2.5 / l_q3) * (np.asarray(r, dtype=float) - l_q2)))


def weight_neighbor(n_neighbors, threshold: int):
    """Linear ramp in the local neighbor count, clamped at 1."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    return np.minimum(np.asarray(n_neighbors, dtype=float) / float(threshold), 1.0)


def weight_kinematic(p: np.ndarray, n: np.ndarray, r: float, delta_theta: float, theta_th: float) -> float:
    """Raw (un-normalized) kinematic weight of one feature point.

    Zero when the preintegrated rotation angle is at or below the gate;
    otherwise the angle between the viewing ray and the normal, times range.
    """
    if delta_theta <= theta_th:
        return 0.0
    p = np.asarray(p, dtype=float)
    norm = np.linalg.norm(p)
    if norm < 1e-12:
        raise ValueError("zero-length point")
    cosang = np.clip(float(p @ n) / norm, -1.0, 1.0)
    return float(np.arccos(cosang) * r)


def kinematic_weights(features: FeatureCloud, delta_theta: float, theta_th: float) -> np.ndarray:
    """Per-scan kinematic weights, max-normalized to [0, 1]."""
    if len(features) == 0:
        return np.zeros(0)
    if delta_theta <= theta_th:
        return np.zeros(len(features))
    dirs = features.xyz / np.maximum(features.ranges, 1e-12)[:, None]
    cosang = np.clip(np.einsum("ij,ij->i", dirs, features.normals), -1.0, 1.0)
    raw = np.arccos(cosang) * features.ranges
    peak = float(raw.max())
    return raw / peak if peak > 0 else raw


def combine_weights(w_range, w_neighbor, w_kinematic, eta: tuple[float, float, float]):
    return eta[0] * np.asarray(w_range) + eta[1] * np.asarray(w_neighbor) + eta[2] * np.asarray(w_kinematic)


# ---------------------------------------------------------------------------
# Keyframes / submaps
# ---------------------------------------------------------------------------


@dataclass
class Keyframe:
    kf_id: int
    pose: Pose
    features: FeatureCloud
    cloud: PointCloud
    octree: VoxelOctree = None
    resolution: float = 0.1

    def __post_init__(self):
        if self.octree is None:
            self.octree = VoxelOctree(self.cloud.xyz, leaf_size=self.resolution)


def nearest_keyframes(keyframes: list[Keyframe], pose: Pose, n: int) -> list[Keyframe]:
    """The n keyframes closest by translation distance."""
    if not keyframes:
        return []
    d = np.array([np.linalg.norm(kf.pose.t - pose.t) for kf in keyframes])
    order = np.argsort(d, kind="stable")[:n]
    return [keyframes[i] for i in order]


@dataclass
class Submap:
    points: np.ndarray
    index: SpatialIndex
    keyframe_ids: tuple[int, ...]


def build_submap(keyframes: list[Keyframe], resolution: float) -> Submap:
    """Merge keyframe clouds into the local-map frame and downsample once."""
    if not keyframes:
        raise ValueError("submap needs at least one keyframe")
    parts = [transform_points(kf.pose, kf.cloud.xyz) for kf in keyframes]
    merged = np.vstack(parts)
    cloud = PointCloud(merged, np.zeros(len(merged), dtype=int), np.zeros(len(merged)))
    down = voxel_downsample(cloud, resolution)
    return Submap(down.xyz, SpatialIndex(down.xyz), tuple(kf.kf_id for kf in keyframes))


def select_keyframe(
    scan: PointCloud,
    last_kf: Keyframe,
    rel_pose: Pose,
    overlap_threshold: float,
    resolution: float,
) -> tuple[bool, float]:
    """Overlap ratio of the scan against the last keyframe; keyframe when low.

    rel_pose maps scan points into the last keyframe's frame. A point overlaps
    when the keyframe octree holds a point within 2x the downsample resolution.
    """
    if len(scan) == 0:
        raise ValueError("empty scan")
    pts_kf = transform_points(rel_pose, scan.xyz)
    mask = last_kf.octree.nearest_within(pts_kf, tol=2.0 * resolution)
    ratio = float(mask.mean())
    return ratio < overlap_threshold, ratio


# ---------------------------------------------------------------------------
# Scan-to-map registration
# ---------------------------------------------------------------------------


@dataclass
class RegistrationConfig:
    max_iterations: int = 30
    param_tolerance: float = 1e-6
    huber_delta: float = 0.1
    correspondence_radius: float = 0.2  # typically 2x downsample resolution
    # Bootstrap association radius for poor initial guesses; halved each pass
    # down to correspondence_radius. Set <= correspondence_radius to disable
    # (e.g. when the initial guess comes from IMU prediction).
    coarse_radius: float = 0.8
    coarse_iterations: int = 8
    coarse_max_points: int = 400  # source subsample cap during bootstrap passes
    min_plane_points: int = 5
    max_plane_points: int = 10
    min_correspondences: int = 10
    planar_abs_eig: float = 9e-4  # lambda_min ceiling, ~ (0.03 m)^2
    planar_rel_eig: float = 0.05  # ... or this fraction of lambda_max
    lambda_init: float = 1e-4
    lambda_max: float = 1e6


@dataclass
class RegistrationResult:
    pose: Pose
    cost: float
    iterations: int
    cost_trace: list[float] = field(default_factory=list)
    n_correspondences: int = 0
    success: bool = True
    information: np.ndarray | None = None  # 6x6 Gauss-Newton approximation


def _huber_cost(e: np.ndarray, delta: float) -> float:
    a = np.abs(e)
    quad = a <= delta
    out = np.where(quad, 0.5 * e * e, delta * (a - 0.5 * delta))
    return float(out.mean()) if len(out) else np.inf


def _associate(
    src_world: np.ndarray,
    submap: Submap,
    cfg: RegistrationConfig,
    radius: float,
):
    """Plane fits around each transformed source point.

    Uses up to max_plane_points nearest submap points within the radius per
    source point; batched masked covariance + eigendecomposition. Non-planar
    fits are invalidated. Neighbor counts saturate at the cap, which is above
    every threshold that consumes them.
    """
    n = len(src_world)
    k = cfg.max_plane_points
    dists, idx = submap.index._tree.query(src_world, k=k, distance_upper_bound=radius)
    found = np.isfinite(dists)
    counts = found.sum(axis=1)
    valid = counts >= cfg.min_plane_points
    normals = np.zeros((n, 3))
    centroids = np.zeros((n, 3))
    if not np.any(valid):
        return valid, normals, centroids, counts
    rows = np.where(valid)[0]
    idx_safe = np.where(found, idx, 0)
    pts = submap.points[idx_safe[rows]]  # (m, k, 3)
    mask = found[rows][:, :, None]  # (m, k, 1)
    cnt = counts[rows].astype(float)[:, None]
    means = (pts * mask).sum(axis=1) / cnt
    centered = (pts - means[:, None, :]) * mask
    covs = np.einsum("mki,mkj->mij", centered, centered) / cnt[:, :, None]
    eigvals, eigvecs = np.linalg.eigh(covs)  # ascending
    planar = eigvals[:, 0] <= np.maximum(cfg.planar_abs_eig, cfg.planar_rel_eig * eigvals[:, 2])
    normals[rows] = eigvecs[:, :, 0]
    centroids[rows] = means
    valid = valid.copy()
    valid[rows] &= planar
    return valid, normals, centroids, counts


def _gn_pass(src, w_range, w_kin, submap, ctx, cfg, R, t, radius, max_iters):
    """One damped Gauss-Newton pass at a fixed association radius.

    Returns (R, t, trace, n_corr, H, ok); trace is non-increasing because a
    candidate step is accepted only when the re-associated mean Huber cost
    does not increase.
    """

    def evaluate(Rc, tc):
        world = src @ Rc.T + tc
        valid, normals, centroids, counts = _associate(world, submap, cfg, radius)
        if not np.any(valid):
            return None
        w_nb = weight_neighbor(counts, ctx.n_neighbor_threshold)
        omega = combine_weights(w_range, w_nb, w_kin, ctx.eta)
        idx = np.where(valid)[0]
        diff = world[idx] - centroids[idx]
        e = np.einsum("ij,ij->i", diff, normals[idx]) * omega[idx]
        return idx, normals, world, e, _huber_cost(e, cfg.huber_delta), omega

    lam = cfg.lambda_init
    trace: list[float] = []
    H_last = None
    state = evaluate(R, t)
    if state is None or len(state[0]) < cfg.min_correspondences:
        n_found = 0 if state is None else len(state[0])
        return R, t, trace, n_found, H_last, False

    n_corr = len(state[0])
    for _ in range(max_iters):
        idx, normals, world, e, cost, omega = state
        if not trace:
            trace.append(cost)
        n_corr = len(idx)
        if n_corr < cfg.min_correspondences:
            break
        # Rows: residual r_j = omega * n^T (R p + t - c); d/dt = omega n,
        # d/dtheta = omega (R p) x n (left-multiplicative rotation update).
        nrm = normals[idx]
        rot_pts = world[idx] - t
        J = np.empty((n_corr, 6))
        J[:, :3] = nrm * omega[idx][:, None]
        J[:, 3:] = np.cross(rot_pts, nrm) * omega[idx][:, None]
        a = np.abs(e)
        w_h = np.where(a <= cfg.huber_delta, 1.0, cfg.huber_delta / np.maximum(a, 1e-300))
        H = (J * w_h[:, None]).T @ J / n_corr
        g = (J * w_h[:, None]).T @ e / n_corr
        H_last = H * n_corr

        accepted = False
        dx = np.zeros(6)
        while lam <= cfg.lambda_max:
            try:
                dx = np.linalg.solve(H + lam * np.eye(6), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            R_new = so3_exp(dx[3:]) @ R
            t_new = t + dx[:3]
            cand = evaluate(R_new, t_new)
            if cand is not None and cand[4] <= cost + 1e-15:
                R, t = R_new, t_new
                state = cand
                trace.append(cand[4])
                lam = max(lam * 0.3, 1e-9)
                accepted = True
                break
            lam *= 10.0
        if not accepted or np.linalg.norm(dx) < cfg.param_tolerance:
            break
    return R, t, trace, n_corr, H_last, True


def register_scan_to_map(
    features: FeatureCloud,
    submap: Submap,
    init: Pose,
    ctx: WeightContext,
    cfg: RegistrationConfig,
    delta_theta: float = 0.0,
) -> RegistrationResult:
    """Minimize the weighted point-to-plane cost of features against a submap.

    When coarse_radius exceeds the correspondence radius, bootstrap passes at
    halving radii widen the convergence basin before the final pass at the
    nominal radius; the reported cost trace is the final pass.
    """
    if len(submap.points) == 0:
        raise ValueError("empty submap")
    src = features.xyz
    n_src = len(src)
    w_range = weight_range(features.ranges, ctx.l_q2, ctx.l_q3) if n_src else np.zeros(0)
    w_kin = kinematic_weights(features, delta_theta, ctx.theta_th)

    R = quat_to_matrix(init.q)
    t = init.t.copy()
    total_iters = 0

    radius = cfg.coarse_radius
    stride = max(1, n_src // cfg.coarse_max_points)
    while radius > cfg.correspondence_radius * 1.001:
        R, t, trace, _, _, ok = _gn_pass(
            src[::stride], w_range[::stride], w_kin[::stride],
            submap, ctx, cfg, R, t, radius, cfg.coarse_iterations,
        )
        total_iters += max(len(trace) - 1, 0) if ok else 0
        radius *= 0.5

    R, t, trace, n_corr, H_last, ok = _gn_pass(
        src, w_range, w_kin, submap, ctx, cfg, R, t, cfg.correspondence_radius, cfg.max_iterations
    )
    total_iters += max(len(trace) - 1, 0)
    if not ok or n_corr < cfg.min_correspondences:
        return RegistrationResult(
            pose=init.copy(), cost=np.inf, iterations=total_iters,
            cost_trace=trace, n_correspondences=n_corr, success=False,
        )
    pose = Pose(quat_from_matrix(R), t, init.stamp)
    return RegistrationResult(
        pose=pose,
        cost=trace[-1] if trace else np.inf,
        iterations=total_iters,
        cost_trace=trace,
        n_correspondences=n_corr,
        success=True,
        information=H_last,
    )
