"""Rigid-body poses, quaternion math, spatial indices, and seeded randomness.

Conventions:
    - Quaternions are Hamilton, stored w-first: q = [w, x, y, z].
    - Pose applies as x_out = R @ x + t.
    - All random draws in the library flow through numpy Generators created
      by ``make_rng`` / ``child_rng`` so a scenario seed fixes every output.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

# ---------------------------------------------------------------------------
# Quaternion / SO(3) helpers
# ---------------------------------------------------------------------------


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < 1e-15:
        return quat_identity()
    return q / n


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a ⊗ b, both w-first."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    xx, yy, zz = x * x, y * y, z * z
    wx, wy, wz = w * x, w * y, w * z
    xy, xz, yz = x * y, x * z, y * z
    return np.array(
        [
            [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
            [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
            [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
        ]
    )


def quat_from_matrix(R: np.ndarray) -> np.ndarray:
    """Shepperd's method; returns a normalized w-first quaternion."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
        )
    elif R[1, 1] > R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array(
            [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array(
            [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
        )
    return quat_normalize(q)


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < 1e-15 or abs(angle) < 1e-300:
        return quat_identity()
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis / n])


def quat_from_yaw(yaw: float) -> np.ndarray:
    return quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), yaw)


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    return quat_to_matrix(q) @ np.asarray(v, dtype=float)


def quat_angle(q: np.ndarray) -> float:
    """Rotation angle in [0, pi]: atan2(|vec|, |w|) * 2 on the canonical sign."""
    vec_norm = float(np.linalg.norm(q[1:]))
    return 2.0 * float(np.arctan2(vec_norm, abs(float(q[0]))))


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_exp(phi: np.ndarray) -> np.ndarray:
    """Rodrigues formula, stable near zero."""
    phi = np.asarray(phi, dtype=float)
    angle = np.linalg.norm(phi)
    K = skew(phi)
    if angle < 1e-8:
        return np.eye(3) + K + 0.5 * (K @ K)
    Ka = K / angle
    return np.eye(3) + np.sin(angle) * Ka + (1.0 - np.cos(angle)) * (Ka @ Ka)


def so3_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector of R; inverse of so3_exp on (-pi, pi]."""
    tr = np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)
    angle = np.arccos(tr)
    if angle < 1e-8:
        return np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) * 0.5
    if np.pi - angle < 1e-6:
        # Near pi: use the symmetric part to get the axis robustly.
        A = (R + np.eye(3)) * 0.5
        axis = np.sqrt(np.maximum(np.diag(A), 0.0))
        # Fix signs from off-diagonals using the largest component.
        k = int(np.argmax(axis))
        if axis[k] > 0:
            for i in range(3):
                if i != k and A[k, i] < 0:
                    axis[i] = -axis[i]
        axis = axis / max(np.linalg.norm(axis), 1e-15)
        return axis * angle
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return w * (angle / (2.0 * np.sin(angle)))


def so3_left_jacobian_inv(phi: np.ndarray) -> np.ndarray:
    """Inverse of the SO(3) left Jacobian, used for rotation-residual chain rules."""
    phi = np.asarray(phi, dtype=float)
    angle = np.linalg.norm(phi)
    K = skew(phi)
    if angle < 1e-6:
        return np.eye(3) - 0.5 * K + (1.0 / 12.0) * (K @ K)
    half = 0.5 * angle
    cot = 1.0 / np.tan(half)
    coef = (1.0 / angle**2) * (1.0 - angle * cot / 2.0)
    return np.eye(3) - 0.5 * K + coef * (K @ K)


# ---------------------------------------------------------------------------
# Pose
# ---------------------------------------------------------------------------


@dataclass
class Pose:
    """SE(3) rigid transform: w-first Hamilton quaternion + translation (m)."""

    q: np.ndarray = field(default_factory=quat_identity)
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    stamp: float = 0.0

    def __post_init__(self):
        self.q = quat_normalize(np.asarray(self.q, dtype=float))
        self.t = np.asarray(self.t, dtype=float).copy()

    @staticmethod
    def identity(stamp: float = 0.0) -> "Pose":
        return Pose(quat_identity(), np.zeros(3), stamp)

    @staticmethod
    def from_matrix(R: np.ndarray, t: np.ndarray, stamp: float = 0.0) -> "Pose":
        return Pose(quat_from_matrix(R), np.asarray(t, dtype=float), stamp)

    @staticmethod
    def from_xyz_yaw(x: float, y: float, z: float, yaw: float, stamp: float = 0.0) -> "Pose":
        return Pose(quat_from_yaw(yaw), np.array([x, y, z]), stamp)

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def copy(self) -> "Pose":
        return Pose(self.q.copy(), self.t.copy(), self.stamp)

    def yaw(self) -> float:
        R = self.rotation_matrix()
        return float(np.arctan2(R[1, 0], R[0, 0]))


def compose(a: Pose, b: Pose) -> Pose:
    """a then b as rigid maps: (a∘b)(x) = a(b(x)); stamp taken from b."""
    q = quat_normalize(quat_multiply(a.q, b.q))
    t = quat_rotate(a.q, b.t) + a.t
    return Pose(q, t, b.stamp)


def inverse(p: Pose) -> Pose:
    qi = quat_conjugate(p.q)
    return Pose(qi, -quat_rotate(qi, p.t), p.stamp)


def transform_point(p: Pose, x: np.ndarray) -> np.ndarray:
    return quat_rotate(p.q, x) + p.t


def transform_points(p: Pose, xs: np.ndarray) -> np.ndarray:
    """Apply pose to an (N, 3) array."""
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        return xs.reshape(0, 3)
    return xs @ quat_to_matrix(p.q).T + p.t


def relative_pose(a: Pose, b: Pose) -> Pose:
    """b expressed in a's frame: inverse(a) ∘ b."""
    return compose(inverse(a), b)


def rotation_angle_between(a: Pose, b: Pose) -> float:
    return quat_angle(quat_multiply(quat_conjugate(a.q), b.q))


# ---------------------------------------------------------------------------
# Seeded randomness
# ---------------------------------------------------------------------------


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed))


def child_rng(seed: int, *names: str) -> np.random.Generator:
    """Deterministic named substream of a master seed (crc32 of the path)."""
    entropy = [int(seed)] + [zlib.crc32(n.encode("utf-8")) for n in names]
    return np.random.default_rng(entropy)


# ---------------------------------------------------------------------------
# Spatial indices
# ---------------------------------------------------------------------------


class SpatialIndex:
    """Immutable k-d tree over an (N, 3) point set.

    Queries recompute distances in float64 and break ties by insertion order,
    so results match an exhaustive scan exactly.
    """

    def __init__(self, points: np.ndarray):
        self.points = np.asarray(points, dtype=float).reshape(-1, 3)
        self._tree = cKDTree(self.points) if len(self.points) else None

    def __len__(self) -> int:
        return len(self.points)

    def _order(self, ids: np.ndarray, center: np.ndarray) -> list[tuple[int, float]]:
        d = np.linalg.norm(self.points[ids] - center, axis=1)
        order = np.lexsort((ids, d))
        return [(int(ids[i]), float(d[i])) for i in order]

    def knn(self, center: np.ndarray, k: int) -> list[tuple[int, float]]:
        """k nearest (id, distance), ascending distance, ties by insertion order."""
        if self._tree is None or k <= 0:
            return []
        center = np.asarray(center, dtype=float)
        k_eff = min(k, len(self.points))
        _, idx = self._tree.query(center, k=k_eff)
        idx = np.atleast_1d(idx)
        # Boundary ties: pull in every point at the k-th distance before sorting.
        # Slightly inflated radius guards against off-by-one-ulp exclusions in
        # the tree's own metric; extras are dropped by the truncation below.
        r = float(np.max(np.linalg.norm(self.points[idx] - center, axis=1)))
        r = r * (1.0 + 1e-12) + 1e-300
        ids = np.array(self._tree.query_ball_point(center, r), dtype=int)
        return self._order(ids, center)[:k_eff]

    def radius(self, center: np.ndarray, r: float) -> list[tuple[int, float]]:
        """All (id, distance) with distance <= r, same ordering as knn."""
        if self._tree is None or r < 0:
            return []
        center = np.asarray(center, dtype=float)
        ids = np.array(self._tree.query_ball_point(center, float(r)), dtype=int)
        if ids.size == 0:
            return []
        out = self._order(ids, center)
        return [(i, d) for i, d in out if d <= r]

    def radius_ids(self, centers: np.ndarray, r: float) -> list[np.ndarray]:
        """Vectorized radius query for many centers; ids only, unordered."""
        if self._tree is None:
            return [np.empty(0, dtype=int) for _ in range(len(centers))]
        res = self._tree.query_ball_point(np.asarray(centers, dtype=float), float(r))
        return [np.asarray(ids, dtype=int) for ids in res]


class VoxelOctree:
    """Leaf-level octree (hashed voxel grid) with a fixed leaf size.

    Supports occupancy tests, radius and k-nearest queries; query results are
    identical to a linear scan (ties by insertion order). Immutable after build.
    """

    def __init__(self, points: np.ndarray, leaf_size: float):
        if leaf_size <= 0:
            raise ValueError("leaf_size must be positive")
        self.points = np.asarray(points, dtype=float).reshape(-1, 3)
        self.leaf_size = float(leaf_size)
        n = len(self.points)
        if n:
            cells = np.floor(self.points / self.leaf_size).astype(np.int64)
            self._origin = cells.min(axis=0)
            rel = cells - self._origin
            self._dims = rel.max(axis=0) + 1
            codes = (rel[:, 0] * self._dims[1] + rel[:, 1]) * self._dims[2] + rel[:, 2]
            order = np.argsort(codes, kind="stable")
            self._sorted_ids = np.arange(n)[order]
            self._sorted_codes = codes[order]
        else:
            self._origin = np.zeros(3, dtype=np.int64)
            self._dims = np.ones(3, dtype=np.int64)
            self._sorted_ids = np.empty(0, dtype=np.int64)
            self._sorted_codes = np.empty(0, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.points)

    def _cells_to_codes(self, cells: np.ndarray) -> np.ndarray:
        rel = cells - self._origin
        inside = np.all((rel >= 0) & (rel < self._dims), axis=-1)
        codes = (rel[..., 0] * self._dims[1] + rel[..., 1]) * self._dims[2] + rel[..., 2]
        return np.where(inside, codes, -1)

    def _ids_in_codes(self, codes: np.ndarray) -> np.ndarray:
        codes = codes[codes >= 0]
        if codes.size == 0 or len(self.points) == 0:
            return np.empty(0, dtype=int)
        lo = np.searchsorted(self._sorted_codes, codes, side="left")
        hi = np.searchsorted(self._sorted_codes, codes, side="right")
        parts = [self._sorted_ids[a:b] for a, b in zip(lo, hi) if b > a]
        if not parts:
            return np.empty(0, dtype=int)
        return np.concatenate(parts)

    def _candidate_ids(self, center: np.ndarray, r: float) -> np.ndarray:
        lo = np.floor((center - r) / self.leaf_size).astype(np.int64)
        hi = np.floor((center + r) / self.leaf_size).astype(np.int64)
        lo = np.maximum(lo, self._origin)
        hi = np.minimum(hi, self._origin + self._dims - 1)
        if np.any(hi < lo):
            return np.empty(0, dtype=int)
        gx, gy, gz = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
        cells = np.stack(np.meshgrid(gx, gy, gz, indexing="ij"), axis=-1).reshape(-1, 3)
        return self._ids_in_codes(self._cells_to_codes(cells))

    def radius(self, center: np.ndarray, r: float) -> list[tuple[int, float]]:
        center = np.asarray(center, dtype=float)
        ids = self._candidate_ids(center, r)
        if ids.size == 0:
            return []
        d = np.linalg.norm(self.points[ids] - center, axis=1)
        keep = d <= r
        ids, d = ids[keep], d[keep]
        order = np.lexsort((ids, d))
        return [(int(ids[i]), float(d[i])) for i in order]

    def knn(self, center: np.ndarray, k: int) -> list[tuple[int, float]]:
        if len(self.points) == 0 or k <= 0:
            return []
        center = np.asarray(center, dtype=float)
        k_eff = min(k, len(self.points))
        r = self.leaf_size
        # Sound search cap: distance from center to the farthest box corner.
        lo = self._origin * self.leaf_size
        hi = (self._origin + self._dims) * self.leaf_size
        far = np.maximum(np.abs(center - lo), np.abs(center - hi))
        span = float(np.linalg.norm(far)) + self.leaf_size
        while True:
            found = self.radius(center, r)
            if len(found) >= k_eff:
                # Sound cutoff: everything within the k-th distance was scanned
                # only if that distance <= r; widen once more otherwise.
                if found[k_eff - 1][1] <= r:
                    return found[:k_eff]
            if r > span:
                return found[:k_eff]
            r *= 2.0

    def nearest_within(self, centers: np.ndarray, tol: float) -> np.ndarray:
        """Boolean mask: does each center have a stored point within tol?"""
        centers = np.asarray(centers, dtype=float).reshape(-1, 3)
        out = np.zeros(len(centers), dtype=bool)
        if len(self.points) == 0 or len(centers) == 0:
            return out
        reach = int(np.ceil(tol / self.leaf_size))
        base = np.floor(centers / self.leaf_size).astype(np.int64)
        offs = np.arange(-reach, reach + 1)
        grid = np.stack(np.meshgrid(offs, offs, offs, indexing="ij"), axis=-1).reshape(-1, 3)
        tol2 = tol * tol
        # Candidate codes for all centers at once, then per-center distance check.
        cells = base[:, None, :] + grid[None, :, :]
        codes = self._cells_to_codes(cells)
        for i in range(len(centers)):
            ids = self._ids_in_codes(codes[i])
            if ids.size == 0:
                continue
            diff = self.points[ids] - centers[i]
            if np.any(np.einsum("ij,ij->i", diff, diff) <= tol2):
                out[i] = True
        return out

    def occupied_cells(self) -> int:
        return int(np.unique(self._sorted_codes).size)
