"""Voxel downsampling and ring-structured planar feature extraction.

A candidate keeps its four nearest neighbors only when two lie on its own
ring and one on each adjacent ring; two cross-product normals from those
neighbor pairs must then agree within the planar angle threshold. The feature
normal is the normalized sum of the pair, flipped toward the sensor origin.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .sensors import PointCloud


@dataclass
class ExtractionConfig:
    resolution: float = 0.1
    theta_planar_deg: float = 10.0

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if not (0.0 < self.theta_planar_deg < 90.0):
            raise ValueError("theta_planar_deg must be in (0, 90)")

    @property
    def neighbor_bound(self) -> float:
        # Neighbors farther than twice the downsample resolution are rejected.
        return 2.0 * self.resolution


@dataclass
class FeatureCloud:
    xyz: np.ndarray
    normals: np.ndarray
    ranges: np.ndarray
    rings: np.ndarray

    def __post_init__(self):
        self.xyz = np.asarray(self.xyz, dtype=float).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
        self.ranges = np.asarray(self.ranges, dtype=float).reshape(-1)
        self.rings = np.asarray(self.rings, dtype=int).reshape(-1)

    def __len__(self) -> int:
        return len(self.xyz)

    @staticmethod
    def empty() -> "FeatureCloud":
        return FeatureCloud(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros(0, dtype=int))


def voxel_downsample(cloud: PointCloud, resolution: float) -> PointCloud:
    """One centroid per occupied voxel; ring/time taken from the nearest point."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    n = len(cloud)
    if n == 0:
        return PointCloud.empty()
    cells = np.floor(cloud.xyz / resolution).astype(np.int64)
    # Group points by voxel with a stable sort so output order is deterministic
    # (voxels ordered by first occurrence).
    _, first_idx, inverse = np.unique(
        cells, axis=0, return_index=True, return_inverse=True
    )
    order = np.argsort(first_idx, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    groups = rank[inverse]  # voxel id per point, in first-occurrence order
    n_vox = len(first_idx)
    sums = np.zeros((n_vox, 3))
    counts = np.zeros(n_vox)
    np.add.at(sums, groups, cloud.xyz)
    np.add.at(counts, groups, 1.0)
    centroids = sums / counts[:, None]
    # Ring of the point nearest each centroid.
    d2 = np.einsum("ij,ij->i", cloud.xyz - centroids[groups], cloud.xyz - centroids[groups])
    nearest = np.full(n_vox, -1, dtype=np.int64)
    best = np.full(n_vox, np.inf)
    for i in range(n):
        g = groups[i]
        if d2[i] < best[g]:
            best[g] = d2[i]
            nearest[g] = i
    return PointCloud(centroids, cloud.ring[nearest], cloud.t_offset[nearest])


def extract_planar(cloud: PointCloud, cfg: ExtractionConfig) -> FeatureCloud:
    """Planar feature points with oriented unit normals (see module docstring)."""
    n = len(cloud)
    if n and (len(cloud.ring) != n or np.any(cloud.ring < 0)):
        raise ValueError("cloud lacks ring indices")
    if n < 5:
        return FeatureCloud.empty()
    pts = cloud.xyz
    rings = cloud.ring
    tree = cKDTree(pts)
    dists, idx = tree.query(pts, k=5)
    # Drop self-matches (column of zeros) keeping the 4 true neighbors.
    nb_idx = idx[:, 1:]
    nb_d = dists[:, 1:]

    within = np.all(nb_d <= cfg.neighbor_bound, axis=1)
    nb_rings = rings[nb_idx]
    same = nb_rings == rings[:, None]
    lower = nb_rings == rings[:, None] - 1
    upper = nb_rings == rings[:, None] + 1
    ring_ok = (same.sum(axis=1) == 2) & (lower.sum(axis=1) == 1) & (upper.sum(axis=1) == 1)
    cand = np.where(within & ring_ok)[0]
    if cand.size == 0:
        return FeatureCloud.empty()

    # Per candidate: the two same-ring neighbors in distance order, plus the
    # lower-ring and upper-ring neighbor.
    same_pos = np.argsort(~same[cand], axis=1, kind="stable")[:, :2]
    lo_pos = np.argmax(lower[cand], axis=1)
    hi_pos = np.argmax(upper[cand], axis=1)
    rows = np.arange(cand.size)
    p = pts[cand]
    s1 = pts[nb_idx[cand, same_pos[:, 0]]] - p
    s2 = pts[nb_idx[cand, same_pos[:, 1]]] - p
    lo = pts[nb_idx[cand, lo_pos]] - p
    hi = pts[nb_idx[cand, hi_pos]] - p
    del rows

    n_g = np.cross(s1, lo)
    n_o = np.cross(s2, hi)
    len_g = np.linalg.norm(n_g, axis=1)
    len_o = np.linalg.norm(n_o, axis=1)
    nondegenerate = (len_g > 1e-12) & (len_o > 1e-12)
    n_g = np.where(len_g[:, None] > 1e-12, n_g / np.maximum(len_g, 1e-300)[:, None], 0.0)
    n_o = np.where(len_o[:, None] > 1e-12, n_o / np.maximum(len_o, 1e-300)[:, None], 0.0)

    # Fix the sign ambiguity of each cross product: align with the outgoing
    # sensor ray before comparing the pair.
    ray_dot_g = np.einsum("ij,ij->i", n_g, p)
    ray_dot_o = np.einsum("ij,ij->i", n_o, p)
    n_g = np.where(ray_dot_g[:, None] < 0, -n_g, n_g)
    n_o = np.where(ray_dot_o[:, None] < 0, -n_o, n_o)

    cos_angle = np.clip(np.einsum("ij,ij->i", n_g, n_o), -1.0, 1.0)
    theta = np.degrees(np.arccos(cos_angle))
    summed = n_g + n_o
    sum_len = np.linalg.norm(summed, axis=1)
    accept = nondegenerate & (theta < cfg.theta_planar_deg) & (sum_len > 1e-9)
    if not np.any(accept):
        return FeatureCloud.empty()

    normals = summed[accept] / sum_len[accept][:, None]
    p_acc = p[accept]
    # Final orientation: normals face the sensor origin.
    facing = np.einsum("ij,ij->i", normals, p_acc)
    normals = np.where(facing[:, None] > 0, -normals, normals)
    return FeatureCloud(
        p_acc,
        normals,
        np.linalg.norm(p_acc, axis=1),
        rings[cand[accept]],
    )


def export_feature_ply(features: FeatureCloud, path) -> None:
    """ASCII PLY with per-vertex normals (x,y,z,nx,ny,nz)."""
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(features)}",
        "property float x",
        "property float y",
        "property float z",
        "property float nx",
        "property float ny",
        "property float nz",
        "end_header",
    ]
    for p, nrm in zip(features.xyz, features.normals):
        lines.append(
            f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {nrm[0]:.6f} {nrm[1]:.6f} {nrm[2]:.6f}"
        )
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
