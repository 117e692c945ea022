"""Synthetic worlds built from finite rectangular patches with exact geometry.

Every surface is a rectangle (corner + two orthogonal edge vectors + outward
unit normal), so ray intersections and point-to-surface distances have closed
forms that serve as ground truth for the whole pipeline.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FLOOR = "floor"
WALL = "wall"
CEILING = "ceiling"


@dataclass
class Patch:
    corner: np.ndarray
    edge_u: np.ndarray
    edge_v: np.ndarray
    normal: np.ndarray
    tag: str = WALL

    def __post_init__(self):
        self.corner = np.asarray(self.corner, dtype=float)
        self.edge_u = np.asarray(self.edge_u, dtype=float)
        self.edge_v = np.asarray(self.edge_v, dtype=float)
        n = np.asarray(self.normal, dtype=float)
        self.normal = n / np.linalg.norm(n)
        if abs(float(self.edge_u @ self.edge_v)) > 1e-9 * np.linalg.norm(self.edge_u) * np.linalg.norm(self.edge_v):
            raise ValueError("patch edges must be orthogonal")
        for e in (self.edge_u, self.edge_v):
            if abs(float(e @ self.normal)) > 1e-9 * np.linalg.norm(e):
                raise ValueError("patch normal must be perpendicular to its edges")

    def to_dict(self) -> dict:
        return {
            "corner": self.corner.tolist(),
            "edge_u": self.edge_u.tolist(),
            "edge_v": self.edge_v.tolist(),
            "normal": self.normal.tolist(),
            "tag": self.tag,
        }

    @staticmethod
    def from_dict(d: dict) -> "Patch":
        return Patch(d["corner"], d["edge_u"], d["edge_v"], d["normal"], d.get("tag", WALL))


@dataclass
class WorldModel:
    patches: list[Patch] = field(default_factory=list)

    def __post_init__(self):
        for p in self.patches:
            if p.tag == FLOOR and not np.allclose(p.normal, [0.0, 0.0, 1.0], atol=1e-9):
                raise ValueError("floor patches must have normal +z")

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        corners = []
        for p in self.patches:
            corners.append(p.corner)
            corners.append(p.corner + p.edge_u)
            corners.append(p.corner + p.edge_v)
            corners.append(p.corner + p.edge_u + p.edge_v)
        c = np.array(corners)
        return c.min(axis=0), c.max(axis=0)

    def to_dict(self) -> dict:
        return {"patches": [p.to_dict() for p in self.patches]}

    @staticmethod
    def from_dict(d: dict) -> "WorldModel":
        return WorldModel([Patch.from_dict(p) for p in d["patches"]])

    def save(self, path: str | Path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @staticmethod
    def load(path: str | Path) -> "WorldModel":
        return WorldModel.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Exact geometry against patches
# ---------------------------------------------------------------------------


def ray_patch_distances(origin: np.ndarray, dirs: np.ndarray, patch: Patch) -> np.ndarray:
    """Ray parameter s >= 0 where origin + s*dir hits the patch; inf on miss.

    dirs need not be normalized; s is in units of |dir| (pass unit dirs for
    metric ranges).
    """
    origin = np.asarray(origin, dtype=float)
    dirs = np.asarray(dirs, dtype=float).reshape(-1, 3)
    denom = dirs @ patch.normal
    num = float((patch.corner - origin) @ patch.normal)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(np.abs(denom) > 1e-12, num / denom, np.inf)
    s = np.where(s > 1e-9, s, np.inf)
    s_safe = np.where(np.isfinite(s), s, 0.0)
    hit = origin + s_safe[:, None] * dirs
    rel = hit - patch.corner
    lu2 = float(patch.edge_u @ patch.edge_u)
    lv2 = float(patch.edge_v @ patch.edge_v)
    a = rel @ patch.edge_u
    b = rel @ patch.edge_v
    tol = 1e-9
    inside = (a >= -tol * lu2) & (a <= lu2 * (1 + tol)) & (b >= -tol * lv2) & (b <= lv2 * (1 + tol))
    return np.where(inside & np.isfinite(s), s, np.inf)


def raycast_world(origin: np.ndarray, dirs: np.ndarray, world: WorldModel) -> np.ndarray:
    """Smallest hit parameter over all patches for each ray; inf on miss."""
    dirs = np.asarray(dirs, dtype=float).reshape(-1, 3)
    best = np.full(len(dirs), np.inf)
    for patch in world.patches:
        best = np.minimum(best, ray_patch_distances(origin, dirs, patch))
    return best


def segment_blocked(a: np.ndarray, b: np.ndarray, world: WorldModel) -> bool:
    """Does the open segment a-b intersect any patch (line-of-sight test)?"""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b - a
    length = float(np.linalg.norm(d))
    if length < 1e-12:
        return False
    s = raycast_world(a, (d / length)[None, :], world)[0]
    return bool(s < length - 1e-9)


def point_patch_distance(points: np.ndarray, patch: Patch) -> np.ndarray:
    """Exact Euclidean distance from each point to the finite rectangle."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    rel = points - patch.corner
    lu = float(np.linalg.norm(patch.edge_u))
    lv = float(np.linalg.norm(patch.edge_v))
    uhat = patch.edge_u / lu
    vhat = patch.edge_v / lv
    a = np.clip(rel @ uhat, 0.0, lu)
    b = np.clip(rel @ vhat, 0.0, lv)
    closest = patch.corner + a[:, None] * uhat + b[:, None] * vhat
    return np.linalg.norm(points - closest, axis=1)


def distance_to_world(points: np.ndarray, world: WorldModel) -> np.ndarray:
    """Distance from each point to the nearest patch."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if not world.patches:
        raise ValueError("world has no patches")
    best = np.full(len(points), np.inf)
    for patch in world.patches:
        best = np.minimum(best, point_patch_distance(points, patch))
    return best


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def box_room(
    size_x: float,
    size_y: float,
    size_z: float,
    origin: np.ndarray | None = None,
    with_ceiling: bool = True,
) -> WorldModel:
    """Closed rectangular room; normals point into the interior."""
    o = np.zeros(3) if origin is None else np.asarray(origin, dtype=float)
    sx, sy, sz = size_x, size_y, size_z
    ex = np.array([sx, 0.0, 0.0])
    ey = np.array([0.0, sy, 0.0])
    ez = np.array([0.0, 0.0, sz])
    patches = [
        Patch(o, ex, ey, [0, 0, 1], FLOOR),
        Patch(o + [0, 0, sz], ex, ey, [0, 0, -1], CEILING) if with_ceiling else None,
        Patch(o, ex, ez, [0, 1, 0], WALL),
        Patch(o + [0, sy, 0], ex, ez, [0, -1, 0], WALL),
        Patch(o, ey, ez, [1, 0, 0], WALL),
        Patch(o + [sx, 0, 0], ey, ez, [-1, 0, 0], WALL),
    ]
    return WorldModel([p for p in patches if p is not None])


def ramp(corner, along, breadth: float, rise_toward) -> Patch:
    """45-degree ramp rectangle: runs along `along`, rises in `rise_toward` (xy unit)."""
    along = np.asarray(along, dtype=float)
    r = np.asarray(rise_toward, dtype=float)
    r = r / np.linalg.norm(r)
    edge_v = np.array([r[0] * breadth, r[1] * breadth, breadth])
    n = np.array([-r[0], -r[1], 1.0]) / np.sqrt(2.0)
    return Patch(corner, along, edge_v, n, WALL)


def furnished_box_room(size_x: float, size_y: float, size_z: float) -> WorldModel:
    """Box room with two 45-degree ramps so sloped normals constrain z."""
    w = box_room(size_x, size_y, size_z)
    b = min(size_z * 0.4, 1.0)
    w.patches.append(
        ramp([size_x * 0.2, b, 0.0], [size_x * 0.5, 0.0, 0.0], b, [0.0, -1.0])
    )
    w.patches.append(
        ramp([size_x - b, size_y * 0.2, 0.0], [0.0, size_y * 0.5, 0.0], b, [1.0, 0.0])
    )
    return w


def corridor(
    length: float,
    width: float,
    height: float,
    origin: np.ndarray | None = None,
    closed_ends: bool = False,
    with_ceiling: bool = True,
) -> WorldModel:
    """Corridor along +x. Open ends leave the x-direction unconstrained."""
    o = np.zeros(3) if origin is None else np.asarray(origin, dtype=float)
    ex = np.array([length, 0.0, 0.0])
    ey = np.array([0.0, width, 0.0])
    ez = np.array([0.0, 0.0, height])
    patches = [
        Patch(o, ex, ey, [0, 0, 1], FLOOR),
        Patch(o, ex, ez, [0, 1, 0], WALL),
        Patch(o + [0, width, 0], ex, ez, [0, -1, 0], WALL),
    ]
    if with_ceiling:
        patches.append(Patch(o + [0, 0, height], ex, ey, [0, 0, -1], CEILING))
    if closed_ends:
        patches.append(Patch(o, ey, ez, [1, 0, 0], WALL))
        patches.append(Patch(o + [length, 0, 0], ey, ez, [-1, 0, 0], WALL))
    return WorldModel(patches)
