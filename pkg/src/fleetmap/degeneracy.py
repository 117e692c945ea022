"""Degeneracy detection from normal-cloud eigenstructure and range correction.

The normal cloud of a degenerate place (corridor, tunnel) collapses onto few
clusters; the ratio of the two smallest covariance eigenvalues exposes that.
Ground-plane normals are excluded by default so the vertical direction, which
never degenerates for a ground vehicle, cannot mask a horizontal collapse.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class DegeneracyConfig:
    sigma_threshold: float = 3.0  # degenerate when sigma_deg falls below
    vertical_exclusion: bool = True
    vertical_cone_deg: float = 30.0
    lambda_floor: float = 1e-6


@dataclass
class DegeneracyReport:
    covariance: np.ndarray
    mean_normal: np.ndarray
    eigenvalues: np.ndarray  # descending, lambda1 >= lambda2 >= lambda3
    eigenvectors: np.ndarray  # rows e1, e2, e3 matching eigenvalues
    sigma_deg: float
    degenerate: bool
    filtered_count: int
    low_confidence: bool = False

    @property
    def e3(self) -> np.ndarray:
        return self.eigenvectors[2]


@dataclass
class CorrectionResult:
    s: float
    compensation: np.ndarray
    x_correct: np.ndarray
    applied: bool
    reason: str  # none | not-degenerate | gap-below-threshold | no-real-root


def normal_covariance(normals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Population covariance and mean of a normal cloud (N >= 3)."""
    normals = np.asarray(normals, dtype=float).reshape(-1, 3)
    n = len(normals)
    if n < 3:
        raise ValueError("need at least 3 normals")
    mean = normals.mean(axis=0)
    centered = normals - mean
    cov = centered.T @ centered / n
    return cov, mean


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    return -v if v[k] < 0 else v


def analyze_degeneracy(
    normals: np.ndarray,
    cfg: DegeneracyConfig | None = None,
    heading: float = 0.0,
) -> DegeneracyReport:
    """Eigen-analysis of the (optionally vertical-filtered) normal cloud.

    `normals` may be an (N,3) array or anything with a `.normals` attribute.
    `heading` (yaw, radians) only feeds the fallback direction used when fewer
    than 3 normals survive filtering.
    """
    cfg = cfg or DegeneracyConfig()
    if hasattr(normals, "normals"):
        normals = normals.normals
    normals = np.asarray(normals, dtype=float).reshape(-1, 3)

    if cfg.vertical_exclusion and len(normals):
        cos_cone = np.cos(np.deg2rad(cfg.vertical_cone_deg))
        normals = normals[np.abs(normals[:, 2]) <= cos_cone]

    if len(normals) < 3:
        # Too little structure to analyze: flag degenerate with a horizontal
        # fallback direction orthogonal to the vehicle heading.
        e3 = np.array([-np.sin(heading), np.cos(heading), 0.0])
        eye = np.eye(3)
        return DegeneracyReport(
            covariance=np.zeros((3, 3)),
            mean_normal=np.zeros(3),
            eigenvalues=np.zeros(3),
            eigenvectors=np.vstack([eye[2], np.cross(eye[2], e3), e3]),
            sigma_deg=0.0,
            degenerate=True,
            filtered_count=len(normals),
            low_confidence=True,
        )

    cov, mean = normal_covariance(normals)
    w, v = np.linalg.eigh(cov)  # ascending
    w = np.maximum(w, 0.0)
    eigenvalues = w[::-1].copy()
    eigenvectors = np.vstack(
        [_canonical_sign(v[:, 2]), _canonical_sign(v[:, 1]), _canonical_sign(v[:, 0])]
    )
    lam2, lam3 = eigenvalues[1], eigenvalues[2]
    sigma_deg = float(lam2 / max(lam3, cfg.lambda_floor))
    degenerate = bool(sigma_deg < cfg.sigma_threshold or lam3 < cfg.lambda_floor)
    return DegeneracyReport(
        covariance=cov,
        mean_normal=mean,
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
        sigma_deg=sigma_deg,
        degenerate=degenerate,
        filtered_count=len(normals),
    )


def project_normals_diagnostic(normals: np.ndarray) -> np.ndarray:
    """Mercator-style (longitude, stretched latitude) pairs for density plots."""
    normals = np.asarray(normals, dtype=float).reshape(-1, 3)
    lon = np.degrees(np.arctan2(normals[:, 1], normals[:, 0]))
    phi = np.arcsin(np.clip(normals[:, 2], -1.0, 1.0))
    phi = np.clip(phi, -np.deg2rad(85.0), np.deg2rad(85.0))
    y = np.degrees(np.log(np.tan(np.pi / 4.0 + phi / 2.0)))
    return np.stack([lon, y], axis=1)


def correct_degenerate_pose(
    x_deg: np.ndarray,
    x_anchor: np.ndarray,
    e3: np.ndarray,
    u: float,
    gap_threshold: float,
) -> CorrectionResult:
    """Shift the position along the horizontal degenerate direction onto the
    range sphere around the anchor.

    The compensation magnitude s solves |v + s*e| = u in the XY plane (v's z
    held fixed); of two real roots the smaller |s| is taken. The pose is left
    unchanged when the range gap is within the threshold or no real root
    exists.
    """
    x_deg = np.asarray(x_deg, dtype=float)
    x_anchor = np.asarray(x_anchor, dtype=float)
    e = np.asarray(e3, dtype=float).copy()
    e[2] = 0.0
    norm = np.linalg.norm(e)
    if norm < 1e-9:
        raise ValueError("degenerate direction has no horizontal component")
    e = e / norm

    v = x_deg - x_anchor
    gap = abs(float(np.linalg.norm(v)) - u)
    if gap <= gap_threshold:
        return CorrectionResult(0.0, np.zeros(3), x_deg.copy(), False, "gap-below-threshold")

    v_xy = v.copy()
    v_xy[2] = 0.0
    b = float(v_xy @ e)
    c = float(v_xy @ v_xy) + float(v[2] ** 2) - u * u
    disc = b * b - c
    if disc < 0:
        return CorrectionResult(0.0, np.zeros(3), x_deg.copy(), False, "no-real-root")
    root = np.sqrt(disc)
    s_a, s_b = -b + root, -b - root
    s = s_a if abs(s_a) <= abs(s_b) else s_b
    comp = s * e
    return CorrectionResult(float(s), comp, x_deg + comp, True, "none")


def apply_range_correction(
    report: DegeneracyReport,
    x_deg: np.ndarray,
    x_anchor: np.ndarray,
    u: float,
    gap_threshold: float,
) -> CorrectionResult:
    """Gate the correction on the degeneracy report."""
    if not report.degenerate:
        return CorrectionResult(0.0, np.zeros(3), np.asarray(x_deg, dtype=float).copy(), False, "not-degenerate")
    return correct_degenerate_pose(x_deg, x_anchor, report.e3, u, gap_threshold)
