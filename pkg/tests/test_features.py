import numpy as np
import pytest

from fleetmap.features import ExtractionConfig, FeatureCloud, extract_planar, voxel_downsample
from fleetmap.geometry import make_rng
from fleetmap.sensors import PointCloud


def wall_grid(dy=0.10, dz=0.12, ny=20, nz=10, x=4.0):
    """Regular grid on the plane x=const; ring index equals the z row."""
    ys = np.arange(-ny, ny + 1) * dy
    zs = np.arange(-nz, nz + 1) * dz
    Y, Z = np.meshgrid(ys, zs, indexing="ij")
    pts = np.stack([np.full(Y.size, x), Y.ravel(), Z.ravel()], axis=1)
    rings = np.tile(np.arange(len(zs)), (len(ys), 1)).ravel()
    return PointCloud(pts, rings, np.zeros(len(pts)))


class TestVoxelDownsample:
    def test_merges_points_in_one_voxel(self):
        cloud = PointCloud(np.array([[0.01, 0.01, 0.01], [0.02, 0.01, 0.01]]), [0, 0], [0, 0])
        out = voxel_downsample(cloud, 0.1)
        assert len(out) == 1
        np.testing.assert_allclose(out.xyz[0], [0.015, 0.01, 0.01], atol=1e-12)

    def test_sparse_grid_unchanged(self):
        xs = np.arange(5, dtype=float)
        pts = np.stack([xs, np.zeros(5), np.zeros(5)], axis=1) + 0.05
        cloud = PointCloud(pts, np.zeros(5, dtype=int), np.zeros(5))
        assert len(voxel_downsample(cloud, 0.1)) == 5

    def test_count_matches_binning_oracle(self):
        rng = make_rng(12)
        pts = rng.uniform(0, 1, size=(10_000, 3))
        cloud = PointCloud(pts, np.zeros(len(pts), dtype=int), np.zeros(len(pts)))
        res = 0.25
        out = voxel_downsample(cloud, res)
        oracle = len(np.unique(np.floor(pts / res).astype(int), axis=0))
        assert len(out) == oracle

    def test_ring_of_nearest_point_retained(self):
        cloud = PointCloud(
            np.array([[0.01, 0.0, 0.0], [0.09, 0.0, 0.0], [0.05, 0.0, 0.0]]),
            [7, 8, 9],
            [0.0, 0.0, 0.0],
        )
        out = voxel_downsample(cloud, 0.1)
        # Centroid is at x=0.05, nearest input point is the third one.
        assert out.ring[0] == 9


class TestExtractPlanar:
    def test_wall_grid_interior_accepted_with_true_normals(self):
        cloud = wall_grid()
        fc = extract_planar(cloud, ExtractionConfig(resolution=0.1, theta_planar_deg=10))
        interior = ((np.abs(cloud.xyz[:, 1]) < 1.9) & (np.abs(cloud.xyz[:, 2]) < 1.0)).sum()
        assert len(fc) >= 0.95 * interior
        ang = np.degrees(np.arccos(np.clip(np.abs(fc.normals @ np.array([1.0, 0, 0])), -1, 1)))
        assert ang.max() < 1.0

    def test_right_angle_edge_rejected(self):
        # Two walls meeting at a vertical seam along (4, 0, z).
        dz, dstep = 0.12, 0.1
        zs = np.arange(-5, 6) * dz
        pts, rings = [], []
        for zi, z in enumerate(zs):
            for k in range(1, 8):
                pts.append([4.0, -k * dstep, z])  # wall in plane x=4
                rings.append(zi)
                pts.append([4.0 + k * dstep, 0.0, z])  # wall in plane y=0
                rings.append(zi)
            pts.append([4.0, 0.0, z])  # seam point
            rings.append(zi)
        cloud = PointCloud(np.array(pts), np.array(rings), np.zeros(len(pts)))
        fc = extract_planar(cloud, ExtractionConfig(resolution=0.1, theta_planar_deg=10))
        seam = np.array([4.0, 0.0, 0.0])
        assert not any(np.allclose(p, seam, atol=1e-9) for p in fc.xyz)

    def test_isolated_point_rejected_by_distance_gate(self):
        cloud = wall_grid()
        far = np.array([[4.0, 5.0, 5.0]])  # 3x resolution away from everything
        merged = PointCloud(
            np.vstack([cloud.xyz, far]),
            np.concatenate([cloud.ring, [5]]),
            np.zeros(len(cloud) + 1),
        )
        fc = extract_planar(merged, ExtractionConfig(resolution=0.1))
        assert not any(np.allclose(p, far[0], atol=1e-9) for p in fc.xyz)

    def test_normals_unit_and_facing_origin(self):
        fc = extract_planar(wall_grid(), ExtractionConfig(resolution=0.1))
        np.testing.assert_allclose(np.linalg.norm(fc.normals, axis=1), 1.0, atol=1e-6)
        assert np.all(np.einsum("ij,ij->i", fc.normals, fc.xyz) <= 1e-12)

    def test_output_positions_subset_of_input(self):
        cloud = wall_grid()
        fc = extract_planar(cloud, ExtractionConfig(resolution=0.1))
        src = {tuple(np.round(p, 9)) for p in cloud.xyz}
        assert all(tuple(np.round(p, 9)) in src for p in fc.xyz)

    def test_missing_ring_data_raises(self):
        cloud = PointCloud(np.random.default_rng(0).uniform(size=(10, 3)), -np.ones(10, dtype=int), np.zeros(10))
        with pytest.raises(ValueError):
            extract_planar(cloud, ExtractionConfig(resolution=0.1))

    def test_empty_input(self):
        fc = extract_planar(PointCloud.empty(), ExtractionConfig(resolution=0.1))
        assert isinstance(fc, FeatureCloud) and len(fc) == 0


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
