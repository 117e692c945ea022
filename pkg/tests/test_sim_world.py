import numpy as np
import pytest

from fleetmap.geometry import Pose, make_rng
from fleetmap.sensors import (
    CircleScript,
    ImuModel,
    LidarModel,
    RssiModel,
    UwbModel,
    raycast_scan,
    rssi,
    simulate_imu,
    simulate_range,
)
from fleetmap.trajectory import MotionLimits, hold, straight_line, waypoints
from fleetmap.world import (
    WorldModel,
    box_room,
    corridor,
    distance_to_world,
    point_patch_distance,
    segment_blocked,
)


def analytic_box_range(origin, direction, box_min, box_max):
    """Independent oracle: smallest positive distance to the 6 axis planes of a box."""
    best = np.inf
    for axis in range(3):
        for plane in (box_min[axis], box_max[axis]):
            d = direction[axis]
            if abs(d) < 1e-12:
                continue
            s = (plane - origin[axis]) / d
            if s <= 1e-9:
                continue
            hit = origin + s * direction
            ok = True
            for other in range(3):
                if other == axis:
                    continue
                if hit[other] < box_min[other] - 1e-9 or hit[other] > box_max[other] + 1e-9:
                    ok = False
            if ok:
                best = min(best, s)
    return best


class TestWorld:
    def test_box_room_bounds(self):
        w = box_room(10, 10, 3)
        lo, hi = w.bounds()
        np.testing.assert_allclose(lo, [0, 0, 0])
        np.testing.assert_allclose(hi, [10, 10, 3])

    def test_floor_normal_invariant(self):
        w = box_room(4, 4, 2)
        floors = [p for p in w.patches if p.tag == "floor"]
        assert len(floors) == 1
        np.testing.assert_allclose(floors[0].normal, [0, 0, 1], atol=1e-12)

    def test_point_patch_distance_inside_and_edge(self):
        w = box_room(10, 10, 3)
        floor = [p for p in w.patches if p.tag == "floor"][0]
        d = point_patch_distance(np.array([[5.0, 5.0, 1.0], [12.0, 5.0, 0.0]]), floor)
        np.testing.assert_allclose(d, [1.0, 2.0], atol=1e-12)

    def test_distance_to_world_roundtrip(self):
        w = box_room(10, 10, 3)
        pts = np.array([[5.0, 5.0, 0.0], [5.0, 0.0, 1.0], [5.0, 5.0, 1.5]])
        np.testing.assert_allclose(distance_to_world(pts, w), [0.0, 0.0, 1.5], atol=1e-12)

    def test_world_json_roundtrip(self, tmp_path):
        w = corridor(40, 3, 2.5)
        path = tmp_path / "world.json"
        w.save(path)
        w2 = WorldModel.load(path)
        assert len(w2.patches) == len(w.patches)
        np.testing.assert_allclose(w2.patches[0].corner, w.patches[0].corner)


class TestLidar:
    def test_ranges_match_analytic_box(self):
        w = box_room(10, 10, 3)
        pose = Pose.from_xyz_yaw(5, 5, 1.5, 0.0)
        lidar = LidarModel(rings=16, horiz_step_deg=6.0, sigma=0.0)
        cloud = raycast_scan(w, pose, lidar, make_rng(0))
        assert len(cloud) > 0
        dirs = cloud.xyz / cloud.ranges[:, None]
        for i in range(0, len(cloud), 37):
            expect = analytic_box_range(pose.t, dirs[i], np.zeros(3), np.array([10, 10, 3.0]))
            assert abs(cloud.ranges[i] - expect) < 1e-9

    def test_open_corridor_axis_misses(self):
        w = corridor(2000, 3, 2.5, closed_ends=False)
        pose = Pose.from_xyz_yaw(1000, 1.5, 1.0, 0.0)
        lidar = LidarModel(rings=1, vfov_deg=(0.0, 0.0), horiz_step_deg=90.0, max_range=50, sigma=0.0)
        cloud = raycast_scan(w, pose, lidar, make_rng(0))
        # Rays along +x and -x exceed max range; only the two wall hits remain.
        assert len(cloud) == 2

    def test_deterministic_given_seed(self):
        w = box_room(8, 6, 3)
        pose = Pose.from_xyz_yaw(4, 3, 1.5, 0.3)
        lidar = LidarModel(horiz_step_deg=4.0, sigma=0.02)
        a = raycast_scan(w, pose, lidar, make_rng(99))
        b = raycast_scan(w, pose, lidar, make_rng(99))
        np.testing.assert_array_equal(a.xyz, b.xyz)

    def test_point_count_monotone_in_max_range(self):
        w = box_room(20, 20, 4)
        pose = Pose.from_xyz_yaw(10, 10, 1.5, 0.0)
        counts = []
        for mr in (30.0, 15.0, 9.0, 5.0):
            lidar = LidarModel(horiz_step_deg=5.0, sigma=0.0, max_range=mr)
            counts.append(len(raycast_scan(w, pose, lidar, make_rng(1))))
        assert all(a >= b for a, b in zip(counts, counts[1:]))

    def test_ring_indices_recorded(self):
        w = box_room(10, 10, 3)
        lidar = LidarModel(rings=4, horiz_step_deg=30.0, sigma=0.0)
        cloud = raycast_scan(w, Pose.from_xyz_yaw(5, 5, 1.5, 0), lidar, make_rng(0))
        assert set(np.unique(cloud.ring)) <= {0, 1, 2, 3}


class TestImu:
    def test_stationary_gravity_reaction(self):
        traj = hold([1.0, 2.0, 0.0], 0.4, 0.0, 2.0)
        samples = simulate_imu(traj, ImuModel(rate_hz=100), 0.0, 1.0, make_rng(0))
        for _, gyro, accel in samples:
            np.testing.assert_allclose(gyro, np.zeros(3), atol=1e-9)
            np.testing.assert_allclose(accel, [0, 0, 9.81], atol=1e-9)

    def test_constant_yaw_rate(self):
        omega = 0.5
        traj = CircleScript([0, 0, 0], radius=2.0, omega=omega, t0=0.0, t1=10.0)
        samples = simulate_imu(traj, ImuModel(rate_hz=50), 0.0, 2.0, make_rng(0))
        for _, gyro, _ in samples:
            np.testing.assert_allclose(gyro, [0, 0, omega], atol=1e-9)

    def test_circular_arc_centripetal(self):
        radius, omega = 3.0, 0.8
        v = radius * omega
        traj = CircleScript([5, 5, 0], radius=radius, omega=omega, t0=0.0, t1=20.0)
        samples = simulate_imu(traj, ImuModel(rate_hz=100), 1.0, 3.0, make_rng(0))
        for _, _, accel in samples:
            horizontal = np.linalg.norm(accel[:2])
            assert abs(horizontal - v * v / radius) < 1e-6
            assert abs(accel[2] - 9.81) < 1e-9

    def test_interval_outside_domain_raises(self):
        traj = hold([0, 0, 0], 0.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            simulate_imu(traj, ImuModel(), 0.5, 2.0, make_rng(0))


class TestRange:
    def test_three_four_five(self):
        w = box_room(20, 20, 3)
        a = Pose.from_xyz_yaw(1, 1, 1, 0)
        b = Pose.from_xyz_yaw(4, 5, 1, 0)
        m = simulate_range(w, a, b, UwbModel(sigma=0.0), make_rng(0))
        assert m is not None
        assert abs(m.raw - 5.0) < 1e-12

    def test_los_blocked_by_wall(self):
        w = corridor(10, 3, 2.5, closed_ends=True)
        # Put a divider wall across the corridor between the two vehicles.
        from fleetmap.world import Patch

        w.patches.append(Patch([5.0, 0.0, 0.0], [0, 3.0, 0], [0, 0, 2.5], [1, 0, 0]))
        a = Pose.from_xyz_yaw(2, 1.5, 1, 0)
        b = Pose.from_xyz_yaw(8, 1.5, 1, 0)
        assert segment_blocked(a.t, b.t, w)
        assert simulate_range(w, a, b, UwbModel(los_required=True), make_rng(0)) is None
        assert simulate_range(w, a, b, UwbModel(los_required=False, sigma=0.0), make_rng(0)) is not None

    def test_noise_statistics(self):
        w = box_room(30, 30, 3)
        a = Pose.from_xyz_yaw(5, 5, 1, 0)
        b = Pose.from_xyz_yaw(15, 5, 1, 0)
        rng = make_rng(7)
        sigma = 0.05
        n = 10_000
        draws = [simulate_range(w, a, b, UwbModel(sigma=sigma), rng).raw for _ in range(n)]
        assert abs(np.mean(draws) - 10.0) < 3 * sigma / np.sqrt(n)

    def test_out_of_range_absent(self):
        w = box_room(200, 10, 3)
        a = Pose.from_xyz_yaw(1, 5, 1, 0)
        b = Pose.from_xyz_yaw(150, 5, 1, 0)
        assert simulate_range(w, a, b, UwbModel(max_range=60.0, los_required=False), make_rng(0)) is None


class TestRssi:
    def test_reference_distance(self):
        m = RssiModel(p0_dbm=-40.0, path_loss_exponent=2.0)
        assert rssi(1.0, m) == -40.0

    def test_decade_rule(self):
        m = RssiModel(p0_dbm=-40.0, path_loss_exponent=2.0)
        assert abs(rssi(10.0, m) - (-60.0)) < 1e-12

    def test_log_evaluation(self):
        m = RssiModel(p0_dbm=-40.0, path_loss_exponent=2.0)
        assert abs(rssi(3.162, m) - (-50.0)) < 0.01

    def test_strictly_decreasing(self):
        m = RssiModel()
        ds = np.linspace(0.5, 50, 100)
        vals = [rssi(d, m) for d in ds]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_nonpositive_distance_rejected(self):
        with pytest.raises(ValueError):
            rssi(0.0, RssiModel())


class TestTrajectory:
    def test_hold_is_stationary(self):
        traj = hold([1, 2, 0.5], 0.3, 0.0, 5.0)
        for t in np.linspace(0, 5, 11):
            np.testing.assert_allclose(traj.position(t), [1, 2, 0.5], atol=1e-12)
            np.testing.assert_allclose(traj.velocity(t), np.zeros(3), atol=1e-12)

    def test_straight_line_endpoints(self):
        traj = straight_line([0, 0, 0], [10, 0, 0], 0.0, 0.0, 10.0)
        np.testing.assert_allclose(traj.position(0.0), [0, 0, 0], atol=1e-9)
        np.testing.assert_allclose(traj.position(10.0), [10, 0, 0], atol=1e-9)

    def test_limits_checked(self):
        traj = straight_line([0, 0, 0], [100, 0, 0], 0.0, 0.0, 10.0)
        with pytest.raises(ValueError):
            traj.check_limits(MotionLimits(max_speed=1.0))

    def test_json_roundtrip(self):
        traj = waypoints([0, 1, 2], [[0, 0, 0], [1, 0, 0], [1, 1, 0]], [0, 0.5, 1.0])
        d = traj.to_dict()
        traj2 = waypoints(d["times"], d["positions"], d["yaws"])
        for t in np.linspace(0, 2, 9):
            np.testing.assert_allclose(traj2.position(t), traj.position(t), atol=1e-12)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
