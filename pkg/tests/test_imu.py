import numpy as np
import pytest

from fleetmap.geometry import Pose, make_rng, quat_from_yaw, quat_to_matrix
from fleetmap.imu import PreintegratedDelta, compose_deltas, predict, preintegrate
from fleetmap.sensors import CircleScript, ImuModel, simulate_imu
from fleetmap.trajectory import hold


def stationary_samples(duration=1.0, rate=100.0):
    n = int(duration * rate) + 1
    ts = np.arange(n) / rate
    return [(float(t), np.zeros(3), np.array([0.0, 0.0, 9.81])) for t in ts]


class TestPreintegrate:
    def test_stationary_identity(self):
        delta = preintegrate(stationary_samples())
        np.testing.assert_allclose(delta.dq, [1, 0, 0, 0], atol=1e-6)
        np.testing.assert_allclose(delta.dv, np.zeros(3), atol=1e-6)
        np.testing.assert_allclose(delta.dp, np.zeros(3), atol=1e-6)

    def test_constant_yaw_rate_closed_form(self):
        omega, duration, rate = 0.7, 2.0, 200.0
        n = int(duration * rate) + 1
        ts = np.arange(n) / rate
        samples = [(float(t), np.array([0, 0, omega]), np.array([0.0, 0.0, 9.81])) for t in ts]
        delta = preintegrate(samples)
        expect = quat_to_matrix(quat_from_yaw(omega * duration))
        np.testing.assert_allclose(quat_to_matrix(delta.dq), expect, atol=1e-6)

    def test_constant_body_accel_double_integration(self):
        a, duration, rate = 0.5, 1.0, 200.0
        n = int(duration * rate) + 1
        ts = np.arange(n) / rate
        samples = [(float(t), np.zeros(3), np.array([a, 0.0, 9.81])) for t in ts]
        delta = preintegrate(samples)
        assert abs(delta.dp[0] - 0.5 * a * duration**2) < 1e-4
        assert abs(delta.dv[0] - a * duration) < 1e-6

    def test_rejects_non_monotone_timestamps(self):
        samples = stationary_samples()
        samples[3] = (samples[2][0], samples[3][1], samples[3][2])
        with pytest.raises(ValueError):
            preintegrate(samples)

    def test_rejects_single_sample(self):
        with pytest.raises(ValueError):
            preintegrate(stationary_samples()[:1])

    def test_composition_matches_full_window(self):
        traj = CircleScript([0, 0, 0], radius=3.0, omega=0.4, t0=0.0, t1=4.0)
        samples = simulate_imu(traj, ImuModel(rate_hz=200), 0.0, 2.0, make_rng(0))
        mid = len(samples) // 2
        full = preintegrate(samples)
        # Split windows share the boundary sample.
        joined = compose_deltas(preintegrate(samples[: mid + 1]), preintegrate(samples[mid:]))
        np.testing.assert_allclose(joined.dp, full.dp, atol=1e-6)
        np.testing.assert_allclose(joined.dv, full.dv, atol=1e-6)
        np.testing.assert_allclose(joined.dq, full.dq, atol=1e-6)

    def test_rotation_angle_formula(self):
        delta = PreintegratedDelta(dq=quat_from_yaw(0.5))
        # atan2(|xyz|, w) of a yaw quaternion is half the yaw.
        assert abs(delta.rotation_angle - 0.25) < 1e-12
        assert 0.0 <= delta.rotation_angle <= np.pi

    def test_bias_removal(self):
        bias = np.array([0.01, -0.02, 0.005])
        samples = [
            (t, bias.copy(), np.array([0.0, 0.0, 9.81]))
            for t in np.arange(0, 1.001, 0.01)
        ]
        delta = preintegrate(samples, gyro_bias=bias)
        np.testing.assert_allclose(delta.dq, [1, 0, 0, 0], atol=1e-9)


class TestPredict:
    def test_prediction_tracks_ground_truth(self):
        traj = CircleScript([5, 5, 0], radius=2.0, omega=0.5, t0=0.0, t1=10.0)
        imu = ImuModel(rate_hz=200)
        t_step = 0.1
        pose = traj.pose(0.0)
        vel = traj.velocity(0.0)
        t = 0.0
        rng = make_rng(0)
        for _ in range(20):
            samples = simulate_imu(traj, imu, t, t + t_step, rng)
            delta = preintegrate(samples)
            pose, vel = predict(pose, vel, delta)
            t += t_step
        np.testing.assert_allclose(pose.t, traj.position(t), atol=1e-3)

    def test_stationary_prediction_stays(self):
        traj = hold([1, 1, 0], 0.2, 0.0, 5.0)
        samples = simulate_imu(traj, ImuModel(rate_hz=100), 0.0, 1.0, make_rng(0))
        pose, vel = predict(traj.pose(0.0), np.zeros(3), preintegrate(samples))
        np.testing.assert_allclose(pose.t, [1, 1, 0], atol=1e-9)
        np.testing.assert_allclose(vel, np.zeros(3), atol=1e-9)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
