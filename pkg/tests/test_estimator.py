import math

import numpy as np
import pytest
from conftest import random_state
from scipy.stats import chi2

from objnav.estimator import (
    B_A,
    CORE_DIM,
    P_IC,
    TH_IC,
    TH_WI,
    V_WI,
    ExtrinsicState,
    ImuSample,
    InitialStd,
    MonotonicityError,
    NoiseParams,
    NumericalError,
    apply_correction,
    ekf_update,
    init_filter,
    obj_slice,
    propagate,
)
from objnav.geometry import (
    IDENTITY_QUAT,
    Pose,
    error_vector,
    quat_angle,
    quat_multiply,
    small_angle_quat,
    yaw_of,
    yaw_quat,
)
from objnav.harness import UavTruthState, synthesize_imu
from objnav.landmarks import MeasurementNoise
from objnav.mission import GlobalPoseMeasurement, global_pose_update

NOISE = NoiseParams()
HOVER_ACCEL = np.array([0.0, 0.0, 9.81])


def fresh(n_objects=1, pose=None):
    pose = pose or Pose(np.zeros(3), IDENTITY_QUAT)
    return init_filter(pose, InitialStd(), ExtrinsicState(), n_objects)


class TestInit:
    def test_dimensions(self):
        s = fresh(3)
        assert s.dim == 15 + 6 + 18 == s.P.shape[0]
        assert s.n_objects == 3
        assert not any(o.initialized for o in s.objects)

    def test_covariance_symmetric_psd(self):
        P = fresh(3).P
        np.testing.assert_array_equal(P, P.T)
        assert np.linalg.eigvalsh(P).min() >= 0.0

    def test_extrinsic_block_near_zero(self):
        P = fresh(1).P
        np.testing.assert_allclose(np.diag(P)[P_IC], 1e-12)
        np.testing.assert_allclose(np.diag(P)[TH_IC], 1e-12)

    def test_zero_velocity_and_biases(self):
        c = fresh().core
        assert not c.v.any() and not c.b_a.any() and not c.b_w.any()

    @pytest.mark.parametrize("field", ["p", "v", "theta", "b_w", "b_a"])
    def test_rejects_non_positive_std(self, field):
        with pytest.raises(ValueError):
            init_filter(Pose(np.zeros(3), IDENTITY_QUAT), InitialStd(**{field: 0.0}), ExtrinsicState(), 1)

    def test_rejects_no_objects(self):
        with pytest.raises(ValueError):
            init_filter(Pose(np.zeros(3), IDENTITY_QUAT), InitialStd(), ExtrinsicState(), 0)

    def test_noise_params_positive(self):
        with pytest.raises(ValueError):
            NoiseParams(accel_noise=0.0)


class TestPropagateMean:
    def test_hover_equilibrium(self):
        s = fresh()
        for k in range(200):
            s2 = propagate(s, ImuSample(s.t, HOVER_ACCEL, np.zeros(3)), 0.005, NOISE)
            np.testing.assert_allclose(s2.core.p, s.core.p, atol=1e-12)
            np.testing.assert_allclose(s2.core.v, s.core.v, atol=1e-12)
            assert quat_angle(s2.core.q, s.core.q) < 1e-12
            s = s2

    def test_constant_yaw_rate(self):
        s = fresh()
        for k in range(200):
            s = propagate(s, ImuSample(s.t, HOVER_ACCEL, np.array([0, 0, 0.5])), 0.005, NOISE)
        assert yaw_of(s.core.q) == pytest.approx(0.5, abs=1e-4)

    def test_free_fall(self):
        s = fresh()
        s = propagate(s, ImuSample(0.0, np.zeros(3), np.zeros(3)), 0.01, NOISE)
        np.testing.assert_allclose(s.core.v, np.array(NOISE.gravity) * 0.01, atol=1e-15)

    def test_accelerometer_bias_is_removed(self):
        s = fresh()
        s.core.b_a = np.array([0.1, 0.0, 0.0])
        s = propagate(s, ImuSample(0.0, HOVER_ACCEL + [0.1, 0, 0], np.zeros(3)), 0.01, NOISE)
        np.testing.assert_allclose(s.core.v, 0.0, atol=1e-15)

    def test_objects_and_extrinsics_unchanged(self, rng):
        s = random_state(rng)
        s2 = propagate(s, ImuSample(0.0, rng.normal(size=3), rng.normal(size=3)), 0.01, NOISE)
        for a, b in zip(s.objects, s2.objects):
            np.testing.assert_array_equal(a.p, b.p)
            np.testing.assert_array_equal(a.q, b.q)
        np.testing.assert_array_equal(s.extrinsics.p, s2.extrinsics.p)
        np.testing.assert_array_equal(s.core.b_a, s2.core.b_a)

    def test_does_not_mutate_input(self, rng):
        s = random_state(rng)
        P0, p0 = s.P.copy(), s.core.p.copy()
        propagate(s, ImuSample(0.0, rng.normal(size=3), rng.normal(size=3)), 0.01, NOISE)
        np.testing.assert_array_equal(s.P, P0)
        np.testing.assert_array_equal(s.core.p, p0)

    def test_attitude_integration_is_at_least_first_order(self):
        # yaw rate ramp w(t) = c t has closed-form yaw c t^2 / 2
        c, T = 0.8, 1.0
        errors = []
        for dt in (0.02, 0.01, 0.005):
            s = fresh()
            for k in range(int(round(T / dt))):
                s = propagate(s, ImuSample(s.t, HOVER_ACCEL, np.array([0, 0, c * k * dt])), dt, NOISE)
            errors.append(abs(yaw_of(s.core.q) - c * T * T / 2))
        assert errors[1] <= 0.55 * errors[0]
        assert errors[2] <= 0.55 * errors[1]


class TestPropagateGuards:
    def test_non_positive_dt(self):
        with pytest.raises(MonotonicityError):
            propagate(fresh(), ImuSample(0.0, HOVER_ACCEL, np.zeros(3)), 0.0, NOISE)

    def test_gap(self):
        with pytest.raises(MonotonicityError):
            propagate(fresh(), ImuSample(0.0, HOVER_ACCEL, np.zeros(3)), 0.2, NOISE)

    def test_stale_sample(self):
        s = propagate(fresh(), ImuSample(0.0, HOVER_ACCEL, np.zeros(3)), 0.01, NOISE)
        with pytest.raises(MonotonicityError):
            propagate(s, ImuSample(0.0, HOVER_ACCEL, np.zeros(3)), 0.01, NOISE)


class TestPropagateCovariance:
    def test_object_and_extrinsic_blocks_get_no_process_noise(self, rng):
        s = random_state(rng, n_objects=2)
        s.P[:] = 0.0
        s2 = propagate(s, ImuSample(0.0, rng.normal(size=3), rng.normal(size=3)), 0.01, NOISE)
        assert not s2.P[CORE_DIM:, CORE_DIM:].any()

    def test_process_noise_is_sigma_squared_dt(self):
        s = fresh()
        s.P[:] = 0.0
        dt = 0.01
        s2 = propagate(s, ImuSample(0.0, HOVER_ACCEL, np.zeros(3)), dt, NOISE)
        np.testing.assert_allclose(np.diag(s2.P)[V_WI], NOISE.accel_noise**2 * dt, rtol=1e-12)
        np.testing.assert_allclose(np.diag(s2.P)[TH_WI], NOISE.gyro_noise**2 * dt, rtol=1e-12)
        np.testing.assert_allclose(np.diag(s2.P)[B_A], NOISE.accel_bias_walk**2 * dt, rtol=1e-12)

    def test_psd_over_many_cycles(self):
        rng = np.random.default_rng(7)
        s = fresh()
        noise = MeasurementNoise.isotropic(0.05, 2.0)
        worst = np.inf
        for k in range(10_000):
            imu = ImuSample(s.t, HOVER_ACCEL + rng.normal(size=3), rng.normal(size=3) * 0.3)
            s = propagate(s, imu, 0.005, NOISE)
            if k % 3 == 0:
                m = GlobalPoseMeasurement(
                    s.t,
                    s.core.p + rng.normal(size=3) * 0.05,
                    quat_multiply(s.core.q, small_angle_quat(rng.normal(size=3) * 0.03)),
                    noise,
                )
                s, _ = global_pose_update(s, m, alpha=None)
            if k % 500 == 0:
                worst = min(worst, np.linalg.eigvalsh(s.P).min())
            assert np.array_equal(s.P, s.P.T)
        assert worst > -1e-9


class TestUpdate:
    def test_reference_kalman_filter_1d(self):
        """x-axis position/velocity reduces to a 2-state constant-velocity filter."""
        dt, sigma_a, r_var = 0.01, 0.05, 0.02**2
        tiny = 1e-200  # squares to exactly zero: attitude and biases stay deterministic
        noise = NoiseParams(accel_noise=sigma_a, gyro_noise=tiny, accel_bias_walk=tiny, gyro_bias_walk=tiny)
        s = fresh()
        s.P[:] = 0.0
        s.P[0, 0], s.P[3, 3], s.P[0, 3] = 0.3, 0.2, 0.05
        s.P[3, 0] = 0.05
        x = np.array([0.0, 0.0])
        P = np.array([[0.3, 0.05], [0.05, 0.2]])
        F = np.array([[1.0, dt], [0.0, 1.0]])
        Q = np.diag([0.0, sigma_a**2 * dt])
        rng = np.random.default_rng(3)
        for k in range(300):
            a = float(rng.normal())
            s = propagate(s, ImuSample(s.t, HOVER_ACCEL + [a, 0, 0], np.zeros(3)), dt, noise)
            x = F @ x + np.array([0.5 * dt * dt, dt]) * a
            P = F @ P @ F.T + Q
            if k % 4 == 3:
                z = float(rng.normal()) * 0.1
                H = np.zeros((1, s.dim))
                H[0, 0] = 1.0
                s = ekf_update(s, np.array([z - s.core.p[0]]), H, np.array([[r_var]]))
                h = np.array([[1.0, 0.0]])
                S = h @ P @ h.T + r_var
                K = P @ h.T / S
                x = x + (K * (z - x[0])).ravel()
                IKH = np.eye(2) - K @ h
                P = IKH @ P @ IKH.T + r_var * K @ K.T
        np.testing.assert_allclose([s.core.p[0], s.core.v[0]], x, atol=1e-9)
        idx = [0, 3]
        np.testing.assert_allclose(s.P[np.ix_(idx, idx)], P, atol=1e-9)

    def test_joseph_form_matches_textbook(self, rng):
        s = random_state(rng, n_objects=1)
        H = rng.normal(size=(4, s.dim))
        R = np.diag(rng.uniform(0.01, 0.1, 4))
        r = rng.normal(size=4) * 0.01
        out = ekf_update(s, r, H, R)
        S = H @ s.P @ H.T + R
        K = s.P @ H.T @ np.linalg.inv(S)
        np.testing.assert_allclose(out.P, (np.eye(s.dim) - K @ H) @ s.P, atol=1e-10)
        ref = apply_correction(s, K @ r)
        np.testing.assert_allclose(out.core.p, ref.core.p, atol=1e-12)

    def test_non_psd_innovation_raises(self, rng):
        s = random_state(rng, n_objects=1)
        H = np.zeros((1, s.dim))
        with pytest.raises(NumericalError):
            ekf_update(s, np.zeros(1), H, np.array([[-1.0]]))

    def test_right_retraction(self):
        s = fresh(pose=Pose(np.zeros(3), yaw_quat(1.0)))
        dx = np.zeros(s.dim)
        dx[TH_WI] = [0.0, 0.02, 0.0]
        out = apply_correction(s, dx)
        np.testing.assert_allclose(error_vector(s.core.q, out.core.q), [0.0, 0.02, 0.0], atol=1e-6)

    def test_uninitialized_objects_not_corrected(self, rng):
        s = random_state(rng, n_objects=2, n_init=1)
        dx = np.zeros(s.dim)
        dx[obj_slice(1)] = 1.0
        out = apply_correction(s, dx)
        np.testing.assert_array_equal(out.objects[1].p, s.objects[1].p)

    def test_extrinsics_stay_constant(self):
        from objnav.landmarks import MeasurementBatch, RelPoseMeasurement, process_batch

        rng = np.random.default_rng(11)
        s = fresh(3)
        p_ic0, q_ic0 = s.extrinsics.p.copy(), s.extrinsics.q.copy()
        noise = MeasurementNoise.isotropic(0.1, 5.0)
        for k in range(100):
            meas = [
                RelPoseMeasurement(s.t, rng.normal(size=3) + [0, 0, 3], small_angle_quat(rng.normal(size=3) * 0.2))
                for _ in range(3)
            ]
            s, _ = process_batch(s, MeasurementBatch(s.t, meas), noise, gate=False)
            s = propagate(s, ImuSample(s.t, HOVER_ACCEL, np.zeros(3)), 0.01, NOISE)
        np.testing.assert_allclose(s.extrinsics.p, p_ic0, atol=1e-6)
        assert quat_angle(s.extrinsics.q, q_ic0) < 1e-6


def _nees_block(seed_offset: int, n_runs: int = 50, steps: int = 400, dt: float = 0.01) -> np.ndarray:
    std = InitialStd()
    mn = MeasurementNoise.isotropic(0.05, 2.0)
    idx = np.r_[0:3, 6:9]
    out = np.zeros((n_runs, steps // 5))
    for run in range(n_runs):
        rng = np.random.default_rng(run + seed_offset)
        truth = UavTruthState(0.0, np.zeros(3), np.zeros(3), IDENTITY_QUAT.copy(),
                              np.array([0.2, 0.0, 0.1]), np.array([0.0, 0.0, 0.2]))
        b_a = rng.normal(size=3) * std.b_a
        b_w = rng.normal(size=3) * std.b_w
        start = Pose(truth.p + rng.normal(size=3) * std.p,
                     quat_multiply(truth.q, small_angle_quat(rng.normal(size=3) * std.theta)))
        s = init_filter(start, std, ExtrinsicState(), 1)
        s.core.v = rng.normal(size=3) * std.v
        j = 0
        for k in range(steps):
            s = propagate(s, synthesize_imu(truth, b_a, b_w, NOISE, rng, dt), dt, NOISE)
            truth = truth.advance(dt)
            b_a = b_a + rng.normal(size=3) * NOISE.accel_bias_walk * math.sqrt(dt)
            b_w = b_w + rng.normal(size=3) * NOISE.gyro_bias_walk * math.sqrt(dt)
            if (k + 1) % 5 == 0:
                m = GlobalPoseMeasurement(
                    truth.t,
                    truth.p + rng.normal(size=3) * 0.05,
                    quat_multiply(truth.q, small_angle_quat(rng.normal(size=3) * math.radians(2.0))),
                    mn,
                )
                s, _ = global_pose_update(s, m, alpha=None)
                e = np.concatenate([truth.p - s.core.p, error_vector(s.core.q, truth.q)])
                out[run, j] = e @ np.linalg.solve(s.P[np.ix_(idx, idx)], e)
                j += 1
    return out


@pytest.mark.slow
def test_core_pose_nees_monte_carlo():
    """Average 6-dof pose NEES over 200 runs stays in its 95% chi-square band.

    Four independent 50-run blocks are pooled; the pooled band is narrower
    than a single block's, so this is at least as strict as a 50-run check.
    """
    nees = np.vstack([_nees_block(off) for off in (0, 1000, 2000, 3000)])
    n = nees.shape[0]
    avg = nees.mean(axis=0)
    lo, hi = chi2.ppf([0.025, 0.975], 6 * n) / n
    inside = np.mean((avg >= lo) & (avg <= hi))
    assert inside >= 0.8, f"ANEES inside [{lo:.2f}, {hi:.2f}] for only {inside:.0%} of steps"
