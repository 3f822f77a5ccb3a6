import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from objnav.geometry import (
    IDENTITY_QUAT,
    Pose,
    canonical,
    error_vector,
    euler_zyx,
    normalize,
    omega_matrix,
    quat_angle,
    quat_conjugate,
    quat_from_euler,
    quat_log,
    quat_multiply,
    quat_to_rotmat,
    rotmat_to_quat,
    skew,
    small_angle_quat,
    wrap_angle,
    yaw_of,
    yaw_quat,
)

finite = st.floats(-1.0, 1.0, allow_nan=False)
quats = arrays(float, 4, elements=finite).filter(lambda q: np.linalg.norm(q) > 0.1).map(normalize)
vec3 = arrays(float, 3, elements=st.floats(-5.0, 5.0, allow_nan=False))
small = arrays(float, 3, elements=st.floats(-0.05, 0.05, allow_nan=False))


def same_rotation(a, b, tol=1e-9):
    return quat_angle(a, b) < tol


class TestConventions:
    def test_storage_order_is_vector_then_scalar(self):
        q = small_angle_quat([0.0, 0.0, math.pi / 2])
        assert q[3] == pytest.approx(math.cos(math.pi / 4))
        assert q[2] == pytest.approx(math.sin(math.pi / 4))

    def test_q_ab_rotates_b_into_a(self):
        # 90 deg about z maps the x axis of B onto the y axis of A
        R = quat_to_rotmat(yaw_quat(math.pi / 2))
        np.testing.assert_allclose(R @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-15)

    def test_hamilton_product(self):
        i, j = np.array([1.0, 0, 0, 0]), np.array([0, 1.0, 0, 0])
        np.testing.assert_allclose(quat_multiply(i, j), [0, 0, 1.0, 0])

    def test_canonical_sign(self):
        q = canonical([0.0, 0.0, 0.6, -0.8])
        assert q[3] > 0
        np.testing.assert_allclose(q, [0.0, 0.0, -0.6, 0.8])


class TestQuatMultiply:
    def test_identity(self, rng):
        q = normalize(rng.normal(size=4))
        np.testing.assert_allclose(quat_multiply(IDENTITY_QUAT, q), q, atol=1e-15)
        np.testing.assert_allclose(quat_multiply(q, IDENTITY_QUAT), q, atol=1e-15)

    def test_inverse(self, rng):
        q = normalize(rng.normal(size=4))
        assert same_rotation(quat_multiply(q, quat_conjugate(q)), IDENTITY_QUAT, 1e-12)

    def test_two_quarter_turns(self):
        z90 = rotmat_to_quat([[0, -1, 0], [1, 0, 0], [0, 0, 1]])
        z180 = rotmat_to_quat(np.diag([-1.0, -1.0, 1.0]))
        assert same_rotation(quat_multiply(z90, z90), z180, 1e-12)

    def test_renormalizes(self):
        q = quat_multiply([0, 0, 0, 2.0], [0, 0, 0, 3.0])
        assert np.linalg.norm(q) == pytest.approx(1.0, abs=1e-15)

    @given(quats, quats)
    def test_matches_matrix_product(self, a, b):
        np.testing.assert_allclose(
            quat_to_rotmat(quat_multiply(a, b)), quat_to_rotmat(a) @ quat_to_rotmat(b), atol=1e-12
        )

    @given(quats, quats, quats)
    def test_associative(self, a, b, c):
        np.testing.assert_allclose(
            canonical(quat_multiply(quat_multiply(a, b), c)),
            canonical(quat_multiply(a, quat_multiply(b, c))),
            atol=1e-12,
        )


class TestOmegaMatrix:
    def test_zero_rate(self):
        np.testing.assert_array_equal(omega_matrix(np.zeros(3)), np.zeros((4, 4)))

    def test_unit_z_against_product(self):
        w = np.array([0.0, 0.0, 1.0])
        np.testing.assert_allclose(omega_matrix(w) @ IDENTITY_QUAT, quat_multiply(IDENTITY_QUAT, [*w, 0.0]) * 1.0)

    @given(vec3, quats)
    def test_matches_right_product_with_pure_quaternion(self, w, q):
        # Omega(w) q = q (x) [w, 0]; compare unnormalized products
        x1, y1, z1, w1 = q
        x2, y2, z2 = w
        prod = np.array([
            w1 * x2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2,
            -x1 * x2 - y1 * y2 - z1 * z2,
        ])
        np.testing.assert_allclose(omega_matrix(w) @ q, prod, atol=1e-12)

    @given(vec3)
    def test_antisymmetric(self, w):
        O = omega_matrix(w)
        np.testing.assert_array_equal(O.T, -O)


class TestSmallAngleQuat:
    def test_zero(self):
        np.testing.assert_array_equal(small_angle_quat(np.zeros(3)), IDENTITY_QUAT)

    def test_quarter_yaw(self):
        s = math.sqrt(0.5)
        np.testing.assert_allclose(small_angle_quat([0, 0, math.pi / 2]), [0, 0, s, s], atol=1e-15)

    @given(arrays(float, 3, elements=st.floats(-1.8, 1.8, allow_nan=False)))
    def test_inverse_pair(self, d):
        assert same_rotation(quat_multiply(small_angle_quat(d), small_angle_quat(-d)), IDENTITY_QUAT, 1e-12)

    @given(arrays(float, 3, elements=st.floats(-1.8, 1.8, allow_nan=False)))
    def test_log_inverts_exp(self, d):
        np.testing.assert_allclose(quat_log(small_angle_quat(d)), d, atol=1e-12)

    @given(small)
    def test_error_vector_first_order(self, d):
        q = yaw_quat(0.3)
        e = error_vector(q, quat_multiply(q, small_angle_quat(d)))
        np.testing.assert_allclose(e, d, atol=1e-3 * max(np.linalg.norm(d), 1e-9) + 1e-12)


class TestYaw:
    def test_identity(self):
        assert yaw_of(IDENTITY_QUAT) == 0.0

    def test_pure_yaw(self):
        assert yaw_of(yaw_quat(math.radians(50))) == pytest.approx(math.radians(50), abs=1e-15)

    def test_yaw_then_pitch(self):
        q = quat_multiply(yaw_quat(0.7), small_angle_quat([0.0, 0.4, 0.0]))
        assert yaw_of(q) == pytest.approx(0.7, abs=1e-12)

    @given(st.floats(-3.0, 3.0), st.floats(-1.4, 1.4), st.floats(-3.1, 3.1))
    def test_euler_round_trip(self, roll, pitch, yaw):
        r, p, y = euler_zyx(quat_from_euler(roll, pitch, yaw))
        assert (r, p, y) == pytest.approx((roll, pitch, yaw), abs=1e-9)

    def test_range_includes_pi(self):
        assert yaw_of(yaw_quat(math.pi)) == pytest.approx(math.pi)
        assert yaw_of(yaw_quat(-math.pi)) == pytest.approx(math.pi)

    @given(st.floats(-3.0, 3.0), st.floats(-0.1, 0.1))
    def test_left_yaw_increment_on_pure_yaw(self, psi, delta):
        q = yaw_quat(psi)
        got = yaw_of(quat_multiply(small_angle_quat([0.0, 0.0, delta]), q)) - yaw_of(q)
        assert wrap_angle(got - delta) == pytest.approx(0.0, abs=1e-9)


class TestRotations:
    @given(quats)
    def test_rotmat_round_trip(self, q):
        assert same_rotation(rotmat_to_quat(quat_to_rotmat(q)), q)

    @given(quats)
    def test_rotmat_is_proper(self, q):
        R = quat_to_rotmat(q)
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-9)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)

    @given(vec3)
    def test_skew(self, v):
        w = np.array([0.3, -1.0, 2.0])
        np.testing.assert_allclose(skew(v) @ w, np.cross(v, w), atol=1e-12)

    @given(st.floats(-20, 20))
    def test_wrap_angle(self, a):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi
        assert math.sin(w) == pytest.approx(math.sin(a), abs=1e-9)


class TestPose:
    @given(vec3, quats, vec3, quats, vec3)
    def test_compose_matches_apply(self, p1, q1, p2, q2, x):
        a, b = Pose(p1, q1), Pose(p2, q2)
        np.testing.assert_allclose(a.compose(b).apply(x), a.apply(b.apply(x)), atol=1e-9)

    @given(vec3, quats)
    def test_inverse(self, p, q):
        T = Pose(p, q)
        I = T.compose(T.inverse())
        np.testing.assert_allclose(I.p, 0.0, atol=1e-9)
        assert same_rotation(I.q, IDENTITY_QUAT)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Pose([np.nan, 0, 0], IDENTITY_QUAT)


@settings(max_examples=50)
@given(quats)
def test_quat_angle_symmetric(q):
    p = yaw_quat(0.2)
    assert quat_angle(p, q) == pytest.approx(quat_angle(q, p), abs=1e-12)
