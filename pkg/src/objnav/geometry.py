"""Frame transforms and quaternion algebra.

Conventions used throughout the package:

* Quaternions are Hamilton, stored as ``[qx, qy, qz, qw]`` (vector part first).
* ``q_AB`` / ``R_AB`` rotates vectors expressed in frame B into frame A, and
  ``p_AB`` is the origin of B expressed in A, so ``x_A = R_AB @ x_B + p_AB``.
* Yaw is the Z angle of the Z-Y-X (yaw-pitch-roll) Euler factorization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

IDENTITY_QUAT = np.array([0.0, 0.0, 0.0, 1.0])


def skew(v: ArrayLike) -> NDArray:
    """Cross-product matrix, ``skew(a) @ b == np.cross(a, b)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def normalize(q: ArrayLike) -> NDArray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n < 1e-300:
        raise ValueError(f"cannot normalize quaternion {q}")
    return q / n


def canonical(q: ArrayLike) -> NDArray:
    """Normalized quaternion with non-negative scalar part."""
    q = normalize(q)
    return -q if q[3] < 0.0 else q


def quat_multiply(a: ArrayLike, b: ArrayLike) -> NDArray:
    """Hamilton product ``a ⊗ b``; represents ``R(a) @ R(b)``."""
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    q = np.array(
        [
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
            aw * bw - ax * bx - ay * by - az * bz,
        ]
    )
    return normalize(q)


def quat_conjugate(q: ArrayLike) -> NDArray:
    q = np.asarray(q, dtype=float)
    return np.array([-q[0], -q[1], -q[2], q[3]])


quat_inverse = quat_conjugate


def quat_to_rotmat(q: ArrayLike) -> NDArray:
    x, y, z, w = normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotmat_to_quat(R: ArrayLike) -> NDArray:
    """Rotation matrix to canonical quaternion (Shepperd's method)."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    diag = np.diag(R)
    k = int(np.argmax([diag[0], diag[1], diag[2], tr]))
    if k == 3:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = [
            (R[2, 1] - R[1, 2]) / s,
            (R[0, 2] - R[2, 0]) / s,
            (R[1, 0] - R[0, 1]) / s,
            0.25 * s,
        ]
    elif k == 0:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [
            0.25 * s,
            (R[0, 1] + R[1, 0]) / s,
            (R[0, 2] + R[2, 0]) / s,
            (R[2, 1] - R[1, 2]) / s,
        ]
    elif k == 1:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [
            (R[0, 1] + R[1, 0]) / s,
            0.25 * s,
            (R[1, 2] + R[2, 1]) / s,
            (R[0, 2] - R[2, 0]) / s,
        ]
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [
            (R[0, 2] + R[2, 0]) / s,
            (R[1, 2] + R[2, 1]) / s,
            0.25 * s,
            (R[1, 0] - R[0, 1]) / s,
        ]
    return canonical(q)


def omega_matrix(omega: ArrayLike) -> NDArray:
    """4x4 matrix with ``omega_matrix(w) @ q == q ⊗ [w, 0]``.

    Hence ``q_dot = 0.5 * omega_matrix(w) @ q`` for body-frame rates ``w``.
    """
    w = np.asarray(omega, dtype=float)
    out = np.zeros((4, 4))
    out[:3, :3] = -skew(w)
    out[:3, 3] = w
    out[3, :3] = -w
    return out


def small_angle_quat(dtheta: ArrayLike) -> NDArray:
    """Exponential map from a rotation vector to a unit quaternion."""
    v = np.asarray(dtheta, dtype=float)
    angle = np.linalg.norm(v)
    if angle < 1e-12:
        return normalize(np.array([0.5 * v[0], 0.5 * v[1], 0.5 * v[2], 1.0]))
    half = 0.5 * angle
    xyz = v * (np.sin(half) / angle)
    return np.array([xyz[0], xyz[1], xyz[2], np.cos(half)])


def quat_log(q: ArrayLike) -> NDArray:
    """Rotation vector of ``q`` (inverse of :func:`small_angle_quat`)."""
    q = canonical(q)
    vn = np.linalg.norm(q[:3])
    if vn < 1e-12:
        return 2.0 * q[:3]
    return q[:3] * (2.0 * np.arctan2(vn, q[3]) / vn)


def error_vector(q_ref: ArrayLike, q: ArrayLike) -> NDArray:
    """Small-angle error ``2 * e_v / e_w`` with ``e = q_ref^-1 ⊗ q``.

    The sign of ``e`` is canonicalized first so that ``e_w > 0``.
    """
    e = canonical(quat_multiply(quat_conjugate(q_ref), q))
    return 2.0 * e[:3] / e[3]


def quat_angle(a: ArrayLike, b: ArrayLike) -> float:
    """Geodesic angle between two rotations, radians in [0, pi]."""
    # atan2 keeps full resolution near zero where arccos(dot) bottoms out at ~1e-8
    d = quat_multiply(quat_conjugate(normalize(a)), normalize(b))
    return float(2.0 * np.arctan2(np.linalg.norm(d[:3]), abs(d[3])))


def euler_zyx(q: ArrayLike) -> tuple[float, float, float]:
    """Return ``(roll, pitch, yaw)`` with ``R = Rz(yaw) Ry(pitch) Rx(roll)``."""
    R = quat_to_rotmat(q)
    yaw = np.arctan2(R[1, 0], R[0, 0])
    pitch = np.arcsin(np.clip(-R[2, 0], -1.0, 1.0))
    roll = np.arctan2(R[2, 1], R[2, 2])
    return float(roll), float(pitch), float(yaw)


def yaw_of(q: ArrayLike) -> float:
    yaw = euler_zyx(q)[2]
    # arctan2 returns [-pi, pi]; map -pi onto pi
    return np.pi if yaw <= -np.pi else yaw


def quat_from_euler(roll: float, pitch: float, yaw: float) -> NDArray:
    qz = small_angle_quat([0.0, 0.0, yaw])
    qy = small_angle_quat([0.0, pitch, 0.0])
    qx = small_angle_quat([roll, 0.0, 0.0])
    return canonical(quat_multiply(quat_multiply(qz, qy), qx))


def yaw_quat(yaw: float) -> NDArray:
    return small_angle_quat([0.0, 0.0, yaw])


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = (a + np.pi) % (2.0 * np.pi) - np.pi
    return np.pi if w <= -np.pi else w


@dataclass
class Pose:
    """Rigid transform ``(p_AB, q_AB)`` of frame B with respect to frame A."""

    p: NDArray = field(default_factory=lambda: np.zeros(3))
    q: NDArray = field(default_factory=lambda: IDENTITY_QUAT.copy())

    def __post_init__(self) -> None:
        self.p = np.asarray(self.p, dtype=float).reshape(3)
        self.q = canonical(self.q)
        if not np.all(np.isfinite(self.p)):
            raise ValueError("pose translation must be finite")

    @property
    def R(self) -> NDArray:
        return quat_to_rotmat(self.q)

    def compose(self, other: Pose) -> Pose:
        """``T_AB ∘ T_BC -> T_AC``."""
        return Pose(self.p + self.R @ other.p, quat_multiply(self.q, other.q))

    def inverse(self) -> Pose:
        qi = quat_conjugate(self.q)
        return Pose(-(quat_to_rotmat(qi) @ self.p), qi)

    def apply(self, x: ArrayLike) -> NDArray:
        return self.R @ np.asarray(x, dtype=float) + self.p

    def copy(self) -> Pose:
        return Pose(self.p.copy(), self.q.copy())
