"""Error-state EKF: state layout, IMU propagation and the generic update step.

Error-state ordering (frozen)::

    [0:3]   dp_WI        [9:12]  db_w        [15:18] dp_IC
    [3:6]   dv_WI        [12:15] db_a        [18:21] dtheta_IC
    [6:9]   dtheta_WI                        [21+6k : 24+6k] dp_OkW
                                             [24+6k : 27+6k] dtheta_OkW

Attitude errors are local (right) perturbations, ``q = q_nom ⊗ Exp(dtheta)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .geometry import (
    Pose,
    canonical,
    quat_multiply,
    quat_to_rotmat,
    skew,
    small_angle_quat,
)

CORE_DIM = 15
EXTR_DIM = 6
OBJ_DIM = 6

P_WI = slice(0, 3)
V_WI = slice(3, 6)
TH_WI = slice(6, 9)
B_W = slice(9, 12)
B_A = slice(12, 15)
P_IC = slice(15, 18)
TH_IC = slice(18, 21)


class MonotonicityError(ValueError):
    """Propagation step with a non-positive or out-of-order time increment."""


class NumericalError(RuntimeError):
    """Innovation covariance is not positive definite."""


def obj_slice(k: int) -> slice:
    start = CORE_DIM + EXTR_DIM + OBJ_DIM * k
    return slice(start, start + OBJ_DIM)


def obj_pos_slice(k: int) -> slice:
    start = CORE_DIM + EXTR_DIM + OBJ_DIM * k
    return slice(start, start + 3)


def obj_rot_slice(k: int) -> slice:
    start = CORE_DIM + EXTR_DIM + OBJ_DIM * k + 3
    return slice(start, start + 3)


def state_dim(n_objects: int) -> int:
    return CORE_DIM + EXTR_DIM + OBJ_DIM * n_objects


@dataclass
class CoreState:
    p: NDArray = field(default_factory=lambda: np.zeros(3))
    v: NDArray = field(default_factory=lambda: np.zeros(3))
    q: NDArray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))
    b_w: NDArray = field(default_factory=lambda: np.zeros(3))
    b_a: NDArray = field(default_factory=lambda: np.zeros(3))

    def copy(self) -> CoreState:
        return CoreState(self.p.copy(), self.v.copy(), self.q.copy(), self.b_w.copy(), self.b_a.copy())

    @property
    def pose(self) -> Pose:
        return Pose(self.p, self.q)


@dataclass
class ExtrinsicState:
    """Camera pose in the IMU frame, ``(p_IC, q_IC)``."""

    p: NDArray = field(default_factory=lambda: np.zeros(3))
    q: NDArray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))

    def __post_init__(self) -> None:
        self.p = np.asarray(self.p, dtype=float)
        self.q = canonical(self.q)

    def copy(self) -> ExtrinsicState:
        return ExtrinsicState(self.p.copy(), self.q.copy())

    @property
    def pose(self) -> Pose:
        return Pose(self.p, self.q)


@dataclass
class ObjectWorldState:
    """Transform of the world frame with respect to object frame O_k."""

    p: NDArray = field(default_factory=lambda: np.zeros(3))
    q: NDArray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))
    initialized: bool = False

    def copy(self) -> ObjectWorldState:
        return ObjectWorldState(self.p.copy(), self.q.copy(), self.initialized)

    @property
    def world_pose(self) -> Pose:
        """Pose of the object in W, i.e. the inverse of ``(p_OkW, q_OkW)``."""
        return Pose(self.p, self.q).inverse()


@dataclass
class AnchorReference:
    index: int
    p: NDArray
    q: NDArray

    def copy(self) -> AnchorReference:
        return AnchorReference(self.index, self.p.copy(), self.q.copy())


@dataclass
class FilterState:
    t: float
    core: CoreState
    extrinsics: ExtrinsicState
    objects: list[ObjectWorldState]
    P: NDArray
    anchor: AnchorReference | None = None

    @property
    def n_objects(self) -> int:
        return len(self.objects)

    @property
    def dim(self) -> int:
        return state_dim(self.n_objects)

    def copy(self) -> FilterState:
        return FilterState(
            t=self.t,
            core=self.core.copy(),
            extrinsics=self.extrinsics.copy(),
            objects=[o.copy() for o in self.objects],
            P=self.P.copy(),
            anchor=None if self.anchor is None else self.anchor.copy(),
        )


@dataclass
class ImuSample:
    t: float
    accel: NDArray
    gyro: NDArray


@dataclass(frozen=True)
class NoiseParams:
    """Continuous-time IMU noise densities.

    ``gravity`` is the gravitational acceleration vector in W (z up), so the
    velocity dynamics read ``v_dot = R_WI (a_m - b_a) + gravity``.
    """

    accel_noise: float = 0.02
    gyro_noise: float = 0.002
    accel_bias_walk: float = 1e-4
    gyro_bias_walk: float = 1e-4
    gravity: tuple[float, float, float] = (0.0, 0.0, -9.81)

    def __post_init__(self) -> None:
        for name in ("accel_noise", "gyro_noise", "accel_bias_walk", "gyro_bias_walk"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class InitialStd:
    """Per-block initial standard deviations (isotropic per block)."""

    p: float = 0.1
    v: float = 0.1
    theta: float = 0.05
    b_w: float = 0.01
    b_a: float = 0.05
    p_ic: float = 1e-6
    theta_ic: float = 1e-6


def init_filter(
    initial_pose: Pose,
    initial_std: InitialStd,
    extrinsics: ExtrinsicState,
    n_objects: int,
    t: float = 0.0,
) -> FilterState:
    """Filter at ``initial_pose`` with zero velocity/biases and no landmarks."""
    if n_objects < 1:
        raise ValueError("need at least one object slot")
    stds = [initial_std.p, initial_std.v, initial_std.theta, initial_std.b_w,
            initial_std.b_a, initial_std.p_ic, initial_std.theta_ic]
    if any(not s > 0 for s in stds):
        raise ValueError("initial standard deviations must be positive")
    P = np.zeros((state_dim(n_objects),) * 2)
    P[: CORE_DIM + EXTR_DIM, : CORE_DIM + EXTR_DIM] = np.diag(np.repeat(np.square(stds), 3))
    core = CoreState(p=initial_pose.p.copy(), q=initial_pose.q.copy())
    objects = [ObjectWorldState() for _ in range(n_objects)]
    return FilterState(t=t, core=core, extrinsics=extrinsics.copy(), objects=objects, P=P)


def propagate(state: FilterState, imu: ImuSample, dt: float, noise: NoiseParams) -> FilterState:
    """Integrate one IMU sample over ``dt`` seconds.

    The sample is held constant over the step (zeroth-order hold); attitude
    uses the exact quaternion exponential of the bias-corrected rate.
    """
    if not dt > 0:
        raise MonotonicityError(f"non-positive time step {dt}")
    if dt > 0.1:
        raise MonotonicityError(f"time step {dt} s exceeds the 0.1 s gap guard")
    if imu.t < state.t - 1e-9:
        raise MonotonicityError(f"IMU sample at {imu.t} is older than the state at {state.t}")

    out = state.copy()
    c = out.core
    a_hat = np.asarray(imu.accel, dtype=float) - c.b_a
    w_hat = np.asarray(imu.gyro, dtype=float) - c.b_w
    R = quat_to_rotmat(c.q)
    acc_w = R @ a_hat + np.asarray(noise.gravity)

    c.p = c.p + c.v * dt + 0.5 * acc_w * dt * dt
    c.v = c.v + acc_w * dt
    c.q = quat_multiply(c.q, small_angle_quat(w_hat * dt))

    Phi = np.eye(CORE_DIM)
    Phi[P_WI, V_WI] = np.eye(3) * dt
    Phi[V_WI, TH_WI] = -R @ skew(a_hat) * dt
    Phi[V_WI, B_A] = -R * dt
    Phi[TH_WI, TH_WI] = np.eye(3) - skew(w_hat) * dt
    Phi[TH_WI, B_W] = -np.eye(3) * dt

    q_diag = np.zeros(CORE_DIM)
    q_diag[V_WI] = noise.accel_noise**2 * dt
    q_diag[TH_WI] = noise.gyro_noise**2 * dt
    q_diag[B_W] = noise.gyro_bias_walk**2 * dt
    q_diag[B_A] = noise.accel_bias_walk**2 * dt

    P = out.P
    P_cc = Phi @ P[:CORE_DIM, :CORE_DIM] @ Phi.T + np.diag(q_diag)
    P_cr = Phi @ P[:CORE_DIM, CORE_DIM:]
    P[:CORE_DIM, :CORE_DIM] = P_cc
    P[:CORE_DIM, CORE_DIM:] = P_cr
    P[CORE_DIM:, :CORE_DIM] = P_cr.T
    out.P = 0.5 * (P + P.T)
    out.t = state.t + dt
    return out


def apply_correction(state: FilterState, dx: ArrayLike) -> FilterState:
    """Retract an error-state vector onto the nominal state (in place on a copy)."""
    dx = np.asarray(dx, dtype=float)
    out = state.copy()
    c = out.core
    c.p = c.p + dx[P_WI]
    c.v = c.v + dx[V_WI]
    c.q = quat_multiply(c.q, small_angle_quat(dx[TH_WI]))
    c.b_w = c.b_w + dx[B_W]
    c.b_a = c.b_a + dx[B_A]
    e = out.extrinsics
    e.p = e.p + dx[P_IC]
    e.q = quat_multiply(e.q, small_angle_quat(dx[TH_IC]))
    for k, obj in enumerate(out.objects):
        if not obj.initialized:
            continue
        obj.p = obj.p + dx[obj_pos_slice(k)]
        obj.q = quat_multiply(obj.q, small_angle_quat(dx[obj_rot_slice(k)]))
    return out


def innovation_covariance(P: NDArray, H: NDArray, R: NDArray) -> NDArray:
    S = H @ P @ H.T + R
    return 0.5 * (S + S.T)


def ekf_update(state: FilterState, residual: ArrayLike, H: NDArray, R: NDArray) -> FilterState:
    """Joint EKF update with a Joseph-form covariance update.

    ``residual`` is measurement minus prediction in the measurement's
    tangent space, ``H`` its Jacobian w.r.t. the error state.
    """
    r = np.asarray(residual, dtype=float)
    P = state.P
    S = innovation_covariance(P, H, R)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("innovation covariance is not positive definite") from exc
    PHt = P @ H.T
    # K = P H^T S^-1 via two triangular solves
    K = np.linalg.solve(L.T, np.linalg.solve(L, PHt.T)).T
    dx = K @ r
    out = apply_correction(state, dx)
    IKH = np.eye(P.shape[0]) - K @ H
    P_new = IKH @ P @ IKH.T + K @ R @ K.T
    out.P = 0.5 * (P_new + P_new.T)
    return out


__all__ = [
    "AnchorReference",
    "CoreState",
    "ExtrinsicState",
    "FilterState",
    "ImuSample",
    "InitialStd",
    "MonotonicityError",
    "NoiseParams",
    "NumericalError",
    "ObjectWorldState",
    "apply_correction",
    "ekf_update",
    "init_filter",
    "innovation_covariance",
    "obj_pos_slice",
    "obj_rot_slice",
    "obj_slice",
    "propagate",
    "state_dim",
]
