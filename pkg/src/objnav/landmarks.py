"""Multi-pose landmark sensor.

Each landmark k is an *object-world* ``(p_OkW, q_OkW)``: the world frame
expressed in object frame O_k. A measurement is the camera pose in the
object frame ``(p_OkC, q_OkC)``, so the measurement model is::

    q_OC = q_OW ⊗ q_WI ⊗ q_IC
    p_OC = p_OW + R_OW (p_WI + R_WI p_IC)

Residuals live in the measurement tangent space: position difference and the
small-angle error ``2 e_v / e_w`` of ``e = q_pred^-1 ⊗ q_meas``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.stats import chi2

from .assignment import hungarian
from .estimator import (
    P_IC,
    P_WI,
    TH_IC,
    TH_WI,
    AnchorReference,
    FilterState,
    NumericalError,
    ObjectWorldState,
    ekf_update,
    innovation_covariance,
    obj_pos_slice,
    obj_rot_slice,
    obj_slice,
)
from .geometry import (
    canonical,
    error_vector,
    quat_conjugate,
    quat_multiply,
    quat_to_rotmat,
    skew,
)

PSEUDO_SIGMA_P = 1e-4
PSEUDO_SIGMA_THETA = 1e-4


class LandmarkError(ValueError):
    """Operation on a landmark in the wrong initialization state."""


@dataclass
class RelPoseMeasurement:
    """Camera pose relative to an object, ``(p_OC, q_OC)``."""

    t: float
    p: NDArray
    q: NDArray
    object_id: int | None = None

    def __post_init__(self) -> None:
        self.p = np.asarray(self.p, dtype=float).reshape(3)
        self.q = canonical(self.q)
        if not np.all(np.isfinite(self.p)):
            raise ValueError("measurement translation must be finite")


@dataclass
class MeasurementBatch:
    t: float
    measurements: list[RelPoseMeasurement] = field(default_factory=list)

    def __post_init__(self) -> None:
        if any(abs(m.t - self.t) > 1e-12 for m in self.measurements):
            raise ValueError("all measurements in a batch must share its timestamp")

    def __len__(self) -> int:
        return len(self.measurements)


@dataclass(frozen=True)
class MeasurementNoise:
    """Per-axis standard deviations for position [m] and rotation [rad]."""

    sigma_p: tuple[float, float, float] = (0.1, 0.1, 0.1)
    sigma_theta: tuple[float, float, float] = tuple(np.deg2rad([5.0, 5.0, 5.0]))

    def __post_init__(self) -> None:
        if min(self.sigma_p) <= 0 or min(self.sigma_theta) <= 0:
            raise ValueError("measurement noise must be positive")

    @classmethod
    def isotropic(cls, sigma_p: float, sigma_theta_deg: float) -> MeasurementNoise:
        th = float(np.deg2rad(sigma_theta_deg))
        return cls((sigma_p,) * 3, (th,) * 3)

    def scaled(self, factor: float) -> MeasurementNoise:
        return MeasurementNoise(
            tuple(factor * s for s in self.sigma_p), tuple(factor * s for s in self.sigma_theta)
        )

    @property
    def R(self) -> NDArray:
        return np.diag(np.square(np.concatenate([self.sigma_p, self.sigma_theta])))


@dataclass
class GateResult:
    accepted: bool
    distance: float
    threshold: float
    reason: str = ""

    def __bool__(self) -> bool:
        return self.accepted


@dataclass
class Assignment:
    """Outcome of matching a batch against the landmark slots.

    ``matched`` and ``new`` hold ``(measurement index, landmark index)`` pairs;
    ``new`` pairs target uninitialized slots.
    """

    matched: list[tuple[int, int]] = field(default_factory=list)
    new: list[tuple[int, int]] = field(default_factory=list)
    discarded: list[int] = field(default_factory=list)
    cost: float = 0.0


@dataclass
class UpdateReport:
    gates: dict[int, GateResult] = field(default_factory=dict)
    updated: bool = False
    used_anchor: bool = False

    @property
    def accepted(self) -> list[int]:
        return [k for k, g in self.gates.items() if g.accepted]


def _require_initialized(state: FilterState, k: int) -> ObjectWorldState:
    if not 0 <= k < state.n_objects:
        raise LandmarkError(f"landmark index {k} out of range")
    obj = state.objects[k]
    if not obj.initialized:
        raise LandmarkError(f"landmark {k} is not initialized")
    return obj


def camera_world_pose(state: FilterState) -> tuple[NDArray, NDArray]:
    """``(p_WC, R_WC)`` from the current estimate."""
    R_WI = quat_to_rotmat(state.core.q)
    p_WC = state.core.p + R_WI @ state.extrinsics.p
    return p_WC, R_WI @ quat_to_rotmat(state.extrinsics.q)


def predict_measurement(state: FilterState, k: int) -> RelPoseMeasurement:
    obj = _require_initialized(state, k)
    R_OW = quat_to_rotmat(obj.q)
    p_WC, _ = camera_world_pose(state)
    q = quat_multiply(quat_multiply(obj.q, state.core.q), state.extrinsics.q)
    return RelPoseMeasurement(state.t, obj.p + R_OW @ p_WC, q)


def measurement_residual(meas: RelPoseMeasurement, pred: RelPoseMeasurement) -> NDArray:
    return np.concatenate([meas.p - pred.p, error_vector(pred.q, meas.q)])


def measurement_jacobian(state: FilterState, k: int) -> NDArray:
    """Jacobian (6 x dim) of the relative pose w.r.t. the error state."""
    obj = _require_initialized(state, k)
    R_OW = quat_to_rotmat(obj.q)
    R_WI = quat_to_rotmat(state.core.q)
    R_IC = quat_to_rotmat(state.extrinsics.q)
    p_IC = state.extrinsics.p
    p_WC = state.core.p + R_WI @ p_IC
    R_CW = (R_WI @ R_IC).T

    H = np.zeros((6, state.dim))
    H[0:3, P_WI] = R_OW
    H[0:3, TH_WI] = -R_OW @ R_WI @ skew(p_IC)
    H[0:3, P_IC] = R_OW @ R_WI
    H[0:3, obj_pos_slice(k)] = np.eye(3)
    H[0:3, obj_rot_slice(k)] = -R_OW @ skew(p_WC)
    H[3:6, TH_WI] = R_IC.T
    H[3:6, TH_IC] = np.eye(3)
    H[3:6, obj_rot_slice(k)] = R_CW
    return H


def project_measurement(state: FilterState, meas: RelPoseMeasurement) -> tuple[NDArray, NDArray]:
    """Object-world ``(p_OW, q_OW)`` implied by ``meas`` and the robot estimate."""
    q_OW = canonical(
        quat_multiply(quat_multiply(meas.q, quat_conjugate(state.extrinsics.q)), quat_conjugate(state.core.q))
    )
    p_WC, _ = camera_world_pose(state)
    p_OW = meas.p - quat_to_rotmat(q_OW) @ p_WC
    return p_OW, q_OW


def object_world_position(p_OW: ArrayLike, q_OW: ArrayLike) -> NDArray:
    """Position of the object origin in W."""
    return -(quat_to_rotmat(q_OW).T @ np.asarray(p_OW, dtype=float))


def landmark_world_position(state: FilterState, k: int) -> NDArray:
    obj = _require_initialized(state, k)
    return object_world_position(obj.p, obj.q)


def initialize_landmark(
    state: FilterState,
    k: int,
    meas: RelPoseMeasurement,
    noise: MeasurementNoise | None = None,
) -> FilterState:
    """Initialize slot ``k`` from its first measurement.

    The covariance block is seeded to first order: measurement noise and the
    robot/extrinsic uncertainty mapped through the inverse measurement model.
    """
    if not 0 <= k < state.n_objects:
        raise LandmarkError(f"landmark index {k} out of range")
    if state.objects[k].initialized:
        raise LandmarkError(f"landmark {k} is already initialized")
    noise = noise or MeasurementNoise()

    out = state.copy()
    p_OW, q_OW = project_measurement(state, meas)
    out.objects[k] = ObjectWorldState(p_OW, q_OW, True)

    H = measurement_jacobian(out, k)
    sl = obj_slice(k)
    H_L = H[:, sl]
    H_x = H.copy()
    H_x[:, sl] = 0.0
    H_L_inv = np.linalg.inv(H_L)
    A = -H_L_inv @ H_x
    P = out.P
    P[sl, :] = 0.0
    P[:, sl] = 0.0
    AP = A @ P
    P_LL = AP @ A.T + H_L_inv @ noise.R @ H_L_inv.T
    P[sl, :] = AP
    P[:, sl] = AP.T
    P[sl, sl] = P_LL
    out.P = 0.5 * (P + P.T)
    return out


def set_anchor(state: FilterState, k: int) -> FilterState:
    """Store landmark ``k``'s current estimate as the fixed pseudo-measurement."""
    obj = _require_initialized(state, k)
    out = state.copy()
    out.anchor = AnchorReference(k, obj.p.copy(), obj.q.copy())
    return out


def clear_landmarks(state: FilterState) -> FilterState:
    """Drop every landmark and the anchor from active estimation."""
    out = state.copy()
    for k in range(out.n_objects):
        out.objects[k] = ObjectWorldState()
        sl = obj_slice(k)
        out.P[sl, :] = 0.0
        out.P[:, sl] = 0.0
    out.anchor = None
    return out


def anchor_pseudo_measurement(state: FilterState) -> tuple[NDArray, NDArray, NDArray]:
    """Residual, Jacobian and noise of the anchor pseudo-measurement.

    Position rows use ``H = I``; of the three rotation rows only the yaw (z)
    row is non-zero, leaving the anchor's roll and pitch free.
    """
    if state.anchor is None:
        raise LandmarkError("no anchor is set")
    ref = state.anchor
    obj = _require_initialized(state, ref.index)
    r = np.concatenate([ref.p - obj.p, error_vector(obj.q, ref.q)])
    H = np.zeros((6, state.dim))
    H[0:3, obj_pos_slice(ref.index)] = np.eye(3)
    H[3:6, obj_rot_slice(ref.index)] = np.diag([0.0, 0.0, 1.0])
    R = np.diag([PSEUDO_SIGMA_P**2] * 3 + [PSEUDO_SIGMA_THETA**2] * 3)
    return r, H, R


def chi2_threshold(alpha: float, dof: int = 6) -> float:
    return float(chi2.ppf(1.0 - alpha, dof))


def chi2_gate(residual: ArrayLike, innovation_cov: ArrayLike, alpha: float = 0.05) -> GateResult:
    """Accept iff the squared Mahalanobis distance is within the χ² quantile."""
    r = np.asarray(residual, dtype=float)
    S = np.asarray(innovation_cov, dtype=float)
    threshold = chi2_threshold(alpha, r.size)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return GateResult(False, float("inf"), threshold, "singular innovation covariance")
    y = np.linalg.solve(L, r)
    d2 = float(y @ y)
    return GateResult(d2 <= threshold, d2, threshold)


def match_measurements(
    state: FilterState,
    batch: MeasurementBatch,
    new_landmark_cost: float = 1.0,
) -> Assignment:
    """One-to-one matching of anonymous measurements to landmark slots.

    Every measurement is projected into W with the current estimate and
    compared by Euclidean distance to the stored landmark positions. Free
    slots act as extra columns of constant cost ``new_landmark_cost``;
    measurements left without a column are discarded.
    """
    out = Assignment()
    M = len(batch)
    if M == 0:
        return out
    init_idx = [k for k, o in enumerate(state.objects) if o.initialized]
    free_idx = [k for k, o in enumerate(state.objects) if not o.initialized]
    columns = init_idx + free_idx
    if not columns:
        out.discarded = list(range(M))
        return out

    stored = np.array([landmark_world_position(state, k) for k in init_idx]).reshape(-1, 3)
    cost = np.empty((M, len(columns)))
    for i, meas in enumerate(batch.measurements):
        p_OW, q_OW = project_measurement(state, meas)
        pos = object_world_position(p_OW, q_OW)
        cost[i, : len(init_idx)] = np.linalg.norm(stored - pos, axis=1)
        cost[i, len(init_idx):] = new_landmark_cost

    rows, cols = hungarian(cost)
    out.cost = float(cost[rows, cols].sum())
    for i, j in zip(rows, cols):
        k = columns[j]
        if j < len(init_idx):
            out.matched.append((int(i), k))
        else:
            out.new.append((int(i), k))
    assigned = set(int(i) for i in rows)
    out.discarded = [i for i in range(M) if i not in assigned]
    return out


def stacked_update(
    state: FilterState,
    pairs: list[tuple[int, RelPoseMeasurement]],
    noise: MeasurementNoise,
    alpha: float = 0.05,
    gate: bool = True,
) -> tuple[FilterState, UpdateReport]:
    """Single joint EKF update from matched ``(landmark, measurement)`` pairs.

    Each landmark is χ²-gated on its own 6-dof block; rejected landmarks are
    dropped. When an anchor is set its pseudo-measurement rows are appended
    to the stack.
    """
    report = UpdateReport()
    R_k = noise.R
    rs, Hs, Rs = [], [], []
    for k, meas in pairs:
        pred = predict_measurement(state, k)
        r = measurement_residual(meas, pred)
        H = measurement_jacobian(state, k)
        if gate:
            result = chi2_gate(r, innovation_covariance(state.P, H, R_k), alpha)
        else:
            result = GateResult(True, float("nan"), float("inf"))
        report.gates[k] = result
        if result.accepted:
            rs.append(r)
            Hs.append(H)
            Rs.append(R_k)
    if not rs:
        return state, report
    if state.anchor is not None:
        r, H, R = anchor_pseudo_measurement(state)
        rs.append(r)
        Hs.append(H)
        Rs.append(R)
        report.used_anchor = True

    r = np.concatenate(rs)
    H = np.vstack(Hs)
    R = _block_diag(Rs)
    out = ekf_update(state, r, H, R)
    report.updated = True
    return out, report


def _block_diag(blocks: list[NDArray]) -> NDArray:
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n))
    i = 0
    for b in blocks:
        m = b.shape[0]
        out[i : i + m, i : i + m] = b
        i += m
    return out


@dataclass
class BatchReport:
    assignment: Assignment
    update: UpdateReport
    initialized: list[int] = field(default_factory=list)


def process_batch(
    state: FilterState,
    batch: MeasurementBatch,
    noise: MeasurementNoise,
    alpha: float = 0.05,
    new_landmark_cost: float = 1.0,
    gate: bool = True,
) -> tuple[FilterState, BatchReport]:
    """Match, update with matched landmarks, then initialize free slots."""
    assignment = match_measurements(state, batch, new_landmark_cost)
    pairs = [(k, batch.measurements[i]) for i, k in assignment.matched]
    if pairs:
        state, update = stacked_update(state, pairs, noise, alpha, gate)
    else:
        update = UpdateReport()
    initialized = []
    for i, k in assignment.new:
        state = initialize_landmark(state, k, batch.measurements[i], noise)
        initialized.append(k)
    return state, BatchReport(assignment, update, initialized)


__all__ = [
    "Assignment",
    "BatchReport",
    "GateResult",
    "LandmarkError",
    "MeasurementBatch",
    "MeasurementNoise",
    "NumericalError",
    "RelPoseMeasurement",
    "UpdateReport",
    "anchor_pseudo_measurement",
    "chi2_gate",
    "chi2_threshold",
    "clear_landmarks",
    "initialize_landmark",
    "landmark_world_position",
    "match_measurements",
    "measurement_jacobian",
    "measurement_residual",
    "predict_measurement",
    "process_batch",
    "project_measurement",
    "set_anchor",
    "stacked_update",
]
