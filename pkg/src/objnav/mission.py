"""Sensor switching between global and object-relative navigation, and arc waypoints."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .estimator import P_WI, TH_WI, FilterState, ekf_update, innovation_covariance
from .geometry import Pose, error_vector, quat_to_rotmat, wrap_angle
from .landmarks import (
    BatchReport,
    GateResult,
    MeasurementBatch,
    MeasurementNoise,
    chi2_gate,
    clear_landmarks,
    landmark_world_position,
    process_batch,
    set_anchor,
)


class MissionPhase(enum.Enum):
    GLOBAL_TAKEOFF = "GlobalTakeoff"
    HOVER_VERIFY = "HoverVerify"
    OBJECT_RELATIVE = "ObjectRelative"
    RETURN_TO_GLOBAL = "ReturnToGlobal"
    DONE = "Done"


_ORDER = list(MissionPhase)
_GLOBAL_PHASES = {MissionPhase.GLOBAL_TAKEOFF, MissionPhase.HOVER_VERIFY, MissionPhase.RETURN_TO_GLOBAL}


class PhaseError(RuntimeError):
    """Sensor used in a mission phase where it is switched off."""


@dataclass
class GlobalPoseMeasurement:
    t: float
    p: NDArray
    q: NDArray
    noise: MeasurementNoise = field(default_factory=lambda: MeasurementNoise.isotropic(0.05, 2.0))

    @property
    def pose(self) -> Pose:
        return Pose(self.p, self.q)


@dataclass(frozen=True)
class InspectionPlan:
    d: float = 3.3
    h: float = 2.0
    sweep: float = math.radians(50.0)
    angular_step: float = math.radians(10.0)
    hover_duration: float = 10.0

    def __post_init__(self) -> None:
        if not self.d > 0:
            raise ValueError("arc radius must be positive")
        if not 0.0 <= self.sweep <= math.pi:
            raise ValueError("sweep must lie in [0, pi]")
        if self.sweep > 0 and not self.angular_step > 0:
            raise ValueError("angular step must be positive")


@dataclass
class Waypoint:
    p: NDArray
    yaw: float


def global_pose_residual(state: FilterState, p_meas: NDArray, q_meas: NDArray) -> tuple[NDArray, NDArray]:
    r = np.concatenate([p_meas - state.core.p, error_vector(state.core.q, q_meas)])
    H = np.zeros((6, state.dim))
    H[0:3, P_WI] = np.eye(3)
    H[3:6, TH_WI] = np.eye(3)
    return r, H


def global_pose_update(
    state: FilterState, m: GlobalPoseMeasurement, alpha: float | None = 0.05
) -> tuple[FilterState, GateResult]:
    """6-DoF pose update on ``(p_WI, q_WI)``; χ²-gated unless ``alpha`` is None."""
    r, H = global_pose_residual(state, m.p, m.q)
    R = m.noise.R
    if alpha is None:
        gate = GateResult(True, float("nan"), float("inf"))
    else:
        gate = chi2_gate(r, innovation_covariance(state.P, H, R), alpha)
    if not gate.accepted:
        return state, gate
    return ekf_update(state, r, H, R), gate


def generate_arc_waypoints(anchor: Pose, plan: InspectionPlan, current: Pose) -> list[Waypoint]:
    """Waypoints on a horizontal circle of radius ``plan.d`` around the anchor.

    Bearings run from ``-sweep`` to ``+sweep`` around the current bearing,
    at the current height, each yawed to face the anchor.
    """
    if plan.d <= 0:
        raise ValueError("degenerate arc radius")
    c = anchor.p
    rel = current.p[:2] - c[:2]
    if np.linalg.norm(rel) < 1e-9:
        raise ValueError("current position coincides with the anchor axis")
    bearing0 = math.atan2(rel[1], rel[0])
    if plan.sweep == 0:
        offsets = [0.0]
    else:
        n = int(round(plan.sweep / plan.angular_step))
        offsets = list(np.linspace(-plan.sweep, plan.sweep, 2 * n + 1))
    z = float(current.p[2])
    out = []
    for off in offsets:
        b = bearing0 + off
        p = np.array([c[0] + plan.d * math.cos(b), c[1] + plan.d * math.sin(b), z])
        out.append(Waypoint(p, wrap_angle(b + math.pi)))
    return out


class Mission:
    """Phase machine deciding which sensor updates the filter.

    ``anchor`` is either ``"highest"`` (landmark with the largest world z) or
    a fixed landmark index.
    """

    def __init__(
        self,
        verify_batches: int = 5,
        anchor: str | int = "highest",
        use_anchor: bool = True,
        landmark_noise: MeasurementNoise | None = None,
        alpha: float = 0.05,
        new_landmark_cost: float = 1.0,
    ) -> None:
        self.phase = MissionPhase.GLOBAL_TAKEOFF
        self.verify_batches = verify_batches
        self.anchor_rule = anchor
        self.use_anchor = use_anchor
        self.landmark_noise = landmark_noise or MeasurementNoise()
        self.alpha = alpha
        self.new_landmark_cost = new_landmark_cost
        self.consecutive = 0
        self.reference: Pose | None = None
        self._reference_pending = False

    def _advance(self, target: MissionPhase) -> None:
        if target is MissionPhase.RETURN_TO_GLOBAL and self.phase is MissionPhase.OBJECT_RELATIVE:
            pass
        elif _ORDER.index(target) != _ORDER.index(self.phase) + 1:
            raise PhaseError(f"illegal transition {self.phase.value} -> {target.value}")
        self.phase = target

    def begin_verification(self) -> None:
        self._advance(MissionPhase.HOVER_VERIFY)

    def finish(self) -> None:
        self._advance(MissionPhase.DONE)

    @property
    def global_active(self) -> bool:
        return self.phase in _GLOBAL_PHASES

    def global_pose_update(self, state: FilterState, m: GlobalPoseMeasurement) -> tuple[FilterState, GateResult]:
        if not self.global_active:
            raise PhaseError(f"global sensor is off in phase {self.phase.value}")
        if self._reference_pending:
            self._rereference(state, m)
        return global_pose_update(state, self.referenced(m), self.alpha)

    def landmark_update(self, state: FilterState, batch: MeasurementBatch) -> tuple[FilterState, BatchReport]:
        if self.phase is not MissionPhase.OBJECT_RELATIVE:
            raise PhaseError(f"landmark sensor is off in phase {self.phase.value}")
        return process_batch(
            state, batch, self.landmark_noise, self.alpha, self.new_landmark_cost
        )

    def _choose_anchor(self, state: FilterState) -> int:
        if isinstance(self.anchor_rule, int):
            return self.anchor_rule
        init = [k for k, o in enumerate(state.objects) if o.initialized]
        return max(init, key=lambda k: landmark_world_position(state, k)[2])

    def try_switch_to_object_relative(
        self, state: FilterState, batch: MeasurementBatch
    ) -> tuple[FilterState, bool]:
        """Count consecutive non-empty batches; switch once enough are seen.

        On switching the landmarks are initialized from ``batch`` and the
        anchor (if enabled) is fixed at its fresh estimate.
        """
        if self.phase is not MissionPhase.HOVER_VERIFY:
            return state, False
        self.consecutive = self.consecutive + 1 if len(batch) > 0 else 0
        if self.consecutive < self.verify_batches:
            return state, False
        self._advance(MissionPhase.OBJECT_RELATIVE)
        state, _ = process_batch(state, batch, self.landmark_noise, self.alpha, self.new_landmark_cost)
        if self.use_anchor:
            state = set_anchor(state, self._choose_anchor(state))
        return state, True

    def switch_to_global(self, state: FilterState, first: GlobalPoseMeasurement) -> FilterState:
        """Drop landmarks and re-reference the global sensor on ``first``."""
        if self.phase is not MissionPhase.OBJECT_RELATIVE:
            raise PhaseError("switch_to_global requires the object-relative phase")
        self._advance(MissionPhase.RETURN_TO_GLOBAL)
        state = clear_landmarks(state)
        self._reference_pending = True
        state, _ = self.global_pose_update(state, first)
        return state

    def abort(self, state: FilterState) -> FilterState:
        """Leave object-relative flight; the next global measurement re-references."""
        self._advance(MissionPhase.RETURN_TO_GLOBAL)
        self._reference_pending = True
        return clear_landmarks(state)

    def _rereference(self, state: FilterState, m: GlobalPoseMeasurement) -> None:
        # maps the raw global frame onto the navigation world
        self.reference = state.core.pose.compose(m.pose.inverse())
        self._reference_pending = False

    def referenced(self, m: GlobalPoseMeasurement) -> GlobalPoseMeasurement:
        """``m`` expressed in the navigation world."""
        if self.reference is None:
            return m
        c = self.reference.compose(m.pose)
        return GlobalPoseMeasurement(m.t, c.p, c.q, m.noise)


def yaw_facing(position: NDArray, target: NDArray) -> float:
    d = np.asarray(target, dtype=float)[:2] - np.asarray(position, dtype=float)[:2]
    return math.atan2(d[1], d[0])


def heading_vector(yaw: float) -> NDArray:
    return quat_to_rotmat([0.0, 0.0, math.sin(yaw / 2), math.cos(yaw / 2)])[:, 0]
