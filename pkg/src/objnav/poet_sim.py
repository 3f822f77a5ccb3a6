"""Statistical stand-in for the learned multi-object pose estimator.

Turns true geometry into noisy, dropout-prone relative pose batches. Noise is
i.i.d. Gaussian per axis (translation) and a small random rotation applied in
the camera-relative frame; magnitudes are usually set from average
translation/rotation errors with :func:`calibrate_from_table`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .estimator import ExtrinsicState
from .geometry import Pose, quat_multiply, small_angle_quat
from .landmarks import MeasurementBatch, RelPoseMeasurement

# E||x|| for x ~ N(0, I_3): sqrt(2) * Gamma(2) / Gamma(3/2) = sqrt(8 / pi)
MEAN_NORM_3D = math.sqrt(2.0) * math.gamma(2.0) / math.gamma(1.5)


@dataclass
class SceneConfig:
    """True object poses in W (``T_WO``) and the camera visibility model."""

    objects: list[Pose]
    range_min: float = 0.5
    range_max: float = 8.0
    fov_half_h: float = math.radians(69.0)
    fov_half_v: float = math.radians(52.0)

    def __post_init__(self) -> None:
        if not self.objects:
            raise ValueError("scene needs at least one object")
        if not self.range_min < self.range_max:
            raise ValueError("range_min must be below range_max")


@dataclass
class PoETNoiseModel:
    sigma_t: float = 0.0357
    sigma_r: float = math.radians(1.70)
    p_dropout: float = 0.04
    rate: float = 15.0
    seed: int = 0
    distance_scaling: bool = False
    reference_distance: float = 3.3
    bias_t: NDArray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        if self.sigma_t < 0 or self.sigma_r < 0:
            raise ValueError("noise standard deviations must be non-negative")
        if not 0.0 <= self.p_dropout <= 1.0:
            raise ValueError("p_dropout must be a probability")
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        self.bias_t = np.asarray(self.bias_t, dtype=float).reshape(3)


def calibrate_from_table(avg_te: float, avg_re_deg: float, **kwargs) -> PoETNoiseModel:
    """Per-axis sigmas whose isotropic 3-D Gaussian has the given mean norms."""
    if avg_te < 0 or avg_re_deg < 0:
        raise ValueError("average errors must be non-negative")
    return PoETNoiseModel(
        sigma_t=avg_te / MEAN_NORM_3D,
        sigma_r=math.radians(avg_re_deg) / MEAN_NORM_3D,
        **kwargs,
    )


def true_relative_pose(robot: Pose, extrinsics: ExtrinsicState, object_pose: Pose) -> Pose:
    """``T_OC = T_WO^-1 ∘ T_WI ∘ T_IC``."""
    return object_pose.inverse().compose(robot).compose(extrinsics.pose)


def is_visible(T_OC: Pose, scene: SceneConfig) -> bool:
    p_CO = T_OC.inverse().p
    depth = p_CO[2]
    if depth <= 0:
        return False
    dist = float(np.linalg.norm(p_CO))
    if not scene.range_min <= dist <= scene.range_max:
        return False
    return (
        math.atan2(abs(p_CO[0]), depth) <= scene.fov_half_h
        and math.atan2(abs(p_CO[1]), depth) <= scene.fov_half_v
    )


def _rng(seed: int, t: float) -> np.random.Generator:
    return np.random.default_rng([seed, int(round(t * 1e6))])


def simulate_batch(
    true_robot: Pose,
    extrinsics: ExtrinsicState,
    scene: SceneConfig,
    noise: PoETNoiseModel,
    t: float,
) -> MeasurementBatch:
    """Noisy batch for every visible, non-dropped object. Pure in ``(inputs, seed, t)``."""
    rng = _rng(noise.seed, t)
    out = []
    for idx, obj in enumerate(scene.objects):
        # draw for every object so visibility changes do not shift the stream
        drop = rng.random()
        n_t = rng.standard_normal(3)
        n_r = rng.standard_normal(3)
        T_OC = true_relative_pose(true_robot, extrinsics, obj)
        if not is_visible(T_OC, scene) or drop < noise.p_dropout:
            continue
        scale = 1.0
        if noise.distance_scaling:
            scale = float(np.linalg.norm(T_OC.p)) / noise.reference_distance
        p = T_OC.p + noise.bias_t + scale * noise.sigma_t * n_t
        q = quat_multiply(T_OC.q, small_angle_quat(scale * noise.sigma_r * n_r))
        out.append(RelPoseMeasurement(t, p, q, object_id=idx))
    return MeasurementBatch(t, out)
