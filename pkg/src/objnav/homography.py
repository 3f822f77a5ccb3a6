"""Intrinsics-only homography between a deployment camera and a training camera.

The pose network is trained on images from one pinhole camera (the *target*).
Images from any other camera (the *source*) are brought into the target's
pixel frame with ``H = T @ K @ inv(K_src)``, where ``T`` shifts the projected
source image center onto the target image center. Only pixel coordinates are
mapped here; no image resampling is done.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray


class DegenerateProjectionError(ValueError):
    """Raised when a homogeneous pixel has (near) zero scale."""


@dataclass(frozen=True)
class CameraIntrinsics:
    """Zero-skew pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def K(self) -> NDArray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def center(self) -> NDArray:
        """Image center ``(width/2, height/2)`` in continuous pixel coordinates."""
        return np.array([self.width / 2.0, self.height / 2.0])

    def project(self, X: ArrayLike) -> NDArray:
        """Project camera-frame point(s) ``X`` (..., 3) with positive depth."""
        X = np.asarray(X, dtype=float)
        if np.any(X[..., 2] <= 0):
            raise DegenerateProjectionError("point behind the camera")
        uvw = X @ self.K.T
        return uvw[..., :2] / uvw[..., 2:3]


@dataclass(frozen=True)
class Homography:
    """``H = T @ H_hat`` together with its factors.

    Attributes
    ----------
    H : (3, 3) array
        Full map from source pixels to target pixels.
    H_hat : (3, 3) array
        Intrinsics-only part ``K_target @ inv(K_source)``.
    u_o, v_o : float
        Center-offset translation stored in ``T``.
    """

    H: NDArray
    H_hat: NDArray
    u_o: float
    v_o: float

    def __post_init__(self) -> None:
        if abs(np.linalg.det(self.H)) <= 1e-12:
            raise ValueError("homography is singular")

    @property
    def T(self) -> NDArray:
        return np.array([[1.0, 0.0, self.u_o], [0.0, 1.0, self.v_o], [0.0, 0.0, 1.0]])

    def inverse(self) -> Homography:
        Hi = np.linalg.inv(self.H)
        # the inverse is no longer a pure T @ H_hat factorization; keep H_hat = Hi
        return Homography(H=Hi, H_hat=Hi, u_o=0.0, v_o=0.0)


def _dehomogenize(uvs: NDArray) -> NDArray:
    s = uvs[..., 2:3]
    if np.any(np.abs(s) < 1e-15):
        raise DegenerateProjectionError("homogeneous scale is zero")
    return uvs[..., :2] / s


def compute_homography(target: CameraIntrinsics, source: CameraIntrinsics) -> Homography:
    """Homography mapping ``source`` pixels into the ``target`` camera."""
    K_src = source.K
    if abs(np.linalg.det(K_src)) <= 1e-12:
        raise ValueError("source camera matrix is singular")
    H_hat = target.K @ np.linalg.inv(K_src)
    u_pc, v_pc = _dehomogenize(H_hat @ np.append(source.center, 1.0))
    u_tc, v_tc = target.center
    u_o, v_o = u_tc - u_pc, v_tc - v_pc
    T = np.array([[1.0, 0.0, u_o], [0.0, 1.0, v_o], [0.0, 0.0, 1.0]])
    return Homography(H=T @ H_hat, H_hat=H_hat, u_o=float(u_o), v_o=float(v_o))


def map_pixel(h: Homography, px: ArrayLike) -> NDArray:
    """Map pixel(s) ``(..., 2)`` through ``h``."""
    px = np.asarray(px, dtype=float)
    uv1 = np.concatenate([px, np.ones(px.shape[:-1] + (1,))], axis=-1)
    return _dehomogenize(uv1 @ h.H.T)
