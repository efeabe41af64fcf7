"""Core 3D geometry: similarity transforms, Umeyama fitting, box helpers.

Points are plain numpy arrays: a single point is shape (3,), a point set is
shape (N, 3), row per point, meters unless a caller states otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError

ROTATION_TOL = 1e-10
# Second singular value of the cross-covariance below this fraction of the
# first means the correspondence is effectively collinear.
DEGENERACY_RATIO = 1e-12


def as_points(points, name: str = "points") -> np.ndarray:
    """Coerce to a float64 (N, 3) array, rejecting NaN/inf."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1 and arr.shape == (3,):
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must have shape (N, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def is_rotation(matrix: np.ndarray, tol: float = ROTATION_TOL) -> bool:
    """True if matrix is orthonormal with det +1 within tol (elementwise)."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        return False
    if np.max(np.abs(m.T @ m - np.eye(3))) > tol:
        return False
    return abs(np.linalg.det(m) - 1.0) <= tol


def axis_angle_rotation(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a (not necessarily unit) axis."""
    a = np.asarray(axis, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(a)
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError("rotation axis must be a nonzero finite vector")
    x, y, z = a / norm
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


@dataclass(frozen=True)
class SimilarityTransform:
    """p_out = scale * rotation @ p_in + translation."""

    scale: float
    rotation: np.ndarray  # (3, 3), proper orthonormal
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64)
        tr = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.isfinite(self.scale) or self.scale <= 0.0:
            raise ValueError(f"scale must be positive and finite, got {self.scale}")
        if not is_rotation(rot):
            raise ValueError("rotation must be proper orthonormal within 1e-10")
        if not np.all(np.isfinite(tr)):
            raise ValueError("translation contains non-finite values")
        rot.flags.writeable = False
        tr.flags.writeable = False
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tr)

    @staticmethod
    def identity() -> "SimilarityTransform":
        return SimilarityTransform(1.0, np.eye(3), np.zeros(3))


@dataclass(frozen=True)
class Box2:
    """Axis-aligned pixel box with strictly positive extent."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("box coordinates must be finite")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"inverted box: ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )


def box_centroid(box: Box2) -> tuple[float, float]:
    """Center of the box, ((x_min+x_max)/2, (y_min+y_max)/2)."""
    return ((box.x_min + box.x_max) / 2.0, (box.y_min + box.y_max) / 2.0)


def umeyama_fit(source, target, with_scale: bool = True) -> SimilarityTransform:
    """Closed-form least-squares similarity transform taking source onto target.

    Minimizes sum_i || s * R @ source_i + t - target_i ||^2 over s > 0,
    R in SO(3), t, via the Umeyama solution: centroid subtraction,
    cross-covariance SVD, reflection-guarded rotation, variance-ratio scale.

    Args:
        source: (N, 3) points, N >= 3.
        target: (N, 3) corresponding points.
        with_scale: estimate scale; False pins s = 1 (rigid fit).

    Returns:
        The global minimizer as a SimilarityTransform.

    Raises:
        ValueError: length mismatch or fewer than 3 points.
        DegenerateGeometryError: correspondence rank < 2 (e.g. collinear).
    """
    src = as_points(source, "source")
    dst = as_points(target, "target")
    if src.shape[0] != dst.shape[0]:
        raise ValueError(
            f"source and target must have equal lengths, got {src.shape[0]} and {dst.shape[0]}"
        )
    n = src.shape[0]
    if n < 3:
        raise ValueError(f"need at least 3 point pairs, got {n}")

    mu_src = src.mean(axis=0)
    mu_dst = dst.mean(axis=0)
    src_c = src - mu_src
    dst_c = dst - mu_dst

    cov = dst_c.T @ src_c / n
    u, d, vt = np.linalg.svd(cov)
    if d[0] <= 0.0 or d[1] < DEGENERACY_RATIO * d[0]:
        raise DegenerateGeometryError(
            "point correspondence is rank-deficient (collinear or coincident points)"
        )

    # Reflection guard: flip the smallest singular direction if the raw
    # solution would be an improper rotation.
    sign = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0.0:
        sign[-1] = -1.0
    rot = u @ np.diag(sign) @ vt

    if with_scale:
        var_src = np.square(src_c).sum() / n
        scale = float(np.dot(d, sign) / var_src)
    else:
        scale = 1.0
    tr = mu_dst - scale * rot @ mu_src
    return SimilarityTransform(scale, rot, tr)


def apply_transform(transform: SimilarityTransform, points) -> np.ndarray:
    """Apply p -> s * R @ p + t to an (N, 3) point set."""
    pts = as_points(points)
    return transform.scale * pts @ transform.rotation.T + transform.translation


def compose(outer: SimilarityTransform, inner: SimilarityTransform) -> SimilarityTransform:
    """Transform equivalent to applying inner first, then outer."""
    scale = outer.scale * inner.scale
    rot = outer.rotation @ inner.rotation
    tr = outer.scale * outer.rotation @ inner.translation + outer.translation
    return SimilarityTransform(scale, rot, tr)


def inverse(transform: SimilarityTransform) -> SimilarityTransform:
    """Analytic inverse: s' = 1/s, R' = R^T, t' = -R^T t / s."""
    inv_scale = 1.0 / transform.scale
    rot = transform.rotation.T
    tr = -inv_scale * rot @ transform.translation
    return SimilarityTransform(inv_scale, rot, tr)


def alignment_objective(transform: SimilarityTransform, source, target) -> float:
    """Sum of squared residuals || s R p + t - q ||^2 over correspondences."""
    src = as_points(source, "source")
    dst = as_points(target, "target")
    if src.shape != dst.shape:
        raise ValueError("source and target must have equal shapes")
    residual = apply_transform(transform, src) - dst
    return float(np.square(residual).sum())
