"""Rotations, pose alignment, standardization and Procrustes analysis.

Poses are plain float64 arrays with one joint per row: ``(N, 2)`` for 2D
keypoints and ``(N, 3)`` for 3D joints. Leading batch dimensions are
accepted wherever it makes sense.

A single rotation convention is used everywhere: row-vector poses are
right-multiplied by the transposed rotation matrix, ``X @ R.T``.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateDataError

__all__ = [
    "Rotation2",
    "Rotation3",
    "StandardizationStats",
    "ProcrustesResult",
    "as_pose2d",
    "as_pose3d",
    "rotation2_from_angle",
    "apply_rotation2",
    "embed_so2_in_so3",
    "apply_rotation3",
    "root_align",
    "compute_stats",
    "standardize",
    "destandardize",
    "procrustes_align",
    "similarity_align_batch",
]


@dataclass(frozen=True)
class Rotation2:
    """An element of SO(2) stored as its cosine and sine."""

    cos_theta: float
    sin_theta: float

    def __post_init__(self):
        if not (np.isfinite(self.cos_theta) and np.isfinite(self.sin_theta)):
            raise ValueError("rotation components must be finite")
        if abs(self.cos_theta**2 + self.sin_theta**2 - 1.0) > 1e-12:
            raise ValueError("cos^2 + sin^2 must equal 1")

    @property
    def matrix(self):
        c, s = self.cos_theta, self.sin_theta
        return np.array([[c, -s], [s, c]])

    @property
    def angle(self):
        return float(np.arctan2(self.sin_theta, self.cos_theta))

    def __matmul__(self, other):
        if not isinstance(other, Rotation2):
            return NotImplemented
        c = self.cos_theta * other.cos_theta - self.sin_theta * other.sin_theta
        s = self.sin_theta * other.cos_theta + self.cos_theta * other.sin_theta
        # renormalize so that long products stay on the circle
        n = np.hypot(c, s)
        return Rotation2(c / n, s / n)

    def inverse(self):
        return Rotation2(self.cos_theta, -self.sin_theta)


@dataclass(frozen=True, eq=False)
class Rotation3:
    """An element of SO(3) as a 3x3 matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise ValueError("Rotation3 needs a finite 3x3 matrix")
        if np.abs(m @ m.T - np.eye(3)).max() > 1e-12:
            raise ValueError("matrix is not orthonormal")
        if abs(np.linalg.det(m) - 1.0) > 1e-12:
            raise ValueError("matrix determinant is not +1")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __matmul__(self, other):
        if not isinstance(other, Rotation3):
            return NotImplemented
        return Rotation3(self.matrix @ other.matrix)

    def __eq__(self, other):
        return isinstance(other, Rotation3) and np.array_equal(self.matrix, other.matrix)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class StandardizationStats:
    """Center and scale used to whiten 2D inputs.

    ``scale`` is a float in ``isotropic`` mode and a length-2 array in
    ``per-coordinate`` mode.
    """

    center: np.ndarray
    scale: object
    mode: str = "isotropic"

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64).reshape(2)
        if self.mode == "isotropic":
            scale = float(self.scale)
            if not scale > 0:
                raise ValueError("scale must be positive")
        elif self.mode == "per-coordinate":
            scale = np.asarray(self.scale, dtype=np.float64).reshape(2)
            if not np.all(scale > 0):
                raise ValueError("per-coordinate scales must be positive")
        else:
            raise ValueError(f"unknown standardization mode {self.mode!r}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "scale", scale)

    @classmethod
    def identity(cls):
        return cls(np.zeros(2), 1.0, "isotropic")

    def to_dict(self):
        scale = self.scale if self.mode == "isotropic" else self.scale.tolist()
        return {"center": self.center.tolist(), "scale": scale, "mode": self.mode}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["center"]), d["scale"], d["mode"])

    def __eq__(self, other):
        return (
            isinstance(other, StandardizationStats)
            and self.mode == other.mode
            and np.array_equal(self.center, other.center)
            and np.array_equal(self.scale, other.scale)
        )

    __hash__ = None


def _as_pose(pose, dim, min_joints):
    arr = np.asarray(pose, dtype=np.float64)
    if arr.ndim < 2 or arr.shape[-1] != dim:
        raise ValueError(f"expected joints with {dim} coordinates, got shape {arr.shape}")
    if arr.shape[-2] < min_joints:
        raise ValueError(f"pose needs at least {min_joints} joints")
    if not np.all(np.isfinite(arr)):
        raise ValueError("pose coordinates must be finite")
    return arr


def as_pose2d(pose):
    """Validate and convert to a float64 array of shape ``(..., N, 2)``, N >= 2."""
    return _as_pose(pose, 2, 2)


def as_pose3d(pose):
    """Validate and convert to a float64 array of shape ``(..., N, 3)``."""
    return _as_pose(pose, 3, 1)


def rotation2_from_angle(theta):
    """Rotation by ``theta`` radians (counter-clockwise for x-right, y-up axes)."""
    theta = float(theta)
    if not np.isfinite(theta):
        raise ValueError("theta must be finite")
    return Rotation2(np.cos(theta), np.sin(theta))


def rotation_matrices2(thetas):
    """Stack of 2x2 rotation matrices, shape ``(..., 2, 2)``."""
    thetas = np.asarray(thetas, dtype=np.float64)
    c, s = np.cos(thetas), np.sin(thetas)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def apply_rotation2(pose, r):
    """Rotate every joint about the origin: ``pose @ R.T``."""
    pose = as_pose2d(pose)
    return pose @ r.matrix.T


def embed_so2_in_so3(r):
    """Rotation about the optical (z) axis: ``blockdiag(R, 1)``."""
    m = np.eye(3)
    m[:2, :2] = r.matrix
    return Rotation3(m)


def apply_rotation3(pose, r):
    pose = as_pose3d(pose)
    return pose @ r.matrix.T


def root_align(pose, root_index=0):
    """Translate so that joint ``root_index`` sits exactly at the origin."""
    pose = np.asarray(pose, dtype=np.float64)
    n = pose.shape[-2]
    if not 0 <= root_index < n:
        raise ValueError(f"root_index {root_index} out of range for {n} joints")
    return pose - pose[..., root_index : root_index + 1, :]


def compute_stats(poses, mode="isotropic"):
    """Dataset-level center and scale of 2D poses.

    ``center`` is the mean over every joint of every pose. In isotropic mode
    the scale is the root-mean-square distance of the centered points from
    the center; in per-coordinate mode it is the per-axis standard deviation.
    """
    poses = np.asarray(poses, dtype=np.float64)
    if poses.size == 0:
        raise ValueError("cannot compute statistics of an empty pose list")
    points = as_pose2d(poses).reshape(-1, 2)
    center = points.mean(axis=0)
    centered = points - center
    if mode == "isotropic":
        scale = float(np.sqrt(np.mean(np.sum(centered**2, axis=1))))
        if not scale > 0:
            raise DegenerateDataError("poses have zero spread")
    elif mode == "per-coordinate":
        scale = np.sqrt(np.mean(centered**2, axis=0))
        if not np.all(scale > 0):
            raise DegenerateDataError("a coordinate has zero variance")
    else:
        raise ValueError(f"unknown standardization mode {mode!r}")
    return StandardizationStats(center, scale, mode)


def standardize(pose, stats):
    return (np.asarray(pose, dtype=np.float64) - stats.center) / stats.scale


def destandardize(pose, stats):
    return np.asarray(pose, dtype=np.float64) * stats.scale + stats.center


class ProcrustesResult(NamedTuple):
    scale: float
    rotation: Rotation3
    translation: np.ndarray
    aligned: np.ndarray


def similarity_align_batch(source, target):
    """Least-squares similarity alignment of ``source`` onto ``target``.

    Works on stacks of shape ``(B, N, 3)``. Returns ``(scale, R, t, aligned)``
    with ``aligned = scale * source @ R.T + t`` and ``det(R) = +1``.
    Raises :class:`DegenerateDataError` if any centered source has rank < 2.
    """
    source = np.asarray(source, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if source.shape != target.shape:
        raise ValueError(f"shape mismatch {source.shape} vs {target.shape}")
    if source.shape[-2] < 3:
        raise ValueError("Procrustes alignment needs at least 3 joints")
    mu_s = source.mean(axis=-2, keepdims=True)
    mu_t = target.mean(axis=-2, keepdims=True)
    a = source - mu_s
    b = target - mu_t

    sv = np.linalg.svd(a, compute_uv=False)
    if np.any(sv[..., 1] <= 1e-12 * np.maximum(sv[..., 0], 1e-300)):
        raise DegenerateDataError("source pose is degenerate (rank < 2)")

    # a @ Q ~ b with Q = R.T; maximize tr(Q.T a.T b) via SVD of a.T b
    u, s, vt = np.linalg.svd(np.swapaxes(a, -1, -2) @ b)
    d = np.sign(np.linalg.det(u @ vt))
    d = np.where(d == 0, 1.0, d)
    u = u.copy()
    u[..., :, 2] *= d[..., None]
    s = s.copy()
    s[..., 2] *= d
    q = u @ vt
    scale = s.sum(axis=-1) / np.sum(a**2, axis=(-2, -1))
    aligned_centered = scale[..., None, None] * (a @ q)
    translation = (mu_t - scale[..., None, None] * (mu_s @ q))[..., 0, :]
    aligned = aligned_centered + mu_t
    return scale, np.swapaxes(q, -1, -2), translation, aligned


def procrustes_align(source, target):
    """Optimal similarity transform mapping ``source`` onto ``target``.

    Minimizes ``sum_i ||s * source_i @ R.T + t - target_i||^2`` over scale
    ``s > 0``, proper rotations ``R`` and translations ``t``.
    """
    source = as_pose3d(source)
    target = as_pose3d(target)
    if source.ndim != 2:
        raise ValueError("procrustes_align takes a single pose; use similarity_align_batch")
    scale, rot, t, aligned = similarity_align_batch(source[None], target[None])
    r = rot[0]
    # polish tiny SVD round-off so the Rotation3 invariants hold to 1e-12
    u, _, vt = np.linalg.svd(r)
    r = u @ vt
    return ProcrustesResult(float(scale[0]), Rotation3(r), t[0], aligned[0])
