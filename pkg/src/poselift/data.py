"""Synthetic articulated-skeleton data, projection, augmentation and dataset I/O.

Camera coordinates follow the usual image convention: x to the right,
y down, z along the optical axis. The default skeleton has the 17-joint
Human3.6M topology with pelvis as root.
"""

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DatasetParseError, InvalidGeometryError, ValidationError
from .geometry import rotation_matrices2

__all__ = [
    "Skeleton",
    "Camera",
    "Sample",
    "Dataset",
    "h36m_skeleton",
    "sample_pose",
    "sample_poses",
    "project",
    "augment",
    "rotate_pairs",
    "generate_dataset",
    "make_rotated_testset",
    "write_dataset",
    "read_dataset",
]

UPRIGHT_TILT = np.deg2rad(15.0)


@dataclass(frozen=True, eq=False)
class Skeleton:
    """Kinematic tree with rest-pose bone offsets and per-joint Euler-angle limits.

    ``rest_offsets[i]`` is the bone from ``parent[i]`` to joint ``i`` in the
    rest pose (millimetres). ``angle_limits[i]`` is a ``(3, 2)`` array of
    ``[low, high]`` ranges for the rotations about x, y and z applied at joint
    ``i``; that rotation turns bone ``i`` and every bone below it.
    """

    parent: tuple
    rest_offsets: np.ndarray
    angle_limits: np.ndarray
    names: tuple = ()
    root: int = 0

    def __post_init__(self):
        parent = tuple(int(p) for p in self.parent)
        n = len(parent)
        offsets = np.asarray(self.rest_offsets, dtype=np.float64).reshape(n, 3)
        limits = np.asarray(self.angle_limits, dtype=np.float64).reshape(n, 3, 2)
        if parent[self.root] != -1 or sum(p == -1 for p in parent) != 1:
            raise ValueError("exactly one root joint (parent -1) is required")
        for i, p in enumerate(parent):
            if i != self.root and not 0 <= p < i:
                raise ValueError("parents must precede their children")
        lengths = np.linalg.norm(offsets, axis=1)
        if np.any(np.delete(lengths, self.root) <= 0):
            raise ValueError("bone lengths must be positive")
        if np.any(limits[..., 0] > limits[..., 1]):
            raise ValueError("angle limits need low <= high")
        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "rest_offsets", offsets)
        object.__setattr__(self, "angle_limits", limits)

    @property
    def joint_count(self):
        return len(self.parent)

    @property
    def bone_lengths(self):
        return np.linalg.norm(self.rest_offsets, axis=1)

    def rest_pose(self):
        pose = np.zeros((self.joint_count, 3))
        for i, p in enumerate(self.parent):
            if p >= 0:
                pose[i] = pose[p] + self.rest_offsets[i]
        return pose

    def with_limits(self, limits):
        return replace(self, angle_limits=limits)

    def digest(self):
        h = hashlib.sha256()
        h.update(json.dumps(self.parent).encode())
        h.update(self.rest_offsets.tobytes())
        h.update(self.angle_limits.tobytes())
        return h.hexdigest()[:16]


def _deg(*pairs):
    return np.deg2rad(np.array(pairs, dtype=np.float64))


def h36m_skeleton():
    """17-joint Human3.6M-style skeleton with anthropometric bone lengths (mm).

    The rest pose stands upright facing the camera (person's right on the
    image left). Root limits allow any heading about the vertical axis and
    +-15 degrees of torso tilt.
    """
    names = (
        "pelvis", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle",
        "spine", "thorax", "neck", "head",
        "l_shoulder", "l_elbow", "l_wrist", "r_shoulder", "r_elbow", "r_wrist",
    )
    parent = (-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15)
    offsets = [
        (0, 0, 0),
        (-130, 0, 0), (0, 440, 0), (0, 440, 0),
        (130, 0, 0), (0, 440, 0), (0, 440, 0),
        (0, -230, 0), (0, -250, 0), (0, -110, 0), (0, -115, 0),
        (150, 20, 0), (0, 280, 0), (0, 250, 0),
        (-150, 20, 0), (0, 280, 0), (0, 250, 0),
    ]
    zero = (0, 0)
    tilt = (-15, 15)
    limits = [
        _deg(tilt, (-180, 180), tilt),                  # pelvis: heading + tilt
        _deg((-5, 5), (-10, 10), (-5, 5)),              # r_hip
        _deg((-100, 25), (-20, 20), (-10, 35)),         # r_knee sets thigh
        _deg((0, 120), (-10, 10), zero),                # r_ankle sets shin
        _deg((-5, 5), (-10, 10), (-5, 5)),              # l_hip
        _deg((-100, 25), (-20, 20), (-35, 10)),         # l_knee
        _deg((0, 120), (-10, 10), zero),                # l_ankle
        _deg((-20, 30), (-30, 30), (-20, 20)),          # spine
        _deg((-15, 15), (-20, 20), (-15, 15)),          # thorax
        _deg((-20, 20), (-40, 40), (-20, 20)),          # neck
        _deg((-20, 20), (-20, 20), (-15, 15)),          # head
        _deg((-10, 10), (-10, 10), (-10, 10)),          # l_shoulder
        _deg((-150, 50), (-40, 40), (-140, 15)),        # l_elbow sets upper arm
        _deg((-140, 0), (-20, 20), zero),               # l_wrist sets forearm
        _deg((-10, 10), (-10, 10), (-10, 10)),          # r_shoulder
        _deg((-150, 50), (-40, 40), (-15, 140)),        # r_elbow
        _deg((-140, 0), (-20, 20), zero),               # r_wrist
    ]
    return Skeleton(parent, np.array(offsets, dtype=np.float64), np.stack(limits), names)


def _euler_matrices(angles):
    """Rotation ``Ry(b) @ Rx(a) @ Rz(c)`` for angles ``(..., 3)`` ordered (a, b, c)."""
    a, b, c = angles[..., 0], angles[..., 1], angles[..., 2]
    one, zero = np.ones_like(a), np.zeros_like(a)

    def mat(rows):
        return np.stack([np.stack(r, -1) for r in rows], -2)

    rx = mat([[one, zero, zero], [zero, np.cos(a), -np.sin(a)], [zero, np.sin(a), np.cos(a)]])
    ry = mat([[np.cos(b), zero, np.sin(b)], [zero, one, zero], [-np.sin(b), zero, np.cos(b)]])
    rz = mat([[np.cos(c), -np.sin(c), zero], [np.sin(c), np.cos(c), zero], [zero, zero, one]])
    return ry @ rx @ rz


def forward_kinematics(skeleton, angles):
    """Joint positions ``(..., N, 3)`` for joint angles ``(..., N, 3)``, root at the origin."""
    local = _euler_matrices(np.asarray(angles, dtype=np.float64))
    n = skeleton.joint_count
    shape = local.shape[:-3]
    world = np.empty(shape + (n, 3, 3))
    pos = np.zeros(shape + (n, 3))
    for i, p in enumerate(skeleton.parent):
        if p < 0:
            world[..., i, :, :] = local[..., i, :, :]
            continue
        world[..., i, :, :] = world[..., p, :, :] @ local[..., i, :, :]
        pos[..., i, :] = pos[..., p, :] + world[..., i, :, :] @ skeleton.rest_offsets[i]
    return pos


def _draw_angles(skeleton, rng):
    lo, hi = skeleton.angle_limits[..., 0], skeleton.angle_limits[..., 1]
    return lo + (hi - lo) * rng.random(lo.shape)


def sample_pose(skeleton, rng):
    """One pose by forward kinematics with angles drawn uniformly within limits."""
    return forward_kinematics(skeleton, _draw_angles(skeleton, rng))


def sample_poses(skeleton, count, seed):
    """``count`` poses; sample ``i`` uses its own stream seeded by ``(seed, i)``."""
    angles = np.array([_draw_angles(skeleton, np.random.default_rng([seed, i])) for i in range(count)])
    if count == 0:
        return np.zeros((0, skeleton.joint_count, 3))
    return forward_kinematics(skeleton, angles)


@dataclass(frozen=True)
class Camera:
    mode: str = "orthographic"
    focal: float = 1000.0
    depth_offset: float = 5000.0

    def __post_init__(self):
        if self.mode not in ("orthographic", "perspective"):
            raise ValueError(f"unknown camera mode {self.mode!r}")
        if not self.focal > 0:
            raise ValueError("focal length must be positive")

    def to_dict(self):
        return {"mode": self.mode, "focal": self.focal, "depth_offset": self.depth_offset}


def project(pose, camera):
    """Project camera-frame joints to the image. ``pose`` is ``(..., N, 3)``.

    Orthographic drops z. Perspective returns ``f * (x, y) / z`` and needs
    every z to be positive.
    """
    pose = np.asarray(pose, dtype=np.float64)
    if camera.mode == "orthographic":
        return pose[..., :2].copy()
    z = pose[..., 2:3]
    if np.any(z <= 0):
        raise InvalidGeometryError("joint with non-positive depth under perspective projection")
    return camera.focal * pose[..., :2] / z


@dataclass
class Sample:
    id: str
    input2d: np.ndarray
    target3d: np.ndarray
    applied_theta: float = None

    def __post_init__(self):
        self.input2d = np.asarray(self.input2d, dtype=np.float64)
        self.target3d = np.asarray(self.target3d, dtype=np.float64)
        if self.input2d.shape[0] != self.target3d.shape[0]:
            raise ValidationError(f"sample {self.id}: input and target joint counts differ")

    def __eq__(self, other):
        return (
            isinstance(other, Sample)
            and self.id == other.id
            and self.applied_theta == other.applied_theta
            and np.array_equal(self.input2d, other.input2d)
            and np.array_equal(self.target3d, other.target3d)
        )


@dataclass
class Dataset:
    metadata: dict
    samples: list = field(default_factory=list)

    def __post_init__(self):
        n = self.metadata.get("num_joints")
        ids = set()
        for s in self.samples:
            if n is not None and (s.input2d.shape != (n, 2) or s.target3d.shape != (n, 3)):
                raise ValidationError(f"sample {s.id}: joint count does not match metadata N={n}")
            if s.id in ids:
                raise ValidationError(f"duplicate sample id {s.id}")
            ids.add(s.id)

    def __len__(self):
        return len(self.samples)

    @property
    def num_joints(self):
        return self.metadata["num_joints"]

    @property
    def inputs(self):
        n = self.num_joints
        if not self.samples:
            return np.zeros((0, n, 2))
        return np.stack([s.input2d for s in self.samples])

    @property
    def targets(self):
        n = self.num_joints
        if not self.samples:
            return np.zeros((0, n, 3))
        return np.stack([s.target3d for s in self.samples])

    @property
    def thetas(self):
        return [s.applied_theta for s in self.samples]


def rotate_pairs(inputs, targets, thetas):
    """Rotate 2D inputs and target xy by per-sample angles; z is untouched."""
    r = rotation_matrices2(thetas)
    rt = np.swapaxes(r, -1, -2)
    new_in = inputs @ rt
    new_t = targets.copy()
    new_t[..., :2] = targets[..., :2] @ rt
    return new_in, new_t


def augment(sample, theta):
    """Rotate a sample's input and target xy by ``theta``; record the total angle."""
    x, y = rotate_pairs(sample.input2d[None], sample.target3d[None], np.array([theta]))
    prior = sample.applied_theta or 0.0
    return Sample(sample.id, x[0], y[0], prior + float(theta))


def generate_dataset(skeleton, camera, size, seed, split="train", upright=True, jitter=0.0):
    """Synthetic (2D input, root-aligned 3D target) pairs.

    With ``upright=False`` a uniform in-plane roll is applied to each pose
    before projection. ``jitter`` adds isotropic Gaussian noise (input units)
    to the 2D keypoints.
    """
    poses = sample_poses(skeleton, size, seed)
    rng = np.random.default_rng([seed, size, 7])
    if not upright and size:
        roll = rng.uniform(0.0, 2 * np.pi, size)
        poses = rotate_pairs(poses[..., :2], poses, roll)[1]
    placed = poses + np.array([0.0, 0.0, camera.depth_offset])
    inputs = project(placed, camera)
    if jitter > 0 and size:
        inputs = inputs + rng.normal(0.0, jitter, inputs.shape)
    targets = poses - poses[..., skeleton.root : skeleton.root + 1, :]
    metadata = {
        "num_joints": skeleton.joint_count,
        "input_units": "mm" if camera.mode == "orthographic" else "px",
        "target_units": "mm",
        "skeleton_hash": skeleton.digest(),
        "camera": camera.to_dict(),
        "seed": int(seed),
        "split": split,
        "root_index": skeleton.root,
    }
    samples = [Sample(f"{split}-{i:06d}", inputs[i], targets[i]) for i in range(size)]
    return Dataset(metadata, samples)


def make_rotated_testset(dataset, seed, force_zero=False):
    """Rotate every sample by its own ``theta ~ Uniform[0, 2*pi)``, seeded."""
    rng = np.random.default_rng(seed)
    thetas = rng.uniform(0.0, 2 * np.pi, len(dataset))
    if force_zero:
        thetas = np.zeros(len(dataset))
    samples = [augment(s, t) for s, t in zip(dataset.samples, thetas)]
    metadata = dict(dataset.metadata, split=dataset.metadata.get("split", "test") + "-rotated", rotation_seed=int(seed))
    return Dataset(metadata, samples)


def _sample_to_json(s):
    return {
        "id": s.id,
        "input2d": s.input2d.tolist(),
        "target3d": s.target3d.tolist(),
        "applied_theta": s.applied_theta,
    }


def write_dataset(dataset, path):
    """One JSON object per line: metadata first, then one line per sample."""
    lines = [json.dumps({"metadata": dataset.metadata}, sort_keys=True)]
    lines += [json.dumps(_sample_to_json(s)) for s in dataset.samples]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_dataset(path):
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise DatasetParseError("empty file, missing metadata line", line=1)
    records = []
    for lineno, line in enumerate(lines, start=1):
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DatasetParseError(f"invalid JSON ({exc.msg})", line=lineno) from None
    head = records[0]
    if not isinstance(head, dict) or "metadata" not in head:
        raise DatasetParseError("first line must hold the metadata object", line=1)
    metadata = head["metadata"]
    samples = []
    for lineno, rec in enumerate(records[1:], start=2):
        try:
            theta = rec["applied_theta"]
            s = Sample(rec["id"], np.array(rec["input2d"]), np.array(rec["target3d"]),
                       None if theta is None else float(theta))
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetParseError(f"malformed sample ({exc})", line=lineno) from None
        samples.append(s)
    return Dataset(metadata, samples)
