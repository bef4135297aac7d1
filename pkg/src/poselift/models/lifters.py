"""Vanilla, fully equivariant and hybrid 2D-to-3D lifters.

All lifters take raw 2D keypoints ``(B, N, 2)`` and return 3D joints
``(B, N, 3)`` in target units. Normalization constants are fitted from the
training data and stored with the model:

* ``input_stats``: dataset standardization for non-equivariant branches;
* ``pose_scale``: scalar divisor applied after per-pose centering for
  equivariant branches (this preprocessing commutes with rotations);
* ``target_scale``: scalar target unit, so the network regresses O(1) values.
"""

from dataclasses import asdict, dataclass, fields

import numpy as np

from ..geometry import StandardizationStats, compute_stats
from ..nn import BatchNorm1d, Dropout, Linear, Module, ReLU, ResidualBlock, Sequential, Tensor, concat
from .vn import VNLayer, VNLinear, invariant_features

__all__ = [
    "ModelSpec",
    "LifterModel",
    "VanillaLifter",
    "EquivariantLifter",
    "HybridLifter",
    "ResidualMLP",
    "build_model",
    "count_parameters",
    "KINDS",
    "HYBRID_MODES",
]

KINDS = ("vanilla", "fully_equivariant", "hybrid")
HYBRID_MODES = ("parallel", "first_layer_features")
CONSTRUCTIONS = ("native", "random_third")


@dataclass
class ModelSpec:
    """Architecture description; enough to rebuild a model from a checkpoint."""

    kind: str = "vanilla"
    num_joints: int = 17
    hybrid_mode: str = "parallel"
    width: int = 128
    blocks: int = 2
    dropout: float = 0.2
    channels: int = 32
    vn_layers: int = 3
    zhead_width: int = 96
    zhead_layers: int = 2
    construction: str = "native"
    standardization: str = "isotropic"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.hybrid_mode not in HYBRID_MODES:
            raise ValueError(f"unknown hybrid mode {self.hybrid_mode!r}")
        if self.construction not in CONSTRUCTIONS:
            raise ValueError(f"unknown construction {self.construction!r}")
        if self.standardization not in ("isotropic", "per-coordinate"):
            raise ValueError(f"unknown standardization {self.standardization!r}")
        if self.standardization == "per-coordinate" and self.kind != "vanilla":
            raise ValueError("per-coordinate standardization is only allowed for vanilla models")
        if self.num_joints < 2:
            raise ValueError("num_joints must be >= 2")
        if self.vn_layers < 1 or self.blocks < 0:
            raise ValueError("need at least one VN layer and a non-negative block count")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


class ResidualMLP(Module):
    """Input linear layer, ``blocks`` residual blocks, output linear layer."""

    def __init__(self, in_dim, out_dim, width, blocks, dropout, rng):
        super().__init__()
        self.stem = Sequential(Linear(in_dim, width, rng), BatchNorm1d(width), ReLU(), Dropout(dropout, rng))
        self.blocks = Sequential(*[ResidualBlock(width, dropout, rng) for _ in range(blocks)])
        self.head = Linear(width, out_dim, rng)

    def forward(self, x):
        return self.head(self.blocks(self.stem(x)))


class VNStack(Module):
    """Chain of VN layers; remembers the first layer's output for the hybrid ablation."""

    def __init__(self, in_channels, channels, layers, rng):
        super().__init__()
        sizes = [in_channels] + [channels] * layers
        self.layers = Sequential(*[VNLayer(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])])

    def forward(self, features):
        first = None
        for layer in self.layers._modules.values():
            features = layer(features)
            if first is None:
                first = features
        return features, first


class LifterModel(Module):
    """Common normalization and inference plumbing for every lifter kind."""

    kind = None

    def __init__(self, spec):
        super().__init__()
        self.spec = spec
        self.num_joints = spec.num_joints
        self.input_stats = StandardizationStats.identity()
        self.pose_scale = 1.0
        self.target_scale = 1.0

    # normalization

    def fit_normalization(self, inputs, targets):
        inputs = np.asarray(inputs, dtype=np.float64)
        targets = np.asarray(targets, dtype=np.float64)
        self.input_stats = compute_stats(inputs, self.spec.standardization)
        centered = inputs - inputs.mean(axis=-2, keepdims=True)
        self.pose_scale = float(np.sqrt(np.mean(np.sum(centered**2, axis=-1))))
        self.target_scale = float(np.sqrt(np.mean(np.sum(targets**2, axis=-1))))
        if not (self.pose_scale > 0 and self.target_scale > 0):
            raise ValueError("degenerate training data: zero pose or target scale")

    def normalization_dict(self):
        return {
            "input_stats": self.input_stats.to_dict(),
            "pose_scale": self.pose_scale,
            "target_scale": self.target_scale,
        }

    def load_normalization(self, d):
        self.input_stats = StandardizationStats.from_dict(d["input_stats"])
        self.pose_scale = float(d["pose_scale"])
        self.target_scale = float(d["target_scale"])

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[1:] != (self.num_joints, 2):
            raise ValueError(f"expected poses of shape (B, {self.num_joints}, 2), got {x.shape}")
        return x

    def _standardized_flat(self, x):
        z = (x - self.input_stats.center) / self.input_stats.scale
        return Tensor(z.reshape(len(z), -1))

    def _centered(self, x):
        return Tensor((x - x.mean(axis=1, keepdims=True)) / self.pose_scale)

    # inference

    def forward(self, x):
        """Network output in target-scale units, shape ``(B, N, 3)`` (a Tensor)."""
        raise NotImplementedError

    def predict(self, poses):
        """Evaluation-mode forward on raw 2D keypoints; returns target units."""
        was_training = self.training
        self.eval()
        try:
            x = self._check_input(poses)
            out = self(x).data * self.target_scale
        finally:
            self.train(was_training)
        return out[0] if np.ndim(poses) == 2 else out


class VanillaLifter(LifterModel):
    """Residual MLP on the flattened standardized 2D pose."""

    kind = "vanilla"

    def __init__(self, spec, rng):
        super().__init__(spec)
        n = spec.num_joints
        self.mlp = ResidualMLP(2 * n, 3 * n, spec.width, spec.blocks, spec.dropout, rng)

    def forward(self, x):
        x = self._check_input(x)
        return self.mlp(self._standardized_flat(x)).reshape(len(x), self.num_joints, 3)


class EquivariantLifter(LifterModel):
    """Exactly rotation-equivariant lifter built from vector-neuron layers.

    ``native``: one 2D vector per joint; xy from a VN-linear head, depth from
    an MLP over Gram-matrix invariants of the last VN feature.
    ``random_third``: each joint is padded with a fixed random third
    coordinate and processed as 3D vectors; both xy and z come from the
    VN head.
    """

    kind = "fully_equivariant"

    def __init__(self, spec, rng):
        super().__init__(spec)
        n, c = spec.num_joints, spec.channels
        self.vn = VNStack(n, c, spec.vn_layers, rng)
        self.xy_head = VNLinear(c, n, rng)
        if spec.construction == "native":
            layers, d = [], c * (c + 1) // 2
            for _ in range(spec.zhead_layers):
                layers += [Linear(d, spec.zhead_width, rng), ReLU()]
                d = spec.zhead_width
            layers.append(Linear(d, n, rng))
            self.z_head = Sequential(*layers)
        else:
            self.register_buffer("third_coordinate", rng.standard_normal(n))

    def features(self, x):
        feats = self._centered(x)
        if self.spec.construction == "random_third":
            pad = np.broadcast_to(self.third_coordinate, (len(x), self.num_joints))[..., None]
            feats = Tensor(np.concatenate([feats.data, pad], axis=-1))
        return self.vn(feats)

    def forward(self, x):
        x = self._check_input(x)
        feats, _ = self.features(x)
        if self.spec.construction == "random_third":
            return self.xy_head(feats)
        xy = self.xy_head(feats)
        z = self.z_head(invariant_features(feats))
        return concat([xy, z.reshape(len(x), self.num_joints, 1)], axis=-1)


class HybridLifter(LifterModel):
    """Equivariant xy branch plus an unconstrained residual-MLP depth branch.

    In ``parallel`` mode the depth branch reads the standardized 2D pose; in
    ``first_layer_features`` mode it reads the flattened output of the first
    VN layer of the equivariant branch.
    """

    kind = "hybrid"

    def __init__(self, spec, rng):
        super().__init__(spec)
        n, c = spec.num_joints, spec.channels
        self.vn = VNStack(n, c, spec.vn_layers, rng)
        self.xy_head = VNLinear(c, n, rng)
        in_dim = 2 * n if spec.hybrid_mode == "parallel" else 2 * c
        self.z_branch = ResidualMLP(in_dim, n, spec.width, spec.blocks, spec.dropout, rng)

    def forward(self, x):
        x = self._check_input(x)
        feats, first = self.vn(self._centered(x))
        xy = self.xy_head(feats)
        if self.spec.hybrid_mode == "parallel":
            z_in = self._standardized_flat(x)
        else:
            z_in = first.reshape(len(x), -1)
        z = self.z_branch(z_in)
        return concat([xy, z.reshape(len(x), self.num_joints, 1)], axis=-1)


_CLASSES = {"vanilla": VanillaLifter, "fully_equivariant": EquivariantLifter, "hybrid": HybridLifter}


def build_model(spec, seed=0):
    """Instantiate the lifter described by ``spec`` with seeded initialization."""
    if isinstance(spec, dict):
        spec = ModelSpec.from_dict(spec)
    rng = np.random.default_rng(seed)
    return _CLASSES[spec.kind](spec, rng)


def count_parameters(model):
    return int(sum(p.size for p in model.parameters()))
