"""Lifter model families and the vector-neuron layers they are built from."""

from .lifters import (
    HYBRID_MODES,
    KINDS,
    EquivariantLifter,
    HybridLifter,
    LifterModel,
    ModelSpec,
    ResidualMLP,
    VanillaLifter,
    build_model,
    count_parameters,
)
from .vn import VNLayer, VNLinear, invariant_features, vn_linear, vn_nonlinearity

__all__ = [
    "HYBRID_MODES", "KINDS", "EquivariantLifter", "HybridLifter", "LifterModel", "ModelSpec",
    "ResidualMLP", "VanillaLifter", "build_model", "count_parameters",
    "VNLayer", "VNLinear", "invariant_features", "vn_linear", "vn_nonlinearity",
    "vanilla_forward", "equivariant_forward", "hybrid_forward",
]


def _forward_kind(model, pose, kind):
    if model.kind != kind:
        raise ValueError(f"expected a {kind} model, got {model.kind}")
    return model.predict(pose)


def vanilla_forward(model, pose):
    return _forward_kind(model, pose, "vanilla")


def equivariant_forward(model, pose):
    return _forward_kind(model, pose, "fully_equivariant")


def hybrid_forward(model, pose):
    return _forward_kind(model, pose, "hybrid")
