"""Vector-neuron layers acting on lists of 2D (or 3D) vectors.

A feature has shape ``(B, C, d)``: ``C`` channels per sample, each a
``d``-vector. Rotations act on the right, ``V @ R.T``; every layer here
only mixes channels or uses inner products, so it commutes with that
action exactly.
"""

import numpy as np

from ..nn import Module, Parameter, einsum, where
from ..nn.layers import kaiming_uniform

__all__ = [
    "vn_linear",
    "vn_nonlinearity",
    "invariant_features",
    "VNLinear",
    "VNLayer",
    "VN_EPS",
]

VN_EPS = 1e-8


def vn_linear(features, weight):
    """Channel mixing ``weight @ V`` for ``V`` of shape ``(B, C, d)``; no bias."""
    if weight.shape[-1] != features.shape[-2]:
        raise ValueError(f"vn_linear: weight {weight.shape} vs features {features.shape}")
    return einsum("oc,bcd->bod", weight, features)


def vn_nonlinearity(features, direction_weight, eps=VN_EPS):
    """Vector ReLU with a learned direction per channel.

    For each channel ``q`` with direction ``k = (direction_weight @ V)_c``:
    keep ``q`` when ``<q, k> >= 0``, otherwise remove its component along ``k``.
    """
    k = vn_linear(features, direction_weight)
    dot = (features * k).sum(axis=-1, keepdims=True)
    k_norm2 = (k * k).sum(axis=-1, keepdims=True)
    projected = features - (dot / (k_norm2 + eps)) * k
    return where(dot.data >= 0, features, projected)


def invariant_features(features):
    """Upper triangle (diagonal included) of the Gram matrix ``V V^T``, shape ``(B, C(C+1)/2)``."""
    c = features.shape[-2]
    gram = einsum("bcd,bed->bce", features, features)
    iu = np.triu_indices(c)
    return gram[(slice(None),) + iu]


class VNLinear(Module):
    def __init__(self, in_channels, out_channels, rng):
        super().__init__()
        self.weight = Parameter(kaiming_uniform(rng, (out_channels, in_channels), in_channels))

    def forward(self, features):
        return vn_linear(features, self.weight)


class VNLayer(Module):
    """VN-linear followed by the vector ReLU."""

    def __init__(self, in_channels, out_channels, rng):
        super().__init__()
        self.linear = VNLinear(in_channels, out_channels, rng)
        self.direction = Parameter(kaiming_uniform(rng, (out_channels, out_channels), out_channels))

    def forward(self, features):
        return vn_nonlinearity(self.linear(features), self.direction)
