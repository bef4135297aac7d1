"""Differentiable layer primitives with hand-written backward passes."""

import numpy as np

from ..errors import NumericalError
from .autograd import Tensor, as_tensor

__all__ = ["linear", "relu", "batch_norm", "dropout", "mse_loss"]


def linear(x, weight, bias=None):
    """``x @ weight.T + bias`` for ``x`` of shape ``(B, D_in)`` and ``weight`` ``(D_out, D_in)``."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    out = x.data @ weight.data.T
    parents = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise ValueError(f"linear: bias shape {bias.shape} != ({weight.shape[0]},)")
        out = out + bias.data
        parents = parents + (bias,)

    def bw(g):
        grads = (g @ weight.data, g.T @ x.data)
        if bias is not None:
            grads = grads + (g.sum(axis=0),)
        return grads

    return Tensor(out, _parents=parents, _backward=bw, op="linear")


def relu(x):
    return as_tensor(x).relu()


def batch_norm(x, gamma, beta, running_mean, running_var, training, momentum=0.1, eps=1e-5):
    """Batch normalization over axis 0 of a ``(B, D)`` input.

    In training mode the batch statistics are used and the running
    estimates (numpy arrays) are updated in place; in evaluation mode the
    running estimates are used.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim != 2 or x.shape[1] != gamma.shape[0]:
        raise ValueError(f"batch_norm: input {x.shape} does not match {gamma.shape[0]} features")
    if training:
        n = x.shape[0]
        mu = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu) * inv_std
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        unbiased = var * n / (n - 1) if n > 1 else var
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased

        def bw(g):
            gxhat = g * gamma.data
            gx = inv_std * (gxhat - gxhat.mean(axis=0) - xhat * (gxhat * xhat).mean(axis=0))
            return gx, (g * xhat).sum(axis=0), g.sum(axis=0)

    else:
        inv_std = 1.0 / np.sqrt(running_var + eps)
        xhat = (x.data - running_mean) * inv_std

        def bw(g):
            return g * gamma.data * inv_std, (g * xhat).sum(axis=0), g.sum(axis=0)

    out = xhat * gamma.data + beta.data
    return Tensor(out, _parents=(x, gamma, beta), _backward=bw, op="batch_norm")


def dropout(x, rate, rng, training):
    """Inverted dropout: survivors are scaled by ``1 / (1 - rate)``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return Tensor(x.data * mask, _parents=(x,), _backward=lambda g: (g * mask,), op="dropout")


def mse_loss(pred, target):
    """Mean over all elements of the squared difference."""
    pred = as_tensor(pred)
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"mse_loss: shape mismatch {pred.shape} vs {target.shape}")
    diff = pred.data - target
    value = np.mean(diff * diff)
    if not np.isfinite(value):
        raise NumericalError("loss is not finite")
    scale = 2.0 / diff.size

    def bw(g):
        return (g * scale * diff,)

    return Tensor(value, _parents=(pred,), _backward=bw, op="mse_loss")
