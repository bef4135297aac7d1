"""Module containers and the standard layers used by the lifters."""

from collections import OrderedDict

import numpy as np

from . import functional as F
from .autograd import Tensor, scope

__all__ = [
    "Parameter",
    "Module",
    "Linear",
    "BatchNorm1d",
    "Dropout",
    "ReLU",
    "Sequential",
    "ResidualBlock",
    "kaiming_uniform",
]


class Parameter(Tensor):
    """A trainable leaf tensor that also carries its Adam moment estimates."""

    __slots__ = ("m", "v")

    def __init__(self, data):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True)
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter(shape={self.shape})"


def kaiming_uniform(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Minimal module tree: parameters, buffers and submodules in definition order."""

    def __init__(self):
        object.__setattr__(self, "_params", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())
        object.__setattr__(self, "_buffers", OrderedDict())
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
            object.__setattr__(value, "_label", name)
        object.__setattr__(self, name, value)

    def register_buffer(self, name, array):
        self._buffers[name] = name
        object.__setattr__(self, name, np.asarray(array, dtype=np.float64))

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        with scope(getattr(self, "_label", type(self).__name__)):
            return self.forward(*args, **kwargs)

    def named_parameters(self, prefix=""):
        for name, p in self._params.items():
            yield prefix + name, p
        for mname, m in self._modules.items():
            yield from m.named_parameters(prefix + mname + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for name in self._buffers:
            yield prefix + name, getattr(self, name)
        for mname, m in self._modules.items():
            yield from m.named_buffers(prefix + mname + ".")

    def modules(self):
        yield self
        for m in self._modules.values():
            yield from m.modules()

    def train(self, mode=True):
        for m in self.modules():
            object.__setattr__(m, "training", mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        state = OrderedDict()
        for name, p in self.named_parameters():
            state[name] = p.data
        for name, b in self.named_buffers():
            state[name] = b
        return state

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        expected = set(params) | set(buffers)
        if set(state) != expected:
            missing = sorted(expected - set(state))
            extra = sorted(set(state) - expected)
            raise KeyError(f"state mismatch: missing {missing}, unexpected {extra}")
        for name, value in state.items():
            value = np.asarray(value, dtype=np.float64)
            target = params[name].data if name in params else buffers[name]
            if target.shape != value.shape:
                raise ValueError(f"{name}: shape {value.shape} != {target.shape}")
            target[...] = value


class Linear(Module):
    def __init__(self, in_features, out_features, rng, bias=True):
        super().__init__()
        self.weight = Parameter(kaiming_uniform(rng, (out_features, in_features), in_features))
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class BatchNorm1d(Module):
    def __init__(self, features, momentum=0.1, eps=1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(np.ones(features))
        self.beta = Parameter(np.zeros(features))
        self.register_buffer("running_mean", np.zeros(features))
        self.register_buffer("running_var", np.ones(features))

    def forward(self, x):
        return F.batch_norm(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            self.training, self.momentum, self.eps,
        )


class Dropout(Module):
    def __init__(self, rate, rng):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng

    def forward(self, x):
        return F.dropout(x, self.rate, self.rng, self.training)


class ReLU(Module):
    def forward(self, x):
        return F.relu(x)


class Sequential(Module):
    def __init__(self, *layers):
        super().__init__()
        for i, layer in enumerate(layers):
            setattr(self, str(i), layer)

    def forward(self, x):
        for layer in self._modules.values():
            x = layer(x)
        return x


class ResidualBlock(Module):
    """Two rounds of linear -> batch-norm -> relu -> dropout plus a skip connection."""

    def __init__(self, width, dropout, rng):
        super().__init__()
        self.body = Sequential(
            Linear(width, width, rng), BatchNorm1d(width), ReLU(), Dropout(dropout, rng),
            Linear(width, width, rng), BatchNorm1d(width), ReLU(), Dropout(dropout, rng),
        )

    def forward(self, x):
        return x + self.body(x)
