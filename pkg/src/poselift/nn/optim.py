"""Adam optimizer and the exponential learning-rate schedule."""

from dataclasses import asdict, dataclass

import numpy as np

__all__ = ["TrainConfig", "lr_at_epoch", "adam_step", "Adam"]


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    gamma: float = 0.96
    epochs: int = 100
    batch_size: int = 256
    seed: int = 0
    dropout_rate: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")

    def to_dict(self):
        return asdict(self)


def lr_at_epoch(config, epoch):
    """Learning rate after ``epoch`` decays: ``learning_rate * gamma ** epoch``."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return config.learning_rate * config.gamma**epoch


def adam_step(params, step_index, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update applied in place to every parameter with a gradient.

    Moments live on the parameters themselves (``p.m``, ``p.v``).
    """
    if step_index < 1:
        raise ValueError("step_index starts at 1")
    c1 = 1.0 - beta1**step_index
    c2 = 1.0 - beta2**step_index
    for p in params:
        g = p.grad
        if g is None:
            continue
        p.m *= beta1
        p.m += (1.0 - beta1) * g
        p.v *= beta2
        p.v += (1.0 - beta2) * (g * g)
        p.data -= lr * (p.m / c1) / (np.sqrt(p.v / c2) + eps)


class Adam:
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.step_count = 0

    def step(self):
        self.step_count += 1
        adam_step(self.params, self.step_count, self.lr, *self.betas, self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
