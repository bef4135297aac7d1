"""Mini-batch training of a lifter with MSE, Adam and exponential LR decay."""

import time
from dataclasses import dataclass, field

import numpy as np

from .data import rotate_pairs
from .errors import NumericalError
from .models import build_model
from .nn import Adam, backward, lr_at_epoch, mse_loss

__all__ = ["EpochRecord", "TrainResult", "train_model"]


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    lr: float
    wall_time: float

    def to_line(self):
        return f"epoch={self.epoch} loss={self.loss!r} lr={self.lr!r} wall_time={self.wall_time:.3f}"


@dataclass
class TrainResult:
    model: object
    optimizer: Adam
    history: list = field(default_factory=list)


def train_model(spec, dataset, config, augment=False, log=None, on_batch=None):
    """Train a freshly initialized ``spec`` model on ``dataset``.

    ``augment`` rotates each sample's input and target xy by a fresh
    ``theta ~ Uniform[0, 2*pi)`` every epoch. ``log`` receives one
    :class:`EpochRecord` per epoch; ``on_batch(epoch, batch, inputs, targets)``
    sees every batch actually fed to the model.
    """
    inputs, targets = dataset.inputs, dataset.targets
    if len(inputs) == 0:
        raise ValueError("training set is empty")
    model = build_model(spec, seed=config.seed)
    model.fit_normalization(inputs, targets)
    model.train()
    params = model.parameters()
    opt = Adam(params, lr=config.learning_rate)
    order_rng = np.random.default_rng([config.seed, 1])
    aug_rng = np.random.default_rng([config.seed, 2])
    history = []
    n = len(inputs)
    bs = config.batch_size
    for epoch in range(config.epochs):
        start = time.perf_counter()
        opt.lr = lr_at_epoch(config, epoch)
        perm = order_rng.permutation(n)
        x_all, y_all = inputs[perm], targets[perm]
        if augment:
            x_all, y_all = rotate_pairs(x_all, y_all, aug_rng.uniform(0.0, 2 * np.pi, n))
        y_all = y_all / model.target_scale
        losses, weights = [], []
        for b, lo in enumerate(range(0, n, bs)):
            x, y = x_all[lo : lo + bs], y_all[lo : lo + bs]
            if len(x) < 2 and n > 1:
                # a single-sample batch has no batch-norm statistics
                continue
            if on_batch is not None:
                on_batch(epoch, b, x, y)
            opt.zero_grad()
            try:
                # overflow surfaces as a NumericalError below, so silence numpy's warnings
                with np.errstate(over="ignore", invalid="ignore"):
                    loss = mse_loss(model(x), y)
                    backward(loss)
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch} batch {b}: {exc}") from exc
            opt.step()
            losses.append(loss.item())
            weights.append(len(x))
        record = EpochRecord(epoch, float(np.average(losses, weights=weights)), opt.lr, time.perf_counter() - start)
        history.append(record)
        if log is not None:
            log(record)
    model.eval()
    return TrainResult(model, opt, history)
