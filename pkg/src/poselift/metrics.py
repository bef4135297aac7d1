"""Protocol 1 / Protocol 2 pose errors, the equivariance diagnostic, and seed aggregation."""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .geometry import root_align, rotation_matrices2, similarity_align_batch

__all__ = [
    "MetricReport",
    "mpjpe",
    "pa_mpjpe",
    "equivariance_error",
    "evaluate",
    "aggregate",
    "reports_to_csv",
    "reports_to_text",
]


def _pair(gt, pred):
    gt = np.asarray(gt, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if gt.shape != pred.shape:
        raise ValueError(f"joint sets differ in shape: {gt.shape} vs {pred.shape}")
    return gt, pred


def mpjpe(gt, pred):
    """Mean Euclidean distance between corresponding joints.

    Accepts ``(N, 3)`` (returns a float) or ``(B, N, 3)`` (returns ``(B,)``).
    """
    gt, pred = _pair(gt, pred)
    err = np.linalg.norm(gt - pred, axis=-1).mean(axis=-1)
    return float(err) if err.ndim == 0 else err


def pa_mpjpe(gt, pred):
    """MPJPE after the optimal similarity alignment of ``pred`` onto ``gt``."""
    gt, pred = _pair(gt, pred)
    single = gt.ndim == 2
    if single:
        gt, pred = gt[None], pred[None]
    aligned = similarity_align_batch(pred, gt)[3]
    err = mpjpe(gt, aligned)
    return float(err[0]) if single else err


def equivariance_error(model, X, theta, mask=None):
    """Geometric-consistency residual of ``model`` at ``(X, theta)``.

    ``mpjpe(f(X R^T), f(X) blockdiag(R^T, 1))``. ``mask`` selects output
    columns (``"xy"`` or ``"z"``) for a partial audit. ``X`` may be batched,
    with ``theta`` scalar or one angle per sample.
    """
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 2
    if single:
        X = X[None]
    thetas = np.broadcast_to(np.asarray(theta, dtype=np.float64), (len(X),))
    r = rotation_matrices2(thetas)
    rt = np.swapaxes(r, -1, -2)
    out = model.predict(X)
    out_rot = model.predict(X @ rt)
    expected = out.copy()
    expected[..., :2] = out[..., :2] @ rt
    cols = {None: slice(None), "xy": slice(0, 2), "z": slice(2, 3)}[mask]
    err = np.linalg.norm(out_rot[..., cols] - expected[..., cols], axis=-1).mean(axis=-1)
    return float(err[0]) if single else err


@dataclass
class MetricReport:
    protocol1_mean: float
    protocol2_mean: float
    equivariance_error_mean: float
    sample_count: int
    split: str
    label: str = ""
    per_seed: list = field(default_factory=list)
    std: dict = None

    def to_dict(self):
        return {
            "label": self.label,
            "split": self.split,
            "sample_count": self.sample_count,
            "protocol1_mean": self.protocol1_mean,
            "protocol2_mean": self.protocol2_mean,
            "equivariance_error_mean": self.equivariance_error_mean,
            "per_seed": self.per_seed,
            "std": self.std,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["protocol1_mean"], d["protocol2_mean"], d["equivariance_error_mean"],
            d["sample_count"], d["split"], d.get("label", ""), d.get("per_seed", []), d.get("std"),
        )


def evaluate(model, dataset, protocol2=True, equivariance_angles=1, seed=0, root_index=None, batch_size=1024):
    """Per-sample Protocol 1/2 errors and equivariance residuals, averaged.

    Predictions are root-aligned before both protocols. The equivariance
    term uses ``equivariance_angles`` random angles per sample (0 disables it).
    """
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    if root_index is None:
        root_index = dataset.metadata.get("root_index", 0)
    X, Y = dataset.inputs, dataset.targets
    preds = np.concatenate([model.predict(X[i : i + batch_size]) for i in range(0, len(X), batch_size)])
    preds = root_align(preds, root_index)
    p1 = mpjpe(Y, preds)
    p2 = pa_mpjpe(Y, preds) if protocol2 else np.zeros_like(p1)
    eq = 0.0
    if equivariance_angles > 0:
        rng = np.random.default_rng(seed)
        vals = []
        for _ in range(equivariance_angles):
            thetas = rng.uniform(0.0, 2 * np.pi, len(X))
            vals.append(equivariance_error(model, X, thetas))
        eq = float(np.mean(vals))
    return MetricReport(
        protocol1_mean=float(np.mean(p1)),
        protocol2_mean=float(np.mean(p2)),
        equivariance_error_mean=eq,
        sample_count=len(dataset),
        split=dataset.metadata.get("split", ""),
    )


def aggregate(reports, label=None):
    """Mean over per-seed reports; sample (n-1) standard deviation when n >= 2."""
    if not reports:
        raise ValueError("nothing to aggregate")
    keys = ("protocol1_mean", "protocol2_mean", "equivariance_error_mean")
    values = {k: np.array([getattr(r, k) for r in reports]) for k in keys}
    std = None
    if len(reports) >= 2:
        std = {k: float(np.std(v, ddof=1)) for k, v in values.items()}
    return MetricReport(
        protocol1_mean=float(values["protocol1_mean"].mean()),
        protocol2_mean=float(values["protocol2_mean"].mean()),
        equivariance_error_mean=float(values["equivariance_error_mean"].mean()),
        sample_count=reports[0].sample_count,
        split=reports[0].split,
        label=label if label is not None else reports[0].label,
        per_seed=[{k: float(getattr(r, k)) for k in keys} for r in reports],
        std=std,
    )


TABLE_COLUMNS = (
    ("Original P1", "original", "protocol1_mean"),
    ("Rotated P1", "rotated", "protocol1_mean"),
    ("Original P2", "original", "protocol2_mean"),
    ("Rotated P2", "rotated", "protocol2_mean"),
)


def _cell(report, key):
    if report.std is None:
        return f"{getattr(report, key):.1f}"
    return f"{getattr(report, key):.1f} ± {report.std[key]:.1f}"


def reports_to_csv(rows):
    """``rows`` maps a row label to ``{"original": MetricReport, "rotated": MetricReport}``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["model"]
    for name, _, _ in TABLE_COLUMNS:
        header += [name, name + " std"]
    w.writerow(header)
    for label, pair in rows.items():
        line = [label]
        for _, split, key in TABLE_COLUMNS:
            rep = pair[split]
            line.append(repr(getattr(rep, key)))
            line.append("" if rep.std is None else repr(rep.std[key]))
        w.writerow(line)
    return buf.getvalue()


def reports_to_text(rows):
    """Aligned-column table with one row per model/regime."""
    header = ["Model"] + [name for name, _, _ in TABLE_COLUMNS]
    body = [[label] + [_cell(pair[split], key) for _, split, key in TABLE_COLUMNS] for label, pair in rows.items()]
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    fmt = lambda r: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
    lines = [fmt(header), "  ".join("-" * w for w in widths)] + [fmt(r) for r in body]
    return "\n".join(lines) + "\n"
