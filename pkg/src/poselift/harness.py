"""Experiment orchestration: data generation, training, evaluation, audits, timing, reports.

Every command takes an :class:`ExperimentConfig` and works inside one output
directory::

    <out>/data/{train,test_original,test_rotated}.jsonl
    <out>/runs/<label>/seed<k>/{checkpoint.json,train.log}
    <out>/eval/<label>.{json,csv,txt}
    <out>/audit/<label>.json
    <out>/bench/<label>.json
    <out>/report.md

A row label names the model family and regime, e.g. ``vanilla+aug`` or
``hybrid_first_layer``.
"""

import json
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .data import Camera, generate_dataset, h36m_skeleton, make_rotated_testset, read_dataset, write_dataset
from .errors import ValidationError
from .metrics import MetricReport, aggregate, equivariance_error, evaluate, reports_to_csv, reports_to_text
from .models import ModelSpec, build_model
from .nn import TrainConfig
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .training import train_model

__all__ = [
    "ExperimentConfig",
    "MODEL_ALIASES",
    "HYBRID_MODE_ALIASES",
    "STANDARD_ROWS",
    "ABLATION_ROWS",
    "parse_config_text",
    "load_config_file",
    "row_label",
    "load_model",
    "cmd_gen_data",
    "cmd_train",
    "cmd_eval",
    "cmd_audit",
    "cmd_bench",
    "cmd_report",
    "report_markdown",
    "ordering_checks",
    "run_matrix",
]

MODEL_ALIASES = {
    "vanilla": "vanilla",
    "equi": "fully_equivariant",
    "fully_equivariant": "fully_equivariant",
    "hybrid": "hybrid",
}
HYBRID_MODE_ALIASES = {
    "parallel": "parallel",
    "first-layer": "first_layer_features",
    "first_layer": "first_layer_features",
    "first_layer_features": "first_layer_features",
}

STANDARD_ROWS = (
    "vanilla",
    "vanilla+aug",
    "fully_equivariant",
    "fully_equivariant+aug",
    "hybrid",
    "hybrid+aug",
)
ABLATION_ROWS = ("hybrid_first_layer",)


@dataclass
class ExperimentConfig:
    """Flat experiment description; every field is a config-file key and a CLI flag.

    Empty dataset paths default to ``<out>/data/<split>.jsonl``.
    """

    out: str = "experiment"
    train_path: str = ""
    test_original_path: str = ""
    test_rotated_path: str = ""
    model: str = "vanilla"
    hybrid_mode: str = "parallel"
    aug: bool = False
    seeds: tuple = (0, 1, 2)
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    gamma: float = 0.96
    dropout: float = 0.2
    data_seed: int = 0
    train_size: int = 5000
    test_size: int = 2000
    camera: str = "orthographic"
    focal: float = 1000.0
    depth_offset: float = 5000.0
    num_angles: int = 10
    audit_seed: int = 0
    force_zero: bool = False
    bench_samples: int = 1000
    rows: tuple = STANDARD_ROWS
    workers: int = 1

    def __post_init__(self):
        if self.model not in MODEL_ALIASES:
            raise ValidationError(f"unknown model {self.model!r}; choose from {sorted(MODEL_ALIASES)}")
        if self.hybrid_mode not in HYBRID_MODE_ALIASES:
            raise ValidationError(f"unknown hybrid mode {self.hybrid_mode!r}")
        self.seeds = tuple(int(s) for s in self.seeds)
        self.rows = tuple(self.rows)
        if not self.seeds:
            raise ValidationError("seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValidationError("seeds must be distinct")
        if self.train_size < 0 or self.test_size < 0:
            raise ValidationError("dataset sizes must be >= 0")
        if self.num_angles < 1 or self.bench_samples < 1 or self.workers < 1:
            raise ValidationError("num_angles, bench_samples and workers must be >= 1")
        try:
            self.train_config(self.seeds[0])
            Camera(self.camera, self.focal, self.depth_offset)
        except ValueError as exc:
            raise ValidationError(str(exc)) from None

    # derived values

    @property
    def kind(self):
        return MODEL_ALIASES[self.model]

    @property
    def mode(self):
        return HYBRID_MODE_ALIASES[self.hybrid_mode]

    @property
    def label(self):
        return row_label(self.kind, self.mode, self.aug)

    def path(self, *parts):
        return Path(self.out).joinpath(*parts)

    def data_paths(self):
        return {
            "train": Path(self.train_path) if self.train_path else self.path("data", "train.jsonl"),
            "test_original": Path(self.test_original_path) if self.test_original_path
            else self.path("data", "test_original.jsonl"),
            "test_rotated": Path(self.test_rotated_path) if self.test_rotated_path
            else self.path("data", "test_rotated.jsonl"),
        }

    def run_dir(self, label=None, seed=None):
        d = self.path("runs", label or self.label)
        return d if seed is None else d / f"seed{seed}"

    def train_config(self, seed):
        return TrainConfig(self.learning_rate, self.gamma, self.epochs, self.batch_size, seed, self.dropout)

    def model_spec(self, num_joints):
        return ModelSpec(kind=self.kind, num_joints=num_joints, hybrid_mode=self.mode, dropout=self.dropout)

    def to_dict(self):
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        d["rows"] = list(self.rows)
        return d


def row_label(kind, hybrid_mode="parallel", aug=False):
    base = kind
    if kind == "hybrid" and hybrid_mode == "first_layer_features":
        base = "hybrid_first_layer"
    return base + ("+aug" if aug else "")


def _label_settings(label):
    """Inverse of :func:`row_label`: config overrides that produce ``label``."""
    base, _, suffix = label.partition("+")
    if suffix not in ("", "aug"):
        raise ValidationError(f"unrecognized row label {label!r}")
    if base == "hybrid_first_layer":
        return {"model": "hybrid", "hybrid_mode": "first-layer", "aug": bool(suffix)}
    if base not in MODEL_ALIASES:
        raise ValidationError(f"unrecognized row label {label!r}")
    return {"model": base, "hybrid_mode": "parallel", "aug": bool(suffix)}


# config files


_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True, "false": False, "no": False, "off": False, "0": False}


def _field_types():
    return {f.name: f.type for f in fields(ExperimentConfig)}


def parse_value(key, text):
    """Convert the string ``text`` to the type of config field ``key``."""
    types = _field_types()
    if key not in types:
        raise ValidationError(f"unknown config key {key!r}")
    kind = types[key]
    text = text.strip()
    try:
        if kind is bool:
            return _BOOL_WORDS[text.lower()]
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is tuple:
            items = [t for t in text.replace(",", " ").split() if t]
            return tuple(int(t) for t in items) if key == "seeds" else tuple(items)
    except (KeyError, ValueError):
        raise ValidationError(f"bad value for {key}: {text!r}") from None
    return text


def parse_config_text(text):
    """``key = value`` lines; ``#`` starts a comment; dashes in keys read as underscores."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        try:
            values[key] = parse_value(key, value)
        except ValidationError as exc:
            raise ValidationError(f"config line {lineno}: {exc}") from None
    return values


def load_config_file(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text)


# shared helpers


def _read(path, what):
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{what} dataset not found: {path}")
    return read_dataset(path)


def _write_json(path, payload):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _checkpoints(cfg, label):
    paths = [cfg.run_dir(label, s) / "checkpoint.json" for s in cfg.seeds]
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise ValidationError(f"missing checkpoints: {', '.join(missing)}")
    return paths


def load_model(path):
    """Rebuild a trained lifter from a checkpoint file; returns ``(model, payload)``."""
    payload = load_checkpoint(path)
    model = build_model(payload["model"], seed=payload["seed"])
    model.load_state_dict(payload["state"])
    model.load_normalization(payload["extra"]["normalization"])
    model.eval()
    return model, payload


def _check_joints(model, dataset, what):
    n = dataset.metadata.get("num_joints")
    if n != model.num_joints:
        raise ValidationError(f"{what} has {n} joints but the model expects {model.num_joints}")


# commands


def cmd_gen_data(cfg):
    """Write the training set plus matching original and rotated test sets."""
    skeleton = h36m_skeleton()
    camera = Camera(cfg.camera, cfg.focal, cfg.depth_offset)
    paths = cfg.data_paths()
    train = generate_dataset(skeleton, camera, cfg.train_size, 2 * cfg.data_seed, split="train")
    test = generate_dataset(skeleton, camera, cfg.test_size, 2 * cfg.data_seed + 1, split="test")
    rotated = make_rotated_testset(test, seed=2 * cfg.data_seed + 1)
    for name, ds in (("train", train), ("test_original", test), ("test_rotated", rotated)):
        paths[name].parent.mkdir(parents=True, exist_ok=True)
        write_dataset(ds, paths[name])
    return paths


def _train_one(cfg_dict, seed):
    """Train one seed and write its checkpoint and log; returns the checkpoint path."""
    cfg = ExperimentConfig(**cfg_dict)
    train = _read(cfg.data_paths()["train"], "training")
    spec = cfg.model_spec(train.num_joints)
    tcfg = cfg.train_config(seed)
    run_dir = cfg.run_dir(seed=seed)
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "train.log", "a", encoding="utf-8") as log:
        log.write(f"# start label={cfg.label} seed={seed} epochs={tcfg.epochs} batch_size={tcfg.batch_size}\n")

        def write(record):
            log.write(record.to_line() + "\n")
            log.flush()

        result = train_model(spec, train, tcfg, augment=cfg.aug, log=write)
    ck = run_dir / "checkpoint.json"
    save_checkpoint(
        ck, spec.to_dict(), result.model, result.optimizer, tcfg.to_dict(),
        epoch=tcfg.epochs, seed=seed,
        extra={"normalization": result.model.normalization_dict(), "aug": cfg.aug, "label": cfg.label},
    )
    return ck


def cmd_train(cfg):
    """Train the configured model once per seed; independent seeds may run in parallel workers."""
    payload = cfg.to_dict()
    if cfg.workers > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(cfg.seeds))) as pool:
            return list(pool.map(_train_one, [payload] * len(cfg.seeds), cfg.seeds))
    return [_train_one(payload, s) for s in cfg.seeds]


def cmd_eval(cfg):
    """Protocol 1/2 on the original and rotated test sets, aggregated over seeds."""
    paths = cfg.data_paths()
    splits = {
        "original": _read(paths["test_original"], "original test"),
        "rotated": _read(paths["test_rotated"], "rotated test"),
    }
    per_split = {name: [] for name in splits}
    for ck in _checkpoints(cfg, cfg.label):
        model, payload = load_model(ck)
        for name, ds in splits.items():
            _check_joints(model, ds, f"{name} test set")
            rep = evaluate(model, ds, equivariance_angles=1, seed=cfg.audit_seed)
            rep.label = f"{cfg.label}/seed{payload['seed']}"
            per_split[name].append(rep)
    result = {name: aggregate(reps, label=cfg.label) for name, reps in per_split.items()}
    out = cfg.path("eval")
    _write_json(out / f"{cfg.label}.json", {
        "label": cfg.label,
        "seeds": list(cfg.seeds),
        "original": result["original"].to_dict(),
        "rotated": result["rotated"].to_dict(),
    })
    rows = {cfg.label: result}
    (out / f"{cfg.label}.csv").write_text(reports_to_csv(rows), encoding="utf-8")
    (out / f"{cfg.label}.txt").write_text(reports_to_text(rows), encoding="utf-8")
    return result


def _audit_angles(cfg, count):
    rng = np.random.default_rng(cfg.audit_seed)
    thetas = rng.uniform(0.0, 2 * np.pi, (cfg.num_angles, count))
    return np.zeros_like(thetas) if cfg.force_zero else thetas


def cmd_audit(cfg):
    """Per-sample equivariance residuals over ``num_angles`` random angles per sample."""
    test = _read(cfg.data_paths()["test_original"], "original test")
    if len(test) == 0:
        raise ValidationError("cannot audit on an empty dataset")
    X = test.inputs
    thetas = _audit_angles(cfg, len(X))
    masks = [None, "xy", "z"] if cfg.kind == "hybrid" else [None]
    seeds = []
    for ck in _checkpoints(cfg, cfg.label):
        model, payload = load_model(ck)
        _check_joints(model, test, "test set")
        rms = float(np.sqrt(np.mean(model.predict(X) ** 2)))
        entry = {"seed": payload["seed"], "output_rms": rms}
        for mask in masks:
            errs = np.stack([equivariance_error(model, X, t, mask) for t in thetas])
            key = mask or "full"
            entry[key] = {"mean": float(errs.mean()), "max": float(errs.max()), "max_relative": float(errs.max() / rms)}
        seeds.append(entry)
    summary = {
        key: {
            "mean": float(np.mean([s[key]["mean"] for s in seeds])),
            "max": float(np.max([s[key]["max"] for s in seeds])),
            "max_relative": float(np.max([s[key]["max_relative"] for s in seeds])),
        }
        for key in ((m or "full") for m in masks)
    }
    audit = {
        "label": cfg.label,
        "num_angles": cfg.num_angles,
        "force_zero": cfg.force_zero,
        "sample_count": len(X),
        "per_seed": seeds,
        "summary": summary,
    }
    _write_json(cfg.path("audit", f"{cfg.label}.json"), audit)
    return audit


def _epoch_times_from_logs(cfg, label):
    times = []
    for seed in cfg.seeds:
        log = cfg.run_dir(label, seed) / "train.log"
        if not log.exists():
            continue
        for line in log.read_text(encoding="utf-8").splitlines():
            if line.startswith("epoch="):
                fields_ = dict(part.split("=", 1) for part in line.split())
                times.append(float(fields_["wall_time"]))
    return times


def cmd_bench(cfg):
    """Per-epoch training time and median single-sample inference latency."""
    paths = cfg.data_paths()
    test = _read(paths["test_original"], "original test")
    epoch_times = _epoch_times_from_logs(cfg, cfg.label)
    source = "train.log"
    if not epoch_times:
        # no logged run: time one epoch on the training set
        train = _read(paths["train"], "training")
        one = replace(cfg.train_config(cfg.seeds[0]), epochs=1)
        epoch_times = [train_model(cfg.model_spec(train.num_joints), train, one, augment=cfg.aug).history[0].wall_time]
        source = "measured"
    ck = cfg.run_dir(seed=cfg.seeds[0]) / "checkpoint.json"
    if ck.exists():
        model = load_model(ck)[0]
    else:
        model = build_model(cfg.model_spec(test.num_joints), seed=cfg.seeds[0])
        if len(test):
            model.fit_normalization(test.inputs, test.targets)
    X = test.inputs if len(test) else np.zeros((1, model.num_joints, 2))
    model.predict(X[0])
    latencies = []
    for i in range(cfg.bench_samples):
        x = X[i % len(X)]
        start = time.perf_counter()
        model.predict(x)
        latencies.append(time.perf_counter() - start)
    bench = {
        "label": cfg.label,
        "kind": cfg.kind,
        "epoch_time_s": float(statistics.mean(epoch_times)),
        "epoch_time_source": source,
        "inference_latency_ms": 1e3 * float(statistics.median(latencies)),
        "inference_samples": cfg.bench_samples,
    }
    _write_json(cfg.path("bench", f"{cfg.label}.json"), bench)
    return bench


# report


REPORT_COLUMNS = (
    ("Original P1", "original", "protocol1_mean"),
    ("Rotated P1", "rotated", "protocol1_mean"),
    ("Original P2", "original", "protocol2_mean"),
    ("Rotated P2", "rotated", "protocol2_mean"),
)

# (better, worse): the left row is expected to score lower Rotated P1 than the right one
ORDERING_PAIRS = (
    ("vanilla+aug", "fully_equivariant"),
    ("fully_equivariant", "vanilla"),
    ("hybrid+aug", "hybrid"),
)
ORDERING_MARGIN = 0.05


def _rank_marks(values):
    """Bold for the lowest value(s), underline for the next distinct value."""
    distinct = sorted(set(values))
    best = distinct[0]
    second = distinct[1] if len(distinct) > 1 else None
    marks = []
    for v in values:
        if v == best:
            marks.append("bold")
        elif v == second and values.count(best) == 1:
            marks.append("underline")
        else:
            marks.append(None)
    return marks


def _decorate(text, mark):
    if mark == "bold":
        return f"**{text}**"
    if mark == "underline":
        return f"<u>{text}</u>"
    return text


def ordering_checks(rows, margin=ORDERING_MARGIN):
    """Check the expected Rotated-P1 orderings.

    Each result is ``holds`` (gap at least ``margin`` of the larger value),
    ``inconclusive`` (ordering holds by less than the margin) or ``violated``.
    """
    checks = []
    for better, worse in ORDERING_PAIRS:
        if better not in rows or worse not in rows:
            continue
        a = rows[better]["rotated"].protocol1_mean
        b = rows[worse]["rotated"].protocol1_mean
        if a > b:
            status = "violated"
        elif b - a >= margin * b:
            status = "holds"
        else:
            status = "inconclusive"
        checks.append({"better": better, "worse": worse, "better_value": a, "worse_value": b, "status": status})
    return checks


def report_markdown(rows, audits=None, bench=None):
    """Markdown table over ``rows`` (label -> {"original", "rotated"} reports)."""
    labels = list(rows)
    cells = {lab: [] for lab in labels}
    for _, split, key in REPORT_COLUMNS:
        values = [round(getattr(rows[lab][split], key), 1) for lab in labels]
        for lab, v, mark in zip(labels, values, _rank_marks(values)):
            rep = rows[lab][split]
            text = f"{v:.1f}" if rep.std is None else f"{v:.1f} ± {rep.std[key]:.1f}"
            cells[lab].append(_decorate(text, mark))
    lines = [
        "| Model | " + " | ".join(name for name, _, _ in REPORT_COLUMNS) + " |",
        "|---|" + "---:|" * len(REPORT_COLUMNS),
    ]
    lines += [f"| {lab} | " + " | ".join(cells[lab]) + " |" for lab in labels]
    lines.append("")
    lines.append("Errors in mm (mean ± std over seeds). Bold: best per column; underlined: second best.")
    checks = ordering_checks(rows)
    if checks:
        lines += ["", "## Rotated-test ordering", ""]
        for c in checks:
            lines.append(
                f"- {c['better']} ({c['better_value']:.1f}) <= {c['worse']} ({c['worse_value']:.1f}): {c['status']}"
            )
    if audits:
        lines += ["", "## Equivariance audit", "", "| Model | mean | max | max / output RMS | xy max / RMS |", "|---|---:|---:|---:|---:|"]
        for lab, audit in audits.items():
            s = audit["summary"]
            xy = f"{s['xy']['max_relative']:.2e}" if "xy" in s else "-"
            full = s["full"]
            lines.append(f"| {lab} | {full['mean']:.3e} | {full['max']:.3e} | {full['max_relative']:.2e} | {xy} |")
    if bench:
        lines += ["", "## Timing", "", "| Model | train s/epoch | inference ms/sample |", "|---|---:|---:|"]
        for lab, b in bench.items():
            lines.append(f"| {lab} | {b['epoch_time_s']:.2f} | {b['inference_latency_ms']:.3f} |")
    return "\n".join(lines) + "\n"


def _load_json_dir(directory, labels):
    found = {}
    for lab in labels:
        path = directory / f"{lab}.json"
        if path.exists():
            found[lab] = json.loads(path.read_text(encoding="utf-8"))
    return found


def cmd_report(cfg):
    """Combine eval (plus any audit and bench) outputs for ``cfg.rows`` into ``report.md``."""
    evals = _load_json_dir(cfg.path("eval"), cfg.rows)
    missing = [lab for lab in cfg.rows if lab not in evals]
    if missing:
        raise ValidationError(f"missing eval results for rows: {', '.join(missing)}")
    rows = {
        lab: {split: MetricReport.from_dict(evals[lab][split]) for split in ("original", "rotated")}
        for lab in cfg.rows
    }
    audits = _load_json_dir(cfg.path("audit"), cfg.rows)
    bench = _load_json_dir(cfg.path("bench"), cfg.rows)
    text = report_markdown(rows, audits or None, bench or None)
    path = cfg.path("report.md")
    path.write_text(text, encoding="utf-8")
    return text


# whole experiment


def run_matrix(cfg, labels=STANDARD_ROWS + ABLATION_ROWS, bench=True, log=None):
    """Generate data if needed, then train, evaluate and audit every row label; write the report."""
    say = log or (lambda msg: None)
    if not all(p.exists() for p in cfg.data_paths().values()):
        cmd_gen_data(cfg)
        say("data generated")
    results = {}
    for lab in labels:
        sub = replace(cfg, **_label_settings(lab))
        start = time.perf_counter()
        cmd_train(sub)
        results[lab] = cmd_eval(sub)
        cmd_audit(sub)
        if bench:
            cmd_bench(sub)
        say(f"{lab}: {time.perf_counter() - start:.1f}s")
    cmd_report(replace(cfg, rows=tuple(labels)))
    return results
