import json
import re
from dataclasses import replace

import numpy as np
import pytest

from poselift import cli
from poselift.data import Camera, Dataset, Sample, generate_dataset, h36m_skeleton, read_dataset, write_dataset
from poselift.errors import NumericalError, ValidationError
from poselift.geometry import root_align
from poselift.harness import (
    STANDARD_ROWS,
    ExperimentConfig,
    cmd_audit,
    cmd_bench,
    cmd_eval,
    cmd_gen_data,
    cmd_report,
    cmd_train,
    load_model,
    ordering_checks,
    parse_config_text,
    report_markdown,
)
from poselift.metrics import MetricReport, evaluate
from poselift.models import ModelSpec
from poselift.nn import TrainConfig
from poselift.training import train_model

TINY = dict(train_size=60, test_size=20, epochs=2, batch_size=16, seeds=(0, 1), num_angles=2, bench_samples=50)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    cfg = ExperimentConfig(out=str(tmp_path_factory.mktemp("exp")), **TINY)
    cmd_gen_data(cfg)
    return cfg


def trained(workspace, **kw):
    cfg = replace(workspace, **kw)
    if not (cfg.run_dir(seed=cfg.seeds[-1]) / "checkpoint.json").exists():
        cmd_train(cfg)
    return cfg


# data generation


def test_gen_data_sizes_and_reproducibility(tmp_path):
    a = ExperimentConfig(out=str(tmp_path / "a"), train_size=7, test_size=4)
    b = replace(a, out=str(tmp_path / "b"))
    pa, pb = cmd_gen_data(a), cmd_gen_data(b)
    sizes = {"train": 7, "test_original": 4, "test_rotated": 4}
    for name, n in sizes.items():
        assert len(read_dataset(pa[name])) == n
        assert pa[name].read_bytes() == pb[name].read_bytes()
    other = cmd_gen_data(replace(a, out=str(tmp_path / "c"), data_seed=1))
    assert other["train"].read_bytes() != pa["train"].read_bytes()


def test_gen_data_size_zero(tmp_path):
    paths = cmd_gen_data(ExperimentConfig(out=str(tmp_path), train_size=0, test_size=0))
    for p in paths.values():
        ds = read_dataset(p)
        assert len(ds) == 0 and ds.metadata["num_joints"] == 17


def test_gen_data_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        cmd_gen_data(ExperimentConfig(out=str(blocker / "sub"), train_size=1, test_size=1))


# training


def test_train_smoke_and_lr_log(tmp_path):
    cfg = ExperimentConfig(out=str(tmp_path), train_size=10, test_size=2, epochs=3, seeds=(4,))
    cmd_gen_data(cfg)
    (ck,) = cmd_train(cfg)
    assert ck.exists()
    lines = [ln for ln in (ck.parent / "train.log").read_text().splitlines() if ln.startswith("epoch=")]
    assert len(lines) == 3
    for e, line in enumerate(lines):
        rec = dict(part.split("=", 1) for part in line.split())
        assert int(rec["epoch"]) == e
        assert np.isfinite(float(rec["loss"]))
        assert abs(float(rec["lr"]) - 1e-3 * 0.96**e) <= 1e-15 * 1e-3
        assert float(rec["wall_time"]) >= 0


def _epoch_batches(augment):
    ds = generate_dataset(h36m_skeleton(), Camera(), 40, seed=5)
    seen = {}

    def record(epoch, batch, x, y):
        seen.setdefault(epoch, []).extend(np.concatenate([x.reshape(len(x), -1), y.reshape(len(y), -1)], axis=1))

    train_model(ModelSpec("vanilla"), ds, TrainConfig(epochs=3, batch_size=8), augment=augment, on_batch=record)
    return [sorted(r.tobytes() for r in rows) for _, rows in sorted(seen.items())]


def test_training_samples_fixed_without_augmentation():
    epochs = _epoch_batches(False)
    assert epochs[0] == epochs[1] == epochs[2]
    aug = _epoch_batches(True)
    assert aug[0] != aug[1]


def test_nan_loss_names_epoch_and_batch():
    ds = generate_dataset(h36m_skeleton(), Camera(), 32, seed=6)
    with pytest.raises(NumericalError, match=r"epoch \d+ batch \d+"):
        train_model(ModelSpec("vanilla"), ds, TrainConfig(learning_rate=1e300, epochs=3, batch_size=8))


def test_empty_training_set_rejected(tmp_path):
    cfg = ExperimentConfig(out=str(tmp_path), train_size=0, test_size=0, seeds=(0,))
    cmd_gen_data(cfg)
    with pytest.raises(ValueError):
        cmd_train(cfg)


def test_parallel_seeds_match_sequential(workspace, tmp_path):
    seq = trained(workspace)
    par = replace(seq, out=str(tmp_path), train_path=str(seq.data_paths()["train"]), workers=2)
    for a, b in zip(cmd_train(par), [seq.run_dir(seed=s) / "checkpoint.json" for s in seq.seeds]):
        assert a.read_bytes() == b.read_bytes()


# evaluation


def test_eval_aggregates_and_writes_tables(workspace):
    cfg = trained(workspace)
    result = cmd_eval(cfg)
    for split in ("original", "rotated"):
        rep = result[split]
        assert rep.std is not None and len(rep.per_seed) == 2
        assert rep.sample_count == 20
    header = (cfg.path("eval", "vanilla.csv").read_text().splitlines()[0]).split(",")
    assert [h for h in header[1:] if not h.endswith("std")] == ["Original P1", "Rotated P1", "Original P2", "Rotated P2"]
    stored = json.loads(cfg.path("eval", "vanilla.json").read_text())
    assert MetricReport.from_dict(stored["original"]).protocol1_mean == result["original"].protocol1_mean


def test_eval_own_predictions_score_zero(workspace):
    cfg = trained(workspace)
    model, _ = load_model(cfg.run_dir(seed=0) / "checkpoint.json")
    test = read_dataset(cfg.data_paths()["test_original"])
    preds = root_align(model.predict(test.inputs), 0)
    own = Dataset(test.metadata, [Sample(s.id, s.input2d, p) for s, p in zip(test.samples, preds)])
    rep = evaluate(model, own, equivariance_angles=0)
    assert rep.protocol1_mean == 0.0
    assert rep.protocol2_mean <= 1e-9


def test_eval_joint_mismatch_rejected(workspace, tmp_path):
    cfg = trained(workspace)
    bad = Dataset({"num_joints": 5, "split": "test"}, [Sample("a", np.ones((5, 2)), np.ones((5, 3)))])
    write_dataset(bad, tmp_path / "bad.jsonl")
    with pytest.raises(ValidationError, match="joints"):
        cmd_eval(replace(cfg, test_original_path=str(tmp_path / "bad.jsonl")))


def test_eval_without_checkpoints(tmp_path, workspace):
    with pytest.raises(ValidationError, match="missing checkpoints"):
        cmd_eval(replace(workspace, out=str(tmp_path), test_original_path=str(workspace.data_paths()["test_original"]),
                         test_rotated_path=str(workspace.data_paths()["test_rotated"])))


# audit and bench


def test_audit_fully_equivariant_and_vanilla(workspace):
    equi = cmd_audit(trained(workspace, model="equi"))
    for seed in equi["per_seed"]:
        assert seed["full"]["max"] <= 1e-9 * seed["output_rms"]
    vanilla = cmd_audit(trained(workspace))
    assert vanilla["summary"]["full"]["mean"] >= 1e3 * max(equi["summary"]["full"]["mean"], 1e-300)
    assert "xy" not in vanilla["summary"]


def test_audit_forced_zero_angle(workspace):
    audit = cmd_audit(replace(trained(workspace, model="hybrid"), force_zero=True))
    for key in ("full", "xy", "z"):
        assert audit["summary"][key]["max"] == 0.0


def test_audit_hybrid_masks(workspace):
    audit = cmd_audit(trained(workspace, model="hybrid"))
    assert audit["summary"]["xy"]["max_relative"] <= 1e-9
    assert audit["summary"]["z"]["max"] > 1e-3


def test_bench_reports_each_kind(workspace):
    results = {}
    for model in ("vanilla", "equi", "hybrid"):
        results[model] = cmd_bench(trained(workspace, model=model))
        assert results[model]["epoch_time_s"] > 0 and results[model]["inference_latency_ms"] > 0
        assert results[model]["epoch_time_source"] == "train.log"
    assert results["vanilla"]["inference_latency_ms"] <= results["equi"]["inference_latency_ms"]


def test_bench_without_run_measures_an_epoch(workspace, tmp_path):
    cfg = replace(workspace, out=str(tmp_path), train_path=str(workspace.data_paths()["train"]),
                  test_original_path=str(workspace.data_paths()["test_original"]), bench_samples=5)
    assert cmd_bench(cfg)["epoch_time_source"] == "measured"


# report


def rep(p1, p2=None, std=0.5):
    p2 = p1 / 2 if p2 is None else p2
    return MetricReport(p1, p2, 0.0, 10, "test", std={"protocol1_mean": std, "protocol2_mean": std,
                                                      "equivariance_error_mean": 0.0})


def test_report_marks_best_and_second():
    rows = {"a": {"original": rep(10.0), "rotated": rep(30.0)}, "b": {"original": rep(20.0), "rotated": rep(25.0)}}
    table = report_markdown(rows).splitlines()
    a_row = next(ln for ln in table if ln.startswith("| a |"))
    b_row = next(ln for ln in table if ln.startswith("| b |"))
    assert "**10.0 ± 0.5**" in a_row and "<u>30.0 ± 0.5</u>" in a_row
    assert "<u>20.0 ± 0.5</u>" in b_row and "**25.0 ± 0.5**" in b_row


def test_report_ties_are_both_bold():
    rows = {k: {"original": rep(12.0), "rotated": rep(12.0)} for k in ("a", "b")}
    assert report_markdown(rows).count("**12.0 ± 0.5**") == 4
    assert "<u>" not in report_markdown(rows)


def test_ordering_check_statuses():
    rows = {
        "vanilla+aug": {"original": rep(10.0), "rotated": rep(10.0)},
        "fully_equivariant": {"original": rep(10.2), "rotated": rep(10.2)},
        "vanilla": {"original": rep(9.0), "rotated": rep(40.0)},
        "hybrid+aug": {"original": rep(9.0), "rotated": rep(50.0)},
        "hybrid": {"original": rep(9.0), "rotated": rep(45.0)},
    }
    status = {(c["better"], c["worse"]): c["status"] for c in ordering_checks(rows)}
    assert status[("vanilla+aug", "fully_equivariant")] == "inconclusive"
    assert status[("fully_equivariant", "vanilla")] == "holds"
    assert status[("hybrid+aug", "hybrid")] == "violated"


def test_report_full_matrix_and_missing_rows(tmp_path):
    cfg = ExperimentConfig(out=str(tmp_path))
    with pytest.raises(ValidationError) as info:
        cmd_report(cfg)
    for label in STANDARD_ROWS:
        assert label in str(info.value)
    (tmp_path / "eval").mkdir()
    for i, label in enumerate(STANDARD_ROWS):
        payload = {"label": label, "original": rep(10.0 + i).to_dict(), "rotated": rep(20.0 + i).to_dict()}
        (tmp_path / "eval" / f"{label}.json").write_text(json.dumps(payload))
    text = cmd_report(cfg)
    table = [ln for ln in text.splitlines() if ln.startswith("| ") and not ln.startswith("| Model")]
    assert len(table) == 6
    assert all(len(ln.strip("|").split("|")) == 5 for ln in table)
    assert (tmp_path / "report.md").read_text() == text


# determinism


def test_train_and_eval_are_bit_identical(workspace, tmp_path):
    base = replace(workspace, model="hybrid", aug=True, seeds=(3,))
    outputs = []
    for name in ("one", "two"):
        data = {f"{split}_path": str(path) for split, path in workspace.data_paths().items()}
        cfg = replace(base, out=str(tmp_path / name), **data)
        cmd_train(cfg)
        cmd_eval(cfg)
        files = [cfg.run_dir(seed=3) / "checkpoint.json"] + [cfg.path("eval", "hybrid+aug" + ext) for ext in (".json", ".csv", ".txt")]
        outputs.append([f.read_bytes() for f in files])
    assert outputs[0] == outputs[1]


# config and CLI


def test_config_parsing():
    values = parse_config_text("# comment\nepochs = 7\nbatch-size=32  # inline\nseeds = 1, 2\naug = yes\n")
    assert values == {"epochs": 7, "batch_size": 32, "seeds": (1, 2), "aug": True}
    with pytest.raises(ValidationError, match="line 1"):
        parse_config_text("bogus = 1")
    with pytest.raises(ValidationError, match="line 2"):
        parse_config_text("epochs = 1\nepochs = many")
    with pytest.raises(ValidationError):
        ExperimentConfig(seeds=())


def test_cli_flags_override_config(tmp_path):
    conf = tmp_path / "exp.conf"
    conf.write_text("epochs = 9\nmodel = hybrid\nhybrid_mode = first-layer\nseeds = 1 2 3\n")
    args = cli.build_parser().parse_args(["train", "--config", str(conf), "--epochs", "4", "--aug", "--seed", "8"])
    cfg = cli.resolve_config(args)
    assert cfg.epochs == 4 and cfg.aug and cfg.seeds == (8,)
    assert cfg.kind == "hybrid" and cfg.mode == "first_layer_features"
    assert cfg.label == "hybrid_first_layer+aug"
    gen = cli.resolve_config(cli.build_parser().parse_args(["gen-data", "--seed", "8"]))
    assert gen.data_seed == 8


def test_cli_end_to_end(tmp_path, capsys):
    common = ["--out", str(tmp_path), "--train-size", "12", "--test-size", "4", "--epochs", "1", "--seeds", "0",
              "--model", "equi", "--bench-samples", "5", "--num-angles", "1"]
    for command in ("gen-data", "train", "eval", "audit", "bench"):
        assert cli.main([command] + common) == 0
    assert cli.main(["report", "--rows", "fully_equivariant"] + common) == 0
    out = capsys.readouterr().out
    assert "| fully_equivariant |" in out


@pytest.mark.parametrize(
    "argv, code",
    [
        (["train", "--model", "nope"], 2),
        (["train", "--epochs", "x"], 2),
        (["frobnicate"], 2),
        (["report", "--out", "/nonexistent/dir"], 2),
        (["train", "--config", "/nonexistent.conf"], 2),
    ],
)
def test_cli_errors_are_one_json_line(argv, code, capsys):
    assert cli.main(argv) == code
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    payload = json.loads(err[0])
    assert set(payload) == {"error", "message"}


def test_cli_numerical_failure_exit_code(tmp_path, capsys):
    common = ["--out", str(tmp_path), "--train-size", "32", "--test-size", "2", "--seeds", "0"]
    assert cli.main(["gen-data"] + common) == 0
    assert cli.main(["train", "--learning-rate", "1e300", "--epochs", "3", "--batch-size", "8"] + common) == 3
    payload = json.loads(capsys.readouterr().err.strip())
    assert payload["error"] == "NumericalError"
    assert re.search(r"epoch \d+ batch \d+", payload["message"])
