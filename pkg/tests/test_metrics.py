import numpy as np
import pytest

from poselift.data import Camera, generate_dataset, h36m_skeleton, make_rotated_testset
from poselift.geometry import rotation_matrices2
from poselift.metrics import (
    MetricReport,
    aggregate,
    equivariance_error,
    evaluate,
    mpjpe,
    pa_mpjpe,
    reports_to_csv,
    reports_to_text,
)
from poselift.models import ModelSpec, build_model


def z_rot(theta):
    r = np.eye(3)
    r[:2, :2] = rotation_matrices2(theta)
    return r


def test_mpjpe_examples():
    gt = np.zeros((1, 3))
    assert mpjpe(gt, gt) == 0.0
    assert mpjpe(gt, np.array([[3.0, 4.0, 0.0]])) == 5.0
    assert mpjpe(np.zeros((2, 3)), np.array([[1.0, 0.0, 0.0], [0.0, 3.0, 0.0]])) == 2.0
    with pytest.raises(ValueError):
        mpjpe(np.zeros((2, 3)), np.zeros((3, 3)))


def test_mpjpe_is_a_metric():
    rng = np.random.default_rng(0)
    for _ in range(100):
        a, b, c = rng.normal(size=(3, 17, 3))
        assert mpjpe(a, b) == mpjpe(b, a)
        assert mpjpe(a, c) <= mpjpe(a, b) + mpjpe(b, c) + 1e-12
        assert mpjpe(a, b) > 0


def test_pa_mpjpe_removes_similarity():
    rng = np.random.default_rng(1)
    gt = rng.normal(size=(17, 3)) * 100
    pred = 0.5 * gt @ z_rot(0.7).T + np.array([5.0, -3.0, 8.0])
    assert pa_mpjpe(gt, pred) <= 1e-9
    assert pa_mpjpe(gt, gt) <= 1e-9


def test_pa_mpjpe_bounded_by_mpjpe():
    rng = np.random.default_rng(2)
    gt = rng.normal(size=(100, 17, 3)) * 100
    pred = gt + rng.normal(size=(100, 17, 3)) * 30
    assert np.all(pa_mpjpe(gt, pred) <= mpjpe(gt, pred) + 1e-12)


def test_pa_mpjpe_invariant_to_similarity_of_prediction():
    rng = np.random.default_rng(3)
    gt = rng.normal(size=(17, 3)) * 100
    pred = gt + rng.normal(size=(17, 3)) * 20
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    moved = 1.7 * pred @ q.T + rng.normal(size=3) * 100
    assert abs(pa_mpjpe(gt, moved) - pa_mpjpe(gt, pred)) <= 1e-9


def test_equivariance_error_zero_angle():
    model = build_model(ModelSpec("vanilla", num_joints=5, width=8, blocks=1), seed=0)
    x = np.random.default_rng(4).normal(size=(5, 2))
    assert equivariance_error(model, x, 0.0) == 0.0


def test_aggregate_examples():
    reps = [MetricReport(v, v, 0.0, 10, "test") for v in (1.0, 2.0, 3.0)]
    agg = aggregate(reps)
    assert agg.protocol1_mean == 2.0 and agg.std["protocol1_mean"] == 1.0
    same = aggregate([MetricReport(4.0, 3.0, 0.1, 5, "t")] * 3)
    assert same.std["protocol1_mean"] == 0.0
    assert aggregate([MetricReport(4.0, 3.0, 0.1, 5, "t")]).std is None


@pytest.fixture(scope="module")
def small_data():
    sk = h36m_skeleton()
    test = generate_dataset(sk, Camera(), 12, seed=1, split="test")
    return test, make_rotated_testset(test, seed=2)


def test_evaluate_single_sample(small_data):
    test, _ = small_data
    model = build_model(ModelSpec("vanilla"), seed=0)
    model.fit_normalization(test.inputs, test.targets)
    one = type(test)(test.metadata, test.samples[:1])
    rep = evaluate(model, one, equivariance_angles=0)
    pred = model.predict(one.inputs)
    pred = pred - pred[:, :1]
    assert rep.sample_count == 1
    assert rep.protocol1_mean == pytest.approx(mpjpe(one.targets[0], pred[0]), abs=1e-12)
    assert rep.protocol2_mean == pytest.approx(pa_mpjpe(one.targets[0], pred[0]), abs=1e-12)
    with pytest.raises(ValueError):
        evaluate(model, type(test)(test.metadata, []))


def test_fully_equivariant_original_equals_rotated(small_data):
    test, rotated = small_data
    model = build_model(ModelSpec("fully_equivariant"), seed=3)
    model.fit_normalization(test.inputs, test.targets)
    a, b = evaluate(model, test, equivariance_angles=2), evaluate(model, rotated, equivariance_angles=0)
    assert abs(a.protocol1_mean - b.protocol1_mean) <= 1e-9 * a.protocol1_mean
    assert abs(a.protocol2_mean - b.protocol2_mean) <= 1e-9 * a.protocol2_mean
    assert a.equivariance_error_mean <= 1e-9 * np.sqrt(np.mean(model.predict(test.inputs) ** 2))


def test_table_formats():
    rep = aggregate([MetricReport(v, v / 2, 0.0, 10, "s") for v in (1.0, 2.0)])
    rows = {"vanilla": {"original": rep, "rotated": rep}}
    csv_text = reports_to_csv(rows)
    header = csv_text.splitlines()[0].split(",")
    assert header[0] == "model"
    assert [h for h in header[1:] if not h.endswith("std")] == ["Original P1", "Rotated P1", "Original P2", "Rotated P2"]
    text = reports_to_text(rows)
    assert "1.5 ± 0.7" in text
