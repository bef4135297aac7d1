import numpy as np
import pytest

from poselift.data import (
    Camera,
    Dataset,
    Sample,
    augment,
    generate_dataset,
    h36m_skeleton,
    make_rotated_testset,
    project,
    read_dataset,
    sample_pose,
    write_dataset,
)
from poselift.errors import DatasetParseError, InvalidGeometryError, ValidationError
from poselift.geometry import embed_so2_in_so3, rotation2_from_angle
from poselift.metrics import mpjpe


@pytest.fixture(scope="module")
def skeleton():
    return h36m_skeleton()


def test_skeleton_topology(skeleton):
    assert skeleton.joint_count == 17
    assert skeleton.parent[0] == -1
    assert np.all(skeleton.bone_lengths[1:] > 0)


def test_zero_limits_give_rest_pose(skeleton):
    rest = skeleton.with_limits(np.zeros_like(skeleton.angle_limits))
    pose = sample_pose(rest, np.random.default_rng(0))
    np.testing.assert_allclose(pose, skeleton.rest_pose(), atol=1e-12)


def test_bone_lengths_preserved(skeleton):
    rng = np.random.default_rng(1)
    for _ in range(50):
        pose = sample_pose(skeleton, rng)
        for i, p in enumerate(skeleton.parent):
            if p >= 0:
                assert abs(np.linalg.norm(pose[i] - pose[p]) - skeleton.bone_lengths[i]) <= 1e-9


def test_sampling_is_deterministic(skeleton):
    a = sample_pose(skeleton, np.random.default_rng(42))
    b = sample_pose(skeleton, np.random.default_rng(42))
    assert np.array_equal(a, b)


def test_upright_poses_stay_upright(skeleton):
    ds = generate_dataset(skeleton, Camera(), 200, seed=3)
    spine = ds.targets[:, 8] - ds.targets[:, 0]
    # image y points down; spine must point up within the tilt limits plus spine bend
    cos_up = -spine[:, 1] / np.linalg.norm(spine, axis=1)
    assert np.all(cos_up > np.cos(np.deg2rad(75)))


def test_projection_examples():
    ortho = Camera("orthographic")
    np.testing.assert_array_equal(project(np.array([[1.0, 2.0, 3.0]]), ortho), [[1.0, 2.0]])
    persp = Camera("perspective", focal=1000.0)
    np.testing.assert_allclose(project(np.array([[100.0, 0.0, 1000.0]]), persp), [[100.0, 0.0]])
    with pytest.raises(InvalidGeometryError):
        project(np.array([[1.0, 1.0, 0.0]]), persp)
    with pytest.raises(ValueError):
        Camera("fisheye")


def test_orthographic_projection_commutes_with_roll(skeleton):
    rng = np.random.default_rng(4)
    for _ in range(10):
        pose = sample_pose(skeleton, rng)
        r = rotation2_from_angle(rng.uniform(0, 2 * np.pi))
        r3 = embed_so2_in_so3(r).matrix
        lhs = project(pose @ r3.T, Camera())
        rhs = project(pose, Camera()) @ r.matrix.T
        assert np.abs(lhs - rhs).max() <= 1e-12


def test_generated_pairs_are_consistent(skeleton):
    ds = generate_dataset(skeleton, Camera(), 20, seed=5)
    assert len(ds) == 20 and ds.metadata["num_joints"] == 17
    for s in ds.samples:
        assert np.array_equal(s.target3d[0], np.zeros(3))
        # orthographic: the 2D input is the xy of the camera-frame pose
        np.testing.assert_allclose(s.input2d - s.input2d[0], s.target3d[:, :2], atol=1e-12)


def test_perspective_dataset(skeleton):
    ds = generate_dataset(skeleton, Camera("perspective", 1000.0, 5000.0), 5, seed=6)
    assert ds.metadata["input_units"] == "px"
    assert np.all(np.isfinite(ds.inputs))


def test_augment_examples(skeleton):
    s = generate_dataset(skeleton, Camera(), 1, seed=7).samples[0]
    same = augment(s, 0.0)
    assert np.array_equal(same.input2d, s.input2d) and np.array_equal(same.target3d, s.target3d)
    assert same.applied_theta == 0.0
    back = augment(augment(s, 0.9), -0.9)
    np.testing.assert_allclose(back.input2d, s.input2d, atol=1e-12 * np.abs(s.input2d).max())
    np.testing.assert_allclose(back.target3d, s.target3d, atol=1e-12 * np.abs(s.target3d).max())
    rotated = augment(s, 1.3)
    assert np.array_equal(rotated.target3d[:, 2], s.target3d[:, 2])


def test_augmented_pairs_respect_geometric_consistency(skeleton):
    ds = generate_dataset(skeleton, Camera(), 10, seed=8)
    rng = np.random.default_rng(9)
    for s in ds.samples:
        theta = rng.uniform(0, 2 * np.pi)
        a = augment(s, theta)
        r = rotation2_from_angle(theta)
        np.testing.assert_allclose(a.input2d, s.input2d @ r.matrix.T, atol=1e-12 * 1e3)
        np.testing.assert_allclose(a.target3d, s.target3d @ embed_so2_in_so3(r).matrix.T, atol=1e-12 * 1e3)
        # the projection relation survives augmentation
        np.testing.assert_allclose(a.input2d - a.input2d[0], a.target3d[:, :2], atol=1e-9)


def test_rotated_testset(skeleton):
    ds = generate_dataset(skeleton, Camera(), 30, seed=10, split="test")
    r1 = make_rotated_testset(ds, seed=11)
    r2 = make_rotated_testset(ds, seed=11)
    assert r1 == r2
    thetas = np.array(r1.thetas)
    assert np.all((thetas >= 0) & (thetas < 2 * np.pi))
    errs = mpjpe(ds.targets, r1.targets)
    assert np.median(errs) > 1.0
    zero = make_rotated_testset(ds, seed=11, force_zero=True)
    assert all(np.array_equal(a.input2d, b.input2d) and np.array_equal(a.target3d, b.target3d)
               for a, b in zip(zero.samples, ds.samples))


def test_dataset_generation_is_pure(skeleton):
    a = generate_dataset(skeleton, Camera(), 15, seed=12)
    b = generate_dataset(skeleton, Camera(), 15, seed=12)
    assert a == b
    c = generate_dataset(skeleton, Camera(), 15, seed=13)
    assert a != c


def test_dataset_round_trip(tmp_path, skeleton):
    ds = make_rotated_testset(generate_dataset(skeleton, Camera(), 25, seed=14, split="test"), seed=3)
    path = tmp_path / "d.jsonl"
    write_dataset(ds, path)
    back = read_dataset(path)
    assert back == ds
    for a, b in zip(ds.samples, back.samples):
        assert a.input2d.tobytes() == b.input2d.tobytes()
        assert a.target3d.tobytes() == b.target3d.tobytes()


def test_empty_dataset_round_trip(tmp_path, skeleton):
    ds = generate_dataset(skeleton, Camera(), 0, seed=1)
    path = tmp_path / "empty.jsonl"
    write_dataset(ds, path)
    back = read_dataset(path)
    assert len(back) == 0 and back.metadata == ds.metadata


def test_corrupted_line_reports_line_number(tmp_path, skeleton):
    ds = generate_dataset(skeleton, Camera(), 3, seed=1)
    path = tmp_path / "bad.jsonl"
    write_dataset(ds, path)
    lines = path.read_text().splitlines()
    lines[2] = lines[2][:40]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetParseError, match="line 3") as info:
        read_dataset(path)
    assert info.value.line == 3


def test_joint_count_mismatch_rejected(tmp_path):
    meta = {"num_joints": 17}
    with pytest.raises(ValidationError):
        Dataset(meta, [Sample("a", np.zeros((16, 2)), np.zeros((16, 3)))])
    with pytest.raises(ValidationError):
        Dataset({"num_joints": 2}, [Sample("a", np.zeros((2, 2)), np.zeros((2, 3)))] * 2)
