import numpy as np
import pytest

from reshapekit.bodymodel import (
    BodyModel,
    DimensionMismatchError,
    InvalidModelError,
    MalformedContainerError,
    load_model,
    make_test_model,
    pose_blend_offsets,
    regress_joints,
    rotation_from_axis_angle,
    save_model,
    shaped_template,
    skin,
)
from oracles import naive_skin


@pytest.fixture(scope="module")
def model():
    return make_test_model(seed=0)


def test_test_model_dims(model):
    assert model.num_vertices == 64
    assert model.num_joints == 4
    assert model.num_betas == 4
    assert model.faces.shape[1] == 3


def test_test_model_deterministic():
    a = make_test_model(seed=3)
    b = make_test_model(seed=3)
    assert np.array_equal(a.template_vertices, b.template_vertices)
    assert np.array_equal(a.shape_dirs, b.shape_dirs)
    c = make_test_model(seed=4)
    assert not np.array_equal(a.template_vertices, c.template_vertices)


def test_test_model_is_closed(model):
    # every undirected edge of a closed mesh appears in exactly two faces
    edges = {}
    for f in model.faces:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            key = (min(a, b), max(a, b))
            edges[key] = edges.get(key, 0) + 1
    counts = set(edges.values())
    assert counts == {2}


def test_rotation_identity_and_known_angle():
    assert np.allclose(rotation_from_axis_angle(np.zeros(3)), np.eye(3))
    # 90 degrees about z maps x to y
    r = rotation_from_axis_angle([0.0, 0.0, np.pi / 2])
    assert np.allclose(r @ np.array([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-12)


def test_rotation_tiny_angle_matches_scipy():
    from scipy.spatial.transform import Rotation

    rng = np.random.default_rng(7)
    for scale in (1e-12, 1e-9, 1e-7, 1e-3, 1.0, 3.0):
        v = rng.standard_normal(3) * scale
        ours = rotation_from_axis_angle(v)
        ref = Rotation.from_rotvec(v).as_matrix()
        assert np.max(np.abs(ours - ref)) < 1e-12


def test_rotation_orthonormal():
    rng = np.random.default_rng(11)
    for _ in range(50):
        r = rotation_from_axis_angle(rng.standard_normal(3))
        assert np.allclose(r @ r.T, np.eye(3), atol=1e-12)
        assert np.isclose(np.linalg.det(r), 1.0)


def test_shaped_template_zero_beta(model):
    mesh = shaped_template(model, np.zeros(4))
    assert np.array_equal(mesh.vertices, model.template_vertices)


def test_shaped_template_linearity(model):
    rng = np.random.default_rng(0)
    b1 = rng.standard_normal(4)
    b2 = rng.standard_normal(4)
    m1 = shaped_template(model, b1).vertices - model.template_vertices
    m2 = shaped_template(model, b2).vertices - model.template_vertices
    m12 = shaped_template(model, b1 + b2).vertices - model.template_vertices
    assert np.allclose(m12, m1 + m2, atol=1e-12)


def test_skin_rest_pose_equals_shaped(model):
    rng = np.random.default_rng(1)
    for _ in range(5):
        beta = rng.standard_normal(4)
        rest = skin(model, beta, np.zeros(12))
        assert np.max(np.abs(rest.vertices - shaped_template(model, beta).vertices)) < 1e-9


def test_skin_preserves_rigid_lengths(model):
    # with a root-only rotation the body moves rigidly: all distances kept
    theta = np.zeros((4, 3))
    theta[0] = [0.3, -1.1, 0.7]
    rest = skin(model, np.zeros(4), np.zeros(12)).vertices
    posed = skin(model, np.zeros(4), theta).vertices
    # pose correctives are zero because only the root rotated
    d_rest = np.linalg.norm(rest[0] - rest, axis=1)
    d_posed = np.linalg.norm(posed[0] - posed, axis=1)
    assert np.allclose(d_rest, d_posed, atol=1e-9)


def test_skin_translation_is_rigid_shift(model):
    rng = np.random.default_rng(5)
    beta = rng.standard_normal(4) * 0.5
    theta = rng.standard_normal(12) * 0.2
    t = np.array([0.3, -0.1, 2.5])
    a = skin(model, beta, theta)
    b = skin(model, beta, theta, translation=t)
    assert np.allclose(b.vertices, a.vertices + t, atol=1e-12)


def test_pose_blend_offsets_zero_pose(model):
    assert np.allclose(pose_blend_offsets(model, np.zeros(12)), 0.0)


def test_pose_blend_offsets_root_only(model):
    # root rotation contributes no pose feature
    theta = np.zeros((4, 3))
    theta[0] = [0.4, 0.2, -0.9]
    assert np.allclose(pose_blend_offsets(model, theta), 0.0)


def test_regress_joints_rest_heights(model):
    joints = regress_joints(model, model.template_vertices)
    # joints sit at their ring heights: pelvis, chest, neck, head ascending
    assert np.allclose(joints[:, 1], [0.80, 1.15, 1.40, 1.55], atol=1e-6)


def test_skin_matches_naive_oracle(model):
    rng = np.random.default_rng(2024)
    for _ in range(100):
        beta = rng.uniform(-2.0, 2.0, size=4)
        theta = rng.uniform(-0.8, 0.8, size=12)
        ours = skin(model, beta, theta).vertices
        ref = naive_skin(model, beta, theta)
        assert np.max(np.abs(ours - ref)) <= 1e-6


def test_dimension_errors(model):
    with pytest.raises(DimensionMismatchError):
        skin(model, np.zeros(3), np.zeros(12))
    with pytest.raises(DimensionMismatchError):
        skin(model, np.zeros(4), np.zeros(11))
    with pytest.raises(DimensionMismatchError):
        skin(model, np.array([np.nan, 0, 0, 0]), np.zeros(12))
    with pytest.raises(DimensionMismatchError):
        regress_joints(model, np.zeros((10, 3)))


# ---------------------------------------------------------------------------
# container round trip and failure modes
# ---------------------------------------------------------------------------


def test_save_load_round_trip(model, tmp_path):
    path = tmp_path / "model.bin"
    save_model(model, path)
    loaded = load_model(path)
    for name in (
        "template_vertices",
        "faces",
        "shape_dirs",
        "pose_dirs",
        "joint_regressor",
        "skin_weights",
        "parents",
    ):
        assert np.array_equal(getattr(loaded, name), getattr(model, name)), name


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_model(tmp_path / "nope.bin")


def test_load_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTMODEL" + b"\x00" * 64)
    with pytest.raises(MalformedContainerError, match="magic"):
        load_model(path)


def test_load_truncated_block(model, tmp_path):
    path = tmp_path / "model.bin"
    save_model(model, path)
    data = path.read_bytes()
    path.write_bytes(data[:-40])
    with pytest.raises(MalformedContainerError, match="truncated"):
        load_model(path)


def test_load_rejects_bad_skin_weights(model, tmp_path):
    bad_weights = model.skin_weights.copy()
    bad_weights[17] *= 2.0  # row no longer sums to one
    bad = BodyModel(
        template_vertices=model.template_vertices,
        faces=model.faces,
        shape_dirs=model.shape_dirs,
        pose_dirs=model.pose_dirs,
        joint_regressor=model.joint_regressor,
        skin_weights=bad_weights,
        parents=model.parents,
    )
    path = tmp_path / "bad.bin"
    save_model(bad, path)
    with pytest.raises(InvalidModelError, match="row 17"):
        load_model(path)


def test_validate_rejects_two_roots(model):
    bad = BodyModel(
        template_vertices=model.template_vertices,
        faces=model.faces,
        shape_dirs=model.shape_dirs,
        pose_dirs=model.pose_dirs,
        joint_regressor=model.joint_regressor,
        skin_weights=model.skin_weights,
        parents=np.array([-1, -1, 1, 2], dtype=np.int32),
    )
    with pytest.raises(InvalidModelError, match="root"):
        bad.validate()
