import numpy as np
import pytest

from reshapekit._kernels import rasterize, rasterize_cython, rasterize_numpy
from reshapekit.bodymodel import Mesh, make_test_model, skin
from reshapekit.render import (
    Camera,
    DepthMap,
    RenderError,
    depth_to_conditioning,
    frame_body_camera,
    load_depth_png,
    load_gray_png,
    render_conditioning,
    render_depth,
    save_depth_png,
    save_gray_png,
)
from oracles import raycast_depth


@pytest.fixture(scope="module")
def body_mesh():
    model = make_test_model(seed=0)
    return skin(model, np.zeros(4), np.zeros(12))


def tri(xy, attrs=(1.0, 1.0, 1.0)):
    return (
        np.asarray(xy, dtype=np.float64),
        np.asarray(attrs, dtype=np.float64),
        np.array([[0, 1, 2]], dtype=np.int32),
    )


# ---------------------------------------------------------------------------
# kernel coverage semantics
# ---------------------------------------------------------------------------


def test_axis_aligned_square_coverage():
    # two triangles tiling [0,8)x[0,8): bottom/right boundary pixels excluded
    xy = np.array([[0.0, 0.0], [8.0, 0.0], [8.0, 8.0], [0.0, 8.0]])
    attr = np.ones(4)
    faces = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
    value, owner = rasterize(xy, attr, faces, 16, 16)
    covered = owner >= 0
    assert covered.sum() == 64
    assert covered[:8, :8].all()


def test_shared_diagonal_edge_no_double_cover():
    # diagonal passes exactly through pixel centers; each center must be
    # covered exactly once across the two triangles
    xy = np.array([[-0.5, -0.5], [9.5, -0.5], [9.5, 9.5], [-0.5, 9.5]])
    attr = np.zeros(4)
    faces = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)

    value, owner = rasterize(xy, attr, faces, 16, 16)
    union = (owner >= 0).sum()

    _, own_a = rasterize(xy, attr, faces[:1], 16, 16)
    _, own_b = rasterize(xy, attr, faces[1:], 16, 16)
    assert (own_a >= 0).sum() + (own_b >= 0).sum() == union
    # quad interior holds 9x9 pixel centers (right/bottom boundary excluded)
    assert union == 81
    # every center on the shared diagonal is covered by exactly one triangle
    for k in range(9):
        assert (own_a[k, k] >= 0) != (own_b[k, k] >= 0)


def test_shared_horizontal_edge_no_double_cover():
    # two rectangles stacked at y=4.5 (a row of pixel centers)
    pts = np.array(
        [[0.0, 0.5], [8.0, 0.5], [8.0, 4.5], [0.0, 4.5], [8.0, 8.5], [0.0, 8.5]]
    )
    attr = np.zeros(6)
    upper = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
    lower = np.array([[3, 2, 4], [3, 4, 5]], dtype=np.int32)
    _, own_u = rasterize(pts, attr, upper, 16, 16)
    _, own_l = rasterize(pts, attr, lower, 16, 16)
    both = (own_u >= 0) & (own_l >= 0)
    assert not both.any()
    union = (own_u >= 0) | (own_l >= 0)
    assert union.sum() == 8 * 8  # rows 0..7, cols 0..7
    # the shared row of centers belongs to the lower rectangle (its top edge)
    assert (own_l[4, :8] >= 0).all()
    assert (own_u[4, :8] == -1).all()


def test_nearest_triangle_wins():
    xy = np.array([[1.0, 1.0], [11.0, 1.0], [1.0, 11.0]])
    attr_near = np.full(3, 2.0)
    attr_far = np.full(3, 5.0)
    xy2 = np.vstack([xy, xy])
    attrs = np.concatenate([attr_far, attr_near])
    faces = np.array([[0, 1, 2], [3, 4, 5]], dtype=np.int32)
    value, owner = rasterize(xy2, attrs, faces, 16, 16)
    fg = owner >= 0
    assert fg.any()
    assert np.all(owner[fg] == 1)
    # constant attribute interpolates to itself up to weight-sum rounding
    assert np.allclose(value[fg], 2.0, atol=1e-12)


def test_equal_depth_tie_goes_to_lower_index():
    xy = np.array([[1.0, 1.0], [11.0, 1.0], [1.0, 11.0]])
    xy2 = np.vstack([xy, xy])
    attrs = np.full(6, 3.0)
    faces = np.array([[0, 1, 2], [3, 4, 5]], dtype=np.int32)
    _, owner = rasterize(xy2, attrs, faces, 16, 16)
    fg = owner >= 0
    assert np.all(owner[fg] == 0)


def test_degenerate_triangle_skipped():
    xy = np.array([[1.0, 1.0], [5.0, 5.0], [9.0, 9.0]])
    value, owner = rasterize(xy, np.ones(3), np.array([[0, 1, 2]], dtype=np.int32), 16, 16)
    assert (owner == -1).all()
    assert np.isinf(value).all()


def test_winding_insensitive():
    xy = np.array([[1.0, 1.0], [11.0, 1.0], [1.0, 11.0]])
    attr = np.array([1.0, 2.0, 3.0])
    a = rasterize(xy, attr, np.array([[0, 1, 2]], dtype=np.int32), 16, 16)
    b = rasterize(xy, attr, np.array([[0, 2, 1]], dtype=np.int32), 16, 16)
    assert np.array_equal(a[0], b[0])


def test_kernel_input_validation():
    xy = np.zeros((3, 2))
    with pytest.raises(ValueError, match="attr"):
        rasterize(xy, np.zeros(2), np.zeros((1, 3), dtype=np.int32), 4, 4)
    with pytest.raises(ValueError, match="index"):
        rasterize(xy, np.zeros(3), np.array([[0, 1, 7]], dtype=np.int32), 4, 4)
    with pytest.raises(ValueError, match="finite"):
        rasterize(xy + np.nan, np.zeros(3), np.array([[0, 1, 2]], dtype=np.int32), 4, 4)


@pytest.mark.skipif(rasterize_cython is None, reason="compiled kernel not built")
def test_backends_bit_identical():
    rng = np.random.default_rng(42)
    for _ in range(20):
        n_v = 30
        xy = rng.uniform(-10.0, 70.0, size=(n_v, 2))
        attr = rng.uniform(0.5, 5.0, size=n_v)
        faces = rng.integers(0, n_v, size=(40, 3)).astype(np.int32)
        xy_c = np.ascontiguousarray(xy)
        attr_c = np.ascontiguousarray(attr)
        v_py, o_py = rasterize_numpy(xy_c, attr_c, faces, 64, 64)
        v_cy, o_cy = rasterize_cython(xy_c, attr_c, faces, 64, 64)
        assert v_py.tobytes() == np.asarray(v_cy).tobytes()
        assert o_py.tobytes() == np.asarray(o_cy).tobytes()


# ---------------------------------------------------------------------------
# cameras
# ---------------------------------------------------------------------------


def test_pinhole_projection_known_point():
    cam = Camera("pinhole", 100.0, 100.0, 32.0, 32.0)
    xy, z = cam.project(np.array([[0.5, -0.25, 2.0]]))
    assert xy[0] == pytest.approx([0.5 / 2.0 * 100 + 32, -0.25 / 2.0 * 100 + 32])
    assert z[0] == 2.0


def test_weak_perspective_ignores_depth():
    cam = Camera("weak_perspective", 50.0, 50.0, 10.0, 20.0)
    xy1, _ = cam.project(np.array([[0.2, 0.1, 1.0]]))
    xy2, _ = cam.project(np.array([[0.2, 0.1, 7.0]]))
    assert np.allclose(xy1, xy2)
    assert np.allclose(xy1[0], [0.2 * 50 + 10, 0.1 * 50 + 20])


@pytest.mark.parametrize("kind", ["pinhole", "weak_perspective"])
def test_pixel_ray_inverts_projection(kind):
    rng = np.random.default_rng(9)
    rot = np.diag([1.0, -1.0, -1.0])
    cam = Camera(kind, 200.0, 220.0, 48.0, 64.0, rot, np.array([0.1, 0.2, 3.0]))
    for _ in range(20):
        p = rng.uniform(-0.5, 0.5, size=3)
        xy, z = cam.project(p[None, :])
        origin, direction = cam.pixel_ray(xy[0, 0], xy[0, 1])
        cam_p = cam.world_to_camera(p[None, :])[0]
        # the point must lie on the ray
        t = (cam_p - origin) @ direction / (direction @ direction)
        assert np.linalg.norm(origin + t * direction - cam_p) < 1e-9


def test_camera_round_trip_dict():
    cam = frame_body_camera(Mesh(np.random.default_rng(0).uniform(size=(8, 3)), np.zeros((1, 3), dtype=np.int32)))
    again = Camera.from_dict(cam.to_dict())
    assert again.kind == cam.kind
    assert again.fx == cam.fx
    assert np.allclose(again.rotation, cam.rotation)


def test_bad_camera_kind():
    with pytest.raises(RenderError, match="kind"):
        Camera("orthographic", 1, 1, 0, 0)


# ---------------------------------------------------------------------------
# depth rendering vs ray casting
# ---------------------------------------------------------------------------


def test_constant_depth_plane_is_exact():
    # a triangle parallel to the image plane rasterizes to its z up to
    # weight-sum rounding (a few ulp)
    verts = np.array([[-0.5, -0.5, 2.0], [0.5, -0.5, 2.0], [0.0, 0.5, 2.0]])
    mesh = Mesh(verts, np.array([[0, 1, 2]], dtype=np.int32))
    cam = Camera("pinhole", 40.0, 40.0, 16.0, 16.0)
    dm = render_depth(mesh, cam, 32, 32)
    assert dm.foreground.any()
    assert np.allclose(dm.depth[dm.foreground], 2.0, atol=1e-12)


@pytest.mark.parametrize("kind", ["pinhole", "weak_perspective"])
def test_depth_matches_raycast_oracle(kind, body_mesh):
    width = height = 32
    cam = frame_body_camera(body_mesh, width, height, kind=kind)
    dm = render_depth(body_mesh, cam, width, height)
    ref = raycast_depth(body_mesh.vertices, body_mesh.faces, cam, width, height)

    ours_fg = dm.foreground
    ref_fg = ref > 0
    agree = ours_fg == ref_fg
    # coverage may differ only on silhouette pixels
    assert agree.mean() > 0.97
    both = ours_fg & ref_fg
    # where both hit, interpolated depth tracks the true intersection
    diff = np.abs(dm.depth[both] - ref[both])
    assert np.percentile(diff, 90) < 1e-6
    assert diff.max() < 1e-3  # silhouette-adjacent pixels can hit another face


def test_render_depth_culls_behind_camera(body_mesh):
    cam = Camera("pinhole", 100.0, 100.0, 16.0, 16.0, np.eye(3), np.array([0.0, 0.0, -5.0]))
    dm = render_depth(body_mesh, cam, 32, 32)
    assert not dm.foreground.any()


def test_depthmap_invariants_enforced():
    with pytest.raises(RenderError, match="positive"):
        DepthMap(np.zeros((4, 4)), np.zeros((4, 4), dtype=np.int32))
    bad_bg = np.ones((4, 4))
    with pytest.raises(RenderError, match="zero"):
        DepthMap(bad_bg, np.full((4, 4), -1, dtype=np.int32))


# ---------------------------------------------------------------------------
# conditioning image
# ---------------------------------------------------------------------------


def test_conditioning_value_range(body_mesh):
    cond, dm = render_conditioning(body_mesh, width=96, height=128)
    fg = dm.foreground
    assert cond.dtype == np.uint8
    assert cond[~fg].max(initial=0) == 0
    assert cond[fg].min() >= 1
    nearest = dm.depth[fg].min()
    farthest = dm.depth[fg].max()
    assert cond[fg][dm.depth[fg] == nearest].max() == 255
    assert cond[fg][dm.depth[fg] == farthest].min() == 1


def test_conditioning_flat_depth_saturates():
    depth = np.zeros((8, 8))
    owner = np.full((8, 8), -1, dtype=np.int32)
    depth[2:5, 2:5] = 1.5
    owner[2:5, 2:5] = 0
    cond = depth_to_conditioning(DepthMap(depth, owner))
    assert (cond[2:5, 2:5] == 255).all()


def test_conditioning_monotone_in_depth():
    # strictly increasing depth maps to strictly decreasing brightness
    depth = np.zeros((1, 6))
    depth[0, 1:5] = [1.0, 1.5, 2.0, 2.5]
    owner = np.full((1, 6), -1, dtype=np.int32)
    owner[0, 1:5] = 0
    cond = depth_to_conditioning(DepthMap(depth, owner))
    vals = cond[0, 1:5].astype(int)
    assert vals[0] == 255 and vals[-1] == 1
    assert all(b < a for a, b in zip(vals, vals[1:]))


# ---------------------------------------------------------------------------
# PNG round trips
# ---------------------------------------------------------------------------


def test_depth_png_round_trip(tmp_path, body_mesh):
    dm = render_depth(body_mesh, frame_body_camera(body_mesh, 64, 96), 64, 96)
    path = tmp_path / "depth.png"
    save_depth_png(dm, path)
    back = load_depth_png(path)
    # quantized to millimeters
    assert np.max(np.abs(back - dm.depth)) <= 0.0005 + 1e-12


def test_gray_png_round_trip(tmp_path, body_mesh):
    cond, _ = render_conditioning(body_mesh, width=64, height=96)
    path = tmp_path / "cond.png"
    save_gray_png(cond, path)
    assert np.array_equal(load_gray_png(path), cond)


def test_load_depth_rejects_8bit(tmp_path):
    save_gray_png(np.zeros((4, 4), dtype=np.uint8), tmp_path / "x.png")
    with pytest.raises(RenderError, match="16-bit"):
        load_depth_png(tmp_path / "x.png")


def test_conditioning_matches_golden_fixture():
    """Frozen end-to-end render: any drift in skinning, projection,
    rasterization, or normalization shows up as a pixel difference here,
    regardless of which kernel backend is active."""
    from pathlib import Path

    model = make_test_model(seed=0)
    mesh = skin(model, np.zeros(4), np.zeros(12))
    cond, _ = render_conditioning(mesh, width=96, height=128)
    golden = load_gray_png(Path(__file__).parent / "data" / "conditioning_golden.png")
    assert np.array_equal(cond, golden)


def test_batch_raycast_matches_scalar_raycast():
    """The vectorized oracle must agree with the trusted scalar one before
    anything else is allowed to lean on it."""
    from oracles import raycast_depth, raycast_depth_batch

    for seed, kind in ((0, "pinhole"), (1, "weak_perspective")):
        model = make_test_model(seed=seed)
        rng = np.random.default_rng(seed + 50)
        mesh = skin(model, rng.normal(0, 1, 4), rng.normal(0, 0.2, 12))
        camera = frame_body_camera(mesh, 24, 32, kind=kind)
        slow = raycast_depth(mesh.vertices, mesh.faces, camera, 24, 32)
        fast = raycast_depth_batch(mesh.vertices, mesh.faces, camera, 24, 32)
        assert np.max(np.abs(slow - fast)) < 1e-12
