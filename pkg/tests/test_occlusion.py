import numpy as np
import pytest
from scipy import stats

from occo.cloud import euler_to_matrix, sample_mesh
from occo.errors import AllOccluded, EmptyCloud, InputError, NonPositiveDepth
from occo.occlusion import (CamPoints, CameraIntrinsics, RigidPose, ViewSpec, occlude, project_to_camera,
                            sample_views, unproject, visibility_reference, visibility_zbuffer)
from occo.synthetic import icosphere

from conftest import random_cloud


def campoints(uvz):
    uvz = np.asarray(uvz, dtype=np.float64)
    cam = np.column_stack([uvz[:, :2] * uvz[:, 2:], uvz[:, 2]])
    return CamPoints(cam, uvz[:, :2].copy(), uvz[:, 2].copy(), np.arange(len(uvz)))


def test_principal_point_projection():
    # standoff 2 places the world origin at camera-frame (0, 0, 2)
    view = ViewSpec(standoff=2.0)
    cp = project_to_camera([[0.0, 0.0, 0.0], [0.4, 0.0, 0.0]], view)
    np.testing.assert_allclose(cp.uv[0], [800, 600])
    assert cp.depth[0] == 2.0
    np.testing.assert_allclose(cp.uv[1], [1000, 600])


def test_skew_enters_u_only():
    view = ViewSpec(CameraIntrinsics(gamma=50.0), standoff=2.0)
    cp = project_to_camera([[0.0, 0.2, 0.0]], view)
    np.testing.assert_allclose(cp.uv[0], [800 + 50 * 0.1, 600 + 1000 * 0.1])


def test_nonpositive_depth():
    with pytest.raises(NonPositiveDepth):
        project_to_camera([[0.0, 0.0, -5.0]], ViewSpec(standoff=3.0))
    with pytest.raises(EmptyCloud):
        project_to_camera(np.zeros((0, 3)), ViewSpec())


def test_roundtrip_random(rng):
    worst = 0.0
    for view in sample_views(200, rng):
        pts = rng.uniform(-1, 1, (100, 3))
        back = unproject(project_to_camera(pts, view), view).points
        worst = max(worst, np.abs(back - pts).max())
    assert worst < 1e-9


def test_roundtrip_with_translation_and_skew(rng):
    R = euler_to_matrix(0.2, -0.5, 1.3)
    view = ViewSpec(CameraIntrinsics(f=700, gamma=13.0, w=640, h=480), RigidPose(R, np.array([0.1, -0.2, 0.3])))
    pts = rng.normal(scale=0.5, size=(50, 3))
    np.testing.assert_allclose(unproject(project_to_camera(pts, view), view).points, pts, atol=1e-9)


def test_pose_validation():
    with pytest.raises(InputError):
        RigidPose(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(InputError):
        CameraIntrinsics(f=0.0)
    with pytest.raises(InputError):
        ViewSpec(standoff=0.0)


def test_hand_built_occluder():
    # near triangle at depth 1, a fourth point behind its interior at depth 2
    cp = campoints([[0, 0, 1], [10, 0, 1], [0, 10, 1], [2, 2, 2]])
    for fn in (visibility_zbuffer, visibility_reference):
        np.testing.assert_array_equal(fn(cp), [True, True, True, False])


def test_epsilon_guard_and_trivial_cases():
    eps = 1e-4
    cp = campoints([[0, 0, 1], [10, 0, 1], [0, 10, 1], [2, 2, 1 + eps / 2]])
    assert visibility_zbuffer(cp, eps).all()
    assert visibility_reference(cp, eps).all()
    assert visibility_zbuffer(campoints([[3, 4, 2]])).tolist() == [True]
    line = campoints([[0, 0, 1], [1, 1, 2], [2, 2, 3]])
    assert visibility_zbuffer(line).all() and visibility_reference(line).all()
    assert len(visibility_zbuffer(campoints(np.zeros((0, 3))))) == 0


def test_point_on_shared_edge_and_vertex():
    # two triangles sharing the diagonal (0,0)-(10,10); probe points on the edge and on a vertex
    base = [[0, 0, 1], [10, 0, 1], [10, 10, 1], [0, 10, 1]]
    for probe in ([5, 5, 3], [10, 0, 3], [5, 0, 3]):
        cp = campoints(base + [probe])
        z, r = visibility_zbuffer(cp), visibility_reference(cp)
        np.testing.assert_array_equal(z, r)
        assert not z[-1]


def test_zbuffer_matches_reference_random(rng):
    for _ in range(40):
        n = int(rng.integers(3, 150))
        view = sample_views(1, rng)[0]
        cp = project_to_camera(random_cloud(rng, n), view)
        np.testing.assert_array_equal(visibility_zbuffer(cp), visibility_reference(cp))


def test_sphere_visible_fraction():
    mesh = icosphere(3)
    for seed in range(10):
        rng = np.random.default_rng(seed)
        pts = sample_mesh(mesh, 2048, rng).points
        ov = occlude(pts, sample_views(1, rng)[0])
        assert 0.3 <= ov.visible_fraction <= 0.7


def test_plane_face_on_all_visible(rng):
    pts = np.column_stack([rng.uniform(-1, 1, (200, 2)), np.zeros(200)])
    ov = occlude(pts, ViewSpec())
    assert ov.visible_mask.all()


def test_occlude_subset_and_idempotent(rng):
    for _ in range(20):
        pts = random_cloud(rng, int(rng.integers(10, 200)))
        view = sample_views(1, rng)[0]
        ov = occlude(pts, view)
        np.testing.assert_allclose(ov.cloud.points, pts[ov.visible_mask], atol=1e-9)
        again = occlude(ov.cloud, view)
        assert again.visible_mask.all()


def test_more_tolerance_never_hides_more(rng):
    for _ in range(20):
        pts = random_cloud(rng, 120)
        cp = project_to_camera(pts, sample_views(1, rng)[0])
        tight, loose = visibility_zbuffer(cp, 1e-6), visibility_zbuffer(cp, 1e-2)
        assert loose.sum() >= tight.sum()


def test_all_occluded_needs_pathological_eps():
    cp_pts = np.array([[0.0, 0.0, 0.0]])
    # one point can never be hidden
    assert occlude(cp_pts, ViewSpec()).visible_mask.all()
    with pytest.raises(AllOccluded):
        # a negative tolerance hides the points behind any covering surface, including their own
        from occo import occlusion
        orig = occlusion.visibility_zbuffer
        try:
            occlusion.visibility_zbuffer = lambda cp, eps: np.zeros(len(cp), dtype=bool)
            occlusion.occlude(cp_pts, ViewSpec())
        finally:
            occlusion.visibility_zbuffer = orig


def test_sample_views_properties():
    views = sample_views(10, np.random.default_rng(0))
    assert len(views) == 10
    assert all(v.intrinsics == CameraIntrinsics(1000, 0, 1600, 1200) for v in views)
    a = sample_views(1, np.random.default_rng(42))[0].pose.R
    b = sample_views(1, np.random.default_rng(42))[0].pose.R
    assert np.array_equal(a, b)
    yaws = [v.angles[0] for v in sample_views(10_000, np.random.default_rng(1))]
    assert stats.kstest(np.array(yaws) / (2 * np.pi), "uniform").pvalue > 0.001
    with pytest.raises(InputError):
        sample_views(0, np.random.default_rng(0))
    d = views[0].to_dict()
    assert d["f"] == 1000 and len(d["R"]) == 3
