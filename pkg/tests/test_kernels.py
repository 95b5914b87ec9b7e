"""Delaunay, predicates, nearest-neighbour and auction kernels, both backends."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from occo import _pykernels as py
from occo import kernels
from occo.occlusion import delaunay_2d

from oracles import all_ccw, circumcircle_violations, hull_boundary_count

BACKENDS = ["python"] + (["cython"] if kernels.has_compiled() else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return kernels.get_backend(request.param)


def tris_of(backend, pts):
    t, _ = backend.delaunay(pts[:, 0].tolist(), pts[:, 1].tolist(), 1e-9)
    return np.array(t, dtype=np.int64).reshape(-1, 3)


def test_three_points_one_triangle(backend):
    assert len(tris_of(backend, np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))) == 1


def test_unit_square_two_triangles(backend):
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    t = tris_of(backend, pts)
    assert len(t) == 2
    shared = set(t[0]) & set(t[1])
    assert len(shared) == 2 and shared in ({0, 2}, {1, 3})
    assert circumcircle_violations(pts, t) == 0


@pytest.mark.parametrize("seed", range(10))
def test_random_sets_valid(backend, seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 1600, (50 + 20 * seed, 2))
    t = tris_of(backend, pts)
    assert all_ccw(pts, t)
    assert circumcircle_violations(pts, t) == 0
    assert len(t) == 2 * len(pts) - 2 - hull_boundary_count(pts)


def test_grid_cocircular(backend):
    g = np.array([(x, y) for x in range(12) for y in range(12)], dtype=float)
    t = tris_of(backend, g)
    assert len(t) == 2 * 11 * 11
    assert circumcircle_violations(g, t) == 0


def test_collinear_then_lifted(backend):
    line = np.array([[i, 2.0 * i] for i in range(6)], dtype=float)
    assert len(tris_of(backend, line)) == 0
    pts = np.vstack([line, [[0.0, 5.0]]])
    t = tris_of(backend, pts)
    assert len(t) == 5
    assert circumcircle_violations(pts, t) == 0


def test_duplicates_merged(backend):
    pts = [0.0, 1.0, 0.0, 1.0 + 1e-12, 0.5]
    ys = [0.0, 0.0, 1.0, 0.0, 0.5]
    tris, rep = backend.delaunay(pts, ys, 1e-9)
    assert rep[3] == 1
    assert all(3 not in tri for tri in tris)


def test_backends_agree_on_triangles():
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernels not built")
    rng = np.random.default_rng(5)
    for n in (3, 10, 100, 400):
        pts = rng.normal(size=(n, 2))
        a = tris_of(kernels.get_backend("python"), pts)
        b = tris_of(kernels.get_backend("cython"), pts)
        np.testing.assert_array_equal(a, b)


def test_delaunay_2d_wrapper():
    mesh = delaunay_2d([[0, 0], [2, 0], [0, 2], [2, 2], [1, 1]])
    assert mesh.faces.shape == (4, 3)
    assert np.all(mesh.vertices[:, 2] == 0)
    assert delaunay_2d([[0, 0], [1, 1]]).faces.shape == (0, 3)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(-20, 20), st.integers(-20, 20)), min_size=3, max_size=40,
                unique=True))
def test_delaunay_property_integer_lattice(raw):
    # small integer coordinates force many cocircular and collinear configurations
    pts = np.array(raw, dtype=float)
    for name in BACKENDS:
        t = tris_of(kernels.get_backend(name), pts)
        assert all_ccw(pts, t)
        assert circumcircle_violations(pts, t) == 0
        if len(t):
            assert len(t) == 2 * len(pts) - 2 - hull_boundary_count(pts)


def test_predicates_exact_fallback():
    # nearly collinear points defeat the floating-point filter
    a, b = (0.5, 0.5), (12.0, 12.0)
    c = (24.0, 24.0 + 2 ** -48)
    assert py.orient_sign(*a, *b, *c) == (1 if py.exact_orient(*a, *b, *c) > 0 else -1)
    assert py.orient_sign(0, 0, 1, 1, 2, 2) == 0
    # four cocircular points
    assert py.incircle_sign(1, 0, 0, 1, -1, 0, 0, -1) == 0
    assert py.incircle_sign(1, 0, 0, 1, -1, 0, 0, 0) == 1


def test_plane_depth_reciprocal_interpolation():
    u, v, depth = [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 2.0, 4.0]
    assert py.plane_depth(u, v, depth, 0, 1, 2, 0.0, 0.0) == pytest.approx(1.0)
    mid = py.plane_depth(u, v, depth, 0, 1, 2, 0.5, 0.0)
    assert mid == pytest.approx(1.0 / (0.5 / 1.0 + 0.5 / 2.0))


def test_nearest_matches_bruteforce(backend, rng):
    a = rng.normal(size=(300, 3))
    b = rng.normal(size=(257, 3))
    d, i = backend.nearest(a, b)
    full = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    np.testing.assert_array_equal(i, full.argmin(1))
    np.testing.assert_allclose(d, full.min(1), rtol=1e-14)


def test_nearest_ties_lowest_index(backend):
    a = np.zeros((1, 3))
    b = np.array([[1.0, 0, 0], [0, 1.0, 0], [-1.0, 0, 0]])
    _, i = backend.nearest(a, b)
    assert i[0] == 0


def test_auction_near_optimal(backend, rng):
    from scipy.optimize import linear_sum_assignment
    for n in (1, 2, 7, 30):
        c = rng.uniform(size=(n, n))
        p = backend.auction(c, 1e-6)
        assert sorted(p.tolist()) == list(range(n))
        r, col = linear_sum_assignment(c)
        assert c[np.arange(n), p].sum() - c[r, col].sum() <= 1e-6


def test_backends_agree_on_visibility_and_auction():
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernels not built")
    P, C = kernels.get_backend("python"), kernels.get_backend("cython")
    rng = np.random.default_rng(9)
    for _ in range(20):
        n = int(rng.integers(3, 200))
        u, v, z = rng.uniform(0, 100, n), rng.uniform(0, 100, n), rng.uniform(1, 2, n)
        args = (u.tolist(), v.tolist(), z.tolist(), 1e-4, 1e-9)
        assert list(P.zbuffer_visibility(*args)) == list(C.zbuffer_visibility(*args))
        c = rng.uniform(size=(12, 12))
        np.testing.assert_array_equal(P.auction(c, 1e-6), C.auction(c, 1e-6))


def test_backend_selection(monkeypatch):
    assert kernels.get_backend("python") is py
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
    assert kernels.BACKEND in ("python", "cython")


def test_oracle_flags_non_delaunay():
    # thin kite: the long diagonal gives skinny triangles that violate the empty-circle rule
    pts = np.array([[0.0, 0.0], [1.0, -0.2], [2.0, 0.0], [1.0, 0.2]])
    assert circumcircle_violations(pts, [[0, 1, 2], [0, 2, 3]]) > 0
    assert circumcircle_violations(pts, [[0, 1, 3], [1, 2, 3]]) == 0
    assert hull_boundary_count([[0, 0], [1, 0], [2, 0], [1, 1]]) == 4
