"""Compiled kernels and their numpy fallback must agree."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from advloop import kernels

from conftest import box_mesh, icosphere

BACKENDS = kernels.backends()
needs_both = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")
PY = BACKENDS["python"]

point_sets = st.integers(0, 2 ** 31).flatmap(
    lambda seed: st.integers(1, 60).map(lambda n: np.random.default_rng(seed).normal(size=(n, 2)) * 3.0))


def test_backend_selection():
    assert kernels.BACKEND in BACKENDS
    assert kernels.convex_hull_2d is BACKENDS[kernels.BACKEND].convex_hull_2d


@needs_both
@settings(max_examples=100, deadline=None)
@given(point_sets, st.booleans())
def test_hull_agrees(xy, snap):
    if snap:
        # collinear and duplicate points on a coarse lattice
        xy = np.round(xy)
    a = PY.convex_hull_2d(xy)
    b = BACKENDS["cython"].convex_hull_2d(np.ascontiguousarray(xy))
    assert np.array_equal(a, np.asarray(b))


@needs_both
@settings(max_examples=100, deadline=None)
@given(point_sets)
def test_min_area_rect_agrees(xy):
    a = PY.min_area_rect(xy)
    b = BACKENDS["cython"].min_area_rect(np.ascontiguousarray(xy))
    assert np.allclose(a, b, rtol=0, atol=1e-9)


def test_min_area_rect_contains_points():
    xy = np.random.default_rng(0).normal(size=(200, 2))
    for mod in BACKENDS.values():
        cx, cy, ea, eb, ang = mod.min_area_rect(xy)
        c, s = np.cos(ang), np.sin(ang)
        local = (xy - [cx, cy]) @ np.array([[c, -s], [s, c]])
        assert np.all(np.abs(local[:, 0]) <= 0.5 * ea + 1e-9)
        assert np.all(np.abs(local[:, 1]) <= 0.5 * eb + 1e-9)
    with pytest.raises(ValueError):
        PY.min_area_rect(np.zeros((0, 2)))


def _tris(mesh):
    return np.ascontiguousarray(mesh.vertices[mesh.triangles])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_distance_and_winding_agree(seed):
    rng = np.random.default_rng(seed)
    tris = _tris(icosphere(1.0, subdiv=2))
    pts = rng.uniform(-2.0, 2.0, size=(40, 3))
    r = np.linalg.norm(pts, axis=1)
    for mod in BACKENDS.values():
        d = np.asarray(mod.point_mesh_distance(pts, tris))
        w = np.asarray(mod.winding_number(pts, tris))
        # the polyhedron sits inside the unit sphere, within its sagitta
        assert np.all(np.abs(d - np.abs(r - 1.0)) <= 0.03)
        far = np.abs(r - 1.0) > 0.05
        assert np.allclose(w[far], (r[far] < 1.0).astype(float), atol=1e-9)
    if "cython" in BACKENDS:
        assert np.allclose(PY.point_mesh_distance(pts, tris), BACKENDS["cython"].point_mesh_distance(pts, tris),
                           rtol=0, atol=1e-12)
        assert np.allclose(PY.winding_number(pts, tris), BACKENDS["cython"].winding_number(pts, tris),
                           rtol=0, atol=1e-12)


def test_distance_to_box_exact():
    tris = _tris(box_mesh((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0)))
    pts = np.array([[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [2.0, 2.0, 0.0], [2.0, 2.0, 2.0], [0.5, 0.2, 0.9]])
    ref = np.array([1.0, 2.0, np.sqrt(2.0), np.sqrt(3.0), 0.1])
    for mod in BACKENDS.values():
        assert np.allclose(mod.point_mesh_distance(pts, tris), ref, atol=1e-12)
