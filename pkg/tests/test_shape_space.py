import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial import cKDTree

from advloop.shape import (DimensionError, EmptyShapeError, SdfVolume, SignAmbiguityError, TriangleMesh,
                           fit_basis, library_volumes, marching_cubes, mesh_to_sdf, procedural_vehicle,
                           read_obj, reconstruction_error, vertex_deform, write_obj)
from advloop.shape.basis import ShapeBasis

from conftest import icosphere, sphere_volume


# ------------------------------------------------------------------ mesh_to_sdf

@pytest.fixture(scope="module")
def sphere_sdf():
    return mesh_to_sdf(icosphere(0.4, subdiv=4), 32, 1.0)


def test_sdf_sphere_center(sphere_sdf):
    c = sphere_sdf.sample([[0.0, 0.0, 0.0]])[0]
    assert abs(c - (-0.4)) <= sphere_sdf.voxel_size


def test_sdf_sphere_corner(sphere_sdf):
    corner = sphere_sdf.values[0, 0, 0]
    assert abs(corner - (np.sqrt(3 * 0.25) - 0.4)) <= sphere_sdf.voxel_size


def test_sdf_on_surface_is_zero(sphere_sdf):
    p = icosphere(0.4, subdiv=4).vertices[:50]
    assert np.all(np.abs(sphere_sdf.sample(p)) <= 0.5 * sphere_sdf.voxel_size)


def test_sdf_rejects_open_mesh():
    m = icosphere(0.4, subdiv=1)
    opened = TriangleMesh(m.vertices, m.triangles[1:])
    with pytest.raises(SignAmbiguityError, match="sign ambiguity"):
        mesh_to_sdf(opened, 8)


def test_sdf_volume_invariants(sphere_sdf):
    assert sphere_sdf.values.size == 32 ** 3
    assert np.all(np.isfinite(sphere_sdf.values))
    assert np.all(np.abs(sphere_sdf.values) <= sphere_sdf.extent * np.sqrt(3))
    assert sphere_sdf.values[16, 16, 16] < 0


# ------------------------------------------------------------------ fit_basis / encode

def _independent_volumes(n, r=10, seed=0):
    rng = np.random.default_rng(seed)
    return [SdfVolume(r, 1.0, rng.normal(size=r ** 3)) for _ in range(n)]


def test_identical_inputs_zero_latents():
    v = sphere_volume(0.3, 10)
    b = fit_basis([v, v, v], 1)
    assert np.array_equal(b.mean, v.flat())
    for vol in (v, v, v):
        assert np.all(b.encode(vol) == 0.0)
    assert np.all(b.latent_lo == 0.0) and np.all(b.latent_hi == 0.0)


def _gram_reconstruction(vols, target):
    """Project onto the span of centered samples via the Gram matrix (no SVD)."""
    x = np.stack([v.flat() for v in vols])
    mu = x.mean(axis=0)
    a = (x - mu).T
    coef = np.linalg.lstsq(a.T @ a, a.T @ (target - mu), rcond=None)[0]
    return a @ coef + mu


def test_full_rank_round_trip():
    vols = _independent_volumes(6)
    b = fit_basis(vols, 5)
    for v in vols:
        rec = b.field(b.encode(v))
        oracle = _gram_reconstruction(vols, v.flat())
        assert np.linalg.norm(rec - v.flat()) / np.linalg.norm(v.flat()) <= 1e-5
        assert np.linalg.norm(rec - oracle) / np.linalg.norm(oracle) <= 1e-5


def test_variance_ordering_and_orthonormal():
    b = fit_basis(_independent_volumes(8, seed=3), 4)
    assert np.all(np.diff(b.explained_variance) <= 0)
    assert b.explained_variance[0] >= b.explained_variance[1]
    assert np.allclose(b.components.T @ b.components, np.eye(4), atol=1e-6)
    assert np.all(b.latent_lo <= b.latent_hi)


def test_fit_needs_k_plus_one():
    with pytest.raises(DimensionError):
        fit_basis(_independent_volumes(3), 3)
    with pytest.raises(DimensionError):
        fit_basis(_independent_volumes(3), 0)


def test_encode_mean_and_axis():
    vols = _independent_volumes(5, seed=1)
    b = fit_basis(vols, 3)
    mean = SdfVolume(b.resolution, b.extent, b.mean)
    assert np.allclose(b.encode(mean), 0.0, atol=1e-12)
    z = b.encode(SdfVolume(b.resolution, b.extent, b.mean + 2.5 * b.components[:, 0]))
    assert np.allclose(z, [2.5, 0.0, 0.0], atol=1e-9)
    for v in vols:
        z = b.encode(v)
        assert np.all(z >= b.latent_lo - 1e-12) and np.all(z <= b.latent_hi + 1e-12)


def test_encode_resolution_mismatch():
    b = fit_basis(_independent_volumes(4), 2)
    with pytest.raises(DimensionError):
        b.encode(sphere_volume(0.3, 12))


def test_reconstruction_error_monotone_in_k(small_basis, library):
    vols = library_volumes(library.meshes()[:12], 12, library.prescale())
    errs = [reconstruction_error(fit_basis(vols, k), vols) for k in (1, 2, 3, 4)]
    assert all(a >= b - 1e-9 for a, b in zip(errs, errs[1:]))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3))
def test_linear_round_trip_property(small_basis, u):
    b = small_basis
    z = b.latent_lo + np.array(u) * (b.latent_hi - b.latent_lo)
    assert np.allclose(b.encode(b.volume(z)), z, atol=1e-6)


# ------------------------------------------------------------------ decode

def test_decode_mean_code_is_rescaled_mean(small_basis):
    b = small_basis
    u = b.code_from_latent(np.zeros(b.k))
    if np.any(u < 0) or np.any(u > 1):
        pytest.skip("zero latent outside library bounds")
    mesh = b.decode(u)
    ref = marching_cubes(SdfVolume(b.resolution, b.extent, b.mean), 0.0)
    assert np.array_equal(mesh.triangles, ref.triangles)
    assert np.allclose(mesh.vertices, ref.vertices * b.canonical_scale, rtol=0, atol=1e-12)


def test_decode_width_scale(small_basis):
    b = small_basis
    z = 0.5 * (b.latent_lo + b.latent_hi)
    base = b.decode_latent(z)
    wide = b.decode_latent(z, width_scale=1.3)
    assert wide.extents()[1] == pytest.approx(1.3 * base.extents()[1], rel=1e-12)
    assert wide.extents()[0] == base.extents()[0]


def test_decode_code_bounds(small_basis):
    with pytest.raises(ValueError):
        small_basis.decode(np.full(small_basis.code_dim, 1.5))


def test_decode_empty_shape():
    v = SdfVolume(8, 1.0, np.ones(8 ** 3))
    b = ShapeBasis(8, 1.0, v.flat().copy(), np.eye(8 ** 3)[:, :1], np.zeros(1), np.zeros(1), 1.0, np.ones(1))
    with pytest.raises(EmptyShapeError, match="empty shape"):
        b.decode(np.zeros(3))


def test_decode_full_rank_hausdorff(library):
    meshes = library.meshes()[::10][:4]
    scale = library.prescale()
    r = 24
    vols = library_volumes(meshes, r, scale)
    b = fit_basis(vols, len(vols) - 1, scale)
    tol = 2 * b.extent / (r - 1) * scale
    for mesh, vol in zip(meshes, vols):
        dec = b.decode_latent(b.encode(vol))
        a, c = mesh.sample_surface(20000, 1), dec.sample_surface(20000, 2)
        h = max(cKDTree(a).query(c)[0].max(), cKDTree(c).query(a)[0].max())
        assert h <= tol


def test_basis_file_round_trip(tmp_path, small_basis):
    p = tmp_path / "b.bin"
    small_basis.save(p)
    b2 = ShapeBasis.load(p)
    assert np.array_equal(b2.components, small_basis.components)
    assert np.array_equal(b2.mean, small_basis.mean)
    assert b2.canonical_scale == small_basis.canonical_scale
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(ValueError, match="truncated"):
        ShapeBasis.load(p)


# ------------------------------------------------------------------ marching cubes

def test_marching_sphere_radius():
    vol = sphere_volume(0.35, 48)
    mesh = marching_cubes(vol, 0.0)
    r = np.linalg.norm(mesh.vertices, axis=1)
    assert np.all(np.abs(r - 0.35) <= np.sqrt(3) * vol.voxel_size)


def test_marching_empty():
    assert marching_cubes(SdfVolume(6, 1.0, np.ones(216)), 0.0).is_empty


def test_marching_closed_surface():
    mesh = marching_cubes(sphere_volume(0.3, 24, center=(0.05, -0.02, 0.01)), 0.0)
    assert set(mesh.edge_incidence().values()) == {2}


def _interp_residual(vol, mesh, iso):
    """Value of the trilinear field at each vertex minus iso; exact on voxel edges."""
    return np.abs(vol.sample(mesh.vertices) - iso)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.15, 0.4), st.floats(-0.05, 0.05), st.floats(-0.05, 0.05), st.floats(-0.02, 0.02))
def test_marching_vertices_on_edges(r, cx, cy, iso):
    vol = sphere_volume(r, 16, center=(cx, cy, 0.0))
    mesh = marching_cubes(vol, iso)
    h = 0.5 * vol.extent
    assert np.all(np.abs(mesh.vertices) <= h + 1e-12)
    assert np.all(_interp_residual(vol, mesh, iso) <= 1e-6 * np.abs(vol.values).max())
    # each vertex lies on a grid line: at least two of its coordinates are grid nodes
    g = (mesh.vertices - vol.origin) / vol.voxel_size
    on_node = np.abs(g - np.round(g)) <= 1e-9
    assert np.all(on_node.sum(axis=1) >= 2)


# ------------------------------------------------------------------ vertex_deform

def test_vertex_deform_identity_and_clamp():
    m = icosphere(1.0, subdiv=1)
    assert np.array_equal(vertex_deform(m, np.zeros_like(m.vertices), 0.5).vertices, m.vertices)
    d = np.zeros_like(m.vertices)
    d[0, 0] = 2.0
    out = vertex_deform(m, d, 0.5)
    assert out.vertices[0, 0] - m.vertices[0, 0] == 0.5
    with pytest.raises(ValueError):
        vertex_deform(m, d, -0.1)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 2.0), st.integers(0, 2 ** 31 - 1))
def test_vertex_deform_bound_property(bound, seed):
    m = icosphere(1.0, subdiv=1)
    d = np.random.default_rng(seed).normal(scale=2.0, size=m.vertices.shape)
    out = vertex_deform(m, d, bound)
    assert np.all(np.abs(out.vertices - m.vertices) <= bound + 1e-12)


# ------------------------------------------------------------------ procedural vehicles

def test_procedural_dims():
    m = procedural_vehicle("sedan", 4.5, 1.8, 1.4)
    assert np.allclose(m.extents(), [4.5, 1.8, 1.4], atol=1e-6)


def test_procedural_determinism():
    a = procedural_vehicle("suv", 4.8, 1.9, 1.7, seed=3)
    b = procedural_vehicle("suv", 4.8, 1.9, 1.7, seed=3)
    assert a.vertices.tobytes() == b.vertices.tobytes()
    assert a.triangles.tobytes() == b.triangles.tobytes()


@pytest.mark.parametrize("cls", ["sedan", "suv", "van", "pickup"])
def test_procedural_watertight(cls, library):
    for aid in library.ids():
        if aid.startswith(cls):
            m = library.mesh(aid)
            assert set(m.edge_incidence().values()) == {2}
            assert m.areas().min() >= 1e-9
            assert np.all(np.abs(m.vertices / library.prescale()) <= 0.5)
    mesh_to_sdf(library.mesh(f"{cls}_00").transformed(1 / library.prescale()), 6)


def test_procedural_bad_dims():
    with pytest.raises(ValueError):
        procedural_vehicle("sedan", -1.0, 1.8, 1.4)
    with pytest.raises(ValueError):
        procedural_vehicle("tank", 4.0, 1.8, 1.4)


def test_obj_round_trip(tmp_path):
    m = procedural_vehicle("van", 5.1, 2.0, 2.2, seed=7)
    write_obj(m, tmp_path / "v.obj", header="test")
    back = read_obj(tmp_path / "v.obj")
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.triangles, m.triangles)
