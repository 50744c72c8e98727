import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from advloop import kernels
from advloop.geometry import Polyline, Pose2
from advloop.shape import procedural_vehicle
from advloop.sim import (ActorState, LaneMap, PointCloud, Scenario, ScenarioError, ScenarioSnapshot,
                         SensorConfig, SensorPose, assemble_scene, raycast)
from advloop.sim.scene import BACKGROUND, Scene, cast_rays, make_instance
from advloop.sim.suite import bundled_suite, nominal_empty_road

from conftest import box_mesh, icosphere

BACKENDS = list(kernels.backends().items())


def _lanes():
    return LaneMap((Polyline([[-200.0, 0.0], [200.0, 0.0]]),))


def _snapshot(headings=(0.0, 0.0, 0.0)):
    actors = tuple(ActorState(f"a{i}", "sedan", Pose2(10.0 + 10 * i, 0.0, h), 5.0, (4.5, 1.8, 1.4))
                   for i, h in enumerate(headings))
    return ScenarioSnapshot(0.0, actors, _lanes())


# ------------------------------------------------------------------ ray/triangle

@pytest.mark.parametrize("name,k", BACKENDS)
def test_ray_triangle_examples(name, k):
    tri = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    assert k.ray_triangle(np.array([0.1, 0.1, -1.0]), np.array([0.0, 0.0, 1.0]), tri) == 1.0
    assert k.ray_triangle(np.array([0.1, 0.1, 0.5]), np.array([1.0, 0.0, 0.0]), tri) is None
    assert k.ray_triangle(np.array([0.1, 0.1, 1.0]), np.array([0.0, 0.0, 1.0]), tri) is None


def _barycentric_oracle(o, d, tri):
    """Solve o + t d = v0 + u e1 + v e2 as a 3x3 linear system."""
    a = np.column_stack([-d, tri[1] - tri[0], tri[2] - tri[0]])
    try:
        t, u, v = np.linalg.solve(a, o - tri[0])
    except np.linalg.LinAlgError:
        return None, 0.0
    # distance of the solution from any inside/outside boundary
    margin = min(u, v, 1 - u - v, t)
    return (t if margin >= 0 else None), abs(margin)


@pytest.mark.parametrize("name,k", BACKENDS)
def test_ray_triangle_vs_linear_solve(name, k):
    rng = np.random.default_rng(0)
    n = 10_000
    origins = rng.uniform(-2, 2, (n, 3))
    dirs = rng.normal(size=(n, 3))
    tris = rng.uniform(-2, 2, (n, 3, 3))
    ts = k.ray_triangle_batch(origins, np.ascontiguousarray(dirs), np.ascontiguousarray(tris))
    hits = 0
    for i in range(n):
        ref, margin = _barycentric_oracle(origins[i], dirs[i], tris[i])
        if margin < 1e-7:
            continue
        if ref is None:
            assert np.isnan(ts[i])
        else:
            hits += 1
            assert abs(ts[i] - ref) <= 1e-9 * max(1.0, abs(ref))
    assert hits > 300


# ------------------------------------------------------------------ raycast

def _on_axis_sphere():
    """Icosphere rotated so one vertex sits at (-1, 0, 0)."""
    m = icosphere(1.0, subdiv=3)
    v0 = m.vertices[0]
    target = np.array([-1.0, 0.0, 0.0])
    axis = np.cross(v0, target)
    s, c = np.linalg.norm(axis), float(v0 @ target)
    axis /= s
    kx = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    rot = np.eye(3) + s * kx + (1 - c) * kx @ kx
    return type(m)(m.vertices @ rot.T, m.triangles)


@pytest.mark.parametrize("name,k", BACKENDS)
def test_single_ray_sphere(name, k):
    scene = Scene((make_instance("s", _on_axis_sphere(), 5.0, 0.0, 0.0, lift=False),))
    t, tag = cast_rays(scene, (0.0, 0.0, 0.0), np.array([[1.0, 0.0, 0.0]]), 100.0, backend=k)
    assert tag[0] == 0
    assert abs(t[0] - 4.0) <= 1e-9
    t, tag = cast_rays(scene, (0.0, 0.0, 0.0), np.array([[0.0, 1.0, 0.0]]), 100.0, backend=k)
    assert tag[0] == -1 and np.isinf(t[0])
    t, tag = cast_rays(scene, (0.0, 0.0, 0.0), np.array([[1.0, 0.0, 0.0]]), 3.0, backend=k)
    assert tag[0] == -1


def _cube_scene():
    return Scene((make_instance("cube", box_mesh((-1, -1, -1), (1, 1, 1)), 6.0, 2.0, 0.3, lift=False),))


def _oracle_scan(scene, origin, dirs, max_range):
    tris, _ = scene.world_triangles()
    best = np.full(len(dirs), np.inf)
    for i, d in enumerate(dirs):
        for tri in tris:
            t, _ = _barycentric_oracle(np.asarray(origin, float), d, tri)
            if t is not None and t <= max_range:
                best[i] = min(best[i], t)
    return best


def test_cube_scan_vs_all_triangles_oracle():
    cfg = SensorConfig.uniform(16, -15.0, 15.0, 1.0, noise_sigma=0.0, mount=(0.0, 0.0, 0.0))
    scene = _cube_scene()
    pose = SensorPose(0.0, 0.0, 0.0, 0.0)
    oracle = _oracle_scan(scene, (0.0, 0.0, 0.0), cfg.directions(), cfg.max_range)
    hit = np.flatnonzero(np.isfinite(oracle))
    assert 0 < hit.size < cfg.n_rays
    for name, k in BACKENDS:
        for brute in (False, True):
            cloud = raycast(scene, pose, cfg, brute=brute, backend=k)
            assert np.array_equal(cloud.ray_index, hit)
            r = np.linalg.norm(cloud.points, axis=1)
            assert np.allclose(r, oracle[hit], atol=1e-9)


def test_bvh_equals_brute_bitwise_on_scenario():
    sc = bundled_suite()[7]
    scene = assemble_scene(sc.snapshot(0))
    cfg = SensorConfig.uniform(32, -16.0, 4.0, 0.4, noise_sigma=0.0)
    pose = SensorPose.on_vehicle(*sc.sdv.initial[:3], cfg)
    for name, k in BACKENDS:
        a = raycast(scene, pose, cfg, brute=False, backend=k)
        b = raycast(scene, pose, cfg, brute=True, backend=k)
        assert a.points.tobytes() == b.points.tobytes()
        assert a.ray_index.tobytes() == b.ray_index.tobytes()


def test_backends_agree_bitwise():
    sc = bundled_suite()[2]
    scene = assemble_scene(sc.snapshot(0))
    cfg = sc.sdv.sensor
    pose = SensorPose.on_vehicle(*sc.sdv.initial[:3], cfg)
    clouds = [raycast(scene, pose, cfg, seed=5, backend=k) for _, k in BACKENDS]
    assert all(c.to_bytes() == clouds[0].to_bytes() for c in clouds)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-math.pi, math.pi))
def test_raycast_determinism_and_range(seed, heading):
    cfg = SensorConfig.uniform(8, -15.0, 5.0, 2.0, max_range=30.0)
    scene = assemble_scene(_snapshot())
    pose = SensorPose(0.0, 0.0, 1.9, heading)
    a, b = raycast(scene, pose, cfg, seed), raycast(scene, pose, cfg, seed)
    assert a.to_bytes() == b.to_bytes()
    assert np.all(np.linalg.norm(a.points, axis=1) <= cfg.max_range)


def test_noise_is_along_ray():
    cfg = SensorConfig.uniform(8, -15.0, 5.0, 2.0, max_range=60.0, noise_sigma=0.05)
    clean = SensorConfig.uniform(8, -15.0, 5.0, 2.0, max_range=60.0, noise_sigma=0.0)
    scene = assemble_scene(_snapshot())
    pose = SensorPose(0.0, 0.0, 1.9, 0.0)
    a, b = raycast(scene, pose, cfg, 1), raycast(scene, pose, clean, 1)
    assert np.array_equal(a.ray_index, b.ray_index)
    ua = a.points / np.linalg.norm(a.points, axis=1)[:, None]
    ub = b.points / np.linalg.norm(b.points, axis=1)[:, None]
    assert np.allclose(ua, ub, atol=1e-12)
    assert not np.array_equal(a.points, b.points)


# ------------------------------------------------------------------ scene assembly

def test_empty_override_uses_library(library):
    snap = _snapshot()
    scene = assemble_scene(snap, {}, library)
    assert scene.owners() == [BACKGROUND, "a0", "a1", "a2"]
    for a in snap.actors:
        ref = library.fitted_mesh(a.cls, a.dims)
        assert np.array_equal(scene.instance(a.id).mesh.vertices, ref.vertices)


def test_override_locality(library):
    snap = _snapshot()
    base = assemble_scene(snap, {}, library)
    adv = procedural_vehicle("van", 5.0, 2.0, 2.1, seed=9)
    over = assemble_scene(snap, {"a1": adv}, library)
    tb, ob = base.world_triangles()
    to, oo = over.world_triangles()
    for owner in (BACKGROUND, "a0", "a2"):
        assert np.array_equal(tb[ob == owner], to[oo == owner])
    assert not np.array_equal(tb[ob == "a1"].shape, to[oo == "a1"].shape) or \
        not np.array_equal(tb[ob == "a1"], to[oo == "a1"])
    with pytest.raises(KeyError):
        assemble_scene(snap, {"nope": adv}, library)


def test_rotated_actor_bbox(library):
    snap = _snapshot((0.0, math.pi / 2, 0.0))
    scene = assemble_scene(snap, {}, library)
    w = scene.instance("a1").world_vertices()
    ext = w.max(axis=0) - w.min(axis=0)
    assert np.allclose(ext[:2], [1.8, 4.5], atol=1e-9)


def test_sensor_config_validation():
    with pytest.raises(ValueError):
        SensorConfig(azimuth_step=0.7)
    with pytest.raises(ValueError):
        SensorConfig(max_range=0.0)
    assert SensorConfig().n_rays == 16 * 720


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 200), st.integers(0, 2 ** 31 - 1))
def test_cloud_record_round_trip(n, seed):
    rng = np.random.default_rng(seed)
    cloud = PointCloud(rng.uniform(-100, 100, (n, 3)).astype(np.float32), rng.integers(0, 2 ** 32, n))
    blob = cloud.to_bytes()
    assert len(blob) == 16 * n
    back = PointCloud.from_bytes(blob)
    assert np.array_equal(back.points, cloud.points) and np.array_equal(back.ray_index, cloud.ray_index)
    if n:
        assert np.frombuffer(blob[:4], "<u4")[0] == cloud.ray_index[0]


def test_scenario_json_round_trip(tmp_path):
    for sc in bundled_suite()[:3] + [nominal_empty_road()]:
        sc.save(tmp_path / "a.json")
        back = Scenario.load(tmp_path / "a.json")
        back.save(tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        assert [a.id for a in back.actors] == [a.id for a in sc.actors]


def test_scenario_rejects_overlap_and_bad_json(tmp_path):
    d = bundled_suite()[0].to_dict()
    d["actors"].append(dict(d["actors"][0], id="dup"))
    with pytest.raises(ScenarioError, match="overlap"):
        Scenario.from_dict(d)
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ScenarioError):
        Scenario.load(tmp_path / "bad.json")


def test_snapshot_unique_ids():
    a = ActorState("x", "sedan", Pose2(0, 0, 0), 1.0, (4, 2, 1.5))
    with pytest.raises(ScenarioError):
        ScenarioSnapshot(0.0, (a, a), _lanes())
    with pytest.raises(ValueError):
        ActorState("y", "sedan", Pose2(0, 0, 0), -1.0, (4, 2, 1.5))
