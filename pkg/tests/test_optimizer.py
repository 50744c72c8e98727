import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from advloop.geometry import Polyline
from advloop.optim import (AttackConfig, EvalFailure, EvalOutcome, GpModel, attack, grid_points, matern32,
                           propose_next, read_history, select_target_actors, write_history)
from advloop.optim.gp import N_CANDIDATES
from advloop.sim import LaneMap, Scenario
from advloop.sim.scenario import ActorSpec, SdvSpec


# ------------------------------------------------------------------ kernel

def test_matern_examples():
    x = np.array([0.3, 0.7, 0.1])
    assert matern32(x, x) == 1.0
    y = np.array([0.5, 0.2, 0.9])
    assert matern32(x, y) == matern32(y, x)
    # direct scalar evaluation of (1 + sqrt3 r) exp(-sqrt3 r) at r = 1
    assert matern32(np.array([0.0]), np.array([0.1]), 0.1) == pytest.approx(
        (1 + math.sqrt(3)) * math.exp(-math.sqrt(3)), rel=1e-12)
    assert matern32(np.array([0.0]), np.array([0.1]), 0.1) == pytest.approx(0.4833, abs=1e-4)
    with pytest.raises(ValueError):
        matern32(np.zeros(2), np.zeros(3))


def test_matern_product_over_dims():
    x, y = np.array([0.1, 0.4]), np.array([0.25, 0.3])
    per = [matern32(x[i:i + 1], y[i:i + 1]) for i in range(2)]
    assert matern32(x, y) == pytest.approx(per[0] * per[1], rel=1e-14)


# ------------------------------------------------------------------ posterior

def test_posterior_no_observations():
    m, v = GpModel(3).posterior(np.random.default_rng(0).random((4, 3)))
    assert np.all(m == 0.0) and np.all(v == 1.0)


def test_posterior_interpolates_without_noise():
    rng = np.random.default_rng(1)
    x, y = rng.random((6, 2)), rng.normal(size=6)
    gp = GpModel(2, noise=1e-12).fit(x, y)
    m, v = gp.posterior(x)
    z = (y - y.mean()) / y.std()
    assert np.allclose(m, z, atol=1e-6)
    assert np.all(v <= 1e-6)


def test_posterior_matches_dense_inverse():
    rng = np.random.default_rng(2)
    x, y = rng.random((5, 4)), rng.normal(size=5) * 3 + 1
    gp = GpModel(4).fit(x, y)
    q = rng.random((50, 4))
    z = (y - y.mean()) / y.std()
    kinv = np.linalg.inv(matern32(x, x, 0.1) + gp.jitter * np.eye(5))
    ks = matern32(q, x, 0.1)
    mean_ref = ks @ kinv @ z
    var_ref = 1.0 - np.sum((ks @ kinv) * ks, axis=1)
    m, v = gp.posterior(q)
    assert np.max(np.abs(m - mean_ref)) <= 1e-8
    assert np.max(np.abs(v - var_ref)) <= 1e-8


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(-50, 50))
def test_standardization_invariance(seed, shift):
    rng = np.random.default_rng(seed)
    x, y = rng.random((8, 2)), rng.normal(size=8)
    a = GpModel(2).fit(x, y)
    b = GpModel(2).fit(x, y + shift)
    q = rng.random((20, 2))
    assert np.allclose(b.predict(q)[0], a.predict(q)[0] + shift, atol=1e-9)
    assert np.allclose(b.predict(q)[1], a.predict(q)[1], atol=1e-9)
    assert np.allclose(propose_next(a, 1.0, seed), propose_next(b, 1.0, seed), atol=1e-9)


# ------------------------------------------------------------------ proposals

def test_propose_beta_zero_is_best_mean():
    from scipy.stats import qmc

    rng = np.random.default_rng(3)
    gp = GpModel(3).fit(rng.random((10, 3)), rng.normal(size=10))
    cand = qmc.Sobol(3, scramble=True, seed=7).random(N_CANDIDATES)
    means = gp.posterior(cand)[0]
    p0 = propose_next(gp, 0.0, seed=7, n_refine=0)
    assert np.array_equal(p0, cand[np.argmax(means)])
    p = propose_next(gp, 0.0, seed=7)
    assert gp.posterior(p[None])[0][0] >= means.max()


def test_propose_explores_with_large_beta():
    gp = GpModel(2).fit(np.array([[0.5, 0.5]]), np.array([1.0]))
    p = propose_next(gp, 100.0, seed=0)
    assert np.max(np.abs(p - 0.5)) > 0.2


def test_propose_deterministic():
    rng = np.random.default_rng(4)
    gp = GpModel(5).fit(rng.random((12, 5)), rng.normal(size=12))
    assert np.array_equal(propose_next(gp, 1.0, 11), propose_next(gp, 1.0, 11))


# ------------------------------------------------------------------ attack loop

def styblinski_tang(u):
    """Negated Styblinski-Tang on [0,1]^d (maximum at u ~ 0.2097 per axis)."""
    x = 10.0 * np.asarray(u, float) - 5.0
    return -0.5 * float(np.sum(x ** 4 - 16 * x ** 2 + 5 * x))


def _st_eval(point):
    return EvalOutcome(styblinski_tang(point), {"l_det": 0.0, "l_pred": 0.0, "c_plan": 0.0})


@pytest.mark.parametrize("alg", ["bo", "random", "grid"])
def test_budget_bounds_monotone(alg):
    res = attack(_st_eval, 3, AttackConfig(alg, budget=20, n_init=5, seed=1))
    assert len(res.history) == 20
    pts = np.array([q.point for q in res.history])
    assert np.all((pts >= 0.0) & (pts <= 1.0))
    bsf = res.best_so_far()
    assert np.all(np.diff(bsf) >= 0)
    assert res.best_cost == max(q.cost for q in res.history) == bsf[-1]


def test_bo_beats_random_on_styblinski_tang():
    bo, rnd = [], []
    for seed in range(10):
        bo.append(attack(_st_eval, 5, AttackConfig("bo", 50, 11, 1.0, seed)).best_cost)
        rnd.append(attack(_st_eval, 5, AttackConfig("random", 50, seed=seed)).best_cost)
    assert np.median(bo) >= np.median(rnd)


def test_bo_deterministic():
    a = attack(_st_eval, 2, AttackConfig("bo", 15, 4, seed=3))
    b = attack(_st_eval, 2, AttackConfig("bo", 15, 4, seed=3))
    assert [q.point for q in a.history] == [q.point for q in b.history]


def test_bo_prefix_stable_across_budgets():
    a = attack(_st_eval, 2, AttackConfig("bo", 12, 4, seed=5))
    b = attack(_st_eval, 2, AttackConfig("bo", 20, 4, seed=5))
    assert [q.point for q in a.history] == [q.point for q in b.history[:12]]


def test_grid_lattice_and_cap():
    g = grid_points(2)
    assert len(g) == 9 and set(np.unique(g)) == {0.0, 0.5, 1.0}
    assert len(grid_points(5)) == 243
    with pytest.raises(ValueError, match="refused"):
        grid_points(6)
    res = attack(_st_eval, 5, AttackConfig("grid", budget=50, seed=0))
    pts = {tuple(q.point) for q in res.history}
    assert len(pts) == 50 and pts <= {tuple(p) for p in grid_points(5)}


def test_bruteforce_is_exhaustive_max():
    values = {f"asset_{i:02d}": float(v) for i, v in enumerate(np.random.default_rng(0).normal(size=40))}
    res = attack(lambda a: EvalOutcome(values[a]), 1, AttackConfig("bruteforce"), assets=list(values))
    assert len(res.history) == 40
    assert res.best_point == max(values, key=values.get)
    assert res.best_cost == max(values.values())


def test_failures_flagged_and_excluded():
    def ev(p):
        if p[0] > 0.5:
            raise EvalFailure("empty shape")
        return EvalOutcome(float(p[0]))

    res = attack(ev, 1, AttackConfig("random", 30, seed=2, failure_cost=-100.0))
    failed = [q for q in res.history if q.failed]
    assert failed and all(q.cost == -100.0 for q in failed)
    assert res.best_cost == max(q.cost for q in res.history if not q.failed)
    bo = attack(ev, 1, AttackConfig("bo", 15, 4, seed=2))
    assert len(bo.history) == 15


def test_attack_config_validation():
    with pytest.raises(ValueError):
        AttackConfig("bo", budget=5, n_init=11)
    with pytest.raises(ValueError):
        AttackConfig("annealing")
    with pytest.raises(ValueError):
        AttackConfig(beta=-1.0)


def test_checkpoint_resume(tmp_path):
    ck = tmp_path / "ck.json"
    calls = []

    def flaky(p):
        calls.append(p)
        if len(calls) == 9:
            raise KeyboardInterrupt
        return _st_eval(p)

    cfg = AttackConfig("bo", 14, 4, seed=8)
    with pytest.raises(KeyboardInterrupt):
        attack(flaky, 2, cfg, checkpoint=ck)
    resumed = attack(_st_eval, 2, cfg, checkpoint=ck)
    fresh = attack(_st_eval, 2, cfg)
    assert [q.point for q in resumed.history] == [q.point for q in fresh.history]
    with pytest.raises(ValueError, match="different attack configuration"):
        attack(_st_eval, 2, AttackConfig("bo", 14, 4, seed=9), checkpoint=ck)


def test_history_csv(tmp_path):
    res = attack(_st_eval, 3, AttackConfig("random", 10, seed=4))
    write_history(res, tmp_path / "h.csv", "abc123")
    header, rows = read_history(tmp_path / "h.csv")
    assert header == {"config_hash": "abc123", "seed": "4", "algorithm": "random", "dim": "3"}
    assert [float(r["cost"]) for r in rows] == [q.cost for q in res.history]
    assert [float(r["u1"]) for r in rows] == [q.point[1] for q in res.history]
    assert np.array_equal([float(r["best_so_far"]) for r in rows], res.best_so_far())


# ------------------------------------------------------------------ target selection

def _scenario(offsets):
    lane = Polyline([[-500.0, 0.0], [500.0, 0.0]])
    actors = []
    for i, dx in enumerate(offsets):
        traj = np.array([[0.1 * k, dx + 1.0 * k, 0.0, 0.0, 10.0] for k in range(5)])
        actors.append(ActorSpec(f"a{i}", "sedan", "replay", traj, (4.5, 1.8, 1.4)))
    sdv = SdvSpec(np.array([0.0, 0.0, 0.0, 10.0]))
    return Scenario("t", LaneMap((lane,)), tuple(actors), sdv)


def test_select_targets():
    assert select_target_actors(_scenario([15.0]), 1) == ["a0"]
    with pytest.raises(ValueError):
        select_target_actors(_scenario([-15.0]), 1)
    assert select_target_actors(_scenario([30.0, 10.0, -12.0, 20.0]), 2) == ["a1", "a3"]
