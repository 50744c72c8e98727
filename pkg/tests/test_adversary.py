import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from advloop.adversary.grids import GridSpec, epe_loss, rasterize_outputs, soft_iou_loss
from advloop.adversary.objective import (PRESETS, CostWeights, StepCost, ade, combined_step_cost, comfort_cost,
                                         detection_loss, episode_cost, make_step_cost, match_detections,
                                         prediction_loss, read_step_costs, write_step_costs)
from advloop.autonomy import Detection, TrajPrediction
from advloop.autonomy.types import ACCEL, CURV, SPEED, STATE_DIM, X
from advloop.geometry import Box2

GT = {"g": Box2(10.0, 0.0, 4.0, 2.0, 0.0)}


def _det(cx=10.0, cy=0.0, conf=0.9, length=4.0, width=2.0, yaw=0.0):
    return Detection(cx, cy, length, width, yaw, conf)


# ------------------------------------------------------------------ matching

def test_match_exact_detection():
    m = match_detections([_det()], GT)
    assert m.tp == [("g", 0, 1.0)] and m.fp == [] and m.fn == []


def test_match_low_iou():
    # 4x2 boxes shifted by d along x overlap (4-d)*2; IoU = (4-d)/(4+d) = 0.3 at d = 28/13
    d = _det(cx=10.0 + 28.0 / 13.0)
    m = match_detections([d], GT)
    assert m.tp == [] and m.fn == ["g"]
    assert m.fp[0][0] == 0 and m.fp[0][1] == pytest.approx(0.3, abs=1e-12)


def test_match_greedy_confidence():
    m = match_detections([_det(conf=0.5), _det(cx=10.1, conf=0.8)], GT)
    assert [t[1] for t in m.tp] == [1]
    assert [f[0] for f in m.fp] == [0]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(5, 15), st.floats(-3, 3), st.floats(0.05, 1.0)), max_size=6))
def test_match_partition(specs):
    dets = [_det(x, y, c) for x, y, c in specs]
    gts = {"g": GT["g"], "h": Box2(12.0, 2.0, 4.0, 2.0, 0.3)}
    m = match_detections(dets, gts)
    idx = [t[1] for t in m.tp] + [f[0] for f in m.fp]
    assert sorted(idx) == list(range(len(dets)))
    assert sorted([t[0] for t in m.tp] + m.fn) == ["g", "h"]


# ------------------------------------------------------------------ detection loss

def test_detection_loss_examples():
    assert detection_loss(match_detections([_det(conf=1.0)], GT), [_det(conf=1.0)], 1.0, 1.0) == -1.0
    assert detection_loss(match_detections([], GT), [], 1.0, 1.0) == 0.0
    fp = [_det(cx=50.0, conf=0.5)]
    assert detection_loss(match_detections(fp, GT), fp, 1.0, 1.0) == 0.5


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 0.98), st.floats(0.001, 0.02), st.booleans())
def test_detection_loss_monotone(conf, step, tp):
    cx = 10.2 if tp else 30.0

    def loss(c):
        d = [_det(cx=cx, conf=c), _det(cx=-20.0, conf=0.4)]
        return detection_loss(match_detections(d, GT), d)

    lo, hi = loss(conf), loss(conf + step)
    assert (hi < lo) if tp else (hi > lo)


# ------------------------------------------------------------------ prediction loss

def _pred(modes):
    modes = np.asarray(modes, float)
    return TrajPrediction(0, modes[0, 0], modes, np.full(len(modes), 1.0 / len(modes)), 0.5)


def test_prediction_loss_examples():
    gt = np.column_stack([np.arange(12.0), np.zeros(12)])
    perfect = _pred(np.stack([gt, gt]))
    assert prediction_loss({"a": perfect}, {"a": gt}, ["a"]) == 0.0
    off = _pred(np.stack([gt + [0.0, 1.0], gt - [1.0, 0.0]]))
    assert prediction_loss({"a": off}, {"a": gt}, ["a"]) == 1.0
    three = _pred(np.stack([gt + [3.0, 0.0]]))
    one = _pred(np.stack([gt + [0.0, 1.0]]))
    assert prediction_loss({"a": one, "b": three}, {"a": gt, "b": gt}, ["a", "b"]) == 2.0
    assert prediction_loss({}, {"a": gt}, ["a"], d_miss=5.0) == 5.0
    assert prediction_loss({}, {}, []) == 0.0


def test_ade_per_mode():
    gt = np.zeros((4, 2))
    modes = np.stack([np.full((4, 2), [1.0, 0.0]), np.full((4, 2), [0.0, 3.0])])
    assert np.array_equal(ade(modes, gt), [1.0, 3.0])


# ------------------------------------------------------------------ comfort

def _states(v, curv, accel, n=51):
    s = np.zeros((n, STATE_DIM))
    s[:, SPEED], s[:, CURV], s[:, ACCEL] = v, curv, accel
    s[:, X] = np.cumsum(np.full(n, 0.1)) * np.asarray(v)
    return s


def test_comfort_examples():
    assert comfort_cost(_states(12.0, 0.0, 0.0)) == (0.0, 0.0)
    assert comfort_cost(_states(10.0, 1.0 / 100.0, 0.0)) == (0.0, 1.0)
    with pytest.raises(ValueError):
        comfort_cost(_states(10.0, 0.0, 0.0, n=3))


@settings(max_examples=30, deadline=None)
@given(st.floats(-5.0, 5.0))
def test_comfort_constant_jerk(j):
    t = 0.1 * np.arange(51)
    # position x(t) = v0 t + j t^3 / 6; derivatives give speed and accel columns
    v = 10.0 + 0.5 * j * t ** 2
    a = j * t
    c_jerk, _ = comfort_cost(_states(v, 0.0, a))
    assert abs(c_jerk - abs(j)) <= 1e-6


# ------------------------------------------------------------------ combination

def test_combined_examples():
    w = PRESETS["instance"]
    assert (w.lambda_pred, w.lambda_plan) == (0.1, 0.5)
    # -0.1 is not a binary fraction; agreement is to rounding of the decimal inputs
    assert combined_step_cost(-0.5, 2.0, 0.4, w) == pytest.approx(-0.1, abs=4 * np.finfo(float).eps)
    assert episode_cost([make_step_cost(0.0, 0.0, 0.0, 0.0, w)] * 51) == 0.0
    costs = [StepCost(0.0, 0.0, 0.0, 0.0, 0.2)] * 51
    assert episode_cost(costs) == pytest.approx(10.2, abs=64 * np.finfo(float).eps)
    assert episode_cost(costs) == sum(c.combined for c in costs)


def test_weights_non_negative():
    with pytest.raises(ValueError):
        CostWeights(lambda_pred=-0.1)
    assert PRESETS["instance_free"].lambda_pred == 1.0


@settings(max_examples=100, deadline=None)
@given(*[st.floats(-10, 10)] * 4, st.floats(0, 2), st.floats(0, 2))
def test_combined_linear(ld, lp, cj, cl, lam_p, lam_c):
    w = CostWeights(lam_p, lam_c)
    sc = make_step_cost(ld, lp, abs(cj), abs(cl), w)
    assert abs(sc.combined - (ld + lam_p * lp + lam_c * (abs(cj) + abs(cl)))) <= 1e-9
    assert sc.c_plan == abs(cj) + abs(cl)


def test_step_cost_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    costs = [make_step_cost(*rng.normal(size=2), *np.abs(rng.normal(size=2)), CostWeights()) for _ in range(51)]
    write_step_costs(costs, tmp_path / "c.csv")
    assert read_step_costs(tmp_path / "c.csv") == costs
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "tick,l_det,l_pred,c_jerk,c_lat,C_t"


# ------------------------------------------------------------------ instance-free grids

def test_soft_iou_examples():
    o = np.zeros((8, 8))
    o[2:4, 1:6] = 1.0
    assert soft_iou_loss(o, o) == -1.0
    other = np.zeros_like(o)
    other[6:, :] = 1.0
    assert soft_iou_loss(o, other) == 0.0
    assert soft_iou_loss(o, 0.5 * o) == -0.5
    assert soft_iou_loss(np.zeros((3, 3)), np.zeros((3, 3))) == 0.0
    with pytest.raises(ValueError):
        soft_iou_loss(o, np.zeros((3, 3)))


def test_epe_examples():
    o = np.zeros((4, 4))
    o[0, 0], o[1, 1] = 1.0, 0.5
    f = np.zeros((4, 4, 2))
    assert epe_loss(f, f, o) == 0.0
    unit = f.copy()
    unit[..., 0] = 1.0
    assert epe_loss(f, unit, o) == 1.0
    mixed = f.copy()
    mixed[0, 0] = [2.0, 0.0]
    mixed[1, 1] = [0.0, 4.0]
    assert epe_loss(f, mixed, o) == 4.0 / 1.5
    assert epe_loss(f, mixed, np.zeros((4, 4))) == 0.0


def test_rasterize_examples():
    spec = GridSpec(0.0, 0.0, 20.0, 0.5)
    o, f = rasterize_outputs([], None, spec)
    assert not o.any() and not f.any()
    o, f = rasterize_outputs([_det(0.0, 0.0, 0.9)], [np.array([3.0, 0.0])], spec)
    assert np.count_nonzero(o) == 32 and np.all(o[o > 0] == 0.9)
    assert np.all(f[o > 0] == [3.0, 0.0])
    o, f = rasterize_outputs([_det(0.0, 0.0, 0.4), _det(1.0, 0.0, 0.7)], [np.ones(2), 2 * np.ones(2)], spec)
    assert o.max() == 0.7 and np.count_nonzero(o == 0.4) == 8
    assert np.all(f[o == 0.7] == 2.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_grid_loss_ranges(seed):
    rng = np.random.default_rng(seed)
    shape = tuple(rng.integers(1, 30, 2))
    o = rng.random(shape) * (rng.random(shape) < 0.5)
    oh = rng.random(shape) * (rng.random(shape) < 0.5)
    assert -1.0 <= soft_iou_loss(o, oh) <= 0.0
    assert epe_loss(rng.normal(size=shape + (2,)), rng.normal(size=shape + (2,)), o) >= 0.0
