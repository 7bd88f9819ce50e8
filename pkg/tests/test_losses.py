import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustood.losses import (
    ConstantLoss,
    Dataset,
    LogisticLoss,
    QuadraticSaddle,
    TinyNet,
    Unsupported,
    closed_form_inner_argmax,
    diag_quadratic_argmax,
    estimate_profile,
    quadratic_saddle,
)
from robustood.numkit import INF, InvalidInput, PerturbationBudget, RngState


def _quad(**kw):
    return quadratic_saddle(1.0, 1.0, [0.0, 0.0], offset=0.0, **kw)


def _random_point(rng, box):
    return rng.uniform(box[:, 0], box[:, 1])


def _labels(loss, rng):
    return loss.label_values[rng.integers(len(loss.label_values))]


LOSSES = {
    "quadratic": lambda: QuadraticSaddle(0.7, 1.3, [0.2, -0.1, 0.4], curvature=[1.3, 2.0, 1.6]),
    "logistic": lambda: LogisticLoss(3, lam=0.05),
    "tinynet": lambda: TinyNet(3, hidden=3),
}


# --------------------------------------------------------------------------
# hand examples


def test_quadratic_value_and_gradients():
    f = _quad()
    w, x = [1.0, 0.0], [0.0, 0.0]
    assert f.value(w, x) == 0.5
    np.testing.assert_array_equal(f.grad_x(w, x), [1.0, 0.0])
    np.testing.assert_array_equal(f.grad_w(w, x), [1.0, 0.0])


def test_quadratic_rejects_nonpositive_curvature():
    with pytest.raises(InvalidInput):
        quadratic_saddle(0.0, 1.0, [0.0])
    with pytest.raises(InvalidInput):
        quadratic_saddle(1.0, -1.0, [0.0])


def test_quadratic_profile_constants():
    prof = QuadraticSaddle(2.0, 0.5, [0.0, 0.0]).profile()
    assert (prof.L11, prof.L12, prof.L21, prof.L22) == (2.0, 1.0, 1.0, 0.5)
    assert prof.mu_w == 2.0 and prof.mu_x == 0.5 and prof.certified
    assert prof.L == 2.0 + 1.0 / 0.5


def test_closed_form_argmax_examples():
    f = _quad()
    d = closed_form_inner_argmax(f, [1.0, 0.0], [0.0, 0.0], PerturbationBudget(2, 0.5))
    np.testing.assert_allclose(d, [0.5, 0.0], atol=1e-15)
    gain = f.value([1.0, 0.0], d) - f.value([1.0, 0.0], [0.0, 0.0])
    assert math.isclose(gain, 0.375, abs_tol=1e-15)
    d = closed_form_inner_argmax(f, [1.0, 0.0], [1.0, 0.0], PerturbationBudget(2, 1.0))
    np.testing.assert_array_equal(d, [0.0, 0.0])
    d = closed_form_inner_argmax(f, [1.0, 1.0], [0.0, 0.0], PerturbationBudget(INF, 0.5))
    np.testing.assert_array_equal(d, [0.5, 0.5])


def test_closed_form_needs_quadratic():
    with pytest.raises(Unsupported):
        closed_form_inner_argmax(LogisticLoss(2), np.zeros(3), np.zeros(2), PerturbationBudget(2, 0.1))


@pytest.mark.parametrize("p", [2, INF])
def test_closed_form_argmax_beats_grid(p):
    # independent oracle: dense grid over the ball
    rng = np.random.default_rng(11)
    f = QuadraticSaddle(1.0, 0.8, [0.0, 0.0], curvature=[0.8, 1.7])
    r = 0.4
    b = PerturbationBudget(p, r)
    ticks = np.linspace(-r, r, 201)
    grid = np.array(list(itertools.product(ticks, ticks)))
    if p == 2:
        grid = grid[np.linalg.norm(grid, axis=1) <= r]
    for _ in range(10):
        w = rng.uniform(-1, 1, 2)
        x = rng.uniform(-1, 1, 2)
        d = closed_form_inner_argmax(f, w, x, b)
        assert b.contains(d)
        best_grid = f.values(w, x + grid).max()
        assert f.value(w, x + d) >= best_grid - 1e-12
        # a grid with step 0.004 can miss the maximum by about |grad| * step
        assert f.value(w, x + d) - best_grid <= 1e-2


def test_diag_quadratic_hard_case():
    # negative curvature on a coordinate where the linear term vanishes
    d = diag_quadratic_argmax(np.array([0.0, 0.1]), np.array([-1.0, 1.0]), PerturbationBudget(2, 1.0))
    assert math.isclose(np.linalg.norm(d), 1.0, rel_tol=1e-12)
    val = 0.1 * d[1] - 0.5 * (-d[0] ** 2 + d[1] ** 2)
    # oracle: boundary parametrised by angle
    th = np.linspace(0, 2 * np.pi, 200_001)
    grid = 0.1 * np.sin(th) + 0.5 * np.cos(th) ** 2 - 0.5 * np.sin(th) ** 2
    assert val >= grid.max() - 1e-12


def test_offset_auto_makes_minimum_zero():
    f = QuadraticSaddle(1.0, 1.0, [0.3, -0.2])
    assert f.f_min == 0.0
    rng = np.random.default_rng(0)
    W = rng.uniform(f.w_box[:, 0], f.w_box[:, 1], (2000, 2))
    X = rng.uniform(f.x_box[:, 0], f.x_box[:, 1], (2000, 2))
    vals = np.array([f.value(w, x) for w, x in zip(W, X)])
    assert vals.min() >= 0.0
    # per coordinate the minimum sits at an x endpoint with w at its clamped convex minimiser
    best = math.inf
    for xs in itertools.product(*f.x_box):
        xs = np.array(xs)
        ws = np.clip(f.w_anchor - xs / f.mu_w, f.w_box[:, 0], f.w_box[:, 1])
        best = min(best, f.value(ws, xs))
    assert abs(best) <= 1e-12


def test_quadratic_box_extrema_match_brute_force():
    f = QuadraticSaddle(0.6, 1.4, [0.5], w_box=[[-1.0, 2.0]], x_box=[[-0.5, 1.5]], offset=0.0)
    ws = np.linspace(-1.0, 2.0, 601)
    xs = np.linspace(-0.5, 1.5, 401)
    Wg, Xg = np.meshgrid(ws, xs)
    vals = Wg * Xg - 0.7 * Xg**2 + 0.3 * (Wg - 0.5) ** 2
    assert f.f_min <= vals.min() + 1e-12 and f.f_min >= vals.min() - 1e-4
    assert f.f_max >= vals.max() - 1e-12 and f.f_max <= vals.max() + 1e-4


# --------------------------------------------------------------------------
# invariants shared by every family


@pytest.mark.parametrize("name", sorted(LOSSES))
def test_gradients_match_finite_differences(name):
    loss = LOSSES[name]()
    rng = np.random.default_rng(1)
    h = 1e-5
    for _ in range(200):
        w = _random_point(rng, loss.w_box)
        x = _random_point(rng, loss.x_box)
        y = _labels(loss, rng)
        for grad, arg, other, wrt_w in ((loss.grad_w, w, x, True), (loss.grad_x, x, w, False)):
            g = grad(w, x, y)
            fd = np.empty_like(arg)
            for j in range(arg.size):
                e = np.zeros_like(arg)
                e[j] = h
                if wrt_w:
                    fd[j] = (loss.value(arg + e, other, y) - loss.value(arg - e, other, y)) / (2 * h)
                else:
                    fd[j] = (loss.value(other, arg + e, y) - loss.value(other, arg - e, y)) / (2 * h)
            scale = max(1.0, float(np.linalg.norm(g)))
            assert np.linalg.norm(g - fd) <= 1e-4 * scale


@pytest.mark.parametrize("name", ["quadratic", "logistic"])
def test_values_within_range(name):
    loss = LOSSES[name]()
    M = loss.profile().M
    rng = np.random.default_rng(2)
    for _ in range(10_000):
        w = _random_point(rng, loss.w_box)
        x = _random_point(rng, loss.x_box)
        v = loss.value(w, x, _labels(loss, rng))
        assert 0.0 <= v <= M + 1e-12


def test_vectorised_values_match_scalar():
    rng = np.random.default_rng(8)
    for name in ("quadratic", "logistic"):
        loss = LOSSES[name]()
        w = _random_point(rng, loss.w_box)
        X = rng.uniform(loss.x_box[:, 0], loss.x_box[:, 1], (20, loss.d0))
        y = None if name == "quadratic" else rng.choice([-1.0, 1.0], 20)
        ys = [None] * 20 if y is None else y
        np.testing.assert_allclose(loss.values(w, X, y), [loss.value(w, X[i], ys[i]) for i in range(20)], rtol=1e-14, atol=1e-14)


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1))
def test_quadratic_strong_concavity(seed):
    f = LOSSES["quadratic"]()
    rng = np.random.default_rng(seed)
    w = _random_point(rng, f.w_box)
    x = _random_point(rng, f.x_box)
    d1, d2 = rng.uniform(-0.5, 0.5, (2, 3))
    lhs = f.value(w, x + 0.5 * (d1 + d2))
    rhs = 0.5 * f.value(w, x + d1) + 0.5 * f.value(w, x + d2) + f.mu_x / 8 * float(np.dot(d1 - d2, d1 - d2))
    assert lhs >= rhs - 1e-9


def test_logistic_worst_case_matches_argmax():
    loss = LogisticLoss(2, lam=0.01)
    rng = np.random.default_rng(5)
    for p in (2, INF):
        b = PerturbationBudget(p, 0.3)
        w = rng.uniform(-2, 2, 3)
        X = rng.uniform(-1, 1, (10, 2))
        y = rng.choice([-1.0, 1.0], 10)
        direct = [loss.value(w, X[i] + loss.perturbation_argmax(w, X[i], y[i], b), y[i]) for i in range(10)]
        np.testing.assert_allclose(loss.worst_case_values(w, X, y, b), direct, rtol=1e-13)


def test_logistic_argmax_beats_grid():
    loss = LogisticLoss(2, lam=0.0)
    rng = np.random.default_rng(6)
    r = 0.25
    ticks = np.linspace(-r, r, 101)
    grid = np.array(list(itertools.product(ticks, ticks)))
    for p in (2, INF):
        b = PerturbationBudget(p, r)
        pts = grid if p == INF else grid[np.linalg.norm(grid, axis=1) <= r]
        for _ in range(5):
            w = rng.uniform(-2, 2, 3)
            x = rng.uniform(-1, 1, 2)
            y = 1.0
            hi = loss.value(w, x + loss.perturbation_argmax(w, x, y, b), y)
            lo = loss.value(w, x + loss.perturbation_argmin(w, x, y, b), y)
            vals = loss.values(w, x + pts, np.full(len(pts), y))
            assert hi >= vals.max() - 1e-12 and lo <= vals.min() + 1e-12


# --------------------------------------------------------------------------
# estimated profiles


def test_estimate_profile_quadratic_L22():
    f = QuadraticSaddle(1.0, 1.5, [0.0, 0.0])
    est = estimate_profile(f, 10_000, RngState(3))
    assert 0.99 * 1.5 <= est.L22 <= 1.01 * 1.5
    assert not est.certified


def test_estimate_profile_constant_loss():
    est = estimate_profile(ConstantLoss(0.3, 2, 2), 100, RngState(0))
    assert (est.L11, est.L12, est.L21, est.L22, est.G) == (0.0, 0.0, 0.0, 0.0, 0.0)
    assert est.M == 0.3


def test_estimate_profile_logistic_under_analytic_bound():
    loss = LogisticLoss(2)
    est = estimate_profile(loss, 2000, RngState(1))
    assert est.G <= loss.analytic_gradient_bound()


def test_estimate_profile_respects_floors():
    f = QuadraticSaddle(1.0, 1.0, [0.0])
    est = estimate_profile(f, 10, RngState(1), floors={"G": 1e3})
    assert est.G == 1e3


def test_estimate_profile_needs_two_probes():
    with pytest.raises(InvalidInput):
        estimate_profile(_quad(), 1, RngState(0))


# --------------------------------------------------------------------------
# dataset


def test_dataset_roundtrip_and_diameter():
    data = Dataset([[0.1, 0.2], [0.9, 0.4]], [1, -1], [[0, 1], [0, 1]])
    assert data.D == 2.0
    back = Dataset.from_json(data.to_json())
    np.testing.assert_array_equal(back.x, data.x)
    np.testing.assert_array_equal(back.y, data.y)
    doc = json.loads(data.to_json())
    assert set(doc) == {"d0", "support_box", "samples"}
    assert doc["samples"][0] == {"x": [0.1, 0.2], "y": 1}


def test_dataset_rejects_points_outside_box():
    with pytest.raises(InvalidInput):
        Dataset([[1.5, 0.0]], None, [[0, 1], [0, 1]])


def test_dataset_diameter_dominates_pairs():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 2, (30, 3))
    data = Dataset(x, None, [[-1, 2]] * 3)
    pair_max = max(np.abs(a - b).sum() for a in x for b in x)
    assert data.D >= pair_max
