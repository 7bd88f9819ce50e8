import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from robustood.certify import (
    BoundInputs,
    covering_bound,
    excess_risk_bound,
    expectation_rate,
    measure_robustness,
    ood_bound_w2,
    ood_bound_winf,
    optimization_rate,
    pretrain_radius,
    pretrain_transfer_bound,
    robustness_from_objective,
)
from robustood.losses import ConstantLoss, ConstantsProfile, Dataset, QuadraticSaddle, quadratic_saddle
from robustood.minimax import Pgd, robust_objective
from robustood.numkit import INF, InvalidInput, PerturbationBudget
from robustood.transport import DiscreteDistribution

# hand-evaluated concentration term shared by the Eq. examples: sqrt(18 ln 2 / 100)
CONC = math.sqrt(18 * 0.6931471805599453 / 100)


def _inputs(**kw):
    base = dict(d0=2, D=2.0, M=1.0, n=100, r=2.0, epsilon=0.1, theta=0.5)
    base.update(kw)
    return BoundInputs(**base)


# --------------------------------------------------------------------------
# robustness measurement


def test_measure_robustness_example():
    f = quadratic_saddle(1.0, 1.0, [0.0, 0.0], offset=0.0)
    P = DiscreteDistribution.point([0.0, 0.0])
    rep = measure_robustness(f, [1.0, 0.0], P, PerturbationBudget(2, 0.5))
    assert math.isclose(rep.epsilon_hat, 0.625, abs_tol=1e-15)
    assert rep.method == "analytic"


def test_measure_robustness_trivial_cases():
    f = QuadraticSaddle(1.0, 1.0, [0.0, 0.0])
    P = DiscreteDistribution.uniform([[0.1, 0.2], [0.3, -0.4]])
    assert measure_robustness(f, [1.0, 0.0], P, PerturbationBudget(2, 0.0)).epsilon_hat == 0.0
    c = ConstantLoss(0.4, 2, 2)
    assert measure_robustness(c, [0.0, 0.0], P, PerturbationBudget(INF, 0.7)).epsilon_hat == 0.0


def test_epsilon_is_weighted_mean_of_gaps():
    f = QuadraticSaddle(1.0, 1.0, [0.0, 0.0])
    P = DiscreteDistribution([[0.1, 0.2], [0.3, -0.4], [0.0, 0.5]], [0.2, 0.3, 0.5])
    rep = measure_robustness(f, [0.4, 0.1], P, PerturbationBudget(INF, 0.3))
    assert abs(rep.epsilon_hat - float(np.dot(P.weights, rep.per_sample_gaps))) <= 1e-12
    assert rep.epsilon_hat >= 0


def test_robustness_monotone_in_radius():
    f = QuadraticSaddle(1.0, 1.0, [0.0, 0.0])
    P = DiscreteDistribution.uniform([[0.1, 0.2], [0.3, -0.4], [-0.6, 0.5]])
    for p in (2, INF):
        vals = [measure_robustness(f, [0.4, 0.1], P, PerturbationBudget(p, r)).epsilon_hat for r in np.linspace(0, 1, 20)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_analytic_and_pgd_robustness_agree():
    f = QuadraticSaddle(1.0, 1.0, [0.0, 0.0])
    P = DiscreteDistribution.uniform([[0.1, 0.2], [0.3, -0.4]])
    b = PerturbationBudget(2, 0.3)
    exact = measure_robustness(f, [0.4, 0.1], P, b).epsilon_hat
    approx = measure_robustness(f, [0.4, 0.1], P, b, Pgd(K=80)).epsilon_hat
    assert abs(exact - approx) <= 1e-8


def test_robustness_matches_grid():
    f = quadratic_saddle(1.0, 1.0, [0.0, 0.0], offset=0.0)
    P = DiscreteDistribution.point([0.0, 0.0])
    w = np.array([1.0, 0.0])
    ticks = np.linspace(-0.5, 0.5, 401)
    G = np.array([(a, b) for a in ticks for b in ticks if a * a + b * b <= 0.25])
    oracle = np.max(np.abs(f.values(w, G) - f.value(w, [0.0, 0.0])))
    rep = measure_robustness(f, w, P, PerturbationBudget(2, 0.5))
    assert abs(rep.epsilon_hat - oracle) <= 1e-9


def test_robustness_from_objective():
    b = PerturbationBudget(2, 0.3)
    assert robustness_from_objective(0.05, b) == (0.3, 0.1)
    assert robustness_from_objective(0.0, b) == (0.3, 0.0)
    with pytest.raises(InvalidInput):
        robustness_from_objective(-0.1, b)


def test_robustness_bounded_by_objective_random_quadratics():
    rng = np.random.default_rng(17)
    for _ in range(50):
        f = QuadraticSaddle(1.0, float(rng.uniform(0.5, 2.0)), rng.uniform(-0.5, 0.5, 2))
        data = Dataset(rng.uniform(-1, 1, (6, 2)), None, [[-1, 1], [-1, 1]])
        w = rng.uniform(-0.5, 0.5, 2)
        b = PerturbationBudget(rng.choice([2.0, INF]), float(rng.uniform(0.05, 0.5)))
        eps = measure_robustness(f, w, DiscreteDistribution.uniform(data.x), b).epsilon_hat
        assert eps <= 2 * robust_objective(f, data, w, b) + 1e-8


# --------------------------------------------------------------------------
# covering numbers


def test_covering_examples():
    assert math.isclose(covering_bound(2, 2.0, 2.0).value, 16.0, rel_tol=1e-14)
    assert math.isclose(covering_bound(1, 2.0, 2.0).value, 4.0, rel_tol=1e-14)


def test_covering_zero_radius_is_infinite():
    cb = covering_bound(2, 1.0, 0.0)
    assert cb.value == math.inf and cb.log_value == math.inf


def test_covering_log_space_survives_overflow():
    cb = covering_bound(3000, 2.0, 0.1)
    assert math.isfinite(cb.log_value)
    assert cb.value == math.inf
    assert math.isclose(cb.log_value, 401 * math.log(6000), rel_tol=1e-14)


@given(st.integers(1, 50), st.floats(0.1, 10), st.floats(0.05, 5), st.floats(0.05, 5))
def test_covering_monotone_in_radius(d0, D, r1, r2):
    lo, hi = sorted((r1, r2))
    assert covering_bound(d0, D, hi).log_value <= covering_bound(d0, D, lo).log_value


# --------------------------------------------------------------------------
# bounds


def test_winf_bound_example():
    rep = ood_bound_winf(_inputs())
    assert round(rep.bound, 4) == 0.4532
    assert math.isclose(rep.bound, 0.1 + CONC, rel_tol=1e-12)
    assert rep.components["robustness"] == 0.1
    assert rep.bound == rep.components["robustness"] + rep.components["concentration"]


def test_winf_bound_large_n_limit():
    rep = ood_bound_winf(_inputs(n=10**12))
    assert rep.components["concentration"] < 1e-4


def test_w2_bound_example():
    # exponent 2 * 0.25 * 2 / 1 + 1 = 2, covering 16; (M + 1) eps = 1.0
    rep = ood_bound_w2(_inputs(epsilon=0.5, r=1.0))
    assert math.isclose(rep.bound, 1.0 + CONC, rel_tol=1e-12)
    assert round(rep.bound, 4) == 1.3532


def test_w2_bound_rejects_zero_eps():
    with pytest.raises(InvalidInput):
        ood_bound_w2(_inputs(epsilon=0.0))


def test_w2_bound_dominates_winf_at_matched_exponent():
    # with eps = 1 the two covering exponents coincide
    a = ood_bound_w2(_inputs(epsilon=1.0))
    b = ood_bound_winf(_inputs(epsilon=1.0))
    assert a.bound >= b.bound


@given(st.integers(1, 10**6), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_bound_monotonicity(n, t1, t2):
    base = ood_bound_winf(_inputs(n=n)).bound
    assert ood_bound_winf(_inputs(n=2 * n)).bound <= base
    lo, hi = sorted((t1, t2))
    assert ood_bound_winf(_inputs(theta=lo)).bound >= ood_bound_winf(_inputs(theta=hi)).bound
    assert ood_bound_w2(_inputs(n=2 * n, epsilon=0.5)).bound <= ood_bound_w2(_inputs(n=n, epsilon=0.5)).bound


def test_vacuous_bound_is_a_value():
    rep = ood_bound_winf(_inputs(d0=3000, r=0.1))
    assert rep.vacuous and rep.bound == math.inf
    assert math.isfinite(rep.log_bound)
    doc = json.loads(rep.to_json())
    assert doc["bound"] == "inf" and set(doc) == {"formula", "bound", "log_bound", "components"}


def test_log_bound_matches_linear():
    rep = ood_bound_winf(_inputs())
    assert math.isclose(math.exp(rep.log_bound), rep.bound, rel_tol=1e-12)


def test_bound_inputs_validation():
    with pytest.raises(InvalidInput):
        _inputs(theta=1.0)
    with pytest.raises(InvalidInput):
        _inputs(n=0)
    with pytest.raises(InvalidInput):
        _inputs(M=-1.0)


# --------------------------------------------------------------------------
# excess risk


def _profile():
    # L = L11 + L12 L21 / mu_x = 2
    return ConstantsProfile(L11=1.0, L12=1.0, L21=1.0, L22=1.0, G=10.0, M=1.0, mu_w=1.0, mu_x=1.0)


def test_optimization_term_example():
    # (100 lnln(200 e) (128 + 16) + 200) / 100, with lnln(200 e) = ln(ln 200 + 1)
    hand = (100 * math.log(math.log(200) + 1) * 144 + 200) / 100
    got = optimization_rate(_profile(), 100, 1 / math.e, confidence_factor=2.0)
    assert math.isclose(got, hand, rel_tol=1e-12)
    assert 266.9 < got < 267.1
    rep = excess_risk_bound(_inputs(theta=1 / math.e), _profile(), 100)
    assert math.isclose(rep.components["optimization"], 3 * hand, rel_tol=1e-12)


def test_excess_components_sum():
    for p in (2, INF):
        rep = excess_risk_bound(_inputs(theta=0.1, epsilon=0.05), _profile(), 50, p=p)
        assert rep.bound == sum(rep.components.values())
    rep2 = excess_risk_bound(_inputs(theta=0.1, epsilon=0.05, M=2.0), _profile(), 50, p=2)
    assert rep2.details["multiplier"] == 7.0


def test_excess_optimization_vanishes():
    small = excess_risk_bound(_inputs(theta=0.1), _profile(), 10**9).components["optimization"]
    base = excess_risk_bound(_inputs(theta=0.1), _profile(), 4).components["optimization"]
    assert small < 1e-6 * base


def test_excess_preconditions():
    with pytest.raises(InvalidInput):
        excess_risk_bound(_inputs(theta=0.5), _profile(), 100)
    with pytest.raises(InvalidInput):
        excess_risk_bound(_inputs(theta=0.1), _profile(), 3)


def test_expectation_rate():
    assert expectation_rate(_profile(), 4) == 100 * 2 / 4


# --------------------------------------------------------------------------
# transfer


def test_pretrain_examples():
    rep = pretrain_transfer_bound(_inputs(epsilon_pre=0.2, tv=0.1))
    assert math.isclose(rep.bound, 0.4, rel_tol=1e-15)
    assert pretrain_transfer_bound(_inputs(epsilon_pre=0.2, tv=0.0)).bound == 0.2
    assert math.isclose(pretrain_radius(2.0, 0.125, 1.0), math.sqrt(2), rel_tol=1e-15)
    rep2 = pretrain_transfer_bound(_inputs(epsilon_pre=0.2, tv=0.125, D=2.0, r=1.0), p=2)
    assert math.isclose(rep2.details["pretrain_radius"], math.sqrt(2), rel_tol=1e-15)


def test_pretrain_finite_sample_variant():
    rep = pretrain_transfer_bound(_inputs(epsilon_pre=0.2, tv=0.1, theta=0.1), finite_sample=True)
    assert math.isclose(rep.bound, 0.4 + math.sqrt(math.log(10) / 200), rel_tol=1e-14)


def test_pretrain_rejects_bad_tv():
    with pytest.raises(InvalidInput):
        pretrain_transfer_bound(_inputs(epsilon_pre=0.2, tv=1.5))
    with pytest.raises(InvalidInput):
        pretrain_transfer_bound(_inputs())
