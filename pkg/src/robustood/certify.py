"""Input-robustness measurement and evaluators for the OOD generalization bounds.

All covering-number arithmetic happens in log space: (2 d0)^(2D/r^2 + 1)
overflows a double long before the bounds stop being interesting.  A bound
that cannot be represented is reported as ``math.inf`` (printed "vacuous"),
never raised.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .losses import ConstantsProfile, SmoothLoss
from .minimax import ANALYTIC, inner_max, inner_max_sign
from .numkit import INF, InvalidInput, PerturbationBudget, parse_norm
from .transport import DiscreteDistribution

LN2 = math.log(2.0)


# --------------------------------------------------------------------------
# robustness


@dataclass
class RobustnessReport:
    r: float
    p: float
    epsilon_hat: float
    per_sample_gaps: np.ndarray
    method: str


def measure_robustness(loss: SmoothLoss, w, P: DiscreteDistribution, budget: PerturbationBudget, inner_quality=ANALYTIC, labels=None) -> RobustnessReport:
    """Weighted mean over atoms of sup_{|d|_p <= r} |f(w, x + d) - f(w, x)|.

    The sup of the absolute change is max(sup f - f(x), f(x) - inf f); both
    extremes come from the closed form when the family has one, otherwise
    from projected ascent and descent loops.
    """
    gaps = np.zeros(P.size)
    method = "analytic" if inner_quality == ANALYTIC else "pgd"
    if budget.r > 0.0:
        for i in range(P.size):
            x = P.atoms[i]
            y = None if labels is None else labels[i]
            base = loss.value(w, x, y)
            if inner_quality == ANALYTIC:
                hi = loss.value(w, x + loss.perturbation_argmax(w, x, y, budget), y)
                lo = loss.value(w, x + loss.perturbation_argmin(w, x, y, budget), y)
            else:
                eta = inner_quality.eta_x if inner_quality.eta_x is not None else 1.0 / loss.profile().L22
                loop = inner_max_sign if inner_quality.sign else inner_max
                _, hi = loop(loss, w, x, budget, inner_quality.K, eta, None, y)
                _, lo = loop(loss, w, x, budget, inner_quality.K, eta, None, y, ascent=False)
            gaps[i] = max(hi - base, base - lo, 0.0)
    eps = float(np.dot(P.weights, gaps))
    return RobustnessReport(budget.r, budget.p, eps, gaps, method)


def robustness_from_objective(objective_value: float, budget: PerturbationBudget) -> tuple[float, float]:
    """A robust objective below eps certifies (r, 2 eps)-input-robustness on the same sample."""
    if objective_value < 0:
        raise InvalidInput("the robust objective of a nonnegative loss cannot be negative")
    return budget.r, 2.0 * objective_value


# --------------------------------------------------------------------------
# bound plumbing


@dataclass(frozen=True)
class BoundInputs:
    d0: int
    D: float
    M: float
    n: int
    r: float
    epsilon: float = 0.0
    theta: float = 0.05
    epsilon_pre: float | None = None
    tv: float | None = None

    def __post_init__(self):
        if int(self.d0) < 1:
            raise InvalidInput("d0 must be at least 1")
        if int(self.n) < 1:
            raise InvalidInput("n must be at least 1")
        if not 0.0 < self.theta < 1.0:
            raise InvalidInput("theta must lie in (0, 1)")
        for name in ("D", "M", "r", "epsilon"):
            v = getattr(self, name)
            if not (v >= 0) or math.isnan(v):
                raise InvalidInput(f"{name} must be nonnegative")
        if self.epsilon_pre is not None and self.epsilon_pre < 0:
            raise InvalidInput("epsilon_pre must be nonnegative")


@dataclass
class BoundReport:
    formula: str
    bound: float
    log_bound: float
    components: dict
    details: dict = field(default_factory=dict)

    @property
    def vacuous(self) -> bool:
        return not math.isfinite(self.bound)

    def to_dict(self) -> dict:
        return {
            "formula": self.formula,
            "bound": self.bound if math.isfinite(self.bound) else "inf",
            "log_bound": self.log_bound,
            "components": {k: (v if math.isfinite(v) else "inf") for k, v in self.components.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _finish(formula, components, log_terms, details=None) -> BoundReport:
    """Sum components in order; ``log_terms`` are the logs of the same components."""
    bound = 0.0
    for v in components.values():
        bound = bound + v
    finite = [t for t in log_terms if t != -math.inf]
    log_bound = -math.inf
    for t in finite:
        log_bound = np.logaddexp(log_bound, t)
    return BoundReport(formula, bound, float(log_bound), components, details or {})


def _log(x):
    return math.log(x) if x > 0 else -math.inf


@dataclass(frozen=True)
class CoveringBound:
    log_value: float
    value: float


def covering_bound(d0, D, r) -> CoveringBound:
    """(2 d0)^(2D/r^2 + 1), returned with its natural log; r = 0 yields an infinite bound."""
    if int(d0) < 1 or not D > 0:
        raise InvalidInput("covering bound needs d0 >= 1 and D > 0")
    if r < 0:
        raise InvalidInput("radius must be nonnegative")
    if r == 0:
        return CoveringBound(math.inf, math.inf)
    log_n = (2.0 * D / (r * r) + 1.0) * math.log(2.0 * d0)
    value = math.exp(log_n) if log_n < 709.0 else math.inf
    return CoveringBound(log_n, value)


def _log_concentration(M, log_cover, log_ln_term, n):
    """log of M sqrt((N ln2 + c) / n) where c = exp(log_ln_term); -inf when M = 0."""
    if M == 0:
        return -math.inf
    inner = np.logaddexp(log_cover + math.log(LN2), log_ln_term)
    return math.log(M) + 0.5 * (float(inner) - math.log(n))


def _exp_or_inf(t):
    if t == -math.inf:
        return 0.0
    return math.exp(t) if t < 709.0 else math.inf


# --------------------------------------------------------------------------
# the bounds


def _concentration(inputs, log_cover, log_confidence):
    t = _log_concentration(inputs.M, log_cover, math.log(2.0 * log_confidence), inputs.n)
    return t, _exp_or_inf(t)


def ood_bound_winf(inputs: BoundInputs) -> BoundReport:
    """eps + M sqrt(((2 d0)^(2D/r^2+1) ln 2 + 2 ln(1/theta)) / n) for a (2r, eps, P_n, inf)-robust model."""
    cover = covering_bound(inputs.d0, inputs.D, inputs.r)
    log_conc, conc = _concentration(inputs, cover.log_value, math.log(1.0 / inputs.theta))
    return _finish(
        "ood_winf",
        {"robustness": inputs.epsilon, "concentration": conc},
        [_log(inputs.epsilon), log_conc],
        {"log_covering": cover.log_value, "log_concentration": log_conc},
    )


def ood_bound_w2(inputs: BoundInputs) -> BoundReport:
    """(M + 1) eps + M sqrt(((2 d0)^(2 eps^2 D/r^2+1) ln 2 + 2 ln(1/theta)) / n) for a (2r/eps, eps, P_n, 2)-robust model."""
    eps = inputs.epsilon
    if eps <= 0:
        raise InvalidInput("the W2 bound needs eps > 0: robustness on radius 2r/eps degenerates as eps -> 0")
    if inputs.r == 0:
        log_cover = math.inf
    else:
        log_cover = (2.0 * eps * eps * inputs.D / inputs.r**2 + 1.0) * math.log(2.0 * inputs.d0)
    log_conc, conc = _concentration(inputs, log_cover, math.log(1.0 / inputs.theta))
    rob = (inputs.M + 1.0) * eps
    return _finish(
        "ood_w2",
        {"robustness": rob, "concentration": conc},
        [_log(rob), log_conc],
        {"log_covering": log_cover, "log_concentration": log_conc},
    )


def optimization_rate(profile: ConstantsProfile, T: int, theta: float, confidence_factor: float = 1.0) -> float:
    """(G^2 lnln(c T / theta)(64 L + 16 mu_w) + G^2 L) / (T mu_w^2), the high-probability SGD term.

    ``confidence_factor`` c is 1 for the stand-alone convergence statement and 2
    inside the excess-risk bound (which splits theta between two events).
    """
    G2 = profile.G**2
    L = profile.L
    mu = profile.mu_w
    loglog = math.log(math.log(confidence_factor * T / theta))
    return (G2 * loglog * (64.0 * L + 16.0 * mu) + G2 * L) / (T * mu * mu)


def expectation_rate(profile: ConstantsProfile, T: int) -> float:
    """G^2 L / (T mu_w^2): the in-expectation excess-risk envelope of multi-step SGD."""
    return profile.G**2 * profile.L / (T * profile.mu_w**2)


def excess_risk_bound(inputs: BoundInputs, profile: ConstantsProfile, T: int, p=INF) -> BoundReport:
    """Worst-case OOD risk of the T-step iterate when the optimal robust objective is <= eps0 (= inputs.epsilon)."""
    p = parse_norm(p)
    if T < 4:
        raise InvalidInput("the excess-risk bound holds for T >= 4")
    if not 0.0 < inputs.theta <= 1.0 / math.e:
        raise InvalidInput("the excess-risk bound holds for 0 < theta <= 1/e")
    eps0 = inputs.epsilon
    rate = optimization_rate(profile, T, inputs.theta, confidence_factor=2.0)
    if p == INF:
        mult = 3.0
        log_cover = covering_bound(inputs.d0, inputs.D, inputs.r).log_value
    elif p == 2.0:
        mult = 2.0 * inputs.M + 3.0
        if inputs.r == 0:
            log_cover = math.inf
        else:
            log_cover = (2.0 * eps0 * eps0 * inputs.D / inputs.r**2 + 1.0) * math.log(2.0 * inputs.d0)
    else:
        raise InvalidInput("p must be 2 or inf")
    log_conc, conc = _concentration(inputs, log_cover, math.log(2.0 / inputs.theta))
    components = {"objective": mult * eps0, "optimization": mult * rate, "concentration": conc}
    return _finish(
        f"excess_{'inf' if p == INF else '2'}",
        components,
        [_log(mult * eps0), _log(mult * rate), log_conc],
        {"optimization_rate": rate, "multiplier": mult, "log_covering": log_cover},
    )


def pretrain_radius(D: float, tv: float, r2: float) -> float:
    """sqrt(2 D^2 TV + r^2): the W2 radius the pretraining guarantee has to cover."""
    return math.sqrt(2.0 * D * D * tv + r2 * r2)


def pretrain_transfer_bound(inputs: BoundInputs, p=INF, finite_sample: bool = False) -> BoundReport:
    """eps_pre + 2 M TV(P0, Q0), optionally plus the M sqrt(ln(1/theta) / 2n) sampling term (p = inf)."""
    p = parse_norm(p)
    if inputs.epsilon_pre is None or inputs.tv is None:
        raise InvalidInput("the transfer bound needs epsilon_pre and tv")
    if not 0.0 <= inputs.tv <= 1.0:
        raise InvalidInput("tv must lie in [0, 1]")
    components = {"pretrain": inputs.epsilon_pre, "shift": 2.0 * inputs.M * inputs.tv}
    sampling = inputs.M * math.sqrt(math.log(1.0 / inputs.theta) / (2.0 * inputs.n))
    details = {}
    if p == INF:
        details["finite_sample_bound"] = inputs.epsilon_pre + 2.0 * inputs.M * inputs.tv + sampling
        if finite_sample:
            components["sampling"] = sampling
    elif p == 2.0:
        if finite_sample:
            raise InvalidInput("the finite-sample variant is stated for p = inf only")
        details["pretrain_radius"] = pretrain_radius(inputs.D, inputs.tv, inputs.r)
    else:
        raise InvalidInput("p must be 2 or inf")
    return _finish(
        f"pretrain_{'inf' if p == INF else '2'}",
        components,
        [_log(v) for v in components.values()],
        details,
    )
