"""Multi-step SGD for min_w (1/n) sum_i sup_{|d|_p <= r} f(w, x_i + d).

Each outer step samples one index uniformly, runs K projected ascent steps on
the perturbation (plain gradient or sign of the gradient), then takes one SGD
step on w at the perturbed point.  w is clamped into the loss's iterate box
after every step so the gradient bound G of the loss profile stays valid.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .losses import ConstantsProfile, Dataset, SmoothLoss, Unsupported
from .numkit import (
    InvalidInput,
    PerturbationBudget,
    RngState,
    as_vector,
    next_uniform_index,
    _project,
    project_box,
    uniform_in_ball,
)

DIVERGENCE_FACTOR = 1e6


class DivergenceError(ArithmeticError):
    """Training produced a non-finite or runaway objective; ``trace`` holds the steps so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class Pgd:
    """Inner-loop quality for objectives evaluated by projected ascent instead of closed form."""

    K: int = 60
    eta_x: float | None = None
    sign: bool = False


ANALYTIC = "analytic"


def _check_delta_init(delta, budget):
    if not budget.contains(delta):
        raise InvalidInput("initial perturbation lies outside the budget ball")


def inner_max(loss: SmoothLoss, w, x, budget: PerturbationBudget, K: int, eta_x: float, delta_init=None, y=None, ascent=True):
    """K steps of projected gradient ascent on d -> f(w, x + d) starting from ``delta_init``.

    With ``ascent=False`` the same loop descends (used for the infimum side of
    input-robustness).  Returns (delta_{K+1}, f(w, x + delta_{K+1})).
    """
    if K < 1:
        raise InvalidInput("K must be at least 1")
    x = np.asarray(x, dtype=np.float64)
    if delta_init is None:
        delta = np.zeros_like(x)
    else:
        delta = as_vector(delta_init, "delta_init")
        _check_delta_init(delta, budget)
    step = eta_x if ascent else -eta_x
    p, r = budget.p, budget.r
    for _ in range(K):
        delta = _project(delta + step * loss.grad_x(w, x + delta, y), p, r)
    return delta, loss.value(w, x + delta, y)


def inner_max_sign(loss: SmoothLoss, w, x, budget: PerturbationBudget, K: int, eta_x: float, delta_init=None, y=None, ascent=True):
    """As ``inner_max`` but stepping along sign(grad_x f), with sign(0) = 0."""
    if K < 1:
        raise InvalidInput("K must be at least 1")
    x = np.asarray(x, dtype=np.float64)
    if delta_init is None:
        delta = np.zeros_like(x)
    else:
        delta = as_vector(delta_init, "delta_init")
        _check_delta_init(delta, budget)
    step = eta_x if ascent else -eta_x
    p, r = budget.p, budget.r
    for _ in range(K):
        delta = _project(delta + step * np.sign(loss.grad_x(w, x + delta, y)), p, r)
    return delta, loss.value(w, x + delta, y)


def required_inner_steps(profile: ConstantsProfile, T: int, d0: int, budget: PerturbationBudget) -> int:
    """ceil((L22/mu_x) ln(8 T mu_w d0 r^2 / (G L))), at least 1."""
    L = profile.L
    if profile.G <= 0 or L <= 0:
        raise InvalidInput("required_inner_steps needs positive G and L")
    if profile.L22 <= 0:
        raise InvalidInput("required_inner_steps needs positive L22")
    arg = 8.0 * T * profile.mu_w * d0 * budget.r**2 / (profile.G * L)
    if arg <= 1.0:
        return 1
    return max(1, math.ceil(profile.L22 / profile.mu_x * math.log(arg)))


@dataclass(frozen=True)
class TrainConfig:
    T: int
    K: int | str = "auto"
    budget: PerturbationBudget = PerturbationBudget(2, 0.0)
    eta_x: float | None = None
    schedule: str = "pl_decay"
    eta_w: float | None = None
    sign_variant: bool = False
    seed: int = 0
    delta_init: str = "zero"
    w_init: tuple | None = None
    telemetry_every: int = 10
    snapshot_steps: tuple = ()

    def __post_init__(self):
        if int(self.T) < 1:
            raise InvalidInput("T must be at least 1")
        if self.K != "auto" and int(self.K) < 1:
            raise InvalidInput("K must be at least 1 or 'auto'")
        if self.eta_x is not None and not self.eta_x > 0:
            raise InvalidInput("eta_x must be positive")
        if self.schedule not in ("pl_decay", "constant"):
            raise InvalidInput(f"unknown outer schedule {self.schedule!r}")
        if self.schedule == "constant" and not (self.eta_w is not None and self.eta_w > 0):
            raise InvalidInput("a constant schedule needs a positive eta_w")
        if self.delta_init not in ("zero", "uniform"):
            raise InvalidInput(f"unknown delta_init {self.delta_init!r}")
        if int(self.telemetry_every) < 0:
            raise InvalidInput("telemetry_every must be nonnegative")


@dataclass
class TrainTrace:
    i_t: np.ndarray
    objective_stoch: np.ndarray
    objective_full: np.ndarray
    grad_norm: np.ndarray
    box_active: np.ndarray
    w_final: np.ndarray
    K: int
    snapshots: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.i_t)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "i_t", "objective_stoch", "objective_full", "grad_norm"])
        for t in range(len(self)):
            full = self.objective_full[t]
            writer.writerow(
                [
                    t + 1,
                    int(self.i_t[t]),
                    repr(float(self.objective_stoch[t])),
                    "" if math.isnan(full) else repr(float(full)),
                    repr(float(self.grad_norm[t])),
                ]
            )
        return buf.getvalue()


def _resolve_eta_x(loss, config):
    if config.eta_x is not None:
        return float(config.eta_x)
    L22 = loss.profile().L22
    if L22 <= 0:
        raise InvalidInput("default eta_x = 1/L22 needs a positive L22")
    return 1.0 / L22


def _resolve_K(loss, data, config):
    if config.K == "auto":
        return required_inner_steps(loss.profile(), config.T, data.d0, config.budget)
    return int(config.K)


def _initial_w(loss, config):
    if config.w_init is None:
        return loss.w_box.mean(axis=1)
    w = as_vector(config.w_init, "w_init")
    if w.size != loss.d_w:
        raise InvalidInput("w_init has the wrong dimension")
    return project_box(w, loss.w_box)


def train(loss: SmoothLoss, data: Dataset, config: TrainConfig) -> TrainTrace:
    if data.d0 != loss.d0:
        raise InvalidInput(f"dataset dimension {data.d0} does not match loss input dimension {loss.d0}")
    T = int(config.T)
    K = _resolve_K(loss, data, config)
    eta_x = _resolve_eta_x(loss, config)
    budget = config.budget
    ascend = inner_max_sign if config.sign_variant else inner_max
    mu_w = loss.profile().mu_w
    M = loss.profile().M
    threshold = DIVERGENCE_FACTOR * max(M, 1.0)
    rng = RngState(config.seed)
    snapshot_steps = set(int(s) for s in config.snapshot_steps)

    w = _initial_w(loss, config)
    w_lo, w_hi = loss.w_box[:, 0], loss.w_box[:, 1]
    i_t = np.zeros(T, dtype=np.int64)
    obj = np.zeros(T)
    full = np.full(T, np.nan)
    gnorm = np.zeros(T)
    active = np.zeros(T, dtype=bool)
    snapshots = {}

    def partial(t):
        return TrainTrace(i_t[:t], obj[:t], full[:t], gnorm[:t], active[:t], w.copy(), K, dict(snapshots))

    for t in range(1, T + 1):
        i, rng = next_uniform_index(rng, data.n)
        x = data.x[i]
        y = data.label(i)
        delta0 = None
        if config.delta_init == "uniform":
            delta0, rng = uniform_in_ball(rng, budget, data.d0)
        delta, value = ascend(loss, w, x, budget, K, eta_x, delta0, y)
        g = loss.grad_w(w, x + delta, y)
        g_norm = math.sqrt(float(np.dot(g, g)))
        if not (math.isfinite(value) and math.isfinite(g_norm)) or value > threshold:
            raise DivergenceError(f"objective diverged at step {t}: {value!r}", partial(t - 1))
        eta_w = 1.0 / (mu_w * t) if config.schedule == "pl_decay" else config.eta_w
        stepped = w - eta_w * g
        w = np.minimum(np.maximum(stepped, w_lo), w_hi)
        active[t - 1] = not np.array_equal(w, stepped)
        i_t[t - 1] = i
        obj[t - 1] = value
        gnorm[t - 1] = g_norm
        if config.telemetry_every and t % config.telemetry_every == 0:
            full[t - 1] = robust_objective(loss, data, w, budget, _telemetry_quality(loss, K, eta_x, config))
        if t in snapshot_steps:
            snapshots[t] = w.copy()
    return TrainTrace(i_t, obj, full, gnorm, active, w, K, snapshots)


def _telemetry_quality(loss, K, eta_x, config):
    if loss.has_closed_form:
        return ANALYTIC
    return Pgd(K=K, eta_x=eta_x, sign=config.sign_variant)


def per_sample_worst(loss: SmoothLoss, data: Dataset, w, budget: PerturbationBudget, inner_quality=ANALYTIC) -> np.ndarray:
    """sup over the ball of f(w, x_i + d) for every sample i."""
    if budget.r == 0.0:
        return loss.values(w, data.x, data.y)
    if inner_quality == ANALYTIC:
        if not loss.has_closed_form:
            raise Unsupported(f"analytic inner maximisation is unavailable for the {loss.family} family")
        if hasattr(loss, "worst_case_values"):
            return loss.worst_case_values(w, data.x, data.y, budget)
        out = np.empty(data.n)
        for i in range(data.n):
            y = data.label(i)
            d = loss.perturbation_argmax(w, data.x[i], y, budget)
            out[i] = loss.value(w, data.x[i] + d, y)
        return out
    if not isinstance(inner_quality, Pgd):
        raise InvalidInput(f"unknown inner quality {inner_quality!r}")
    eta = inner_quality.eta_x if inner_quality.eta_x is not None else 1.0 / loss.profile().L22
    ascend = inner_max_sign if inner_quality.sign else inner_max
    out = np.empty(data.n)
    for i in range(data.n):
        _, out[i] = ascend(loss, w, data.x[i], budget, inner_quality.K, eta, None, data.label(i))
    return out


def robust_objective(loss: SmoothLoss, data: Dataset, w, budget: PerturbationBudget, inner_quality=ANALYTIC) -> float:
    """(1/n) sum_i sup_{|d|_p <= r} f(w, x_i + d); exact on the analytic path, a lower bound under Pgd."""
    return float(np.mean(per_sample_worst(loss, data, w, budget, inner_quality)))


def empirical_risk(loss: SmoothLoss, data: Dataset, w) -> float:
    return float(np.mean(loss.values(w, data.x, data.y)))
