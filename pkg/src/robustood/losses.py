"""Smooth losses f(w, x) with analytic gradient oracles and constants profiles.

Three families ship here:

* ``QuadraticSaddle``: f(w, x) = w.x - 1/2 sum_j c_j x_j^2 + mu_w/2 |w - a|^2 + offset,
  strongly concave in x and strongly convex in w, with every constant of the
  smoothness / gradient-bound / PL assumptions available in closed form over
  the declared boxes.  ``c`` defaults to the constant ``mu_x`` (isotropic).
* ``LogisticLoss``: l2-regularised logistic regression with a bias term.
* ``TinyNet``: a one-hidden-layer tanh network under squared loss.

Only the quadratic saddle carries a certified profile; the other two report
``certified=False`` profiles produced by ``estimate_profile``.
"""

from __future__ import annotations

import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace

import numpy as np

from .numkit import (
    INF,
    InvalidInput,
    PerturbationBudget,
    RngState,
    as_vector,
    next_uniform_index,
    uniform_in_box,
)


class Unsupported(TypeError):
    """The requested operation is not available for this loss family."""


@dataclass(frozen=True)
class ConstantsProfile:
    L11: float
    L12: float
    L21: float
    L22: float
    G: float
    M: float
    mu_w: float
    mu_x: float
    certified: bool = False

    def __post_init__(self):
        for name in ("L11", "L12", "L21", "L22", "G", "M", "mu_w", "mu_x"):
            v = float(getattr(self, name))
            object.__setattr__(self, name, v)
            if not math.isfinite(v):
                raise InvalidInput(f"profile constant {name} is not finite")
        for name in ("L11", "L12", "L21", "L22", "G", "M"):
            if getattr(self, name) < 0:
                raise InvalidInput(f"profile constant {name} must be nonnegative")
        if self.mu_w <= 0 or self.mu_x <= 0:
            raise InvalidInput("mu_w and mu_x must be positive")

    @property
    def L(self) -> float:
        """Smoothness of the robust objective in w: L11 + L12 * L21 / mu_x."""
        return self.L11 + self.L12 * self.L21 / self.mu_x


# --------------------------------------------------------------------------
# data


@dataclass(frozen=True)
class LabeledSample:
    x: np.ndarray
    y: float | int | None = None


def box_l1_diameter(box) -> float:
    box = np.asarray(box, dtype=np.float64)
    return float(np.sum(box[:, 1] - box[:, 0]))


def expand_box(box, r: float) -> np.ndarray:
    """Grow every side of a box by ``r`` (room for l_inf or l2 perturbations of radius r)."""
    box = np.array(box, dtype=np.float64)
    box[:, 0] -= r
    box[:, 1] += r
    return box


def _check_box(box, d0=None) -> np.ndarray:
    box = np.asarray(box, dtype=np.float64)
    if box.ndim != 2 or box.shape[1] != 2:
        raise InvalidInput("a box is a list of [lo, hi] pairs")
    if d0 is not None and box.shape[0] != d0:
        raise InvalidInput(f"box has {box.shape[0]} rows, expected {d0}")
    if not np.all(np.isfinite(box)) or np.any(box[:, 1] < box[:, 0]):
        raise InvalidInput("box bounds must be finite with lo <= hi")
    return box


@dataclass
class Dataset:
    """Samples stored column-wise: ``x`` is (n, d0), ``y`` is length n (or None)."""

    x: np.ndarray
    y: np.ndarray | None
    support_box: np.ndarray
    D: float | None = None

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        self.support_box = _check_box(self.support_box, self.x.shape[1])
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=np.float64)
            if self.y.shape != (self.x.shape[0],):
                raise InvalidInput("labels must have one entry per sample")
        if not np.all(np.isfinite(self.x)):
            raise InvalidInput("samples must be finite")
        lo, hi = self.support_box[:, 0], self.support_box[:, 1]
        if np.any(self.x < lo) or np.any(self.x > hi):
            raise InvalidInput("samples must lie inside the support box")
        if self.D is None:
            self.D = box_l1_diameter(self.support_box)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d0(self) -> int:
        return self.x.shape[1]

    @property
    def samples(self) -> list[LabeledSample]:
        ys = [None] * self.n if self.y is None else list(self.y)
        return [LabeledSample(self.x[i].copy(), ys[i]) for i in range(self.n)]

    def label(self, i):
        return None if self.y is None else self.y[i]

    def to_json(self) -> str:
        samples = []
        for i in range(self.n):
            item = {"x": [float(v) for v in self.x[i]]}
            if self.y is not None:
                y = float(self.y[i])
                item["y"] = int(y) if y.is_integer() else y
            samples.append(item)
        doc = {
            "d0": self.d0,
            "support_box": [[float(lo), float(hi)] for lo, hi in self.support_box],
            "samples": samples,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "Dataset":
        doc = json.loads(text)
        d0 = int(doc["d0"])
        xs = [s["x"] for s in doc["samples"]]
        if any(len(x) != d0 for x in xs):
            raise InvalidInput("sample dimension does not match d0")
        has_y = [("y" in s) for s in doc["samples"]]
        if any(has_y) and not all(has_y):
            raise InvalidInput("either every sample has a label or none does")
        y = [s["y"] for s in doc["samples"]] if all(has_y) and has_y else None
        return cls(np.array(xs, dtype=np.float64).reshape(len(xs), d0), y, doc["support_box"])


# --------------------------------------------------------------------------
# loss interface


class SmoothLoss(ABC):
    """f(w, x; y).  ``w_box`` is the compact iterate box, ``x_box`` the input box."""

    family = "generic"
    w_box: np.ndarray
    x_box: np.ndarray
    label_values: tuple = (None,)

    @property
    def d_w(self) -> int:
        return self.w_box.shape[0]

    @property
    def d0(self) -> int:
        return self.x_box.shape[0]

    @abstractmethod
    def value(self, w, x, y=None) -> float: ...

    @abstractmethod
    def grad_w(self, w, x, y=None) -> np.ndarray: ...

    @abstractmethod
    def grad_x(self, w, x, y=None) -> np.ndarray: ...

    @abstractmethod
    def profile(self) -> ConstantsProfile: ...

    def values(self, w, X, y=None) -> np.ndarray:
        """Row-wise values; subclasses override with a vectorised version."""
        X = np.atleast_2d(X)
        ys = [None] * len(X) if y is None else y
        return np.array([self.value(w, X[i], ys[i]) for i in range(len(X))])

    # analytic extrema over a perturbation ball, where the family has them
    def perturbation_argmax(self, w, x, y, budget: PerturbationBudget) -> np.ndarray:
        raise Unsupported(f"{self.family} loss has no closed-form inner maximiser")

    def perturbation_argmin(self, w, x, y, budget: PerturbationBudget) -> np.ndarray:
        raise Unsupported(f"{self.family} loss has no closed-form inner minimiser")

    @property
    def has_closed_form(self) -> bool:
        return False


# --------------------------------------------------------------------------
# diagonal quadratic over a ball: maximise b.d - 1/2 sum a_j d_j^2


def _diag_quadratic_max_linf(b, a, r) -> np.ndarray:
    """Separable: each coordinate independently on [-r, r]."""
    out = np.empty_like(b)
    for j in range(b.size):
        cands = [-r, r]
        if a[j] > 0:
            cands.append(min(max(b[j] / a[j], -r), r))
        vals = [b[j] * t - 0.5 * a[j] * t * t for t in cands]
        out[j] = cands[int(np.argmax(vals))]
    return out


def _diag_quadratic_max_l2(b, a, r) -> np.ndarray:
    """Trust-region subproblem with a diagonal Hessian, solved to machine precision.

    Stationarity gives d_j = b_j / (a_j + nu) with nu >= max(0, -min a) and
    |d| = r whenever nu > 0.  |d(nu)| is decreasing in nu, so nu is found by
    bisection.  When b vanishes on the most negative-curvature coordinates the
    boundary is reached by adding mass along those coordinates ("hard case").
    """
    if r == 0.0:
        return np.zeros_like(b)
    amin = float(np.min(a))
    if amin > 0:
        d0 = b / a
        if math.sqrt(float(np.dot(d0, d0))) <= r:
            return d0
    nu_lo = max(0.0, -amin)
    critical = a + nu_lo <= 1e-15 * max(1.0, abs(amin))
    if np.any(critical) and np.all(np.abs(b[critical]) == 0.0):
        # hard case: the step along non-critical coordinates may fall short of r
        d = np.zeros_like(b)
        free = ~critical
        d[free] = b[free] / (a[free] + nu_lo)
        short = r * r - float(np.dot(d, d))
        if short >= 0.0:
            j = int(np.flatnonzero(critical)[0])
            d[j] = math.sqrt(short)
            return d

    def step_norm(nu):
        d = b / (a + nu)
        return math.sqrt(float(np.dot(d, d)))

    lo = nu_lo
    hi = max(nu_lo, 0.0) + float(np.linalg.norm(b)) / r + 1.0
    while step_norm(hi) > r:
        hi *= 2.0
    # tiny positive offset keeps a + lo strictly positive
    if np.any(a + lo <= 0):
        lo = lo + 1e-300
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if step_norm(mid) > r:
            lo = mid
        else:
            hi = mid
    d = b / (a + hi)
    n = math.sqrt(float(np.dot(d, d)))
    if n > r:
        d *= r / n
    return d


def diag_quadratic_argmax(b, a, budget: PerturbationBudget) -> np.ndarray:
    """argmax over the budget ball of b.d - 1/2 sum_j a_j d_j^2 (a may have any sign)."""
    b = np.asarray(b, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if budget.p == INF:
        return _diag_quadratic_max_linf(b, a, budget.r)
    return _diag_quadratic_max_l2(b, a, budget.r)


# --------------------------------------------------------------------------
# quadratic saddle


def _term_extrema(lo_w, hi_w, lo_x, hi_x, a, c, mu_w):
    """Exact min and max of t(w, x) = w x - c/2 x^2 + mu_w/2 (w - a)^2 on a rectangle.

    t is convex in w and concave in x, so the max sits at a w-endpoint with the
    concave maximiser in x, and the min at an x-endpoint with the convex
    minimiser in w.
    """

    def t(w, x):
        return w * x - 0.5 * c * x * x + 0.5 * mu_w * (w - a) ** 2

    tmax = max(t(w, min(max(w / c, lo_x), hi_x)) for w in (lo_w, hi_w))
    tmin = min(t(min(max(a - x / mu_w, lo_w), hi_w), x) for x in (lo_x, hi_x))
    return tmin, tmax


class QuadraticSaddle(SmoothLoss):
    family = "quadratic"

    def __init__(self, mu_w, mu_x, w_anchor, offset="auto", w_box=None, x_box=None, curvature=None):
        mu_w = float(mu_w)
        mu_x = float(mu_x)
        if not (mu_w > 0 and mu_x > 0):
            raise InvalidInput("quadratic saddle needs positive curvature parameters")
        self.w_anchor = as_vector(w_anchor, "w_anchor")
        d = self.w_anchor.size
        if curvature is None:
            self.curvature = np.full(d, mu_x)
        else:
            self.curvature = as_vector(curvature, "curvature")
            if self.curvature.size != d or np.any(self.curvature <= 0):
                raise InvalidInput("curvature must be positive with one entry per coordinate")
            if not math.isclose(float(np.min(self.curvature)), mu_x, rel_tol=1e-12):
                raise InvalidInput("mu_x must equal the smallest curvature entry")
        self.mu_w = mu_w
        self.mu_x = mu_x
        if w_box is None:
            w_box = np.column_stack([self.w_anchor - 2.0, self.w_anchor + 2.0])
        if x_box is None:
            x_box = np.tile([-2.0, 2.0], (d, 1))
        self.w_box = _check_box(w_box, d)
        self.x_box = _check_box(x_box, d)

        tmin = tmax = 0.0
        for j in range(d):
            lo, hi = _term_extrema(*self.w_box[j], *self.x_box[j], self.w_anchor[j], self.curvature[j], mu_w)
            tmin += lo
            tmax += hi
        self.auto_offset = offset == "auto"
        self.offset = -tmin if self.auto_offset else float(offset)
        self.f_min = tmin + self.offset
        self.f_max = tmax + self.offset

        # |x_j + mu_w (w_j - a_j)| is linear on the rectangle, so corners suffice
        g2 = 0.0
        for j in range(d):
            corners = [
                abs(x + mu_w * (w - self.w_anchor[j]))
                for w in self.w_box[j]
                for x in self.x_box[j]
            ]
            g2 += max(corners) ** 2
        self._profile = ConstantsProfile(
            L11=mu_w,
            L12=1.0,
            L21=1.0,
            L22=float(np.max(self.curvature)),
            G=math.sqrt(g2),
            M=max(self.f_max, 0.0),
            mu_w=mu_w,
            mu_x=mu_x,
            certified=True,
        )

    @property
    def has_closed_form(self) -> bool:
        return True

    def value(self, w, x, y=None) -> float:
        w = np.asarray(w, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        dw = w - self.w_anchor
        return float(
            np.dot(w, x)
            - 0.5 * np.dot(self.curvature * x, x)
            + 0.5 * self.mu_w * np.dot(dw, dw)
            + self.offset
        )

    def values(self, w, X, y=None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        w = np.asarray(w, dtype=np.float64)
        dw = w - self.w_anchor
        return X @ w - 0.5 * (X * X) @ self.curvature + 0.5 * self.mu_w * float(np.dot(dw, dw)) + self.offset

    def grad_w(self, w, x, y=None) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) + self.mu_w * (np.asarray(w, dtype=np.float64) - self.w_anchor)

    def grad_x(self, w, x, y=None) -> np.ndarray:
        return np.asarray(w, dtype=np.float64) - self.curvature * np.asarray(x, dtype=np.float64)

    def profile(self) -> ConstantsProfile:
        return self._profile

    def perturbation_argmax(self, w, x, y, budget):
        # f(w, x + d) - f(w, x) = (w - C x).d - 1/2 d.C d
        b = np.asarray(w, dtype=np.float64) - self.curvature * np.asarray(x, dtype=np.float64)
        return diag_quadratic_argmax(b, self.curvature, budget)

    def perturbation_argmin(self, w, x, y, budget):
        b = np.asarray(w, dtype=np.float64) - self.curvature * np.asarray(x, dtype=np.float64)
        return diag_quadratic_argmax(-b, -self.curvature, budget)


def quadratic_saddle(mu_w, mu_x, w_anchor, offset="auto", **kwargs) -> QuadraticSaddle:
    return QuadraticSaddle(mu_w, mu_x, w_anchor, offset=offset, **kwargs)


def closed_form_inner_argmax(loss: SmoothLoss, w, x, budget: PerturbationBudget, y=None) -> np.ndarray:
    """Exact maximiser of f(w, x + d) over the budget ball (quadratic saddle only)."""
    if not isinstance(loss, QuadraticSaddle):
        raise Unsupported("closed-form inner argmax is defined for the quadratic saddle family")
    return loss.perturbation_argmax(w, x, y, budget)


# --------------------------------------------------------------------------
# logistic regression


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class LogisticLoss(SmoothLoss):
    """log(1 + exp(-y (v.x + b))) + lam/2 |w|^2 with w = (v, b) and y in {-1, +1}."""

    family = "logistic"
    label_values = (-1.0, 1.0)

    def __init__(self, d0, lam=1e-2, w_box=None, x_box=None, profile=None):
        self.lam = float(lam)
        if self.lam < 0:
            raise InvalidInput("regularisation must be nonnegative")
        if w_box is None:
            w_box = np.tile([-5.0, 5.0], (d0 + 1, 1))
        if x_box is None:
            x_box = np.tile([-1.0, 1.0], (d0, 1))
        self.w_box = _check_box(w_box, d0 + 1)
        self.x_box = _check_box(x_box, d0)
        self._profile = profile

    @property
    def has_closed_form(self) -> bool:
        return True

    def margin(self, w, x, y):
        w = np.asarray(w, dtype=np.float64)
        return float(y) * (float(np.dot(w[:-1], x)) + w[-1])

    def value(self, w, x, y=None) -> float:
        w = np.asarray(w, dtype=np.float64)
        return float(_softplus(-self.margin(w, x, y))) + 0.5 * self.lam * float(np.dot(w, w))

    def values(self, w, X, y=None) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        m = np.asarray(y, dtype=np.float64) * (np.atleast_2d(X) @ w[:-1] + w[-1])
        return _softplus(-m) + 0.5 * self.lam * float(np.dot(w, w))

    def grad_w(self, w, x, y=None) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        s = -float(y) * float(_sigmoid(-self.margin(w, x, y)))
        return s * np.append(np.asarray(x, dtype=np.float64), 1.0) + self.lam * w

    def grad_x(self, w, x, y=None) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        s = -float(y) * float(_sigmoid(-self.margin(w, x, y)))
        return s * w[:-1]

    def _shift(self, w, y, budget, sign):
        # the margin is linear in x: push it along -y v (sup) or +y v (inf)
        v = np.asarray(w, dtype=np.float64)[:-1]
        if budget.r == 0.0 or not np.any(v):
            return np.zeros_like(v)
        direction = -sign * float(y) * v
        if budget.p == INF:
            return budget.r * np.sign(direction)
        return budget.r * direction / np.linalg.norm(direction)

    def perturbation_argmax(self, w, x, y, budget):
        return self._shift(w, y, budget, +1.0)

    def perturbation_argmin(self, w, x, y, budget):
        return self._shift(w, y, budget, -1.0)

    def worst_case_values(self, w, X, y, budget: PerturbationBudget) -> np.ndarray:
        """Vectorised sup over the ball: the margin drops by r times the dual norm of v."""
        w = np.asarray(w, dtype=np.float64)
        v = w[:-1]
        dual = float(np.sum(np.abs(v))) if budget.p == INF else float(np.linalg.norm(v))
        m = np.asarray(y, dtype=np.float64) * (np.atleast_2d(X) @ v + w[-1]) - budget.r * dual
        return _softplus(-m) + 0.5 * self.lam * float(np.dot(w, w))

    def analytic_gradient_bound(self) -> float:
        """sup |grad_w f| over the boxes: sigmoid <= 1, so |(x, 1)| + lam |w| bounds it."""
        xmax = np.max(np.abs(self.x_box), axis=1)
        wmax = np.max(np.abs(self.w_box), axis=1)
        return math.sqrt(float(np.dot(xmax, xmax)) + 1.0) + self.lam * math.sqrt(float(np.dot(wmax, wmax)))

    def analytic_value_bound(self) -> float:
        xmax = np.max(np.abs(self.x_box), axis=1)
        wmax = np.max(np.abs(self.w_box), axis=1)
        margin = float(np.dot(wmax[:-1], xmax)) + wmax[-1]
        return float(_softplus(margin)) + 0.5 * self.lam * float(np.dot(wmax, wmax))

    def profile(self) -> ConstantsProfile:
        if self._profile is None:
            est = estimate_profile(self, 2000, RngState(0x5EED))
            self._profile = replace(est, M=max(est.M, self.analytic_value_bound()))
        return self._profile


# --------------------------------------------------------------------------
# tiny network


class TinyNet(SmoothLoss):
    """1/2 (a.tanh(W x + c) + e - y)^2 + lam/2 |theta|^2, theta = (W, c, a, e) flattened."""

    family = "tinynet"

    def __init__(self, d0, hidden=4, lam=1e-3, w_box=None, x_box=None, label_range=(-1.0, 1.0)):
        self.hidden = int(hidden)
        self.lam = float(lam)
        self._d0 = int(d0)
        d_w = self.hidden * self._d0 + 2 * self.hidden + 1
        if w_box is None:
            w_box = np.tile([-2.0, 2.0], (d_w, 1))
        if x_box is None:
            x_box = np.tile([-1.0, 1.0], (d0, 1))
        self.w_box = _check_box(w_box, d_w)
        self.x_box = _check_box(x_box, d0)
        self.label_values = tuple(np.linspace(label_range[0], label_range[1], 5))
        self._profile = None

    def unpack(self, w):
        w = np.asarray(w, dtype=np.float64)
        h, d = self.hidden, self._d0
        W = w[: h * d].reshape(h, d)
        c = w[h * d : h * d + h]
        a = w[h * d + h : h * d + 2 * h]
        e = w[-1]
        return W, c, a, e

    def _forward(self, w, x):
        W, c, a, e = self.unpack(w)
        hid = np.tanh(W @ np.asarray(x, dtype=np.float64) + c)
        return W, c, a, e, hid, float(np.dot(a, hid) + e)

    def value(self, w, x, y=None) -> float:
        w = np.asarray(w, dtype=np.float64)
        *_, out = self._forward(w, x)
        res = out - float(y)
        return 0.5 * res * res + 0.5 * self.lam * float(np.dot(w, w))

    def grad_w(self, w, x, y=None) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        W, c, a, e, hid, out = self._forward(w, x)
        res = out - float(y)
        dpre = res * a * (1.0 - hid * hid)
        g = np.concatenate([np.outer(dpre, x).ravel(), dpre, res * hid, [res]])
        return g + self.lam * w

    def grad_x(self, w, x, y=None) -> np.ndarray:
        W, c, a, e, hid, out = self._forward(w, x)
        res = out - float(y)
        return W.T @ (res * a * (1.0 - hid * hid))

    def profile(self) -> ConstantsProfile:
        if self._profile is None:
            self._profile = estimate_profile(self, 2000, RngState(0x7E57))
        return self._profile


class ConstantLoss(SmoothLoss):
    family = "constant"

    def __init__(self, c, d_w, d0):
        self.c = float(c)
        self.w_box = np.tile([-1.0, 1.0], (d_w, 1))
        self.x_box = np.tile([-1.0, 1.0], (d0, 1))

    @property
    def has_closed_form(self) -> bool:
        return True

    def value(self, w, x, y=None):
        return self.c

    def grad_w(self, w, x, y=None):
        return np.zeros(self.d_w)

    def grad_x(self, w, x, y=None):
        return np.zeros(self.d0)

    def perturbation_argmax(self, w, x, y, budget):
        return np.zeros(self.d0)

    def perturbation_argmin(self, w, x, y, budget):
        return np.zeros(self.d0)

    def profile(self):
        return ConstantsProfile(0.0, 0.0, 0.0, 0.0, 0.0, max(self.c, 0.0), 1.0, 1.0, certified=True)


# --------------------------------------------------------------------------
# empirical constants

# positive floor reported for curvature constants that the probes could not see
CURVATURE_FLOOR = 1e-12


def estimate_profile(loss: SmoothLoss, probes: int, rng: RngState, floors: dict | None = None) -> ConstantsProfile:
    """Probe random pairs inside the boxes and report the largest observed ratios.

    Lipschitz constants, G and M are maxima of observed ratios/values, so they
    are lower estimates of the true constants; ``floors`` lets a caller pass
    known analytic lower bounds that the estimate is never allowed to undercut.
    mu_w and mu_x are the smallest observed (strong) convexity / concavity
    ratios, floored at a tiny positive value.
    """
    probes = int(probes)
    if probes < 2:
        raise InvalidInput("need at least two probes")
    L11 = L12 = L21 = L22 = G = M = 0.0
    mu_w = mu_x = math.inf
    for _ in range(probes):
        W, rng = uniform_in_box(rng, loss.w_box, 2)
        X, rng = uniform_in_box(rng, loss.x_box, 2)
        k, rng = next_uniform_index(rng, len(loss.label_values))
        y = loss.label_values[k]
        w1, w2 = W
        x1, x2 = X
        gw11 = loss.grad_w(w1, x1, y)
        gw21 = loss.grad_w(w2, x1, y)
        gw12 = loss.grad_w(w1, x2, y)
        gx11 = loss.grad_x(w1, x1, y)
        gx21 = loss.grad_x(w2, x1, y)
        gx12 = loss.grad_x(w1, x2, y)
        dw = w1 - w2
        dx = x1 - x2
        nw = float(np.linalg.norm(dw))
        nx = float(np.linalg.norm(dx))
        if nw > 0:
            L11 = max(L11, float(np.linalg.norm(gw11 - gw21)) / nw)
            L21 = max(L21, float(np.linalg.norm(gx11 - gx21)) / nw)
            mu_w = min(mu_w, float(np.dot(gw11 - gw21, dw)) / nw**2)
        if nx > 0:
            L12 = max(L12, float(np.linalg.norm(gw11 - gw12)) / nx)
            L22 = max(L22, float(np.linalg.norm(gx11 - gx12)) / nx)
            mu_x = min(mu_x, -float(np.dot(gx11 - gx12, dx)) / nx**2)
        G = max(G, float(np.linalg.norm(gw11)), float(np.linalg.norm(gw12)), float(np.linalg.norm(gw21)))
        M = max(M, loss.value(w1, x1, y), loss.value(w2, x1, y), loss.value(w1, x2, y))
    est = dict(L11=L11, L12=L12, L21=L21, L22=L22, G=G, M=M)
    for name, lb in (floors or {}).items():
        if name in est:
            est[name] = max(est[name], float(lb))
    if not math.isfinite(mu_w) or mu_w <= 0:
        mu_w = CURVATURE_FLOOR
    if not math.isfinite(mu_x) or mu_x <= 0:
        mu_x = CURVATURE_FLOOR
    return ConstantsProfile(mu_w=mu_w, mu_x=mu_x, certified=False, **est)
