"""Small-vector arithmetic, ball projections and a counter-based RNG.

Everything here is a pure function of its arguments.  Random state is an
immutable ``RngState`` (seed, position) that is threaded through calls and
returned advanced, so a run is reproducible from its seed alone.

The generator is SplitMix64 evaluated in counter mode: draw number ``k`` of
seed ``s`` is ``mix64(s + (k + 1) * GOLDEN)`` (all arithmetic mod 2**64).
This is bit-for-bit the classic SplitMix64 sequence started from ``s``, and
random access to any position is O(1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

INF = math.inf


class InvalidInput(ValueError):
    """Raised when an argument violates a documented precondition."""


def as_vector(v, name="vector") -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInput(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} has non-finite entries")
    return arr


def parse_norm(p) -> float:
    """Accept 1, 2, inf (or the strings 'inf', 'linf', 'l2') and return a float order."""
    if isinstance(p, str):
        key = p.strip().lower()
        table = {"1": 1.0, "l1": 1.0, "2": 2.0, "l2": 2.0, "inf": INF, "linf": INF, "infinity": INF}
        if key not in table:
            raise InvalidInput(f"unsupported norm order {p!r}")
        return table[key]
    p = float(p)
    if p not in (1.0, 2.0, INF):
        raise InvalidInput(f"unsupported norm order {p!r}")
    return p


def norm(v, p=2) -> float:
    """l_p norm for p in {1, 2, inf}."""
    v = as_vector(v)
    p = parse_norm(p)
    if v.size == 0:
        return 0.0
    if p == 1.0:
        return float(np.sum(np.abs(v)))
    if p == 2.0:
        # scale by the largest entry so tiny or huge vectors neither underflow nor overflow
        m = float(np.max(np.abs(v)))
        if m == 0.0:
            return 0.0
        s = v / m
        return m * math.sqrt(float(np.dot(s, s)))
    return float(np.max(np.abs(v)))


@dataclass(frozen=True)
class PerturbationBudget:
    """The ball B_p(0, r) with p in {2, inf}."""

    p: float
    r: float

    def __post_init__(self):
        p = parse_norm(self.p)
        if p == 1.0:
            raise InvalidInput("perturbation budgets support p in {2, inf} only")
        object.__setattr__(self, "p", p)
        r = float(self.r)
        if not math.isfinite(r) or r < 0:
            raise InvalidInput(f"radius must be finite and nonnegative, got {self.r!r}")
        object.__setattr__(self, "r", r)

    @property
    def label(self) -> str:
        return "inf" if self.p == INF else "2"

    def contains(self, v, slack=1e-12) -> bool:
        return norm(v, self.p) <= self.r + slack


def project_ball(v, budget: PerturbationBudget) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``budget``'s ball.

    Radial rescaling for p=2, coordinatewise clamping for p=inf (which is the
    l2-nearest point of the l_inf ball).
    """
    return _project(as_vector(v), budget.p, budget.r)


def _project(v: np.ndarray, p: float, r: float) -> np.ndarray:
    # unchecked variant for hot loops; v must already be a finite float vector
    if p == INF:
        return np.minimum(np.maximum(v, -r), r)
    n2 = math.sqrt(float(np.dot(v, v)))
    if n2 <= r:
        return v.copy()
    if r == 0.0:
        return np.zeros_like(v)
    out = v * (r / n2)
    # rounding can leave |out| a hair above r
    n_out = math.sqrt(float(np.dot(out, out)))
    if n_out > r:
        out = out * (r / n_out)
    return out


def project_box(v, box) -> np.ndarray:
    """Clamp ``v`` into a hyper-rectangle given as an array of [lo, hi] rows."""
    box = np.asarray(box, dtype=np.float64)
    return np.clip(np.asarray(v, dtype=np.float64), box[:, 0], box[:, 1])


# --------------------------------------------------------------------------
# random numbers


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class RngState:
    seed: int
    position: int = 0

    def __post_init__(self):
        if not (0 <= int(self.seed) <= MASK64):
            raise InvalidInput("seed must be an unsigned 64-bit integer")
        if int(self.position) < 0:
            raise InvalidInput("stream position must be nonnegative")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "position", int(self.position))

    def advance(self, count: int) -> "RngState":
        return RngState(self.seed, self.position + count)

    def fork(self, key: int) -> "RngState":
        """Independent child stream, derived from this state's seed and ``key``."""
        child = _mix64((self.seed ^ _mix64((int(key) * GOLDEN + self.position) & MASK64)) & MASK64)
        return RngState(child, 0)


def next_u64(rng: RngState) -> tuple[int, RngState]:
    z = (rng.seed + (rng.position + 1) * GOLDEN) & MASK64
    return _mix64(z), rng.advance(1)


def draw_u64(rng: RngState, size: int) -> tuple[np.ndarray, RngState]:
    """``size`` consecutive raw outputs as a uint64 array (same values as repeated next_u64)."""
    if size < 0:
        raise InvalidInput("size must be nonnegative")
    k = np.arange(rng.position + 1, rng.position + 1 + size, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(rng.seed) + k * np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
    return z, rng.advance(size)


def uniform(rng: RngState, size: int) -> tuple[np.ndarray, RngState]:
    """Doubles in [0, 1) with 53 random bits each."""
    raw, rng = draw_u64(rng, size)
    return (raw >> np.uint64(11)).astype(np.float64) * (2.0 ** -53), rng


def uniform_in_box(rng: RngState, box, count: int) -> tuple[np.ndarray, RngState]:
    box = np.asarray(box, dtype=np.float64)
    u, rng = uniform(rng, count * box.shape[0])
    u = u.reshape(count, box.shape[0])
    return box[:, 0] + u * (box[:, 1] - box[:, 0]), rng


def next_uniform_index(rng: RngState, n: int) -> tuple[int, RngState]:
    """Unbiased index in [0, n) by rejection on the top of the 64-bit range."""
    n = int(n)
    if n < 1:
        raise InvalidInput("n must be at least 1")
    limit = (1 << 64) - ((1 << 64) % n)
    while True:
        x, rng = next_u64(rng)
        if x < limit:
            return x % n, rng


def uniform_in_ball(rng: RngState, budget: PerturbationBudget, dim: int) -> tuple[np.ndarray, RngState]:
    """A point uniformly distributed in the budget ball (rejection from the cube for p=2)."""
    r = budget.r
    if r == 0.0:
        return np.zeros(dim), rng
    if budget.p == INF:
        u, rng = uniform(rng, dim)
        return (2.0 * u - 1.0) * r, rng
    while True:
        u, rng = uniform(rng, dim)
        v = 2.0 * u - 1.0
        if float(np.dot(v, v)) <= 1.0:
            return v * r, rng


def permutation(rng: RngState, n: int) -> tuple[np.ndarray, RngState]:
    """Fisher-Yates shuffle of range(n)."""
    out = np.arange(n)
    for i in range(n - 1, 0, -1):
        j, rng = next_uniform_index(rng, i + 1)
        out[i], out[j] = out[j], out[i]
    return out, rng
