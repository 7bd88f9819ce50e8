"""Exact distances between finitely supported distributions and Wasserstein worst-case risks.

* ``wasserstein2``: transportation LP solved by a tree-based (network) simplex
  with MODI potentials; squared-l2 ground cost.
* ``wasserstein_inf``: bottleneck transport, l_inf ground cost, by binary
  search over edge costs with a perfect-matching test on the equal-mass
  expansion of both distributions.
* ``brute_force_wp``: enumeration of permutation couplings of the equal-mass
  expansions, used as the test oracle for the two solvers above.
* ``worst_case_risk_winf`` / ``worst_case_risk_w2``: sup of the risk over a
  Wasserstein ball around a discrete distribution.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .losses import QuadraticSaddle, SmoothLoss
from .minimax import ANALYTIC, inner_max, inner_max_sign
from .numkit import INF, InvalidInput, PerturbationBudget

MAX_SUPPORT = 64
MAX_DENOMINATOR = 256
MAX_BRUTE_FORCE = 8


class TooLarge(InvalidInput):
    pass


class UnsupportedWeights(InvalidInput):
    pass


class NumericalError(ArithmeticError):
    pass


@dataclass
class DiscreteDistribution:
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=np.float64)
        if self.atoms.ndim == 1:
            self.atoms = self.atoms.reshape(-1, 1)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.atoms.ndim != 2 or self.weights.shape != (self.atoms.shape[0],):
            raise InvalidInput("need one weight per atom")
        if not np.all(np.isfinite(self.atoms)) or not np.all(np.isfinite(self.weights)):
            raise InvalidInput("atoms and weights must be finite")
        if np.any(self.weights < 0):
            raise InvalidInput("weights must be nonnegative")
        if abs(float(np.sum(self.weights)) - 1.0) > 1e-12:
            raise InvalidInput(f"weights sum to {float(np.sum(self.weights))!r}, not 1")

    @classmethod
    def uniform(cls, atoms) -> "DiscreteDistribution":
        atoms = np.asarray(atoms, dtype=np.float64)
        if atoms.ndim == 1:
            atoms = atoms.reshape(-1, 1)
        return cls(atoms, np.full(atoms.shape[0], 1.0 / atoms.shape[0]))

    @classmethod
    def point(cls, atom) -> "DiscreteDistribution":
        return cls(np.asarray(atom, dtype=np.float64).reshape(1, -1), np.ones(1))

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @property
    def d0(self) -> int:
        return self.atoms.shape[1]

    def to_json(self) -> str:
        return json.dumps({"atoms": self.atoms.tolist(), "weights": self.weights.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "DiscreteDistribution":
        doc = json.loads(text)
        return cls(np.array(doc["atoms"], dtype=np.float64), np.array(doc["weights"], dtype=np.float64))


def check_coupling(plan, P: DiscreteDistribution, Q: DiscreteDistribution, tol=1e-10) -> bool:
    plan = np.asarray(plan)
    return (
        plan.shape == (P.size, Q.size)
        and bool(np.all(plan >= -tol))
        and bool(np.allclose(plan.sum(axis=1), P.weights, atol=tol, rtol=0))
        and bool(np.allclose(plan.sum(axis=0), Q.weights, atol=tol, rtol=0))
    )


def _check_pair(P, Q, limit=MAX_SUPPORT):
    if P.d0 != Q.d0:
        raise InvalidInput(f"dimension mismatch: {P.d0} vs {Q.d0}")
    if P.size > limit or Q.size > limit:
        raise TooLarge(f"supports larger than {limit} atoms are out of range")


def cost_matrix(P, Q, p) -> np.ndarray:
    diff = P.atoms[:, None, :] - Q.atoms[None, :, :]
    if p == INF:
        return np.max(np.abs(diff), axis=2)
    return np.sum(diff * diff, axis=2)


# --------------------------------------------------------------------------
# transportation simplex

PERTURBATION = 1e-13


def _tree_flows(basis, a, b):
    """Flows on a spanning-tree basis that meet supplies a and demands b (leaf elimination)."""
    m, n = len(a), len(b)
    remaining = np.concatenate([a, b]).astype(np.float64)
    adj = [set() for _ in range(m + n)]
    for i, j in basis:
        adj[i].add(m + j)
        adj[m + j].add(i)
    flows = {}
    leaves = deque(k for k in range(m + n) if len(adj[k]) == 1)
    while leaves:
        k = leaves.popleft()
        if len(adj[k]) != 1:
            continue
        other = adj[k].pop()
        adj[other].discard(k)
        cell = (k, other - m) if k < m else (other, k - m)
        q = remaining[k]
        flows[cell] = q
        remaining[other] -= q
        remaining[k] = 0.0
        if len(adj[other]) == 1:
            leaves.append(other)
    return flows


def transport_plan(a, b, C, max_iter=None):
    """Minimise sum C_ij x_ij subject to row sums a and column sums b.

    Returns (cost, plan).  Nondegenerate pivoting is forced by the classical
    perturbation a_i + eps, b_last + m eps; the optimal basis found for the
    perturbed data is then re-solved with the exact marginals.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    m, n = len(a), len(b)
    ap = a + PERTURBATION
    bp = b.copy()
    bp[-1] += m * PERTURBATION

    # northwest corner start: m + n - 1 cells forming a spanning tree
    basis = []
    s, d = ap.copy(), bp.copy()
    i = j = 0
    while True:
        q = min(s[i], d[j])
        basis.append((i, j))
        s[i] -= q
        d[j] -= q
        if i == m - 1 and j == n - 1:
            break
        if i < m - 1 and (s[i] <= d[j] or j == n - 1):
            i += 1
        else:
            j += 1
    flows = _tree_flows(basis, ap, bp)

    scale = max(1.0, float(np.max(np.abs(C)))) if C.size else 1.0
    tol = 1e-12 * scale
    max_iter = max_iter or 50 * (m + n) ** 2
    for _ in range(max_iter):
        u, v = _potentials(basis, C, m, n)
        reduced = C - u[:, None] - v[None, :]
        p, q = np.unravel_index(int(np.argmin(reduced)), reduced.shape)
        if reduced[p, q] >= -tol:
            break
        path = _tree_path(basis, m, n, p, q)
        # path runs row p -> ... -> column q; its cells alternate -, +, -, ...
        minus = path[0::2]
        theta = min(flows[c] for c in minus)
        leaving = min((c for c in minus if flows[c] == theta), key=lambda c: (c[0], c[1]))
        for k, c in enumerate(path):
            flows[c] += -theta if k % 2 == 0 else theta
        flows[(p, q)] = theta
        del flows[leaving]
        basis.remove(leaving)
        basis.append((p, q))
    else:
        raise NumericalError("transportation simplex did not converge")

    exact = _tree_flows(basis, a, b)
    plan = np.zeros((m, n))
    for (i, j), x in exact.items():
        plan[i, j] = max(x, 0.0)
    return float(np.sum(plan * C)), plan


def _potentials(basis, C, m, n):
    adj = [[] for _ in range(m + n)]
    for i, j in basis:
        adj[i].append(m + j)
        adj[m + j].append(i)
    pot = np.full(m + n, np.nan)
    pot[0] = 0.0
    queue = deque([0])
    while queue:
        k = queue.popleft()
        for o in adj[k]:
            if np.isnan(pot[o]):
                i, j = (k, o - m) if k < m else (o, k - m)
                pot[o] = C[i, j] - pot[k]
                queue.append(o)
    return pot[:m], pot[m:]


def _tree_path(basis, m, n, p, q):
    """Cells on the tree path from row node p to column node q."""
    adj = [[] for _ in range(m + n)]
    for i, j in basis:
        adj[i].append(m + j)
        adj[m + j].append(i)
    parent = {p: None}
    queue = deque([p])
    target = m + q
    while queue:
        k = queue.popleft()
        if k == target:
            break
        for o in adj[k]:
            if o not in parent:
                parent[o] = k
                queue.append(o)
    nodes = [target]
    while parent[nodes[-1]] is not None:
        nodes.append(parent[nodes[-1]])
    nodes.reverse()
    cells = []
    for u, v in zip(nodes, nodes[1:]):
        cells.append((u, v - m) if u < m else (v, u - m))
    return cells


def wasserstein2(P: DiscreteDistribution, Q: DiscreteDistribution) -> float:
    _check_pair(P, Q)
    C = cost_matrix(P, Q, 2)
    rows = P.weights > 0
    cols = Q.weights > 0
    cost, _ = transport_plan(P.weights[rows], Q.weights[cols], C[np.ix_(rows, cols)])
    return math.sqrt(max(cost, 0.0))


def wasserstein2_plan(P: DiscreteDistribution, Q: DiscreteDistribution):
    _check_pair(P, Q)
    return transport_plan(P.weights, Q.weights, cost_matrix(P, Q, 2))


# --------------------------------------------------------------------------
# equal-mass expansion, bottleneck transport


def expansion_counts(P: DiscreteDistribution, Q: DiscreteDistribution | None = None, max_den=MAX_DENOMINATOR):
    """Common denominator N and integer multiplicities so that weight_i = count_i / N."""
    fracs = []
    for dist in (P,) if Q is None else (P, Q):
        row = []
        for wgt in dist.weights:
            f = Fraction(float(wgt)).limit_denominator(max_den)
            if abs(float(f) - float(wgt)) > 1e-12:
                raise UnsupportedWeights(f"weight {wgt!r} is not a fraction with denominator <= {max_den}")
            row.append(f)
        fracs.append(row)
    N = 1
    for row in fracs:
        for f in row:
            N = N * f.denominator // math.gcd(N, f.denominator)
    if N > max_den:
        raise UnsupportedWeights(f"common denominator {N} exceeds {max_den}")
    counts = [np.array([int(f * N) for f in row], dtype=np.int64) for row in fracs]
    return N, counts


def _expanded_index(counts):
    return np.repeat(np.arange(len(counts)), counts)


def wasserstein_inf(P: DiscreteDistribution, Q: DiscreteDistribution) -> float:
    """min over couplings of the largest l_inf displacement carrying positive mass."""
    _check_pair(P, Q)
    N, (cp, cq) = expansion_counts(P, Q)
    C = cost_matrix(P, Q, INF)
    left = _expanded_index(cp)
    right = _expanded_index(cq)
    big = C[np.ix_(left, right)]
    candidates = np.unique(C[np.ix_(cp > 0, cq > 0)])

    def feasible(c):
        graph = csr_matrix(big <= c)
        match = maximum_bipartite_matching(graph, perm_type="column")
        return bool(np.all(match >= 0))

    lo, hi = 0, len(candidates) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible(candidates[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(candidates[lo])


def tv_distance(P: DiscreteDistribution, Q: DiscreteDistribution) -> float:
    """Half the l1 distance of the mass functions; atoms match on exact coordinates."""
    if P.d0 != Q.d0:
        raise InvalidInput("dimension mismatch")
    # exact per-atom sums on each side keep the result symmetric under swapping P and Q
    sides = []
    for atoms, weights in ((P.atoms, P.weights), (Q.atoms, Q.weights)):
        mass = {}
        for atom, wgt in zip(atoms, weights):
            mass.setdefault(tuple(float(v) for v in atom), []).append(float(wgt))
        sides.append({k: math.fsum(v) for k, v in mass.items()})
    mp, mq = sides
    keys = sorted(set(mp) | set(mq))
    return min(1.0, 0.5 * math.fsum(abs(mp.get(k, 0.0) - mq.get(k, 0.0)) for k in keys))


def brute_force_wp(P: DiscreteDistribution, Q: DiscreteDistribution, p=2) -> float:
    """Exact W_p by enumerating every permutation coupling of the equal-mass expansions."""
    if P.d0 != Q.d0:
        raise InvalidInput("dimension mismatch")
    N, (cp, cq) = expansion_counts(P, Q)
    if N > MAX_BRUTE_FORCE:
        raise TooLarge(f"equal-mass expansion of size {N} exceeds {MAX_BRUTE_FORCE}")
    p = INF if p in ("inf", INF) else float(p)
    C = cost_matrix(P, Q, INF if p == INF else 2)
    left = _expanded_index(cp)
    right = _expanded_index(cq)
    big = C[np.ix_(left, right)]
    rows = np.arange(N)
    best = math.inf
    for perm in itertools.permutations(range(N)):
        vals = big[rows, perm]
        best = min(best, float(np.max(vals)) if p == INF else float(np.sum(vals)) / N)
    return best if p == INF else math.sqrt(best)


# --------------------------------------------------------------------------
# worst-case risks


def _atom_label(labels, i):
    return None if labels is None else labels[i]


def worst_case_risk_winf(loss: SmoothLoss, w, P0: DiscreteDistribution, r, inner_quality=ANALYTIC, labels=None) -> float:
    """sum_i weight_i sup_{|d|_inf <= r} f(w, atom_i + d), the sup-risk over the W_inf ball."""
    budget = PerturbationBudget(INF, r)
    total = []
    for i in range(P0.size):
        x = P0.atoms[i]
        y = _atom_label(labels, i)
        if budget.r == 0.0:
            val = loss.value(w, x, y)
        elif inner_quality == ANALYTIC:
            val = loss.value(w, x + loss.perturbation_argmax(w, x, y, budget), y)
        else:
            eta = inner_quality.eta_x if inner_quality.eta_x is not None else 1.0 / loss.profile().L22
            ascend = inner_max_sign if inner_quality.sign else inner_max
            _, val = ascend(loss, w, x, budget, inner_quality.K, eta, None, y)
        total.append(P0.weights[i] * val)
    return math.fsum(total)


@dataclass
class W2WorstCase:
    value: float
    multiplier: float
    displacements: np.ndarray
    spent: float
    status: str  # "exact" for certified-concave families, "heuristic" otherwise


def _penalised_argmax(loss, w, x, y, lam, iters=500):
    """argmax_d f(w, x + d) - lam |d|^2."""
    if isinstance(loss, QuadraticSaddle):
        b = np.asarray(w, dtype=np.float64) - loss.curvature * x
        return b / (loss.curvature + 2.0 * lam)
    step = 1.0 / (max(loss.profile().L22, 1e-12) + 2.0 * lam)
    d = np.zeros_like(x)
    for _ in range(iters):
        d = d + step * (loss.grad_x(w, x + d, y) - 2.0 * lam * d)
    return d


def worst_case_w2_solution(loss: SmoothLoss, w, P0: DiscreteDistribution, r, tolerance=1e-12, labels=None, max_iter=60) -> W2WorstCase:
    """Lagrangian dual of sup_{W2(P, P0) <= r} R_P(w) restricted to per-atom displacements.

    For a multiplier lam the per-atom problems max f - lam |d|^2 decouple; the
    spent budget sum_i p_i |d_i(lam)|^2 falls as lam grows, and lam is
    bisected until it equals r^2.  The returned value always comes from the
    feasible side of the bracket.
    """
    r = float(r)
    if not r > 0:
        raise InvalidInput("the W2 worst case needs r > 0")
    atoms = P0.atoms
    ys = [_atom_label(labels, i) for i in range(P0.size)]

    def solve(lam):
        ds = np.array([_penalised_argmax(loss, w, atoms[i], ys[i], lam) for i in range(P0.size)])
        spent = float(np.dot(P0.weights, np.sum(ds * ds, axis=1)))
        return ds, spent

    def value_of(ds):
        return math.fsum(P0.weights[i] * loss.value(w, atoms[i] + ds[i], ys[i]) for i in range(P0.size))

    status = "exact" if isinstance(loss, QuadraticSaddle) or loss.profile().certified else "heuristic"
    target = r * r
    ds0, spent0 = solve(0.0) if isinstance(loss, QuadraticSaddle) else (None, math.inf)
    if spent0 <= target:
        return W2WorstCase(value_of(ds0), 0.0, ds0, spent0, status)

    gx = max(float(np.linalg.norm(loss.grad_x(w, atoms[i], ys[i]))) for i in range(P0.size))
    lo, hi = 0.0, loss.profile().L22 + 2.0 * gx / r
    ds_hi, spent_hi = solve(hi)
    grow = 0
    while spent_hi > target:
        grow += 1
        if grow > 60:
            raise NumericalError(f"could not bracket the multiplier: spent {spent_hi!r} > r^2 = {target!r} at lam={hi!r}")
        lo, hi = hi, 2.0 * hi
        ds_hi, spent_hi = solve(hi)
    for _ in range(max_iter):
        if target - spent_hi <= tolerance * target:
            break
        mid = 0.5 * (lo + hi)
        ds_mid, spent_mid = solve(mid)
        if spent_mid > target:
            lo = mid
        else:
            hi, ds_hi, spent_hi = mid, ds_mid, spent_mid
    return W2WorstCase(value_of(ds_hi), hi, ds_hi, spent_hi, status)


def worst_case_risk_w2(loss: SmoothLoss, w, P0: DiscreteDistribution, r, tolerance=1e-12, labels=None) -> float:
    return worst_case_w2_solution(loss, w, P0, r, tolerance, labels).value
