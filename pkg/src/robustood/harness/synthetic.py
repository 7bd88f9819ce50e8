"""Synthetic datasets and distribution shifts whose distance to the source is known by construction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..losses import Dataset, SmoothLoss, _check_box
from ..numkit import INF, InvalidInput, PerturbationBudget, RngState, permutation, uniform, uniform_in_box
from ..transport import DiscreteDistribution, worst_case_w2_solution


@dataclass(frozen=True)
class LabelRule:
    """y = +1 with probability sigmoid(scale (v.x + bias)), else -1.

    Points with |v.x + bias| < margin are redrawn, which keeps a band around
    the decision boundary empty.  kind="none" produces unlabeled data.
    """

    kind: str = "none"
    weights: tuple = ()
    bias: float = 0.0
    scale: float = 4.0
    margin: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "logistic"):
            raise InvalidInput(f"unknown label rule {self.kind!r}")


def make_dataset(n: int, d0: int, support_box, label_rule: LabelRule | None = None, seed: int = 0) -> Dataset:
    n = int(n)
    if n < 1:
        raise InvalidInput("n must be at least 1")
    box = _check_box(support_box, d0)
    if np.any(box[:, 1] <= box[:, 0]):
        raise InvalidInput("support box is degenerate")
    rule = label_rule or LabelRule()
    rng = RngState(seed)
    if rule.kind == "none":
        x, _ = uniform_in_box(rng, box, n)
        return Dataset(x, None, box)

    v = np.asarray(rule.weights, dtype=np.float64)
    if v.shape != (d0,):
        raise InvalidInput("label rule weights must have d0 entries")
    kept = []
    have = 0
    # batches keep the draw sequence independent of n's rounding
    while have < n:
        batch, rng = uniform_in_box(rng, box, 256)
        s = batch @ v + rule.bias
        batch = batch[np.abs(s) >= rule.margin]
        kept.append(batch)
        have += len(batch)
        if len(kept) > 10_000:
            raise InvalidInput("label margin leaves no room in the support box")
    x = np.vstack(kept)[:n]
    u, rng = uniform(rng, n)
    p = 1.0 / (1.0 + np.exp(-rule.scale * (x @ v + rule.bias)))
    y = np.where(u < p, 1.0, -1.0)
    return Dataset(x, y, box)


def empirical_distribution(data: Dataset) -> DiscreteDistribution:
    return DiscreteDistribution(data.x.copy(), np.full(data.n, 1.0 / data.n))


# --------------------------------------------------------------------------
# shifts


@dataclass(frozen=True)
class ShiftSpec:
    """additive_linf(r) / additive_l2_budget(r) move atoms; weight_reshuffle(tv) moves mass.

    mode="random" draws displacements from the seed; mode="adversarial" uses
    the loss's worst-case displacement (needs ``loss`` and ``w`` at apply time).
    """

    kind: str
    r: float = 0.0
    tv: float = 0.0
    seed: int = 0
    mode: str = "random"

    def __post_init__(self):
        if self.kind not in ("additive_linf", "additive_l2_budget", "weight_reshuffle"):
            raise InvalidInput(f"unknown shift kind {self.kind!r}")
        if self.mode not in ("random", "adversarial"):
            raise InvalidInput(f"unknown shift mode {self.mode!r}")
        if self.r < 0:
            raise InvalidInput("shift radius must be nonnegative")
        if not 0.0 <= self.tv <= 1.0:
            raise InvalidInput("tv must lie in [0, 1]")


@dataclass(frozen=True)
class Certificate:
    metric: str
    value: float


def apply_shift(P0: DiscreteDistribution, spec: ShiftSpec, loss: SmoothLoss | None = None, w=None, labels=None):
    """Return (Q, certificate) with the certified distance from P0 to Q."""
    rng = RngState(spec.seed)
    if spec.kind == "weight_reshuffle":
        return _reshuffle(P0, spec.tv, rng), Certificate("tv", spec.tv)

    metric = "winf" if spec.kind == "additive_linf" else "w2"
    if spec.r == 0.0:
        return DiscreteDistribution(P0.atoms.copy(), P0.weights.copy()), Certificate(metric, 0.0)
    if spec.mode == "adversarial" and (loss is None or w is None):
        raise InvalidInput("an adversarial shift needs the loss and the model parameters")

    if spec.kind == "additive_linf":
        budget = PerturbationBudget(INF, spec.r)
        if spec.mode == "adversarial":
            moves = np.array(
                [loss.perturbation_argmax(w, P0.atoms[i], None if labels is None else labels[i], budget) for i in range(P0.size)]
            )
        else:
            u, rng = uniform(rng, P0.size * P0.d0)
            moves = (2.0 * u.reshape(P0.size, P0.d0) - 1.0) * spec.r
        moves = np.clip(moves, -spec.r, spec.r)
        return DiscreteDistribution(P0.atoms + moves, P0.weights.copy()), Certificate(metric, spec.r)

    if spec.mode == "adversarial":
        sol = worst_case_w2_solution(loss, w, P0, spec.r, labels=labels)
        moves = sol.displacements
    else:
        moves = np.empty_like(P0.atoms)
        for i in range(P0.size):
            while True:
                u, rng = uniform(rng, P0.d0)
                v = 2.0 * u - 1.0
                nv = float(np.linalg.norm(v))
                if 0.0 < nv <= 1.0:
                    break
            moves[i] = v / nv * spec.r
    # guard the budget against rounding: sum_i p_i |d_i|^2 <= r^2
    spent = float(np.dot(P0.weights, np.sum(moves * moves, axis=1)))
    if spent > spec.r**2:
        moves *= spec.r / math.sqrt(spent)
    return DiscreteDistribution(P0.atoms + moves, P0.weights.copy()), Certificate(metric, spec.r)


def _reshuffle(P0: DiscreteDistribution, tv: float, rng: RngState) -> DiscreteDistribution:
    """Move ``tv`` mass from a random half of the atoms to the other half, proportionally."""
    if tv == 0.0:
        return DiscreteDistribution(P0.atoms.copy(), P0.weights.copy())
    if P0.size < 2:
        raise InvalidInput("a weight reshuffle needs at least two atoms")
    order, rng = permutation(rng, P0.size)
    donors = np.zeros(P0.size, dtype=bool)
    donors[order[: P0.size // 2]] = True
    give = float(np.sum(P0.weights[donors]))
    take = float(np.sum(P0.weights[~donors]))
    if tv > give or take <= 0.0:
        raise InvalidInput(f"cannot move {tv} mass: donors hold {give}")
    weights = P0.weights.copy()
    weights[donors] *= 1.0 - tv / give
    weights[~donors] *= 1.0 + tv / take
    return DiscreteDistribution(P0.atoms.copy(), weights)
