"""Experiment suites: convergence rate, perturbation-size and sample-count ablations,
pretraining transfer, and an empirical check of the W_inf generalization bound.

Each suite is driven by an ``ExperimentConfig`` whose ``params`` block is
validated against the suite's parameter dataclass (unknown keys are errors).
Every grid cell is a pure function of (params, seed), so cells can run in
worker processes; rows are always sorted by (experiment, grid value, seed)
before they are written.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from ..certify import (
    BoundInputs,
    expectation_rate,
    measure_robustness,
    ood_bound_winf,
    pretrain_transfer_bound,
)
from ..losses import Dataset, LogisticLoss, QuadraticSaddle, expand_box
from ..minimax import TrainConfig, empirical_risk, required_inner_steps, robust_objective, train
from ..numkit import INF, InvalidInput, PerturbationBudget, RngState, next_uniform_index
from ..transport import DiscreteDistribution, worst_case_risk_w2, worst_case_risk_winf
from .synthetic import LabelRule, ShiftSpec, apply_shift, empirical_distribution, make_dataset

CSV_HEADER = ["experiment", "seed", "grid_key", "grid_value", "clean_risk", "ood_risk", "robust_objective", "bound", "runtime_s"]


@dataclass
class ResultRow:
    experiment: str
    seed: int
    grid_key: str
    grid_value: float
    clean_risk: float
    ood_risk: float
    robust_objective: float
    bound: float
    runtime_s: float | None = None
    extras: dict = field(default_factory=dict)

    def sort_key(self):
        return (self.experiment, self.grid_key, self.grid_value, self.seed)


@dataclass
class ExperimentResult:
    rows: list
    summary: dict


def _fmt(v) -> str:
    if v is None:
        return ""
    v = float(v)
    if math.isinf(v):
        return "vacuous"
    return repr(v)


def rows_to_csv(rows, include_runtime: bool = False) -> str:
    """Frozen schema; floats use shortest round-trip repr.  Runtimes are left empty
    unless asked for, so reruns of the same config produce identical bytes."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in sorted(rows, key=ResultRow.sort_key):
        writer.writerow(
            [
                row.experiment,
                row.seed,
                row.grid_key,
                _fmt(row.grid_value),
                _fmt(row.clean_risk),
                _fmt(row.ood_risk),
                _fmt(row.robust_objective),
                _fmt(row.bound),
                _fmt(row.runtime_s) if include_runtime else "",
            ]
        )
    return buf.getvalue()


def write_results(result: ExperimentResult, path: str, config=None) -> None:
    """CSV at ``path``; timings, summary and the config go to ``path + '.meta.json'``."""
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(result.rows))
    meta = {
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "runtimes_s": [[r.experiment, r.seed, r.grid_value, r.runtime_s] for r in sorted(result.rows, key=ResultRow.sort_key)],
        "summary": _jsonable(result.summary),
        "config": None if config is None else config.to_dict(),
    }
    with open(path + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _subseed(seed: int, key: int) -> int:
    return RngState(seed).fork(key).seed


def _geometric(start, ratio, count):
    return [start * ratio**k for k in range(count)]


# --------------------------------------------------------------------------
# parameter blocks


@dataclass(frozen=True)
class ConvergenceParams:
    mu_w: float = 1.0
    mu_x: float = 1.0
    p: str = "2"
    r: float = 0.5
    d0: int = 2
    n: int = 8
    support_half_width: float = 1.0
    w_half_width: float = 2.0
    atoms_seed: int = 2024
    T_grid: tuple = tuple(_geometric(4, 2, 10))
    w_init: tuple | None = None


@dataclass(frozen=True)
class AblationParams:
    d0: int = 2
    n: int = 100
    test_n: int = 20000
    label_weights: tuple = (1.0, 0.5)
    label_scale: float = 4.0
    label_margin: float = 0.0
    lam: float = 1e-3
    r_shift: float = 0.2
    r_grid: tuple = (0.0,) + tuple(_geometric(0.025, 2, 6))
    n_grid: tuple = (50, 100, 200, 400, 800)
    T: int = 1500
    eta_w: float = 0.5
    w_half_width: float = 5.0
    theta: float = 0.1


@dataclass(frozen=True)
class TransferParams:
    d0: int = 2
    n: int = 16
    mu_w: float = 1.0
    mu_x: float = 1.0
    w_anchor: tuple = (0.4, -0.3)
    r: float = 0.2
    T: int = 400
    tv_grid: tuple = (0.0, 0.1, 0.3)
    support_half_width: float = 1.0
    theta: float = 0.1


@dataclass(frozen=True)
class BoundValidityParams:
    d0: int = 1
    population: int = 400
    population_seed: int = 7
    n: int = 50
    mu_w: float = 1.0
    mu_x: float = 1.0
    w_anchor: tuple = (0.5,)
    r: float = 0.5
    T: int = 200
    theta: float = 0.1


PARAMS = {
    "converge": ConvergenceParams,
    "ablate_r": AblationParams,
    "ablate_n": AblationParams,
    "transfer": TransferParams,
    "bound_validity": BoundValidityParams,
}


@dataclass
class ExperimentConfig:
    experiment: str
    seeds: list
    params: object = None
    out: str | None = None
    threads: int = 1

    def __post_init__(self):
        if self.experiment not in PARAMS:
            raise InvalidInput(f"unknown experiment {self.experiment!r}; choose from {sorted(PARAMS)}")
        if not self.seeds:
            raise InvalidInput("the seed list is empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise InvalidInput("seeds must be distinct")
        self.seeds = [int(s) for s in self.seeds]
        cls = PARAMS[self.experiment]
        if self.params is None:
            self.params = cls()
        elif isinstance(self.params, dict):
            self.params = _strict(cls, self.params)

    def to_dict(self):
        return {
            "experiment": self.experiment,
            "seeds": list(self.seeds),
            "params": _jsonable(dataclasses.asdict(self.params)),
            "out": self.out,
            "threads": self.threads,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        return _strict(cls, doc)

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _strict(cls, doc: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise InvalidInput(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    kwargs = {}
    for k, v in doc.items():
        kwargs[k] = tuple(v) if isinstance(v, list) and cls is not ExperimentConfig else v
    return cls(**kwargs)


# --------------------------------------------------------------------------
# convergence


def _convergence_problem(prm: ConvergenceParams):
    """Symmetric atoms (x and -x) with the anchor at 0, so the robust minimiser is w* = 0."""
    half = prm.n // 2
    if half < 1 or prm.n % 2:
        raise InvalidInput("the convergence task needs an even n >= 2")
    box = np.tile([-prm.support_half_width, prm.support_half_width], (prm.d0, 1))
    base = make_dataset(half, prm.d0, box, seed=prm.atoms_seed).x
    data = Dataset(np.vstack([base, -base]), None, box)
    budget = PerturbationBudget(prm.p, prm.r)
    loss = QuadraticSaddle(
        prm.mu_w,
        prm.mu_x,
        np.zeros(prm.d0),
        x_box=expand_box(box, prm.r),
        w_box=np.tile([-prm.w_half_width, prm.w_half_width], (prm.d0, 1)),
    )
    return loss, data, budget


def _sup_risk(loss, data, w, budget):
    P = empirical_distribution(data)
    if budget.p == INF:
        return worst_case_risk_winf(loss, w, P, budget.r)
    if budget.r == 0:
        return empirical_risk(loss, data, w)
    return worst_case_risk_w2(loss, w, P, budget.r)


def _convergence_cell(prm: ConvergenceParams, seed: int):
    loss, data, budget = _convergence_problem(prm)
    profile = loss.profile()
    T_max = int(max(prm.T_grid))
    K = required_inner_steps(profile, T_max, data.d0, budget)
    w_init = prm.w_init if prm.w_init is not None else tuple(0.75 * prm.w_half_width * (-1) ** k for k in range(prm.d0))
    start = time.perf_counter()
    trace = train(
        loss,
        data,
        TrainConfig(T=T_max, K=K, budget=budget, seed=seed, w_init=w_init, telemetry_every=0, snapshot_steps=tuple(int(t) for t in prm.T_grid)),
    )
    elapsed = time.perf_counter() - start
    r_star = robust_objective(loss, data, np.zeros(data.d0), budget)
    rows = []
    for T in prm.T_grid:
        w = trace.snapshots[int(T)]
        obj = robust_objective(loss, data, w, budget)
        rows.append(
            ResultRow(
                "converge",
                seed,
                "T",
                float(T),
                empirical_risk(loss, data, w),
                _sup_risk(loss, data, w, budget),
                obj,
                expectation_rate(profile, int(T)),
                elapsed,
                {"excess": obj - r_star, "K": K},
            )
        )
    return rows


def loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def _convergence_summary(rows, prm: ConvergenceParams):
    Ts = sorted({r.grid_value for r in rows})
    mean_excess = [float(np.mean([r.extras["excess"] for r in rows if r.grid_value == T])) for T in Ts]
    envelope = [next(r.bound for r in rows if r.grid_value == T) for T in Ts]
    positive = all(m > 0 for m in mean_excess)
    return {
        "T": Ts,
        "mean_excess": mean_excess,
        "envelope": envelope,
        "under_envelope": [m <= e for m, e in zip(mean_excess, envelope)],
        "slope": loglog_slope(Ts, mean_excess) if positive else float("nan"),
        "K": rows[0].extras["K"],
    }


# --------------------------------------------------------------------------
# ablations


def _ablation_task(prm: AblationParams):
    box = np.tile([-1.0, 1.0], (prm.d0, 1))
    rule = LabelRule("logistic", tuple(prm.label_weights), 0.0, prm.label_scale, prm.label_margin)
    reach = max(max(prm.r_grid), prm.r_shift)
    loss = LogisticLoss(
        prm.d0,
        lam=prm.lam,
        x_box=expand_box(box, reach),
        w_box=np.tile([-prm.w_half_width, prm.w_half_width], (prm.d0 + 1, 1)),
    )
    return loss, box, rule


def _fit_logistic(loss, data, r, prm: AblationParams, seed: int):
    budget = PerturbationBudget(INF, r)
    # for a linear score one sign step of length r reaches the l_inf argmax
    cfg = TrainConfig(
        T=prm.T,
        K=1,
        budget=budget,
        eta_x=r if r > 0 else 1.0,
        schedule="constant",
        eta_w=prm.eta_w,
        sign_variant=True,
        seed=seed,
        telemetry_every=0,
        w_init=tuple(np.zeros(loss.d_w)),
    )
    return train(loss, data, cfg).w_final


def _logistic_profile_M(loss: LogisticLoss) -> float:
    return loss.analytic_value_bound()


def _ablation_row(experiment, grid_key, grid_value, loss, train_data, test_data, w, r_train, prm, seed, elapsed):
    shift = PerturbationBudget(INF, prm.r_shift)
    ood = float(np.mean(loss.worst_case_values(w, test_data.x, test_data.y, shift)))
    clean = empirical_risk(loss, train_data, w)
    robust = robust_objective(loss, train_data, w, PerturbationBudget(INF, r_train))
    eps = measure_robustness(loss, w, empirical_distribution(train_data), PerturbationBudget(INF, 2 * prm.r_shift), labels=train_data.y).epsilon_hat
    bound = ood_bound_winf(
        BoundInputs(d0=prm.d0, D=train_data.D, M=_logistic_profile_M(loss), n=train_data.n, r=prm.r_shift, epsilon=eps, theta=prm.theta)
    ).bound
    # OOD generalization gap of the robust objective: population worst case vs its training estimate
    extras = {"gap": abs(ood - robust), "clean_gap": abs(ood - clean), "epsilon": eps}
    return ResultRow(experiment, seed, grid_key, float(grid_value), clean, ood, robust, bound, elapsed, extras)


def _ablate_r_cell(prm: AblationParams, seed: int):
    loss, box, rule = _ablation_task(prm)
    train_data = make_dataset(prm.n, prm.d0, box, rule, _subseed(seed, 1))
    test_data = make_dataset(prm.test_n, prm.d0, box, rule, _subseed(seed, 2))
    rows = []
    for r in prm.r_grid:
        start = time.perf_counter()
        w = _fit_logistic(loss, train_data, r, prm, _subseed(seed, 3))
        rows.append(_ablation_row("ablate_r", "r", r, loss, train_data, test_data, w, r, prm, seed, time.perf_counter() - start))
    return rows


def _ablate_n_cell(prm: AblationParams, seed: int):
    loss, box, rule = _ablation_task(prm)
    test_data = make_dataset(prm.test_n, prm.d0, box, rule, _subseed(seed, 2))
    rows = []
    for n in prm.n_grid:
        start = time.perf_counter()
        train_data = make_dataset(int(n), prm.d0, box, rule, _subseed(seed, 10 + int(n)))
        w = _fit_logistic(loss, train_data, prm.r_shift, prm, _subseed(seed, 3))
        rows.append(_ablation_row("ablate_n", "n", n, loss, train_data, test_data, w, prm.r_shift, prm, seed, time.perf_counter() - start))
    return rows


def moving_average(values, window=3):
    """Centered moving average; the ends average over the part of the window that exists."""
    values = np.asarray(values, dtype=np.float64)
    half = window // 2
    return np.array([values[max(0, i - half) : i + half + 1].mean() for i in range(len(values))])


def is_unimodal(values, window=3) -> bool:
    """Valley shape: smoothed first differences change sign (- to +) at most once."""
    diffs = np.diff(moving_average(values, window))
    signs = [np.sign(d) for d in diffs if d != 0]
    changes = sum(1 for a, b in zip(signs, signs[1:]) if a != b)
    return bool(changes <= 1 and (not signs or signs[0] < 0 or changes == 0))


def _ablate_r_summary(rows, prm: AblationParams):
    rs = sorted({r.grid_value for r in rows})
    by_r = [np.array([row.ood_risk for row in rows if row.grid_value == r]) for r in rs]
    means = [float(v.mean()) for v in by_r]
    ses = [float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else float("nan") for v in by_r]
    interior = range(1, len(rs) - 1)
    best = min(interior, key=lambda k: means[k]) if len(rs) > 2 else int(np.argmin(means))

    def margin(k):
        pooled = math.sqrt(ses[best] ** 2 + ses[k] ** 2)
        return (means[k] - means[best]) / pooled if pooled > 0 else float("inf")

    return {
        "r": rs,
        "mean_ood_risk": means,
        "se": ses,
        "best_r": rs[best],
        "best_is_interior": 0 < int(np.argmin(means)) < len(rs) - 1,
        "margin_left_se": margin(0),
        "margin_right_se": margin(len(rs) - 1),
        "unimodal": is_unimodal(means),
    }


def _ablate_n_summary(rows, prm: AblationParams):
    ns = sorted({r.grid_value for r in rows})
    mean_gap = [float(np.mean([r.extras["gap"] for r in rows if r.grid_value == n])) for n in ns]
    pooled = spearmanr([r.grid_value for r in rows], [r.extras["gap"] for r in rows]).correlation
    of_means = spearmanr(ns, mean_gap).correlation
    bounds = [float(np.mean([r.bound for r in rows if r.grid_value == n])) for n in ns]
    # the criterion uses the per-n seed means; per-seed |gap| is close to half-normal,
    # so the pooled rank correlation is reported but understates the trend
    return {
        "n": ns,
        "mean_gap": mean_gap,
        "spearman": float(of_means),
        "spearman_pooled": float(pooled),
        "mean_bound": bounds,
    }


# --------------------------------------------------------------------------
# pretraining transfer


def _transfer_cell(prm: TransferParams, seed: int):
    box = np.tile([-prm.support_half_width, prm.support_half_width], (prm.d0, 1))
    data = make_dataset(prm.n, prm.d0, box, seed=_subseed(seed, 1))
    loss = QuadraticSaddle(prm.mu_w, prm.mu_x, np.asarray(prm.w_anchor, dtype=np.float64), x_box=expand_box(box, prm.r))
    budget = PerturbationBudget(INF, prm.r)
    start = time.perf_counter()
    w = train(loss, data, TrainConfig(T=prm.T, budget=budget, seed=_subseed(seed, 2), telemetry_every=0)).w_final
    Q0 = empirical_distribution(data)
    eps_pre = worst_case_risk_winf(loss, w, Q0, prm.r)
    M = loss.profile().M
    rows = []
    for tv in prm.tv_grid:
        P0, cert = apply_shift(Q0, ShiftSpec("weight_reshuffle", tv=tv, seed=_subseed(seed, 3)))
        measured = worst_case_risk_winf(loss, w, P0, prm.r)
        report = pretrain_transfer_bound(BoundInputs(d0=prm.d0, D=data.D, M=M, n=data.n, r=prm.r, theta=prm.theta, epsilon_pre=eps_pre, tv=cert.value))
        clean = math.fsum(P0.weights[i] * loss.value(w, P0.atoms[i]) for i in range(P0.size))
        rows.append(
            ResultRow("transfer", seed, "tv", float(tv), clean, measured, eps_pre, report.bound, time.perf_counter() - start, {"M": M})
        )
    return rows


def _transfer_summary(rows, prm):
    slack = [r.bound - r.ood_risk for r in rows]
    return {"min_slack": float(min(slack)), "all_within_bound": all(s >= -1e-9 for s in slack)}


# --------------------------------------------------------------------------
# W_inf bound validity


def _validity_population(prm: BoundValidityParams):
    box = np.tile([0.0, 1.0], (prm.d0, 1))
    pop = make_dataset(prm.population, prm.d0, box, seed=prm.population_seed)
    return box, DiscreteDistribution.uniform(pop.x)


def _validity_cell(prm: BoundValidityParams, seed: int):
    box, P0 = _validity_population(prm)
    rng = RngState(_subseed(seed, 1))
    idx = []
    for _ in range(prm.n):
        i, rng = next_uniform_index(rng, P0.size)
        idx.append(i)
    sample = Dataset(P0.atoms[idx], None, box)
    reach = 2 * prm.r
    loss = QuadraticSaddle(prm.mu_w, prm.mu_x, np.asarray(prm.w_anchor, dtype=np.float64), x_box=expand_box(box, reach))
    budget = PerturbationBudget(INF, prm.r)
    start = time.perf_counter()
    w = train(loss, sample, TrainConfig(T=prm.T, budget=budget, seed=_subseed(seed, 2), telemetry_every=0)).w_final
    Pn = empirical_distribution(sample)
    eps = measure_robustness(loss, w, Pn, PerturbationBudget(INF, 2 * prm.r)).epsilon_hat
    report = ood_bound_winf(BoundInputs(d0=prm.d0, D=sample.D, M=loss.profile().M, n=prm.n, r=prm.r, epsilon=eps, theta=prm.theta))
    clean = empirical_risk(loss, sample, w)
    sup_risk = worst_case_risk_winf(loss, w, P0, prm.r)
    Q, cert = apply_shift(P0, ShiftSpec("additive_linf", r=prm.r, mode="adversarial"), loss=loss, w=w)
    shifted = math.fsum(Q.weights[i] * loss.value(w, Q.atoms[i]) for i in range(Q.size))
    gen_error = abs(sup_risk - clean)
    return [
        ResultRow(
            "bound_validity",
            seed,
            "r0",
            float(cert.value),
            clean,
            sup_risk,
            robust_objective(loss, sample, w, budget),
            report.bound,
            time.perf_counter() - start,
            {"gen_error": gen_error, "violated": gen_error > report.bound, "shifted_risk": shifted, "epsilon": eps},
        )
    ]


def _validity_summary(rows, prm: BoundValidityParams):
    k = len(rows)
    rate = sum(r.extras["violated"] for r in rows) / k
    allowed = prm.theta + 3.0 * math.sqrt(prm.theta * (1.0 - prm.theta) / k)
    return {"violation_rate": rate, "allowed_rate": allowed, "ok": rate <= allowed}


# --------------------------------------------------------------------------
# driver

CELLS = {
    "converge": (_convergence_cell, _convergence_summary),
    "ablate_r": (_ablate_r_cell, _ablate_r_summary),
    "ablate_n": (_ablate_n_cell, _ablate_n_summary),
    "transfer": (_transfer_cell, _transfer_summary),
    "bound_validity": (_validity_cell, _validity_summary),
}


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    cell, summarise = CELLS[config.experiment]
    prm = config.params
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            chunks = list(pool.map(cell, [prm] * len(config.seeds), config.seeds))
    else:
        chunks = [cell(prm, s) for s in config.seeds]
    rows = sorted((row for chunk in chunks for row in chunk), key=ResultRow.sort_key)
    return ExperimentResult(rows, summarise(rows, prm))


def run_convergence_experiment(config: ExperimentConfig) -> ExperimentResult:
    return run_experiment(_as("converge", config))


def run_perturbation_ablation(config: ExperimentConfig) -> ExperimentResult:
    return run_experiment(_as("ablate_r", config))


def run_sample_ablation(config: ExperimentConfig) -> ExperimentResult:
    return run_experiment(_as("ablate_n", config))


def run_pretrain_transfer(config: ExperimentConfig) -> ExperimentResult:
    return run_experiment(_as("transfer", config))


def run_bound_validity(config: ExperimentConfig) -> ExperimentResult:
    return run_experiment(_as("bound_validity", config))


def _as(name, config):
    if config.experiment != name:
        raise InvalidInput(f"config is for {config.experiment!r}, expected {name!r}")
    return config
