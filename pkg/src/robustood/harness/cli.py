"""Command line: ``robustood <subcommand> ...``.

Exit codes: 0 success, 1 invalid input (including usage errors), 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from ..certify import (
    BoundInputs,
    excess_risk_bound,
    measure_robustness,
    ood_bound_w2,
    ood_bound_winf,
    pretrain_transfer_bound,
)
from ..losses import ConstantsProfile, Dataset, LogisticLoss, QuadraticSaddle, Unsupported
from ..minimax import TrainConfig, train
from ..numkit import InvalidInput, PerturbationBudget, parse_norm
from ..transport import DiscreteDistribution, tv_distance, wasserstein2, wasserstein_inf, worst_case_risk_w2, worst_case_risk_winf
from .experiments import ExperimentConfig, rows_to_csv, run_experiment, write_results


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; 2 is reserved for numerical failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _vector(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated vector: {text!r}") from exc


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _globals() -> argparse.ArgumentParser:
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file")
    g.add_argument("--out", default=argparse.SUPPRESS, help="output path (stdout when omitted)")
    g.add_argument("--seed", type=_u64, default=argparse.SUPPRESS)
    g.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    return g


def _loss_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--loss", choices=["quadratic", "logistic"], default="quadratic")
    p.add_argument("--mu-w", type=float, default=1.0)
    p.add_argument("--mu-x", type=float, default=1.0)
    p.add_argument("--anchor", type=_vector, default=None, help="w anchor (default: zeros)")
    p.add_argument("--offset", default="auto", help="quadratic offset, or 'auto' for a zero minimum")
    p.add_argument("--lam", type=float, default=1e-2, help="logistic l2 weight")


def _budget_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--p", dest="norm", default="2", help="norm order: 2 or inf")
    p.add_argument("--r", type=float, default=0.0)


def build_parser() -> argparse.ArgumentParser:
    g = _globals()
    parser = _Parser(prog="robustood", description=__doc__, parents=[g])
    sub = parser.add_subparsers(dest="command", metavar="<subcommand>", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("train", parents=[g], help="multi-step SGD on a dataset; writes the trace CSV")
    p.add_argument("--data", required=True, help="dataset JSON")
    _loss_args(p)
    _budget_args(p)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--K", default="auto")
    p.add_argument("--eta-x", type=float, default=None)
    p.add_argument("--schedule", choices=["pl_decay", "constant"], default="pl_decay")
    p.add_argument("--eta-w", type=float, default=None)
    p.add_argument("--sign", action="store_true", help="sign-of-gradient inner loop")
    p.add_argument("--delta-init", choices=["zero", "uniform"], default="zero")
    p.add_argument("--telemetry-every", type=int, default=10)

    p = sub.add_parser("distance", parents=[g], help="W2, W_inf or TV between two distributions")
    p.add_argument("--p", dest="norm", default="2", help="2, inf or tv")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)

    p = sub.add_parser("worst-case", parents=[g], help="worst-case risk over a Wasserstein ball")
    p.add_argument("--dist", required=True, help="distribution JSON")
    p.add_argument("--w", type=_vector, required=True)
    _loss_args(p)
    _budget_args(p)

    p = sub.add_parser("certify", parents=[g], help="measured input-robustness of a model")
    p.add_argument("--dist", required=True, help="distribution JSON")
    p.add_argument("--w", type=_vector, required=True)
    _loss_args(p)
    _budget_args(p)

    p = sub.add_parser("bounds", parents=[g], help="evaluate a generalization bound")
    p.add_argument("formula", choices=["winf", "w2", "excess", "pretrain"])
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--m", type=float, default=1.0)
    p.add_argument("--d0", type=int, default=1)
    p.add_argument("--diam", type=float, default=1.0)
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--theta", type=float, default=0.05)
    p.add_argument("--eps-pre", type=float, default=None)
    p.add_argument("--tv", type=float, default=None)
    p.add_argument("--p", dest="norm", default="inf")
    p.add_argument("--finite-sample", action="store_true")
    p.add_argument("--T", type=int, default=100)
    p.add_argument("--profile", type=_vector, default=None, help="L11,L12,L21,L22,G,M,mu_w,mu_x for 'excess'")
    p.add_argument("--digits", type=int, default=4)
    p.add_argument("--json", action="store_true", help="print the full report")

    p = sub.add_parser("ablate", parents=[g], help="perturbation-size (r) or sample-count (n) ablation")
    p.add_argument("axis", choices=["r", "n"])
    p.add_argument("--seeds", type=int, default=None, help="number of seeds (from --seed upward)")

    for name, hint in (("converge", "convergence-rate experiment"), ("transfer", "pretraining transfer experiment")):
        p = sub.add_parser(name, parents=[g], help=hint)
        p.add_argument("--seeds", type=int, default=None, help="number of seeds (from --seed upward)")
    return parser


# --------------------------------------------------------------------------


def _read(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise InvalidInput(f"cannot read {path}: {exc.strerror}") from exc


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _make_loss(args, d0: int, reach_box=None):
    if args.loss == "logistic":
        return LogisticLoss(d0, lam=args.lam)
    anchor = np.zeros(d0) if args.anchor is None else np.asarray(args.anchor)
    offset = args.offset if args.offset == "auto" else float(args.offset)
    return QuadraticSaddle(args.mu_w, args.mu_x, anchor, offset=offset, x_box=reach_box)


def _reach_box(atoms: np.ndarray, r: float) -> np.ndarray:
    lo = np.minimum(atoms.min(axis=0), -2.0) - r
    hi = np.maximum(atoms.max(axis=0), 2.0) + r
    return np.column_stack([lo, hi])


def _cmd_train(args) -> int:
    data = Dataset.from_json(_read(args.data))
    budget = PerturbationBudget(args.norm, args.r)
    loss = _make_loss(args, data.d0, _reach_box(data.x, budget.r) if args.loss == "quadratic" else None)
    K = args.K if args.K == "auto" else int(args.K)
    cfg = TrainConfig(
        T=args.T,
        K=K,
        budget=budget,
        eta_x=args.eta_x,
        schedule=args.schedule,
        eta_w=args.eta_w,
        sign_variant=args.sign,
        seed=getattr(args, "seed", 0),
        delta_init=args.delta_init,
        telemetry_every=args.telemetry_every,
    )
    trace = train(loss, data, cfg)
    _emit(trace.to_csv(), getattr(args, "out", None))
    sys.stderr.write("w_final " + json.dumps([float(v) for v in trace.w_final]) + "\n")
    return 0


def _cmd_distance(args) -> int:
    P = DiscreteDistribution.from_json(_read(args.a))
    Q = DiscreteDistribution.from_json(_read(args.b))
    if args.norm.strip().lower() == "tv":
        value = tv_distance(P, Q)
    else:
        value = wasserstein_inf(P, Q) if parse_norm(args.norm) == math.inf else wasserstein2(P, Q)
    print(repr(float(value)))
    return 0


def _dist_and_loss(args):
    P = DiscreteDistribution.from_json(_read(args.dist))
    budget = PerturbationBudget(args.norm, args.r)
    loss = _make_loss(args, P.d0, _reach_box(P.atoms, budget.r) if args.loss == "quadratic" else None)
    w = np.asarray(args.w, dtype=np.float64)
    if w.size != loss.d_w:
        raise InvalidInput(f"--w needs {loss.d_w} entries")
    return P, budget, loss, w


def _cmd_worst_case(args) -> int:
    P, budget, loss, w = _dist_and_loss(args)
    if budget.p == math.inf:
        value = worst_case_risk_winf(loss, w, P, budget.r)
    elif budget.r == 0:
        value = worst_case_risk_winf(loss, w, P, 0.0)
    else:
        value = worst_case_risk_w2(loss, w, P, budget.r)
    print(repr(float(value)))
    return 0


def _cmd_certify(args) -> int:
    P, budget, loss, w = _dist_and_loss(args)
    report = measure_robustness(loss, w, P, budget)
    doc = {"r": report.r, "p": "inf" if budget.p == math.inf else "2", "epsilon_hat": report.epsilon_hat, "method": report.method}
    if getattr(args, "out", None):
        _emit(json.dumps(doc) + "\n", args.out)
    print(repr(report.epsilon_hat))
    return 0


def _cmd_bounds(args) -> int:
    inputs = BoundInputs(
        d0=args.d0, D=args.diam, M=args.m, n=args.n, r=args.r, epsilon=args.eps, theta=args.theta, epsilon_pre=args.eps_pre, tv=args.tv
    )
    if args.formula == "winf":
        report = ood_bound_winf(inputs)
    elif args.formula == "w2":
        report = ood_bound_w2(inputs)
    elif args.formula == "pretrain":
        report = pretrain_transfer_bound(inputs, p=args.norm, finite_sample=args.finite_sample)
    else:
        if args.profile is None or len(args.profile) != 8:
            raise InvalidInput("'bounds excess' needs --profile L11,L12,L21,L22,G,M,mu_w,mu_x")
        profile = ConstantsProfile(*args.profile, certified=False)
        report = excess_risk_bound(inputs, profile, args.T, p=args.norm)
    if getattr(args, "out", None):
        _emit(report.to_json() + "\n", args.out)
    if args.json:
        print(report.to_json())
    elif report.vacuous:
        print("vacuous")
    else:
        print(f"{report.bound:.{args.digits}f}")
    return 0


def _experiment_config(args, name: str) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = ExperimentConfig.load(args.config)
        if cfg.experiment != name:
            raise InvalidInput(f"config is for {cfg.experiment!r}, but the subcommand runs {name!r}")
    else:
        cfg = ExperimentConfig(name, list(range(10)))
    if args.seeds is not None or hasattr(args, "seed"):
        count = args.seeds if args.seeds is not None else len(cfg.seeds)
        if count < 1:
            raise InvalidInput("--seeds must be at least 1")
        start = getattr(args, "seed", 0)
        cfg.seeds = list(range(start, start + count))
    if hasattr(args, "threads"):
        if args.threads < 1:
            raise InvalidInput("--threads must be at least 1")
        cfg.threads = args.threads
    out = getattr(args, "out", None) or cfg.out
    cfg.out = out
    return cfg


def _run_suite(args, name: str) -> int:
    cfg = _experiment_config(args, name)
    result = run_experiment(cfg)
    if cfg.out:
        write_results(result, cfg.out, cfg)
    else:
        sys.stdout.write(rows_to_csv(result.rows))
    sys.stderr.write(json.dumps({k: _plain(v) for k, v in result.summary.items()}) + "\n")
    return 0


def _plain(v):
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    return v


def _dispatch(args) -> int:
    cmd = args.command
    if cmd == "train":
        return _cmd_train(args)
    if cmd == "distance":
        return _cmd_distance(args)
    if cmd == "worst-case":
        return _cmd_worst_case(args)
    if cmd == "certify":
        return _cmd_certify(args)
    if cmd == "bounds":
        return _cmd_bounds(args)
    if cmd == "ablate":
        return _run_suite(args, "ablate_" + args.axis)
    return _run_suite(args, cmd)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(str(exc) + "\n")
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return _dispatch(args)
    except (InvalidInput, Unsupported, json.JSONDecodeError, KeyError, TypeError) as exc:
        sys.stderr.write(f"invalid input: {exc}\n")
        return 1
    except ArithmeticError as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return 2


def cli(argv=None) -> int:
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
