"""Command-line front end: ``artifact {gen,ci,exp1,exp2}``.

Unit indices on the command line and in outputs are 1-based.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

from .estimators import DIM, ESTIMATORS, OLS, Assignment
from .harness import (
    DESK_EXP1, DESK_EXP2, FULL_EXP1, FULL_EXP2, Budgets, ExperimentConfig,
    ci_for_assignment, draw_assignment, draw_reveal, gen_population, population_from_json,
    population_to_json, report_emit, run_experiment1, run_experiment2, stream, treated_size,
)
from .martingale import POOLS, RevealOrder
from .stein import EXHAUSTIVE_THRESHOLD, mc_bias

PRESETS = {
    "exp1": {"desk": DESK_EXP1, "full": FULL_EXP1},
    "exp2": {"desk": DESK_EXP2, "full": FULL_EXP2},
}


def _float_list(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _int_list(text: str) -> tuple:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _budgets(text: str) -> Budgets:
    try:
        return Budgets.parse(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--format", choices=("csv", "json"), default=d("csv"))
    p.add_argument("--threads", type=int, default=d(1))
    p.add_argument("--denoise-v", action="store_true", default=d(False))
    p.add_argument("--exhaustive-threshold", type=float, default=d(EXHAUSTIVE_THRESHOLD))
    p.add_argument("--pool", choices=POOLS, default=d("realized"),
                   help="proxy pool for stepwise sensitivities (default: realized)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="artifact", description=__doc__.splitlines()[0])
    _global_flags(ap, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a population file (JSON)")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--gamma", type=float, default=0.0)
    g.add_argument("--theta", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path)

    c = sub.add_parser("ci", parents=[common], help="finite-sample interval for one assignment")
    c.add_argument("--pop", type=Path, required=True)
    c.add_argument("--estimator", choices=ESTIMATORS, default=DIM)
    c.add_argument("--delta", type=float, default=0.05)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--budgets", type=_budgets, default=Budgets())
    c.add_argument("--ucb-eta", type=float)
    c.add_argument("--rho", type=float, default=0.3)
    c.add_argument("--treated", type=_int_list,
                   help="comma-separated 1-based treated units; drawn at random if omitted")
    c.add_argument("--out", type=Path)

    for name, helptext in (("exp1", "DiM finite-sample vs Wald (gamma = 0)"),
                           ("exp2", "OLS-RA finite-sample interval across gamma")):
        e = sub.add_parser(name, parents=[common], help=helptext)
        e.add_argument("--preset", choices=("desk", "full"), default="desk")
        e.add_argument("--n-list", type=_int_list)
        if name == "exp2":
            e.add_argument("--gamma-list", type=_float_list)
        e.add_argument("--R", type=int)
        e.add_argument("--N", type=int)
        e.add_argument("--delta", type=float)
        e.add_argument("--seed", type=int)
        e.add_argument("--budgets", type=_budgets)
        e.add_argument("--eta", type=float, help="UCB level for the range; plain max if omitted")
        e.add_argument("--rho", type=float)
        e.add_argument("--out", type=Path)
    return ap


def _write(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text)
    except OSError as e:
        raise OSError(f"cannot write {out}: {e}") from e


def _cmd_gen(a) -> None:
    pop = gen_population(a.n, a.gamma, a.theta, a.seed)
    _write(json.dumps(population_to_json(pop)) + "\n", a.out)


def _cmd_ci(a) -> None:
    try:
        pop = population_from_json(json.loads(a.pop.read_text()))
    except OSError as e:
        raise OSError(f"cannot read {a.pop}: {e}") from e
    rng = stream(a.seed, 5)
    if a.treated:
        asg = Assignment([u - 1 for u in a.treated], pop.n)
    else:
        asg = draw_assignment(pop.n, treated_size(pop.n, a.rho), rng)
    order = draw_reveal(asg, rng)
    b = a.budgets
    bias = None
    if a.estimator == OLS:
        bias = mc_bias(pop, OLS, asg.n1, b.B_S, b.B_pair, stream(a.seed, 6),
                       exhaustive_threshold=a.exhaustive_threshold)
    rep = ci_for_assignment(pop, asg, order, a.estimator, a.delta, b, bias, rng,
                            pool=a.pool, denoise=a.denoise_v, ucb_eta=a.ucb_eta)
    d = rep.as_dict()
    d["tau"] = pop.tau
    d["reveal"] = [u + 1 for u in RevealOrder.from_assignment(asg, order.treated).treated]
    if a.format == "json":
        _write(json.dumps(d, indent=2) + "\n", a.out)
        return
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = ["estimate", "radius", "sqrt_term", "range_term", "bias_term", "covered", "tau",
            "treated", "reveal"]
    w.writerow(keys)
    w.writerow([" ".join(map(str, d[k])) if isinstance(d[k], list)
                else int(d[k]) if isinstance(d[k], bool) else format(d[k], ".10g") for k in keys])
    _write(buf.getvalue(), a.out)


def _config(a, preset: dict) -> ExperimentConfig:
    cfg = ExperimentConfig(**preset)
    over = {"n_list": a.n_list, "gamma_list": getattr(a, "gamma_list", None), "R": a.R,
            "N": a.N, "delta": a.delta, "seed": a.seed, "budgets": a.budgets, "eta": a.eta,
            "rho": a.rho}
    over = {k: v for k, v in over.items() if v is not None}
    return replace(cfg, **over, pool=a.pool, denoise_v=a.denoise_v,
                   exhaustive_threshold=a.exhaustive_threshold, threads=a.threads)


def _cmd_exp(a) -> None:
    cfg = _config(a, PRESETS[a.cmd][a.preset])
    rows = run_experiment1(cfg) if a.cmd == "exp1" else run_experiment2(cfg)
    text = report_emit(rows, a.format, a.out)
    if a.out is None:
        sys.stdout.write(text)


def main(argv=None) -> int:
    ap = build_parser()
    a = ap.parse_args(argv)
    if a.threads < 1:
        ap.error("--threads must be >= 1")
    handlers = {"gen": _cmd_gen, "ci": _cmd_ci, "exp1": _cmd_exp, "exp2": _cmd_exp}
    try:
        handlers[a.cmd](a)
    except (ValueError, OSError, ArithmeticError, KeyError, json.JSONDecodeError) as e:
        print(f"artifact {a.cmd}: error: {e}", file=sys.stderr)
        return 1
    return 0
