"""Data generation, experiment pipelines, nested aggregation and reports."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .estimators import (
    DIM, OLS, Assignment, Population, estimate, estimate_many, neyman_wald_radius,
)
from .martingale import (
    RevealOrder, dim_emp_diagnostics, freedman_radius, mc_var_range,
    r_swap_envelope, v_pqv_surrogate,
)
from .stein import EXHAUSTIVE_THRESHOLD, BiasEstimate, mc_bias
from .swap import swap_matrix

CSV_COLUMNS = (
    "n", "gamma", "p", "cov_fs", "cov_fs_var", "width_fs", "width_fs_var",
    "cov_wald", "cov_wald_var", "width_wald", "width_wald_var", "ipr", "ipr_var",
    "v_hat", "v_bench", "r_hat", "r_bench", "b_hat", "b_emp",
)


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for a (seed, key path); order of use is irrelevant."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys)))


def _ceil_pow(n: int, e: float) -> int:
    return max(1, math.ceil(n**e - 1e-9))


def gen_population(n: int, gamma: float, theta: float = 0.0, seed: int = 0) -> Population:
    """Gaussian design with p = ceil(n^gamma) columns taken from a fixed master
    draw of width ceil(n^1.5), plus standard normal potential outcomes."""
    if n < 4:
        raise ValueError("n must be >= 4")
    rng = np.random.default_rng(seed)
    width = _ceil_pow(n, 1.5)
    p = _ceil_pow(n, gamma)
    if p > width:
        raise ValueError("gamma above 1.5 exceeds the master design width")
    master = rng.standard_normal((n, width))
    eps1 = rng.standard_normal(n)
    eps0 = rng.standard_normal(n)
    beta = rng.standard_normal(width)[:p]
    X = master[:, :p] - master[:, :p].mean(axis=0)
    if p <= n - 1:
        Q, _ = np.linalg.qr(X)
        X = Q * math.sqrt(n)
    else:
        X = X / np.linalg.norm(X, axis=0) * math.sqrt(n)
    signal = theta * (X @ beta)
    return Population(X, signal + eps1, signal + eps0, gamma=gamma, seed=seed)


def population_to_json(pop: Population) -> dict:
    return {
        "n": pop.n, "p": pop.p, "gamma": pop.gamma, "seed": pop.seed,
        "X": pop.X.tolist(), "y1": pop.y1.tolist(), "y0": pop.y0.tolist(), "tau": pop.tau,
    }


def population_from_json(d: dict) -> Population:
    X = np.asarray(d["X"], dtype=float).reshape(int(d["n"]), int(d["p"]))
    pop = Population(X, d["y1"], d["y0"], gamma=d.get("gamma"), seed=d.get("seed"))
    if "tau" in d and abs(pop.tau - float(d["tau"])) > 1e-9:
        raise ValueError("stored tau disagrees with the potential outcomes")
    return pop


def draw_assignment(n: int, n1: int, rng: np.random.Generator) -> Assignment:
    if not 1 <= n1 <= n - 1:
        raise ValueError("need 1 <= n1 <= n-1")
    return Assignment(rng.choice(n, size=n1, replace=False), n)


def draw_reveal(asg: Assignment, rng: np.random.Generator) -> RevealOrder:
    pi = tuple(rng.permutation(asg.s1).tolist()) + tuple(rng.permutation(asg.s0).tolist())
    return RevealOrder(pi, asg.n, asg.n1)


def treated_size(n: int, rho: float) -> int:
    return int(round(rho * n))  # round half to even


@dataclass(frozen=True)
class Budgets:
    B_S: int = 100
    B_pair: int = 200
    B_i: int = 10
    B_cond: int = 20

    @classmethod
    def parse(cls, text: str) -> "Budgets":
        parts = [int(x) for x in text.split(",")]
        if len(parts) != 4 or min(parts) < 1:
            raise ValueError("budgets must be four positive integers B_S,B_pair,B_i,B_cond")
        return cls(*parts)


@dataclass(frozen=True)
class CIReport:
    estimate: float
    radius: float
    sqrt_term: float
    range_term: float
    bias_term: float
    covered: bool
    treated: tuple = ()

    def as_dict(self) -> dict:
        d = asdict(self)
        d["treated"] = [u + 1 for u in self.treated]
        return d


def ci_for_assignment(pop: Population, asg: Assignment, order: RevealOrder, estimator: str,
                      delta: float, budgets: Budgets, bias_estimate: BiasEstimate | None,
                      rng: np.random.Generator, pool: str = "realized", denoise: bool = False,
                      ucb_eta: float | None = None, conc=None) -> CIReport:
    """Finite-sample interval estimate +/- (sqrt(2 V L) + R L / 3 + B)."""
    if conc is None:
        conc = mc_var_range(pop, estimator, asg, order, budgets.B_i, budgets.B_cond, rng,
                            eta=ucb_eta if ucb_eta is not None else 0.05,
                            pool=pool, denoise=denoise)
    R = conc.r_hat_ucb if ucb_eta is not None else conc.r_hat_plain
    L = math.log(2.0 / delta)
    sqrt_term = math.sqrt(2.0 * conc.v_hat_star * L)
    range_term = R / 3.0 * L
    bias_term = 0.0 if bias_estimate is None else bias_estimate.b_star_hat
    radius = sqrt_term + range_term + bias_term
    est = estimate(pop, asg, estimator)
    return CIReport(est, radius, sqrt_term, range_term, bias_term,
                    abs(est - pop.tau) <= radius, asg.s1)


@dataclass
class ExperimentConfig:
    n_list: tuple = (10, 20, 40)
    gamma_list: tuple = (0.0,)
    rho: float = 0.3
    R: int = 5
    N: int = 200
    delta: float = 0.05
    budgets: Budgets = field(default_factory=Budgets)
    eta: float | None = None
    seed: int = 0
    pool: str = "realized"
    denoise_v: bool = False
    exhaustive_threshold: float = EXHAUSTIVE_THRESHOLD
    threads: int = 1

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if self.R < 1 or self.N < 1:
            raise ValueError("R and N must be >= 1")


DESK_EXP1 = dict(n_list=(10, 20, 40), R=5, N=200)
FULL_EXP1 = dict(n_list=(10, 20, 40, 80, 160, 320, 640), R=20, N=500)
DESK_EXP2 = dict(n_list=(25,), gamma_list=(0.0, 1.0, 1.5), R=5, N=100, budgets=Budgets(30, 100, 5, 8))
FULL_EXP2 = dict(n_list=(25, 50), gamma_list=(0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5), R=20, N=500)


@dataclass
class TableRow:
    n: int
    gamma: float
    p: int
    cov_fs: float | None = None
    cov_fs_var: float | None = None
    width_fs: float | None = None
    width_fs_var: float | None = None
    cov_wald: float | None = None
    cov_wald_var: float | None = None
    width_wald: float | None = None
    width_wald_var: float | None = None
    ipr: float | None = None
    ipr_var: float | None = None
    v_hat: float | None = None
    v_bench: float | None = None
    r_hat: float | None = None
    r_bench: float | None = None
    b_hat: float | None = None
    b_emp: float | None = None
    extras: dict = field(default_factory=dict, repr=False)

    def record(self) -> dict:
        return {c: getattr(self, c) for c in CSV_COLUMNS}


def ipr(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(np.quantile(v, 0.975) - np.quantile(v, 0.025))


def aggregate_nested(per_replicate_values, mode: str):
    """Collapse R inner samples into (point, spread).

    coverage: inner means, then median and variance across replicates.
    ipr: inner 2.5-97.5% spans, then median and variance across replicates.
    width: median of inner means, median of inner variances.
    diagnostic: median of inner medians, variance of inner medians.
    """
    reps = [np.atleast_1d(np.asarray(v, dtype=float)) for v in per_replicate_values]
    if not reps or any(r.size == 0 for r in reps):
        raise ValueError("empty input")
    if mode == "coverage":
        inner = np.array([r.mean() for r in reps])
        return float(np.median(inner)), float(inner.var())
    if mode == "ipr":
        inner = np.array([ipr(r) for r in reps])
        return float(np.median(inner)), float(inner.var())
    if mode == "width":
        return (float(np.median([r.mean() for r in reps])),
                float(np.median([r.var() for r in reps])))
    if mode == "diagnostic":
        inner = np.array([np.median(r) for r in reps])
        return float(np.median(inner)), float(inner.var())
    raise ValueError(f"unknown aggregation mode {mode!r}")


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _exp1_replicate(cfg: ExperimentConfig, n: int, r: int) -> dict:
    pop = gen_population(n, 0.0, seed=_pop_seed(cfg.seed, n, r))
    n1 = treated_size(n, cfg.rho)
    out = {k: [] for k in ("cov_fs", "w_fs", "cov_wald", "w_wald", "err", "v_hat", "v_emp",
                           "r_hat", "r_emp")}
    for k in range(cfg.N):
        rng = stream(cfg.seed, 1, n, r, k)
        asg = draw_assignment(n, n1, rng)
        order = draw_reveal(asg, rng)
        conc = mc_var_range(pop, DIM, asg, order, cfg.budgets.B_i, cfg.budgets.B_cond, rng,
                            eta=cfg.eta or 0.05, pool=cfg.pool, denoise=cfg.denoise_v)
        rep = ci_for_assignment(pop, asg, order, DIM, cfg.delta, cfg.budgets, None, rng,
                                ucb_eta=cfg.eta, conc=conc)
        m = asg.mask
        wald = neyman_wald_radius(pop.y1[m], pop.y0[~m], cfg.delta)
        v_emp, r_emp = dim_emp_diagnostics(pop, asg, order)
        out["cov_fs"].append(rep.covered)
        out["w_fs"].append(2 * rep.radius)
        out["cov_wald"].append(abs(rep.estimate - pop.tau) <= wald)
        out["w_wald"].append(2 * wald)
        out["err"].append(rep.estimate - pop.tau)
        out["v_hat"].append(conc.v_hat_star)
        out["v_emp"].append(v_emp)
        out["r_hat"].append(conc.r_hat_ucb if cfg.eta is not None else conc.r_hat_plain)
        out["r_emp"].append(r_emp)
    return out


def _pop_seed(seed: int, n: int, r: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(0, n, r)).generate_state(1)[0])


def run_experiment1(cfg: ExperimentConfig) -> list:
    """DiM: finite-sample interval vs Wald, one row per n."""
    rows = []
    for n in cfg.n_list:
        reps = _map(lambda r: _exp1_replicate(cfg, n, r), range(cfg.R), cfg.threads)
        row = _fill_common(TableRow(n, 0.0, 1), reps)
        row.v_hat, _ = aggregate_nested([x["v_hat"] for x in reps], "diagnostic")
        row.v_bench, _ = aggregate_nested([x["v_emp"] for x in reps], "diagnostic")
        row.r_hat, _ = aggregate_nested([x["r_hat"] for x in reps], "diagnostic")
        row.r_bench, _ = aggregate_nested([x["r_emp"] for x in reps], "diagnostic")
        rel_v = [np.median(np.abs(np.array(x["v_hat"]) - x["v_emp"]) / np.array(x["v_emp"])) for x in reps]
        rel_r = [np.median(np.abs(np.array(x["r_hat"]) - x["r_emp"]) / np.array(x["r_emp"])) for x in reps]
        row.extras = {"v_rel_err": float(np.median(rel_v)), "r_rel_err": float(np.median(rel_r)),
                      "cov_fs_min": float(min(np.mean(x["cov_fs"]) for x in reps))}
        rows.append(row)
    return rows


def _fill_common(row: TableRow, reps) -> TableRow:
    row.cov_fs, row.cov_fs_var = aggregate_nested([x["cov_fs"] for x in reps], "coverage")
    row.width_fs, row.width_fs_var = aggregate_nested([x["w_fs"] for x in reps], "width")
    row.cov_wald, row.cov_wald_var = aggregate_nested([x["cov_wald"] for x in reps], "coverage")
    row.width_wald, row.width_wald_var = aggregate_nested([x["w_wald"] for x in reps], "width")
    row.ipr, row.ipr_var = aggregate_nested([x["err"] for x in reps], "ipr")
    return row


def _exp2_replicate(cfg: ExperimentConfig, n: int, gamma: float, r: int) -> dict:
    pop = gen_population(n, gamma, seed=_pop_seed(cfg.seed, n, r))
    n1 = treated_size(n, cfg.rho)
    b = cfg.budgets
    bias = mc_bias(pop, OLS, n1, b.B_S, b.B_pair, stream(cfg.seed, 3, n, r, int(round(gamma * 1000))),
                   exhaustive_threshold=cfg.exhaustive_threshold)
    out = {k: [] for k in ("cov_fs", "w_fs", "cov_wald", "w_wald", "err", "v_hat", "v_pqv",
                           "r_hat", "r_swap", "v_ok", "r_ok")}
    for k in range(cfg.N):
        rng = stream(cfg.seed, 2, n, r, k)
        asg = draw_assignment(n, n1, rng)
        order = draw_reveal(asg, rng)
        D = swap_matrix(pop, asg.s1, OLS)
        conc = mc_var_range(pop, OLS, asg, order, b.B_i, b.B_cond, rng, eta=cfg.eta or 0.05,
                            pool=cfg.pool, denoise=cfg.denoise_v, D=D)
        rep = ci_for_assignment(pop, asg, order, OLS, cfg.delta, b, bias, rng,
                                ucb_eta=cfg.eta, conc=conc)
        m = asg.mask
        wald = neyman_wald_radius(pop.y1[m], pop.y0[~m], cfg.delta)
        dim_err = float(pop.y1[m].mean() - pop.y0[~m].mean()) - pop.tau
        v_pqv = v_pqv_surrogate(pop, OLS, asg, order, b.B_cond, rng, pool=cfg.pool, D=D)
        r_swap = r_swap_envelope(pop, OLS, asg, order, b.B_cond, rng, pool=cfg.pool, D=D)
        r_hat = conc.r_hat_ucb if cfg.eta is not None else conc.r_hat_plain
        out["cov_fs"].append(rep.covered)
        out["w_fs"].append(2 * rep.radius)
        out["cov_wald"].append(abs(dim_err) <= wald)
        out["w_wald"].append(2 * wald)
        out["err"].append(rep.estimate - pop.tau)
        out["v_hat"].append(conc.v_hat_star)
        out["v_pqv"].append(v_pqv)
        out["r_hat"].append(r_hat)
        out["r_swap"].append(r_swap)
        out["v_ok"].append(conc.v_hat_star <= v_pqv + 1e-12)
        out["r_ok"].append(r_hat <= r_swap + 1e-12)
    out["b_hat"] = bias.b_star_hat
    out["b_emp"] = abs(float(np.mean(out["err"])))
    out["p"] = pop.p
    return out


def run_experiment2(cfg: ExperimentConfig) -> list:
    """OLS-RA finite-sample interval with the DiM Wald baseline, one row per (n, gamma)."""
    rows = []
    for n in cfg.n_list:
        for gamma in cfg.gamma_list:
            reps = _map(lambda r: _exp2_replicate(cfg, n, gamma, r), range(cfg.R), cfg.threads)
            row = _fill_common(TableRow(n, float(gamma), reps[0]["p"]), reps)
            row.v_hat, _ = aggregate_nested([x["v_hat"] for x in reps], "diagnostic")
            row.v_bench, _ = aggregate_nested([x["v_pqv"] for x in reps], "diagnostic")
            row.r_hat, _ = aggregate_nested([x["r_hat"] for x in reps], "diagnostic")
            row.r_bench, _ = aggregate_nested([x["r_swap"] for x in reps], "diagnostic")
            row.b_hat, _ = aggregate_nested([x["b_hat"] for x in reps], "diagnostic")
            row.b_emp, _ = aggregate_nested([x["b_emp"] for x in reps], "diagnostic")
            row.extras = {
                "v_order_frac": float(np.mean(np.concatenate([x["v_ok"] for x in reps]))),
                "r_order_frac": float(np.mean(np.concatenate([x["r_ok"] for x in reps]))),
                "cov_fs_min": float(min(np.mean(x["cov_fs"]) for x in reps)),
                "b_hat_reps": [float(x["b_hat"]) for x in reps],
            }
            rows.append(row)
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".10g")


def report_emit(rows, fmt: str, path=None) -> str:
    """Write rows as CSV or JSON; returns the serialized text."""
    if not rows:
        raise ValueError("no rows to emit")
    records = [r.record() if isinstance(r, TableRow) else {c: r.get(c) for c in CSV_COLUMNS}
               for r in rows]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in records:
            w.writerow([_fmt(rec[c]) for c in CSV_COLUMNS])
        text = buf.getvalue()
    elif fmt == "json":
        clean = [{c: (None if rec[c] is None else float(_fmt(rec[c]))
                      if c not in ("n", "p") else int(rec[c])) for c in CSV_COLUMNS}
                 for rec in records]
        text = json.dumps(clean, indent=2) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as e:
            raise OSError(f"cannot write report to {path}: {e}") from e
    return text


def read_report(text: str, fmt: str) -> list:
    if fmt == "json":
        return json.loads(text)
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = {}
        for c in CSV_COLUMNS:
            v = rec[c]
            row[c] = None if v == "" else int(v) if c in ("n", "p") else float(v)
        out.append(row)
    return out


def estimate_errors(pop: Population, estimator: str, n1: int, N: int, seed: int) -> np.ndarray:
    """tau_hat - tau over N uniform assignments (used for IPR summaries)."""
    rng = stream(seed, 4, pop.n)
    sets = np.array([np.sort(rng.choice(pop.n, size=n1, replace=False)) for _ in range(N)])
    return estimate_many(pop, sets, estimator) - pop.tau
