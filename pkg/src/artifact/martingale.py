"""Assignment-exposure martingale: reveal states, stepwise swap sensitivities,
Monte Carlo variance/range estimates and the two-sided Freedman radius.

Two pools are supported for the stepwise sensitivities.  ``"filtration"``
draws i from every unrevealed unit and completes the proxy treated set at
random, which is the conditional law given the revealed prefix.
``"realized"`` keeps the realized assignment fixed: i runs over the treated
units not yet revealed, the completion is the rest of the treated set, and
J runs over the realized controls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import NamedTuple

import numpy as np

from .estimators import DIM, Assignment, Population, estimate_many
from .swap import swap_matrix, swap_row

POOLS = ("filtration", "realized")


@dataclass(frozen=True)
class RevealOrder:
    pi: tuple
    n: int
    n1: int

    def __post_init__(self):
        pi = tuple(int(u) for u in self.pi)
        if len(pi) < self.n1 or len(set(pi)) != len(pi):
            raise ValueError("reveal order must list n1 distinct units")
        if min(pi) < 0 or max(pi) >= self.n:
            raise ValueError("unit index out of range")
        object.__setattr__(self, "pi", pi)

    @property
    def treated(self) -> tuple:
        return self.pi[: self.n1]

    def position(self, unit: int) -> int:
        """1-based reveal step of a treated unit."""
        return self.treated.index(unit) + 1

    @classmethod
    def from_assignment(cls, asg: Assignment, prefix) -> "RevealOrder":
        prefix = tuple(int(u) for u in prefix)
        if sorted(prefix) != list(asg.s1):
            raise ValueError("reveal prefix must be a permutation of the treated set")
        return cls(prefix, asg.n, asg.n1)


class RevealState(NamedTuple):
    past: tuple
    remaining: tuple
    m: int
    ell: int
    alpha: float


def reveal_state(order: RevealOrder, t: int) -> RevealState:
    if not 1 <= t <= order.n1:
        raise ValueError(f"t={t} outside 1..{order.n1}")
    past = order.pi[: t - 1]
    taken = set(past)
    remaining = tuple(u for u in range(order.n) if u not in taken)
    m = order.n - t + 1
    ell = order.n1 - t + 1
    return RevealState(past, remaining, m, ell, (m - ell) / m)


def alphas(n: int, n1: int) -> np.ndarray:
    t = np.arange(1, n1 + 1)
    return (n - n1) / (n - t + 1)


@dataclass
class ConcentrationEstimate:
    v_hat_star: float
    r_hat_plain: float
    r_hat_ucb: float
    zeta_tables: list = field(default_factory=list)
    v_hat_raw: float = 0.0
    budgets: dict = field(default_factory=dict)


def zeta_exact_dim(pop: Population, order: RevealOrder, t: int, i: int) -> float:
    st = reveal_state(order, t)
    pool = np.array(st.remaining)
    if pool.size < 2:
        raise ValueError("need at least two unrevealed units")
    if i not in st.remaining:
        raise ValueError("i must be unrevealed")
    others = pool[pool != i]
    n0 = order.n - order.n1
    return float((pop.y1[others].mean() - pop.y1[i]) / order.n1
                 + (pop.y0[others].mean() - pop.y0[i]) / n0)


def _completion_draws(pop, estimator, order, t, i, B_cond, rng) -> np.ndarray:
    """Per-draw inner means (1/n0) sum_J Delta_iJ f(proxy) over B_cond completions."""
    st = reveal_state(order, t)
    if i not in st.remaining:
        raise ValueError("i must be unrevealed")
    rest = np.array([u for u in st.remaining if u != i])
    k = st.ell - 1
    if k > rest.size:
        raise ValueError("infeasible completion size")
    out = np.empty(B_cond)
    for b in range(B_cond):
        T = rng.choice(rest, size=k, replace=False) if k else np.empty(0, dtype=int)
        proxy = np.concatenate([np.array(st.past, dtype=int), [i], T]).astype(int)
        out[b] = swap_row(pop, proxy, i, estimator)[1].mean()
    return out


def zeta_rb_estimate(pop: Population, estimator: str, order: RevealOrder, t: int, i: int,
                     B_cond: int, rng: np.random.Generator) -> float:
    """Rao-Blackwellized estimate of the stepwise sensitivity zeta_t(i).

    DiM swaps do not depend on the proxy set, so the expectation over the
    completion and the control is taken exactly.
    """
    if B_cond < 1:
        raise ValueError("B_cond must be >= 1")
    if estimator == DIM:
        return zeta_exact_dim(pop, order, t, i)
    return float(_completion_draws(pop, estimator, order, t, i, B_cond, rng).mean())


def _subsample(units, cap: int, rng) -> np.ndarray:
    units = np.asarray(units, dtype=int)
    if units.size <= cap:
        return units
    return np.sort(rng.choice(units, size=cap, replace=False))


def mc_var_range(pop: Population, estimator: str, asg: Assignment, order: RevealOrder,
                 B_i: int, B_cond: int, rng: np.random.Generator, eta: float = 0.05,
                 delta_max: float | None = None, pool: str = "filtration",
                 denoise: bool = False, D: np.ndarray | None = None) -> ConcentrationEstimate:
    """Monte Carlo estimate of V* and of the range R* (plain and UCB).

    ``D`` optionally supplies the precomputed realized swap matrix of ``asg``.
    """
    if B_cond < 1 or B_i < 2:
        raise ValueError("need B_cond >= 1 and B_i >= 2")
    if pool not in POOLS:
        raise ValueError(f"pool must be one of {POOLS}")
    if tuple(sorted(order.treated)) != asg.s1:
        raise ValueError("reveal order does not match the assignment")
    n1 = asg.n1
    if D is None:
        D = swap_matrix(pop, asg.s1, estimator)
    if delta_max is None:
        delta_max = float(np.max(np.abs(D)))
    rows = None
    if pool == "realized":
        rows = dict(zip(asg.s1, D.mean(axis=1)))
    v_raw = v_den = r_plain = r_ucb = 0.0
    tables = []
    for t in range(1, n1 + 1):
        st = reveal_state(order, t)
        if pool == "realized":
            I_t = _subsample(order.treated[t - 1:], B_i, rng)
            zeta = np.array([rows[int(i)] for i in I_t])
            noise = np.zeros(I_t.size)
        else:
            I_t = _subsample(st.remaining, B_i, rng)
            zeta = np.empty(I_t.size)
            noise = np.zeros(I_t.size)
            for k, i in enumerate(I_t):
                if estimator == DIM:
                    zeta[k] = zeta_exact_dim(pop, order, t, int(i))
                    continue
                draws = _completion_draws(pop, estimator, order, t, int(i), B_cond, rng)
                zeta[k] = draws.mean()
                if B_cond > 1:
                    noise[k] = draws.var(ddof=1) / B_cond
        tables.append(dict(zip((int(i) for i in I_t), zeta.tolist())))
        a2 = st.alpha**2
        var_t = float(zeta.var())
        v_raw += a2 * var_t
        k = I_t.size
        v_den += a2 * max(var_t - (k - 1) / k * float(noise.mean()), 0.0)
        r_plain = max(r_plain, st.alpha * float(np.max(np.abs(zeta))))
        bonus = delta_max * math.sqrt(math.log(2 * k * n1 / eta) / (2 * B_cond))
        r_ucb = max(r_ucb, st.alpha * float(np.max(np.abs(zeta) + bonus)))
    return ConcentrationEstimate(
        v_den if denoise else v_raw, r_plain, r_ucb, tables, v_raw,
        {"B_i": B_i, "B_cond": B_cond, "eta": eta, "pool": pool, "denoise": denoise},
    )


def dim_exact_var_range(pop: Population, asg: Assignment, order: RevealOrder):
    """Exact (V*, R*) for DiM from the closed-form stepwise sensitivities."""
    V = R = 0.0
    for t in range(1, asg.n1 + 1):
        st = reveal_state(order, t)
        z = np.array([zeta_exact_dim(pop, order, t, i) for i in st.remaining])
        V += st.alpha**2 * float(z.var())
        R = max(R, st.alpha * float(np.max(np.abs(z))))
    return V, R


def dim_emp_diagnostics(pop: Population, asg: Assignment, order: RevealOrder):
    """(V_emp, R_emp) from the realized-assignment DiM increments mu_i."""
    s1, s0 = list(asg.s1), list(asg.s0)
    mu = {i: float((pop.y1[s0].mean() - pop.y1[i]) / asg.n1 - (pop.y0[i] - pop.y0[s0].mean()) / asg.n0)
          for i in s1}
    a = alphas(asg.n, asg.n1)
    V = R = 0.0
    for t in range(1, asg.n1 + 1):
        vals = np.array([mu[i] for i in order.treated[t - 1:]])
        V += a[t - 1] ** 2 * float(vals.var())
        R = max(R, a[t - 1] * abs(mu[order.treated[t - 1]]))
    return V, R


def v_pqv_surrogate(pop: Population, estimator: str, asg: Assignment, order: RevealOrder,
                    B_cond: int, rng: np.random.Generator, pool: str = "filtration",
                    D: np.ndarray | None = None) -> float:
    """Assignment-level PQV: alpha-weighted sample variance (divisor k - 1) of
    the stepwise means over the k treated units not yet revealed; a step with
    a single remaining unit contributes 0."""
    if pool == "realized":
        D = swap_matrix(pop, asg.s1, estimator) if D is None else D
        rows = dict(zip(asg.s1, D.mean(axis=1)))
    V = 0.0
    for t in range(1, asg.n1 + 1):
        st = reveal_state(order, t)
        future = order.treated[t - 1:]
        if pool == "realized":
            z = np.array([rows[i] for i in future])
        else:
            z = np.array([zeta_rb_estimate(pop, estimator, order, t, i, B_cond, rng) for i in future])
        if z.size > 1:
            V += st.alpha**2 * float(z.var(ddof=1))
    return V


def r_swap_envelope(pop: Population, estimator: str, asg: Assignment, order: RevealOrder,
                    B_cond: int, rng: np.random.Generator, pool: str = "filtration",
                    D: np.ndarray | None = None) -> float:
    """Max-swap envelope: alpha_t times the largest expected max |Delta_ij| over
    future treated i."""
    if pool == "realized":
        D = swap_matrix(pop, asg.s1, estimator) if D is None else D
        rows = dict(zip(asg.s1, np.abs(D).max(axis=1)))
    R = 0.0
    for t in range(1, asg.n1 + 1):
        st = reveal_state(order, t)
        rest_all = st.remaining
        best = 0.0
        for i in order.treated[t - 1:]:
            if pool == "realized":
                val = rows[i]
            else:
                rest = np.array([u for u in rest_all if u != i])
                acc = 0.0
                for _ in range(B_cond):
                    T = rng.choice(rest, size=st.ell - 1, replace=False)
                    proxy = np.concatenate([np.array(st.past, dtype=int), [i], T]).astype(int)
                    acc += float(np.max(np.abs(swap_row(pop, proxy, i, estimator)[1])))
                val = acc / B_cond
            best = max(best, val)
        R = max(R, st.alpha * best)
    return R


def freedman_radius(V: float, R: float, delta: float) -> float:
    if V < 0 or R < 0:
        raise ValueError("V and R must be nonnegative")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    L = math.log(2.0 / delta)
    return math.sqrt(2.0 * V * L) + R / 3.0 * L


class ExactOracle:
    """Enumeration of f(S) = estimate(S) - tau over all treated sets of size n1.

    Supplies exact conditional means, stepwise sensitivities, V*, R*, the
    carre du champ and the Stein constants for small n.
    """

    def __init__(self, pop: Population, estimator: str, n1: int):
        self.pop, self.estimator, self.n1 = pop, estimator, n1
        self.n = pop.n
        self.sets = list(combinations(range(self.n), n1))
        vals = estimate_many(pop, np.array(self.sets), estimator) - pop.tau
        self.f = {frozenset(s): float(v) for s, v in zip(self.sets, vals)}
        self._zeta_cache: dict = {}

    def cond_mean(self, revealed) -> float:
        """E[f | revealed treated prefix]."""
        r = frozenset(revealed)
        vals = [v for s, v in self.f.items() if r <= s]
        return float(np.mean(vals))

    def delta(self, s1, i: int, j: int) -> float:
        s1 = frozenset(s1)
        return self.f[(s1 - {i}) | {j}] - self.f[s1]

    def zeta(self, past, i: int) -> float:
        key = (frozenset(past), i)
        if key in self._zeta_cache:
            return self._zeta_cache[key]
        past = frozenset(past)
        rem = [u for u in range(self.n) if u not in past]
        rest = [u for u in rem if u != i]
        ell = self.n1 - len(past)
        tot, cnt = 0.0, 0
        for T in combinations(rest, ell - 1):
            prox = past | {i} | set(T)
            for J in rest:
                if J in T:
                    continue
                tot += self.delta(prox, i, J)
                cnt += 1
        self._zeta_cache[key] = tot / cnt
        return tot / cnt

    def var_range(self, order: RevealOrder):
        V = R = 0.0
        for t in range(1, self.n1 + 1):
            st = reveal_state(order, t)
            z = np.array([self.zeta(st.past, i) for i in st.remaining])
            V += st.alpha**2 * float(z.var())
            R = max(R, st.alpha * float(np.max(np.abs(z))))
        return V, R

    def gamma(self, s1) -> float:
        s1 = frozenset(s1)
        s0 = [u for u in range(self.n) if u not in s1]
        d = [self.delta(s1, i, j) for i in s1 for j in s0]
        return float(np.sum(np.square(d))) / (2 * self.n1 * (self.n - self.n1))

    def mean_f(self) -> float:
        return float(np.mean(list(self.f.values())))

    def var_f(self) -> float:
        return float(np.var(list(self.f.values())))

    def expected_gamma(self) -> float:
        return float(np.mean([self.gamma(s) for s in self.sets]))

    def bias_bound(self) -> float:
        """sqrt(2 E Gamma) / lambda* with lambda* = E Gamma / Var f."""
        var = self.var_f()
        if var == 0.0:
            return abs(self.mean_f())
        eg = self.expected_gamma()
        return math.sqrt(2.0 * eg) / (eg / var)
