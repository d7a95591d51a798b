"""Exchangeable-pair (Johnson graph) bias machinery: carre du champ, the
Stein constant lambda*, the bias bound B*, and DiM closed forms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .estimators import DIM, Assignment, Population, estimate_many
from .swap import swap_matrix

EXHAUSTIVE_THRESHOLD = 2_000_000


@dataclass
class BiasEstimate:
    e_gamma_hat: float
    var_f_hat: float
    lambda_hat: float
    b_star_hat: float
    mean_f_hat: float = 0.0
    exhaustive: bool = False
    budgets: dict = field(default_factory=dict)


def spectral_gap(n: int, m: int) -> float:
    if not 1 <= m <= n - 1:
        raise ValueError("need 1 <= m <= n-1")
    return n / (m * (n - m))


def gamma_all_pairs(pop: Population, estimator: str, asg: Assignment) -> float:
    D = swap_matrix(pop, asg.s1, estimator)
    return float(np.sum(D * D)) / (2 * asg.n1 * asg.n0)


def gamma_subsampled(pop: Population, estimator: str, asg: Assignment, B_pair: int,
                     rng: np.random.Generator) -> float:
    """Unbiased estimate of Gamma(f)(S) from B_pair uniform (i, j) draws."""
    if B_pair < 1:
        raise ValueError("B_pair must be >= 1")
    n1, n0 = asg.n1, asg.n0
    if B_pair >= n1 * n0:
        return gamma_all_pairs(pop, estimator, asg)
    s1 = np.array(asg.s1)
    s0 = np.array(asg.s0)
    ii = rng.integers(n1, size=B_pair)
    jj = rng.integers(n0, size=B_pair)
    if estimator == DIM:
        d = (pop.y1[s0[jj]] - pop.y1[s1[ii]]) / n1 + (pop.y0[s0[jj]] - pop.y0[s1[ii]]) / n0
    else:
        sets = np.repeat(s1[None, :], B_pair, axis=0)
        sets[np.arange(B_pair), ii] = s0[jj]
        base = estimate_many(pop, s1[None, :], estimator)[0]
        d = estimate_many(pop, sets, estimator) - base
    return 0.5 * float(np.mean(d * d))


def mc_bias(pop: Population, estimator: str, n1: int, B_S: int, B_pair: int,
            rng: np.random.Generator, exhaustive_threshold: float = EXHAUSTIVE_THRESHOLD) -> BiasEstimate:
    """Estimate E Gamma(f), lambda* and B* for f = estimate - tau."""
    n = pop.n
    n0 = n - n1
    gap = spectral_gap(n, n1)
    exhaustive = math.comb(n, n1) * n1 * n0 < exhaustive_threshold
    if exhaustive:
        sets = [Assignment(s, n) for s in combinations(range(n), n1)]
        gammas = [gamma_all_pairs(pop, estimator, a) for a in sets]
        ddof = 0
    else:
        if B_S < 2:
            raise ValueError("B_S must be >= 2")
        sets = [Assignment(rng.choice(n, size=n1, replace=False), n) for _ in range(B_S)]
        gammas = [gamma_subsampled(pop, estimator, a, B_pair, rng) for a in sets]
        ddof = 1
    f = estimate_many(pop, np.array([a.s1 for a in sets]), estimator) - pop.tau
    eg = float(np.mean(gammas))
    var = float(np.var(f, ddof=ddof))
    if var > 0.0:
        lam = max(gap, eg / var)
        b = math.sqrt(2.0 * eg) / lam
    else:
        lam = gap
        b = abs(float(np.mean(f)))
    return BiasEstimate(eg, var, lam, b, float(np.mean(f)), exhaustive,
                        {"B_S": B_S, "B_pair": B_pair})


def _divisor_n_moments(pop: Population):
    v1 = float(np.var(pop.y1))
    v0 = float(np.var(pop.y0))
    c = float(np.mean((pop.y1 - pop.y1.mean()) * (pop.y0 - pop.y0.mean())))
    return v1, v0, c


def dim_expected_gamma_closed_form(pop: Population, n1: int) -> float:
    n = pop.n
    n0 = n - n1
    v1, v0, c = _divisor_n_moments(pop)
    return n / (n - 1) * (v1 / n1**2 + v0 / n0**2 + 2.0 * c / (n1 * n0))


def dim_bias_bound_closed_form(pop: Population, n1: int) -> float:
    n = pop.n
    n0 = n - n1
    return n1 * n0 / n * math.sqrt(2.0 * dim_expected_gamma_closed_form(pop, n1))


def dim_stein_linearity_check(pop: Population, n1: int) -> float:
    """max_S |(Pf)(S) - f(S) + lambda_lin f(S)| for DiM under the one-swap kernel."""
    n = pop.n
    if n > 10:
        raise ValueError("enumeration is limited to n <= 10")
    lam = n / (n1 * (n - n1))
    worst = 0.0
    for s in combinations(range(n), n1):
        asg = Assignment(s, n)
        D = swap_matrix(pop, asg.s1, DIM)
        f = estimate_many(pop, np.array([s]), DIM)[0] - pop.tau
        worst = max(worst, abs(float(D.mean()) + lam * f))
    return worst
