"""Finite-population ATE estimators and the Neyman-Wald baseline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .qcore import TOL, intercepts_for_subsets, make_arm

DIM = "dim"
OLS = "ols"
ESTIMATORS = (DIM, OLS)


@dataclass(frozen=True)
class Population:
    X: np.ndarray
    y1: np.ndarray
    y0: np.ndarray
    gamma: float | None = None
    seed: int | None = None
    tau: float = field(init=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y1 = np.asarray(self.y1, dtype=float)
        y0 = np.asarray(self.y0, dtype=float)
        if not (X.shape[0] == y1.size == y0.size):
            raise ValueError("X, y1, y0 disagree on n")
        if y1.size < 2:
            raise ValueError("population needs n >= 2")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "tau", float(np.mean(y1 - y0)))

    @property
    def n(self) -> int:
        return self.y1.size

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class Assignment:
    s1: tuple
    n: int

    def __post_init__(self):
        s1 = tuple(sorted(int(i) for i in self.s1))
        if len(set(s1)) != len(s1):
            raise ValueError("duplicate treated index")
        if not s1 or len(s1) >= self.n:
            raise ValueError("need 1 <= n1 <= n-1")
        if s1[0] < 0 or s1[-1] >= self.n:
            raise ValueError("treated index out of range")
        object.__setattr__(self, "s1", s1)

    @property
    def n1(self) -> int:
        return len(self.s1)

    @property
    def n0(self) -> int:
        return self.n - self.n1

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.n, dtype=bool)
        m[list(self.s1)] = True
        return m

    @property
    def s0(self) -> tuple:
        return tuple(int(i) for i in np.flatnonzero(~self.mask))

    def swapped(self, i: int, j: int) -> "Assignment":
        if i not in self.s1 or j in self.s1:
            raise ValueError("swap needs i treated and j control")
        return Assignment(tuple(k for k in self.s1 if k != i) + (j,), self.n)


def true_ate(pop: Population) -> float:
    return float(np.mean(pop.y1) - np.mean(pop.y0))


def dim_estimate(pop: Population, asg: Assignment) -> float:
    m = asg.mask
    return float(pop.y1[m].mean() - pop.y0[~m].mean())


def ols_ra_estimate(pop: Population, asg: Assignment, tol: float = TOL) -> float:
    m = asg.mask
    mu1 = make_arm(pop.X[m], pop.y1[m], tol).mu_hat
    mu0 = make_arm(pop.X[~m], pop.y0[~m], tol).mu_hat
    return mu1 - mu0


def estimate(pop: Population, asg: Assignment, estimator: str) -> float:
    if estimator == DIM:
        return dim_estimate(pop, asg)
    if estimator == OLS:
        return ols_ra_estimate(pop, asg)
    raise ValueError(f"unknown estimator {estimator!r}")


def estimate_many(pop: Population, treated, estimator: str) -> np.ndarray:
    """Estimates for a (k, n1) array of treated sets."""
    treated = np.atleast_2d(np.asarray(treated, dtype=int))
    k, n1 = treated.shape
    mask = np.zeros((k, pop.n), dtype=bool)
    np.put_along_axis(mask, treated, True, axis=1)
    if estimator == DIM:
        return (pop.y1 @ mask.T) / n1 - (pop.y0 @ (~mask).T) / (pop.n - n1)
    if estimator == OLS:
        control = np.nonzero(~mask)[1].reshape(k, pop.n - n1)
        return intercepts_for_subsets(pop.X, pop.y1, treated) - intercepts_for_subsets(
            pop.X, pop.y0, control
        )
    raise ValueError(f"unknown estimator {estimator!r}")


def normal_quantile(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    return float(ndtri(p))


def neyman_wald_radius(y_obs_treated, y_obs_control, delta: float) -> float:
    yt = np.asarray(y_obs_treated, dtype=float)
    yc = np.asarray(y_obs_control, dtype=float)
    if yt.size < 2 or yc.size < 2:
        raise ValueError("each arm needs at least two units")
    se = np.sqrt(yt.var(ddof=1) / yt.size + yc.var(ddof=1) / yc.size)
    return normal_quantile(1.0 - delta / 2.0) * float(se)
