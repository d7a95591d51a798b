"""One-swap sensitivities of the ATE estimators.

A swap exchanges a treated unit i with a control unit j.  For OLS-RA the
change telescopes into four arm-wise atomic terms (delete i from the treated
arm, insert j into it, delete j from the control arm, insert i into it).
Ground truth for every atomic term is fresh recomputation of the intercept;
the closed forms below are fast paths used only where their derivation holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .estimators import DIM, OLS, Assignment, Population, estimate_many
from .qcore import TOL, ArmData, Branch, make_arm, q_apply

INF = math.inf
# The closed forms divide by a difference (1 - leverage for deletion, the
# innovation energy for K-branch insertion) and lose about eps / gap relative
# digits; below these gaps the fresh recomputation is used instead.
MIN_LEVERAGE_GAP = 1e-3
MIN_INNOVATION = 1e-3


@dataclass(frozen=True)
class SwapDelta:
    i: int
    j: int
    value: float
    components: tuple  # (del1, ins1, del0, ins0)


@dataclass(frozen=True)
class LeverageReport:
    ell_i: float | None
    ell_tilde_j: float | None
    sigma2_j: float | None
    alpha_j: float | None
    rho_j: float | None
    phi_del: float | None
    phi_ins: float | None


def _unit(s: int, i: int) -> np.ndarray:
    e = np.zeros(s)
    e[i] = 1.0
    return e


def _drop(arm: ArmData, i: int, tol: float) -> ArmData:
    keep = np.arange(arm.s) != i
    return make_arm(arm.X[keep], arm.y[keep], tol)


def delta_del(arm: ArmData, i: int, fast: bool = True, tol: float = TOL) -> float:
    """mu(S minus unit i) - mu(S); ``i`` is the row position inside the arm."""
    if arm.s < 2:
        raise ValueError("cannot delete from a single-unit arm")
    if not 0 <= i < arm.s:
        raise ValueError("row position out of range")
    if fast:
        val = _del_fast(arm, i, tol)
        if val is not None:
            return val
    return _drop(arm, i, tol).mu_hat - arm.mu_hat


def _del_fast(arm: ArmData, i: int, tol: float) -> float | None:
    q = arm.q
    if q.branch is Branch.K and q.rank < arm.s:
        return None
    if q.branch is Branch.M and q.rank > arm.s - 2:
        # the reduced arm would be square in rank, hence K-branch
        return None
    Qe = q_apply(q, _unit(arm.s, i))
    ee = Qe[i]
    e1 = Qe.sum()
    one1 = float(q_apply(q, np.ones(arm.s)).sum())
    phi = one1 * ee - e1 * e1
    # the dummy-column argument needs Qe_i != 0 and an M-branch reduced arm
    if ee <= tol or phi <= MIN_LEVERAGE_GAP * one1 * ee:
        return None
    return -e1 * float(Qe @ arm.y_centered) / phi


def delta_ins(arm: ArmData, x_j, y_j: float, fast: bool = True, tol: float = TOL) -> float:
    """mu(S plus a new row (x_j, y_j)) - mu(S)."""
    x_j = np.asarray(x_j, dtype=float).ravel()
    if x_j.size != arm.X.shape[1]:
        raise ValueError("x_j has the wrong length")
    if fast:
        val = _ins_fast(arm, x_j, float(y_j), tol)
        if val is not None:
            return val
    X = np.vstack([arm.X, x_j[None, :]])
    y = np.append(arm.y, y_j)
    return make_arm(X, y, tol).mu_hat - arm.mu_hat


def _ins_fast(arm: ArmData, x: np.ndarray, y_j: float, tol: float) -> float | None:
    q = arm.q
    one = np.ones(arm.s)
    one1 = float(q_apply(q, one).sum())
    if q.branch is Branch.K:
        if q.rank < arm.s:
            return None
        u = arm.X @ x
        Qu = q_apply(q, u)
        alpha = float(Qu.sum())
        sigma2 = float(x @ x - u @ Qu)
        if sigma2 <= MIN_INNOVATION * float(x @ x):
            return None
        resid = y_j - arm.mu_hat - float(Qu @ arm.y_centered)
        return (1.0 - alpha) * resid / (one1 * sigma2 + (1.0 - alpha) ** 2)
    # M-branch with full column rank: recursive least squares on [1 X]
    p = arm.X.shape[1]
    if q.rank != p:
        return None
    if p == 0:
        return (y_j - arm.mu_hat) / (arm.s + 1.0)
    Vt = _right_factor(arm)
    z = (Vt @ x) / q.sv
    w = q.basis @ z
    a = float(w.sum())
    resid = y_j - arm.mu_hat - float(w @ arm.y_centered)
    return (1.0 - a) * resid / (one1 * (1.0 + z @ z) + (1.0 - a) ** 2)


def _right_factor(arm: ArmData) -> np.ndarray:
    # X = U S V' with U, S already in the Q factor
    return (arm.q.basis.T @ arm.X) / arm.q.sv[:, None]


def swap_delta_dim(pop: Population, asg: Assignment, i: int, j: int) -> float:
    if i not in asg.s1 or j in asg.s1:
        raise ValueError("need i treated and j control")
    return (pop.y1[j] - pop.y1[i]) / asg.n1 + (pop.y0[j] - pop.y0[i]) / asg.n0


class SwapEngine:
    """Per-assignment cache of arm factorizations for repeated OLS-RA swaps."""

    def __init__(self, pop: Population, asg: Assignment, fast: bool = True, tol: float = TOL):
        if asg.n1 < 2 or asg.n0 < 2:
            raise ValueError("both arms need at least two units for a swap")
        self.pop, self.asg, self.fast, self.tol = pop, asg, fast, tol
        self.s1 = list(asg.s1)
        self.s0 = list(asg.s0)
        self.pos1 = {u: k for k, u in enumerate(self.s1)}
        self.pos0 = {u: k for k, u in enumerate(self.s0)}
        self.arm1 = make_arm(pop.X[self.s1], pop.y1[self.s1], tol)
        self.arm0 = make_arm(pop.X[self.s0], pop.y0[self.s0], tol)
        self._reduced1 = lru_cache(maxsize=None)(lambda i: _drop(self.arm1, self.pos1[i], tol))
        self._reduced0 = lru_cache(maxsize=None)(lambda j: _drop(self.arm0, self.pos0[j], tol))

    def delta(self, i: int, j: int) -> SwapDelta:
        if i not in self.pos1 or j not in self.pos0:
            raise ValueError("need i treated and j control")
        pop, fast, tol = self.pop, self.fast, self.tol
        d1 = delta_del(self.arm1, self.pos1[i], fast, tol)
        i1 = delta_ins(self._reduced1(i), pop.X[j], pop.y1[j], fast, tol)
        d0 = delta_del(self.arm0, self.pos0[j], fast, tol)
        i0 = delta_ins(self._reduced0(j), pop.X[i], pop.y0[i], fast, tol)
        return SwapDelta(i, j, (d1 + i1) - (d0 + i0), (d1, i1, d0, i0))


def swap_delta_ols(pop: Population, asg: Assignment, i: int, j: int, fast: bool = True) -> SwapDelta:
    return SwapEngine(pop, asg, fast).delta(i, j)


def swap_matrix(pop: Population, s1, estimator: str) -> np.ndarray:
    """Matrix of Delta_ij f(S1) over treated i (rows) and controls j (columns).

    Rows and columns follow the sorted treated and control index lists.  The
    OLS-RA entries are fresh recomputations of both swapped estimates.
    """
    s1 = np.sort(np.asarray(s1, dtype=int))
    mask = np.zeros(pop.n, dtype=bool)
    mask[s1] = True
    s0 = np.flatnonzero(~mask)
    n1, n0 = s1.size, s0.size
    if estimator == DIM:
        d1 = (pop.y1[s0][None, :] - pop.y1[s1][:, None]) / n1
        d0 = (pop.y0[s0][None, :] - pop.y0[s1][:, None]) / n0
        return d1 + d0
    base = estimate_many(pop, s1[None, :], estimator)[0]
    sets = np.repeat(s1[None, :], n1 * n0, axis=0)
    rows = np.repeat(np.arange(n1), n0)
    sets[np.arange(n1 * n0), rows] = np.tile(s0, n1)
    return (estimate_many(pop, sets, estimator) - base).reshape(n1, n0)


def swap_row(pop: Population, s1, i: int, estimator: str):
    """Delta_iJ f(S1) for one treated i and every control J; returns (controls, deltas)."""
    s1 = np.asarray(s1, dtype=int)
    mask = np.zeros(pop.n, dtype=bool)
    mask[s1] = True
    if not mask[i]:
        raise ValueError("i must be treated")
    s0 = np.flatnonzero(~mask)
    n1, n0 = s1.size, s0.size
    if estimator == DIM:
        return s0, (pop.y1[s0] - pop.y1[i]) / n1 + (pop.y0[s0] - pop.y0[i]) / n0
    base = estimate_many(pop, s1[None, :], estimator)[0]
    sets = np.repeat(s1[None, :], n0, axis=0)
    sets[:, int(np.flatnonzero(s1 == i)[0])] = s0
    return s0, estimate_many(pop, sets, estimator) - base


def leverage_report(arm: ArmData, i: int | None = None, x_j=None, tol: float = TOL) -> LeverageReport:
    if i is None and x_j is None:
        raise ValueError("give a row position, a candidate row, or both")
    q = arm.q
    one = np.ones(arm.s)
    Q1 = q_apply(q, one)
    one1 = float(Q1.sum())
    ell = phi_del = None
    if i is not None:
        Qe = q_apply(q, _unit(arm.s, i))
        ee, e1 = float(Qe[i]), float(Qe.sum())
        phi_del = max(one1 * ee - e1 * e1, 0.0)
        ell = 0.0 if ee <= tol else e1 * e1 / (ee * one1)
    ell_t = sigma2 = alpha = rho = phi_ins = None
    if x_j is not None:
        x = np.asarray(x_j, dtype=float).ravel()
        u = arm.X @ x
        Qu = q_apply(q, u)
        alpha = float(Qu @ one)
        uu = max(float(u @ Qu), 0.0)
        if q.branch is Branch.M:
            # u lies in col(X_S), which M annihilates; drop the round-off
            alpha, uu = 0.0, 0.0
        sigma2 = max(float(x @ x) - uu, 0.0)
        if sigma2 <= tol * max(float(x @ x), 1.0):
            sigma2 = 0.0
            ell_t, rho = 1.0, (INF if uu > 0 else 0.0)
        else:
            ell_t = alpha * alpha / (one1 * sigma2)
            rho = math.sqrt(uu / sigma2)
        phi_ins = one1 * sigma2 + (1.0 - alpha) ** 2
    return LeverageReport(ell, ell_t, sigma2, alpha, rho, phi_del, phi_ins)


def _amplify(ell: float) -> float:
    return INF if ell >= 1.0 else math.sqrt(max(ell, 0.0)) / (1.0 - ell)


def deletion_envelope(arm: ArmData, i: int, tol: float = TOL) -> float:
    rep = leverage_report(arm, i=i, tol=tol)
    q = arm.q
    Qe = q_apply(q, _unit(arm.s, i))
    ee = float(Qe[i])
    one1 = float(q_apply(q, np.ones(arm.s)).sum())
    ey = float(Qe @ arm.y_centered)
    if ee <= tol:
        return 0.0 if abs(ey) <= tol else INF
    amp = _amplify(rep.ell_i)
    if amp == INF:
        return INF
    return abs(ey) / math.sqrt(ee * one1) * amp


def insertion_envelope(arm: ArmData, x_j, tol: float = TOL) -> float:
    rep = leverage_report(arm, x_j=x_j, tol=tol)
    if rep.rho_j == 0.0:
        return 0.0
    amp = _amplify(rep.ell_tilde_j)
    if amp == INF or rep.rho_j == INF:
        return INF
    return _residual_ratio(arm) * rep.rho_j * amp


def _residual_ratio(arm: ArmData) -> float:
    q = arm.q
    yy = max(float(arm.y_centered @ q_apply(q, arm.y_centered)), 0.0)
    one1 = float(q_apply(q, np.ones(arm.s)).sum())
    return math.sqrt(yy / one1)


def delta_max_envelope(pop: Population, asg: Assignment, mode: str = "exhaustive",
                       estimator: str = OLS, tol: float = TOL) -> float:
    """Deterministic bound on max |Delta_ij f| over the realized assignment."""
    if mode == "exhaustive":
        return float(np.max(np.abs(swap_matrix(pop, asg.s1, estimator))))
    if mode != "leverage":
        raise ValueError(f"unknown envelope mode {mode!r}")
    s1, s0 = list(asg.s1), list(asg.s0)
    arms = (
        (make_arm(pop.X[s1], pop.y1[s1], tol), s0),
        (make_arm(pop.X[s0], pop.y0[s0], tol), s1),
    )
    kappa, upsilon, rsum = 0.0, 0.0, 0.0
    for arm, outside in arms:
        for k in range(arm.s):
            kappa = max(kappa, leverage_report(arm, i=k, tol=tol).ell_i)
        for j in outside:
            rep = leverage_report(arm, x_j=pop.X[j], tol=tol)
            kappa = max(kappa, rep.ell_tilde_j)
            upsilon = max(upsilon, rep.rho_j)
        rsum += _residual_ratio(arm)
    if rsum == 0.0:
        return 0.0
    if kappa >= 1.0 or upsilon == INF:
        return INF
    return (1.0 + upsilon) * math.sqrt(kappa) / (1.0 - kappa) * rsum
