"""Q-geometry linear algebra for min-norm OLS with an unpenalized intercept.

For a design block X_S (rows = units of S) the intercept is the ratio
mu = 1'Qy / 1'Q1 where Q is the annihilator I - X X^+ when the all-ones
vector is outside col(X_S), and the Gram pseudoinverse (X X')^+ otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

TOL = 1e-10


class DegenerateDesign(ArithmeticError):
    """Raised when the intercept denominator 1'Q1 vanishes."""


class Branch(str, Enum):
    M = "MBranch"
    K = "KBranch"


def _check_finite(A: np.ndarray, name: str = "input") -> None:
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")


def _rank_cut(s: np.ndarray, tol: float) -> int:
    if s.size == 0 or s[0] <= 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def pinv(A, tol: float = TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse via a thin SVD with relative cutoff ``tol``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    _check_finite(A, "A")
    m, n = A.shape
    if m == 0 or n == 0:
        return np.zeros((n, m))
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    r = _rank_cut(s, tol)
    return (Vt[:r].T / s[:r]) @ U[:, :r].T


def greville_append(pinv_A, A, a, tol: float = TOL) -> np.ndarray:
    """Pseudoinverse of [A a] from A^+ by the column-append identity."""
    A = np.asarray(A, dtype=float)
    a = np.asarray(a, dtype=float).ravel()
    if A.ndim != 2 or A.shape[0] != a.size:
        raise ValueError("shape mismatch between A and a")
    Ap = np.asarray(pinv_A, dtype=float).reshape(A.shape[1], A.shape[0])
    d = Ap @ a
    c = a - A @ d
    anorm = np.linalg.norm(a)
    if np.linalg.norm(c) > tol * max(anorm, np.finfo(float).tiny):
        b = c / (c @ c)
    else:
        b = (d @ Ap) / (1.0 + d @ d)
    return np.vstack([Ap - np.outer(d, b), b])


def greville_delete(pinv_At, At=None, tol: float = TOL) -> np.ndarray:
    """Pseudoinverse of A from the pseudoinverse of [A a] (last column removed).

    The branch test b A = 0 needs [A a]; when it is not supplied it is
    recovered as the pseudoinverse of ``pinv_At``.
    """
    P = np.asarray(pinv_At, dtype=float)
    B, b = P[:-1], P[-1]
    if At is not None:
        At = np.asarray(At, dtype=float)
        A, a = At[:, :-1], At[:, -1]
        bA = b @ A
        scale = max(np.linalg.norm(b) * np.linalg.norm(A), np.finfo(float).tiny)
        if np.linalg.norm(bA) <= tol * scale:
            d = B @ (a - pinv(b[None, :], tol).ravel())
        else:
            d = (B @ a) / (1.0 - b @ a)
        return B + np.outer(d, b)
    At = pinv(P, tol)
    return greville_delete(P, At, tol)


@dataclass(frozen=True)
class QFactor:
    """Factorized Q for a design block X_S.

    ``basis`` holds an orthonormal basis of col(X_S) (the rank-r left
    singular vectors) and ``sv`` the matching singular values.
    """

    branch: Branch
    source_rows: tuple
    rank: int
    basis: np.ndarray
    sv: np.ndarray
    X: np.ndarray

    @property
    def s(self) -> int:
        return self.basis.shape[0]


def build_q_factor(X_S, tol: float = TOL, source_rows=None) -> QFactor:
    X_S = np.asarray(X_S, dtype=float)
    if X_S.ndim == 1:
        X_S = X_S[:, None]
    s = X_S.shape[0]
    if s == 0:
        raise ValueError("empty design block")
    _check_finite(X_S, "X_S")
    if X_S.shape[1] == 0:
        U, sv = np.zeros((s, 0)), np.zeros(0)
    else:
        U, sv, _ = np.linalg.svd(X_S, full_matrices=False)
        r = _rank_cut(sv, tol)
        U, sv = U[:, :r], sv[:r]
    one = np.ones(s)
    resid = one - U @ (U.T @ one)
    branch = Branch.K if np.linalg.norm(resid) <= tol * np.sqrt(s) else Branch.M
    rows = tuple(range(s)) if source_rows is None else tuple(source_rows)
    return QFactor(branch, rows, U.shape[1], U, sv, X_S)


def q_apply(q: QFactor, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[0] != q.s:
        raise ValueError(f"vector length {v.shape[0]} != {q.s}")
    c = q.basis.T @ v
    if q.branch is Branch.M:
        return v - q.basis @ c
    return q.basis @ (c / q.sv[:, None] ** 2 if c.ndim == 2 else c / q.sv**2)


def q_inner(q: QFactor, u, v) -> float:
    return float(np.asarray(u, dtype=float) @ q_apply(q, v))


def q_dense(q: QFactor) -> np.ndarray:
    return q_apply(q, np.eye(q.s))


def intercept(q: QFactor, y, tol: float = TOL) -> float:
    one = np.ones(q.s)
    if q.branch is Branch.K:
        # mu is invariant to rescaling Q; normalise by sigma_max to avoid overflow
        q = replace(q, sv=q.sv / q.sv[0])
    Q1 = q_apply(q, one)
    den = float(one @ Q1)
    if not den > tol**2 * q.s:
        raise DegenerateDesign("1'Q1 vanishes")
    return float(Q1 @ np.asarray(y, dtype=float)) / den


def min_norm_slope(X_S, y, mu_hat: float, tol: float = TOL) -> np.ndarray:
    X_S = np.asarray(X_S, dtype=float)
    if X_S.ndim == 1:
        X_S = X_S[:, None]
    y = np.asarray(y, dtype=float)
    if y.shape[0] != X_S.shape[0]:
        raise ValueError("shape mismatch")
    return pinv(X_S, tol) @ (y - mu_hat)


@dataclass(frozen=True)
class ArmData:
    X: np.ndarray
    y: np.ndarray
    q: QFactor
    mu_hat: float
    y_centered: np.ndarray

    @property
    def s(self) -> int:
        return self.y.shape[0]


def make_arm(X_S, y, tol: float = TOL, source_rows=None) -> ArmData:
    X_S = np.asarray(X_S, dtype=float)
    if X_S.ndim == 1:
        X_S = X_S[:, None]
    y = np.asarray(y, dtype=float)
    if y.shape[0] != X_S.shape[0]:
        raise ValueError("shape mismatch")
    q = build_q_factor(X_S, tol, source_rows)
    mu = intercept(q, y, tol)
    return ArmData(X_S, y, q, mu, y - mu)


def ratio_intercept(Q, y) -> float:
    """mu_y(Q) = 1'Qy / 1'Q1 for an explicit symmetric matrix Q."""
    one = np.ones(Q.shape[0])
    return float(one @ Q @ y) / float(one @ Q @ one)


def rank1_ratio_shift(Q, v, kappa: float, y) -> float:
    """Closed-form mu_y(Q + kappa (Qv)(Qv)') - mu_y(Q)."""
    one = np.ones(Q.shape[0])
    Qv = Q @ v
    Qp1 = one @ Q @ one + kappa * (Qv @ one) ** 2
    yc = y - ratio_intercept(Q, y) * one
    return kappa * float(Qv @ one) * float(Qv @ yc) / float(Qp1)


def intercepts_for_subsets(X, y, rows, tol: float = TOL) -> np.ndarray:
    """Intercepts for many equal-size row subsets, by batched fresh SVD.

    ``rows`` is a (k, s) integer array; entry b of the result is the
    intercept of the arm (X[rows[b]], y[rows[b]]).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rows = np.asarray(rows)
    k, s = rows.shape
    Xs = X[rows]
    ys = y[rows]
    if X.shape[1] == 0:
        return ys.mean(axis=1)
    U, sv, _ = np.linalg.svd(Xs, full_matrices=False)
    smax = sv[:, :1]
    keep = (sv > tol * smax) & (smax > 0)
    U = U * keep[:, None, :]
    u1 = U.sum(axis=1)
    uy = np.einsum("bsr,bs->br", U, ys)
    resid = 1.0 - np.einsum("bsr,br->bs", U, u1)
    resid2 = np.sum(resid**2, axis=1)
    kbranch = resid2 <= (tol**2) * s
    out = np.empty(k)
    m = ~kbranch
    if m.any():
        out[m] = np.sum(resid[m] * ys[m], axis=1) / resid2[m]
    if kbranch.any():
        inv2 = np.where(keep[kbranch], 1.0 / np.where(keep[kbranch], sv[kbranch], 1.0) ** 2, 0.0)
        num = np.sum(u1[kbranch] * uy[kbranch] * inv2, axis=1)
        den = np.sum(u1[kbranch] ** 2 * inv2, axis=1)
        out[kbranch] = num / den
    return out
