import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from artifact.qcore import (
    Branch, DegenerateDesign, QFactor, build_q_factor, greville_append, greville_delete, intercept,
    intercepts_for_subsets, make_arm, min_norm_slope, pinv, q_apply, q_dense, q_inner,
    rank1_ratio_shift, ratio_intercept,
)


def penrose_residual(A, P):
    return max(
        np.abs(A @ P @ A - A).max(), np.abs(P @ A @ P - P).max(),
        np.abs((A @ P).T - A @ P).max(), np.abs((P @ A).T - P @ A).max(),
    )


class TestPinv:
    def test_zero(self):
        assert np.array_equal(pinv(np.zeros((2, 2))), np.zeros((2, 2)))

    def test_identity(self):
        np.testing.assert_allclose(pinv(np.eye(3)), np.eye(3), atol=1e-14)

    def test_column(self):
        a = np.array([[1.0], [-1.0], [0.0]])
        P = pinv(a)
        np.testing.assert_allclose(P, [[0.5, -0.5, 0.0]], atol=1e-15)
        assert penrose_residual(a, P) < 1e-12

    def test_rank_deficient_penrose(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            A = rng.standard_normal((6, 3)) @ rng.standard_normal((3, 5))
            assert penrose_residual(A, pinv(A)) < 1e-8 * max(1.0, np.abs(A).max())

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            pinv(np.array([[np.nan, 1.0]]))


class TestGreville:
    def test_zero_append(self):
        P = greville_append(np.eye(2), np.eye(2), np.zeros(2))
        np.testing.assert_allclose(P, np.vstack([np.eye(2), np.zeros((1, 2))]), atol=1e-15)

    def test_append_to_empty(self):
        a = np.array([1.0, -1.0, 0.0])
        P = greville_append(np.zeros((0, 3)), np.zeros((3, 0)), a)
        np.testing.assert_allclose(P, [[0.5, -0.5, 0.0]], atol=1e-15)

    def test_delete_known(self):
        At = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
        np.testing.assert_allclose(greville_delete(pinv(At), At), np.eye(2), atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            greville_append(np.eye(2), np.eye(2), np.ones(3))

    @pytest.mark.parametrize("in_span", [False, True], ids=["c-nonzero", "c-zero"])
    def test_random_round_trip(self, in_span):
        rng = np.random.default_rng(11 + in_span)
        for _ in range(100):
            m, k = rng.integers(3, 7), rng.integers(1, 4)
            A = rng.standard_normal((m, k))
            a = A @ rng.standard_normal(k) if in_span else rng.standard_normal(m)
            PA = pinv(A)
            P = greville_append(PA, A, a)
            At = np.column_stack([A, a])
            np.testing.assert_allclose(P, pinv(At), atol=1e-8 * max(1, np.abs(PA).max()))
            np.testing.assert_allclose(greville_delete(P, At), PA, atol=1e-8 * max(1, np.abs(PA).max()))
            np.testing.assert_allclose(greville_delete(P), PA, atol=1e-8 * max(1, np.abs(PA).max()))


class TestQFactor:
    def test_zero_design(self):
        q = build_q_factor(np.zeros((3, 1)))
        assert q.branch is Branch.M
        np.testing.assert_allclose(q_dense(q), np.eye(3))
        np.testing.assert_allclose(q_apply(q, [1, 2, 3]), [1, 2, 3])

    def test_ones_column(self):
        q = build_q_factor(np.ones((2, 1)))
        assert q.branch is Branch.K
        np.testing.assert_allclose(q_dense(q), np.full((2, 2), 0.25), atol=1e-14)

    def test_contrast_column(self):
        q = build_q_factor(np.array([1.0, -1.0, 0.0]))
        assert q.branch is Branch.M
        np.testing.assert_allclose(q_dense(q), [[0.5, 0.5, 0], [0.5, 0.5, 0], [0, 0, 1]], atol=1e-14)
        np.testing.assert_allclose(q_apply(q, [2, 0, 4]), [1, 1, 4], atol=1e-14)
        assert q_inner(q, np.ones(3), np.ones(3)) == pytest.approx(3.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            build_q_factor(np.zeros((0, 2)))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            q_apply(build_q_factor(np.zeros((3, 1))), np.ones(2))

    def test_dense_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(60):
            s, p = rng.integers(1, 9), rng.integers(1, 9)
            X = rng.standard_normal((s, p))
            q = build_q_factor(X)
            if q.branch is Branch.M:
                ref = np.eye(s) - X @ np.linalg.pinv(X)
            else:
                ref = np.linalg.pinv(X @ X.T)
            np.testing.assert_allclose(q_dense(q), ref, atol=1e-8 * max(1, np.abs(ref).max()))
            assert (q.branch is Branch.K) == (np.linalg.matrix_rank(np.column_stack([X, np.ones(s)])) == q.rank)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 7), st.integers(1, 7)),
              elements=st.floats(-10, 10).filter(lambda v: v == 0 or abs(v) > 1e-6)),
       st.integers(0, 2**31))
def test_q_symmetric_psd(X, seed):
    q = build_q_factor(X)
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, X.shape[0]))
    quv, qvu = q_inner(q, u, v), q_inner(q, v, u)
    scale = 1 + abs(quv) + np.abs(q_dense(q)).max() * np.abs(u).max() * np.abs(v).max()
    assert abs(quv - qvu) <= 1e-9 * scale
    assert q_inner(q, v, v) >= -1e-9 * scale
    assert q_inner(q, np.ones(X.shape[0]), np.ones(X.shape[0])) > 0


class TestIntercept:
    def test_plain_mean(self):
        assert intercept(build_q_factor(np.zeros((3, 1))), [1, 2, 3]) == pytest.approx(2.0)

    def test_contrast(self):
        assert intercept(build_q_factor(np.array([1.0, -1.0, 0.0])), [2, 0, 4]) == pytest.approx(2.0)

    def test_k_branch(self):
        assert intercept(build_q_factor(np.ones((2, 1))), [1, 3]) == pytest.approx(2.0)

    def test_orthogonality(self):
        rng = np.random.default_rng(5)
        for _ in range(40):
            s, p = rng.integers(2, 9), rng.integers(0, 9)
            arm = make_arm(rng.standard_normal((s, p)), rng.standard_normal(s))
            assert abs(q_inner(arm.q, np.ones(s), arm.y_centered)) <= 1e-10

    def test_argmin_oracle(self):
        # 1 outside col(X): the intercept is identified by least squares on [1 X].
        # 1 inside col(X): every mu fits equally well; the minimum-norm slope
        # X^+(y - mu 1) picks mu by a one-dimensional least-squares fit.
        rng = np.random.default_rng(7)
        for _ in range(200):
            s, p = rng.integers(2, 9), rng.integers(1, 7)
            X = rng.standard_normal((s, p))
            if rng.random() < 0.3:
                X[:, 0] = 1.0
            y = rng.standard_normal(s)
            q = build_q_factor(X)
            mu = intercept(q, y)
            if q.branch is Branch.M:
                Z = np.column_stack([np.ones(s), X])
                ref = np.linalg.lstsq(Z, y, rcond=None)[0][0]
            else:
                P = np.linalg.pinv(X)
                a, b = P @ y, P @ np.ones(s)
                ref = (a @ b) / (b @ b)
            assert mu == pytest.approx(ref, abs=1e-8 * max(1, abs(ref)))

    def test_degenerate(self):
        q = build_q_factor(np.zeros((1, 0)))
        assert intercept(q, [4.0]) == 4.0
        arm = make_arm(np.eye(2), [1.0, 3.0])
        assert arm.q.branch is Branch.K

    def test_degenerate_raises(self):
        # a factor whose range misses the ones vector has 1'Q1 = 0
        b = np.array([[1.0], [-1.0]]) / np.sqrt(2)
        q = QFactor(Branch.K, (0, 1), 1, b, np.array([1.0]), b)
        with pytest.raises(DegenerateDesign):
            intercept(q, [1.0, 3.0])


class TestSlope:
    def test_constant_column(self):
        np.testing.assert_allclose(min_norm_slope(np.ones((2, 1)), [1, 3], 2.0), [0.0], atol=1e-15)

    def test_two_point_line(self):
        X = np.array([1.0, -1.0])
        mu = intercept(build_q_factor(X), [2, 0])
        assert mu == pytest.approx(1.0)
        np.testing.assert_allclose(min_norm_slope(X, [2, 0], mu), [1.0])

    def test_constant_outcome(self):
        X = np.random.default_rng(0).standard_normal((5, 3))
        mu = intercept(build_q_factor(X), np.full(5, 2.5))
        assert mu == pytest.approx(2.5)
        np.testing.assert_allclose(min_norm_slope(X, np.full(5, 2.5), mu), 0.0, atol=1e-12)

    def test_row_space_and_residual(self):
        rng = np.random.default_rng(9)
        for _ in range(40):
            s, p = rng.integers(2, 9), rng.integers(1, 12)
            X, y = rng.standard_normal((s, p)), rng.standard_normal(s)
            mu = intercept(build_q_factor(X), y)
            b = min_norm_slope(X, y, mu)
            P = np.linalg.pinv(X)
            assert np.linalg.norm(b - P @ X @ b) <= 1e-8
            r = y - mu - X @ b
            assert np.abs(X.T @ r).max() <= 1e-8
            if np.linalg.matrix_rank(X) == s:
                assert np.abs(r).max() <= 1e-8


def test_rank1_ratio_identity():
    rng = np.random.default_rng(13)
    checked = 0
    for _ in range(200):
        s = rng.integers(2, 8)
        B = rng.standard_normal((s, rng.integers(1, s + 1)))
        Q = B @ B.T
        v, y = rng.standard_normal(s), rng.standard_normal(s)
        kappa = rng.uniform(-0.5, 2.0) / max(1.0, (Q @ v) @ (Q @ v))
        Qp = Q + kappa * np.outer(Q @ v, Q @ v)
        one = np.ones(s)
        if one @ Q @ one <= 1e-8 or one @ Qp @ one <= 1e-8:
            continue
        lhs = ratio_intercept(Qp, y) - ratio_intercept(Q, y)
        assert abs(lhs - rank1_ratio_shift(Q, v, kappa, y)) <= 1e-10 * max(1, abs(lhs))
        checked += 1
    assert checked > 100


def test_batched_intercepts_match_single():
    rng = np.random.default_rng(17)
    for p in (0, 1, 3, 6, 12):
        n = 10
        X, y = rng.standard_normal((n, p)), rng.standard_normal(n)
        rows = np.array([np.sort(rng.choice(n, 5, replace=False)) for _ in range(30)])
        got = intercepts_for_subsets(X, y, rows)
        ref = [make_arm(X[r], y[r]).mu_hat for r in rows]
        np.testing.assert_allclose(got, ref, atol=1e-9)
