"""Shared builders and independent oracles for the test suite.

Oracles here are deliberately naive (triple loops, dense factorizations)
so they stay independent of the library code paths they check.
"""

import numpy as np

from lowsync import CsrMatrix

EPS = np.finfo(np.float64).eps


def conditioned_matrix(n, k, kappa, seed):
    """n x k matrix with singular values geometrically spaced over 1/kappa."""
    rng = np.random.default_rng(seed)
    U, _ = np.linalg.qr(rng.standard_normal((n, k)))
    W, _ = np.linalg.qr(rng.standard_normal((k, k)))
    sv = np.geomspace(1.0, 1.0 / kappa, k)
    return U @ np.diag(sv) @ W.T


def svd_condition(M):
    """Condition number straight from the singular values."""
    sv = np.linalg.svd(M, compute_uv=False)
    return sv[0] / sv[-1]


def spd_like_system(n, seed, shift=None):
    """Well-conditioned dense system as CSR plus a rhs."""
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n)) + (shift if shift is not None else n) * np.eye(n)
    b = rng.standard_normal(n)
    return CsrMatrix.from_dense(M), M, b


def spread_system(n, seed, noise=0.02):
    """Spread spectrum in [1, 10]: condition ~10, no tight clusters."""
    rng = np.random.default_rng(seed)
    M = np.diag(np.linspace(1.0, 10.0, n)) + noise * rng.standard_normal((n, n))
    b = rng.standard_normal(n)
    return CsrMatrix.from_dense(M), M, b


def clustered_system(n, seed, n_clusters=6):
    """Symmetric with a few tight eigenvalue clusters: condition 10 and a
    small minimal polynomial, so every solver terminates in a handful of
    iterations."""
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    centers = np.linspace(1.0, 10.0, min(n, n_clusters))
    vals = np.tile(centers, n // len(centers) + 1)[:n]
    M = Q @ np.diag(vals) @ Q.T
    b = rng.standard_normal(n)
    return CsrMatrix.from_dense(M), M, b


def random_sparse(n_rows, n_cols, nnz, seed):
    """Random CSR with exactly nnz distinct positions."""
    rng = np.random.default_rng(seed)
    pos = rng.choice(n_rows * n_cols, size=nnz, replace=False)
    rows, cols = np.divmod(pos, n_cols)
    vals = rng.standard_normal(nnz)
    return CsrMatrix.from_coo(n_rows, n_cols, rows, cols, vals)


def dense_spmv_oracle(M, x):
    """Triple-loop matrix-vector product."""
    n_rows, n_cols = M.shape
    y = np.zeros(n_rows)
    for i in range(n_rows):
        acc = 0.0
        for j in range(n_cols):
            acc += M[i, j] * x[j]
        y[i] = acc
    return y


def sequential_axpy_oracle(y, X, alpha):
    """Left-to-right loop of single AXPYs."""
    out = y.copy()
    for j in range(X.shape[1]):
        out = out + alpha[j] * X[:, j]
    return out


def reference_qr(M):
    """Dense QR with the positive-diagonal sign convention."""
    Q, R = np.linalg.qr(M)
    s = np.sign(np.diag(R))
    s[s == 0] = 1.0
    return Q * s, (R.T * s).T


def least_squares_residual_oracle(Hbar, beta):
    """Residual of min ||Hbar y - beta e1|| via dense least squares."""
    rhs = np.zeros(Hbar.shape[0])
    rhs[0] = beta
    y, *_ = np.linalg.lstsq(Hbar, rhs, rcond=None)
    return np.linalg.norm(Hbar @ y - rhs)
