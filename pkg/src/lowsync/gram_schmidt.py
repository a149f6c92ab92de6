"""Orthogonalization kernels with exact synchronization counts.

Five ways to orthogonalize a new vector against an existing basis, ordered
by how many global reductions each one spends per column:

====================  =========================  ==================
kernel                reductions per column      orthogonality
====================  =========================  ==================
mgs_level1            p + 1 (p = basis size)     O(eps) * kappa
cgs_iterated          passes + 1                 O(eps) for 2 passes
cgs2_two_sync         2                          O(eps)
mgs_lvl2 (lagged)     1                          O(eps) * kappa
cgs2_lvl2 (lagged)    2                          O(eps)
====================  =========================  ==================

The lagged kernels defer the normalization of each column by one step: the
norm of column j-1 rides along in the same batched reduction that computes
the projection coefficients for column j, so the whole column update costs
a single synchronization.  The price is that the newest column of the basis
is stored un-normalized until the next call (``KrylovBasis.lag``).
"""

from __future__ import annotations

import math

import numpy as np

from .kernels import (
    EPS,
    FUSED,
    KrylovBasis,
    as_vector,
    dot,
    mass_inner_product,
    maxpy,
    mdot_pair,
    norm2,
)

__all__ = [
    "FactorState",
    "HappyBreakdown",
    "cgs_iterated",
    "mgs_level1",
    "cgs2_two_sync",
    "mgs_lvl2",
    "cgs2_lvl2",
    "apply_T",
    "qr_factorize",
]


class HappyBreakdown(Exception):
    """The projected column vanished: the basis already spans the new vector.

    GMRES treats this as solution-found; QR drivers surface it as rank
    deficiency.  Carries whatever coefficients were computed before the
    vanishing norm was detected.
    """

    def __init__(self, column, norm, tol, r_col=None):
        super().__init__(f"column {column} has residual norm {norm:.3e} <= {tol:.3e}")
        self.column = column
        self.norm = norm
        self.tol = tol
        self.r_col = r_col


class FactorState:
    """Small dense factors shared by the level-2 kernels.

    R is upper triangular with positive diagonal (zero only in breakdown).
    T is the upper-triangular correction factor of the projector
    I - Q T^T Q^T, built one column at a time by the recursion
    T_k = [[T_{k-1}, -T_{k-1} Q^T q_k], [0, 1]].  L collects the strictly
    lower triangle of Q^T Q for the two-pass classical path, whose
    correction I - L - L^T is materialized on the fly; the two T's are
    mathematically different objects and never share storage.
    """

    def __init__(self, capacity):
        self.capacity = capacity
        self.R = np.zeros((capacity, capacity))
        self.T = np.zeros((capacity, capacity))
        self.L = np.zeros((capacity, capacity))
        self.active = 0

    def reset(self):
        self.R[:] = 0.0
        self.T[:] = 0.0
        self.L[:] = 0.0
        self.active = 0


def _breakdown_tol(n, r_diag, r_col, factor):
    # The pre-projection magnitude is reconstructed from already-reduced
    # scalars (Pythagoras), so the check costs no extra synchronization.
    pre = math.hypot(r_diag, float(np.linalg.norm(r_col))) if len(r_col) else r_diag
    return factor * EPS * math.sqrt(n) * pre


def _check_breakdown(n, r_diag, r_col, factor, column):
    tol = _breakdown_tol(n, r_diag, r_col, factor)
    if r_diag <= tol:
        raise HappyBreakdown(column, r_diag, tol, r_col=np.array(r_col, copy=True))


def _columns(Q):
    if isinstance(Q, KrylovBasis):
        return Q.view(Q.n_cols)
    Q = np.asarray(Q, dtype=np.float64)
    if Q.ndim != 2:
        raise ValueError("basis must be a 2-d column block")
    return Q


def cgs_iterated(Q, a, passes, ledger, breakdown_tol_factor=1.0):
    """Classical Gram-Schmidt with fixed re-orthogonalization passes.

    Each pass costs one mass inner product (one reduction); the final
    normalization costs one norm, for passes + 1 reductions total against a
    non-empty basis.  Two passes restore orthogonality to machine level
    ("twice is enough"); one pass is the plain classical method whose loss
    of orthogonality grows with kappa^2.

    Returns (q_new, r_col, r_diag).
    """
    if passes < 1:
        raise ValueError("passes must be >= 1")
    Q = _columns(Q)
    p = Q.shape[1]
    work = as_vector(a).copy()
    r_col = np.zeros(p)
    for _ in range(passes if p else 0):
        s = mass_inner_product(Q, work, ledger)
        r_col += s
        work = maxpy(work, Q, -s)
    r_diag = norm2(work, ledger)
    _check_breakdown(work.shape[0], r_diag, r_col, breakdown_tol_factor, p)
    return work / r_diag, r_col, r_diag


def mgs_level1(Q, a, ledger, breakdown_tol_factor=1.0):
    """Modified Gram-Schmidt, one rank-1 update (and one reduction) per column.

    p single-scalar dot products plus the final norm: p + 1 reductions.
    Returns (q_new, r_col, r_diag).
    """
    Q = _columns(Q)
    p = Q.shape[1]
    work = as_vector(a).copy()
    r_col = np.zeros(p)
    for i in range(p):
        h = dot(Q[:, i], work, ledger)
        work -= h * Q[:, i]
        r_col[i] = h
    r_diag = norm2(work, ledger)
    _check_breakdown(work.shape[0], r_diag, r_col, breakdown_tol_factor, p)
    return work / r_diag, r_col, r_diag


def cgs2_two_sync(Q, state, a, q_prev, ledger, breakdown_tol_factor=1.0):
    """Re-orthogonalized classical Gram-Schmidt in two synchronizations.

    The loop-invariant form of two classical passes folds the correction
    into r = (I - L - L^T) Q^T a, where L is the strictly lower triangle of
    Q^T Q.  The row of L belonging to the newest finished column q_prev is
    fetched in the same batched reduction as Q^T a, so the whole update is
    one mass-product event plus one norm event.

    Returns (q_new, r_col, r_diag) and records the new L row in ``state``.
    """
    Q = _columns(Q)
    p = Q.shape[1]
    work = as_vector(a).copy()
    if p == 0:
        r_col = np.zeros(0)
    else:
        B = mdot_pair(Q, work, q_prev, ledger)
        y = B[:, 0]
        # ell[k] = q_prev . q_k; entries below the diagonal extend L by one row.
        ell = B[:, 1]
        if p >= 2:
            state.L[p - 1, : p - 1] = ell[: p - 1]
        Ls = state.L[:p, :p]
        r_col = y - Ls @ y - Ls.T @ y
        work = maxpy(work, Q, -r_col)
        state.active = p
    r_diag = norm2(work, ledger)
    _check_breakdown(work.shape[0], r_diag, r_col, breakdown_tol_factor, p)
    return work / r_diag, r_col, r_diag


def _lagged_reduce(V, j, ledger, overlap_eligible):
    """Shared front half of the lagged kernels: one batched reduction over
    columns [0, j-1) against the lagged column j-2 and the fresh column j-1."""
    p = j - 1
    Q = V.view(p)
    u = V.column(p - 1)
    w = V.column(p)
    G = mdot_pair(Q, u, w, ledger, kind=FUSED, overlap_eligible=overlap_eligible)
    return p, Q, u, w, G


def mgs_lvl2(V, state, j, ledger, krylov_scale=False, breakdown_tol_factor=1.0,
             overlap_eligible=False):
    """Lagged compact-WY modified Gram-Schmidt: one reduction per column.

    Call with j columns present (j >= 2): column j-2 is projected but not
    yet normalized, column j-1 is fresh.  The single batched reduction
    returns the products of both against the basis; the deferred norm of
    column j-2 is the square root of its own diagonal entry, so
    normalization costs nothing extra.  The projector coefficients are
    corrected through the triangular factor T so that the result matches a
    sequential modified Gram-Schmidt sweep.

    With ``krylov_scale=True`` the fresh column is treated as A times the
    un-normalized previous column (the Arnoldi look-ahead); coefficients
    and the stored vector are rescaled by the deferred norm so the factors
    stay those of the unit-vector recursion.  j = 1 is a legal no-op.
    """
    if j < 2:
        state.active = max(state.active, 0)
        return
    p, Q, u, w, G = _lagged_reduce(V, j, ledger, overlap_eligible)
    beta_sq = G[p - 1, 0]
    beta = math.sqrt(beta_sq) if beta_sq > 0.0 else 0.0
    _check_breakdown(V.n, beta, state.R[: p - 1, p - 1], breakdown_tol_factor, p - 1)
    u /= beta
    state.R[p - 1, p - 1] = beta
    if p >= 2:
        mvec = G[: p - 1, 0] / beta
        state.T[: p - 1, p - 1] = -(state.T[: p - 1, : p - 1] @ mvec)
    state.T[p - 1, p - 1] = 1.0
    y = G[:, 1].copy()
    y[p - 1] /= beta  # the left factor held u un-normalized
    c = state.T[:p, :p].T @ y
    if krylov_scale:
        c /= beta  # w itself carries one factor of the deferred norm
        w /= beta
    w -= Q @ c
    state.R[:p, p] = c
    state.active = p
    V.lag = 1


def cgs2_lvl2(V, state, j, ledger, krylov_scale=False, breakdown_tol_factor=1.0,
              overlap_eligible=False):
    """Lagged re-orthogonalized classical Gram-Schmidt: two reductions.

    Same batched front end as the modified kernel, but the first-pass
    coefficients are corrected by I - L - L^T and a full second projection
    q <- q - Q Q^T q is applied, costing one more mass product.  Both
    passes accumulate into the stored R column.  Keeps the basis
    orthonormal to machine precision regardless of conditioning.
    """
    if j < 2:
        return
    p, Q, u, w, G = _lagged_reduce(V, j, ledger, overlap_eligible)
    beta_sq = G[p - 1, 0]
    beta = math.sqrt(beta_sq) if beta_sq > 0.0 else 0.0
    _check_breakdown(V.n, beta, state.R[: p - 1, p - 1], breakdown_tol_factor, p - 1)
    u /= beta
    state.R[p - 1, p - 1] = beta
    if p >= 2:
        state.L[p - 1, : p - 1] = G[: p - 1, 0] / beta
    y = G[:, 1].copy()
    y[p - 1] /= beta
    Ls = state.L[:p, :p]
    r = y - Ls @ y - Ls.T @ y
    if krylov_scale:
        r /= beta
        w /= beta
    w -= Q @ r
    s = mass_inner_product(Q, w, ledger)
    w -= Q @ s
    state.R[:p, p] = r + s
    state.active = p
    V.lag = 1


def apply_T(state, y, transpose=False, path="wy"):
    """Apply the projector correction factor of the active block to y.

    path="wy": multiply by the stored upper-triangular T (or its
    transpose), the recursively built factor of the sequential-MGS
    projector.  path="cgs2": apply I - L - L^T, the symmetric correction of
    the two-pass classical method, materialized from the stored L columns.
    """
    k = state.active
    y = as_vector(y, k)
    if path == "wy":
        T = state.T[:k, :k]
        return (T.T @ y) if transpose else (T @ y)
    if path == "cgs2":
        L = state.L[:k, :k]
        return y - L @ y - L.T @ y
    raise ValueError(f"unknown path {path!r}")


_QR_METHODS = ("cgs1", "cgs2", "mgs", "cgs2_two_sync", "mgs_wy", "cgs2_wy")


def qr_factorize(M, method="mgs", ledger=None, breakdown_tol_factor=1.0):
    """Column-by-column QR factorization using any of the kernels.

    Returns (Q, R) with positive diagonal R.  The lagged methods finish
    with one explicit norm for the trailing column, whose deferred
    normalization has no following reduction to ride on.
    """
    from .kernels import ReductionLedger

    if method not in _QR_METHODS:
        raise ValueError(f"method must be one of {_QR_METHODS}")
    M = np.asarray(M, dtype=np.float64)
    n, k = M.shape
    if ledger is None:
        ledger = ReductionLedger()
    basis = KrylovBasis(n, k)
    state = FactorState(max(k, 1))
    if method in ("mgs_wy", "cgs2_wy"):
        kernel = mgs_lvl2 if method == "mgs_wy" else cgs2_lvl2
        basis.push(M[:, 0])
        basis.lag = 1
        for j in range(2, k + 1):
            basis.push(M[:, j - 1])
            kernel(basis, state, j, ledger,
                   breakdown_tol_factor=breakdown_tol_factor)
        u = basis.column(k - 1)
        r_diag = norm2(u, ledger)
        _check_breakdown(n, r_diag, state.R[: k - 1, k - 1],
                         breakdown_tol_factor, k - 1)
        u /= r_diag
        state.R[k - 1, k - 1] = r_diag
        basis.lag = 0
        return basis.view(k).copy(), state.R[:k, :k].copy()

    R = np.zeros((k, k))
    for jcol in range(k):
        a = M[:, jcol]
        if method == "cgs1":
            q, r_col, r_diag = cgs_iterated(basis.view(jcol), a, 1, ledger,
                                            breakdown_tol_factor)
        elif method == "cgs2":
            q, r_col, r_diag = cgs_iterated(basis.view(jcol), a, 2, ledger,
                                            breakdown_tol_factor)
        elif method == "mgs":
            q, r_col, r_diag = mgs_level1(basis.view(jcol), a, ledger,
                                          breakdown_tol_factor)
        else:
            q_prev = basis.column(jcol - 1) if jcol else None
            q, r_col, r_diag = cgs2_two_sync(basis.view(jcol), state, a, q_prev,
                                             ledger, breakdown_tol_factor)
        R[:jcol, jcol] = r_col
        R[jcol, jcol] = r_diag
        basis.push(q)
    return basis.view(k).copy(), R
