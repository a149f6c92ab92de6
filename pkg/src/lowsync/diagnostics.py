"""Stability instrumentation: orthogonality-loss metrics and Arnoldi checks.

Everything here is measurement-only.  None of these functions touch the
reduction ledger, so they can run at any cadence without perturbing the
synchronization counts of the solve they observe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import spmv


def spectral_norm_small(M, tol=1e-10, max_iter_factor=10, seed=7):
    """2-norm of a small dense matrix by power iteration on M^T M.

    Deterministic: the start vector comes from a fixed-seed generator.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.size == 0:
        return 0.0
    p = M.shape[1]
    B = M.T @ M
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(p)
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return 0.0
    v /= nv
    lam = 0.0
    for _ in range(max_iter_factor * max(p, 1)):
        w = B @ v
        lam_new = float(np.linalg.norm(w))
        if lam_new == 0.0:
            return 0.0
        v = w / lam_new
        if abs(lam_new - lam) <= tol * lam_new:
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(lam))


def paige_metric(Q):
    """Loss-of-independence measure ||S||_2 with S = (I + L^T)^{-1} L^T.

    L is the strictly lower triangle of Q^T Q.  The value sits at rounding
    level for orthonormal columns and climbs to one as the columns lose
    linear independence, which is exactly when a Krylov solver built on Q
    stops making progress.
    """
    Q = np.asarray(Q, dtype=np.float64)
    p = Q.shape[1]
    if p < 1:
        raise ValueError("needs at least one column")
    G = Q.T @ Q
    Lt = np.triu(G, 1)
    S = np.linalg.solve(np.eye(p) + Lt, Lt)
    return spectral_norm_small(S)


def orthogonality_loss(Q):
    """||I - Q^T Q||_2 of a column block."""
    Q = np.asarray(Q, dtype=np.float64)
    p = Q.shape[1]
    return spectral_norm_small(np.eye(p) - Q.T @ Q)


def arnoldi_residual(A, V, H_bar, m):
    """Relative Frobenius defect of A V_m = V_{m+1} Hbar_m.

    The recurrence holds to rounding level even after the basis has lost
    orthogonality, so this is a consistency check on the bookkeeping, not
    on the conditioning.
    """
    V = np.asarray(V, dtype=np.float64)
    AV = np.empty((V.shape[0], m))
    for k in range(m):
        AV[:, k] = spmv(A, V[:, k])
    defect = AV - V[:, : m + 1] @ np.asarray(H_bar)[: m + 1, :m]
    return float(np.linalg.norm(defect)) / A.frobenius_norm()


@dataclass
class StabilityReport:
    """Per-iteration stability curves plus headline scalars."""

    s_norm: np.ndarray
    orth_loss: np.ndarray
    stall_iteration: int | None
    kappa_estimate: float | None = None
    arnoldi_defect: float | None = None

    @classmethod
    def from_history(cls, history, kappa_estimate=None, arnoldi_defect=None,
                     stall_level=0.99):
        s = np.array([np.nan if r.s_norm is None else r.s_norm
                      for r in history.records])
        o = np.array([np.nan if r.orth_loss is None else r.orth_loss
                      for r in history.records])
        stall = None
        for rec in history.records:
            if rec.s_norm is not None and rec.s_norm >= stall_level:
                stall = rec.iteration
                break
        return cls(s_norm=s, orth_loss=o, stall_iteration=stall,
                   kappa_estimate=kappa_estimate, arnoldi_defect=arnoldi_defect)
