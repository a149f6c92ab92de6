"""GMRES drivers built on the orthogonalization kernels.

Six variants, differing only in how they orthogonalize the Krylov basis and
therefore in how many global reductions each iteration costs:

==============  ==========================================  ==============
method          orthogonalization                           reductions/it
==============  ==========================================  ==============
mgs_l1          level-1 modified Gram-Schmidt               i + 1
cgs2            classical Gram-Schmidt, two passes          3
two_sync_cgs2   lagged two-pass classical (level 2)         2
one_sync_mgs    lagged compact-WY modified (level 2)        1
pipeline2       one_sync_mgs on a depth-2 schedule          1
cgs1_ghysels    classical, Pythagorean norm substitute      1
==============  ==========================================  ==============

The lagged variants orthogonalize the look-ahead column A v_{i+1} in the
same call that delivers the deferred norm of column i+1, so the Hessenberg
column for iteration i is finished one loop step after its coefficients
were produced, and the Givens update runs one column behind the matvec.
The cgs1_ghysels variant replaces the norm of the projected vector with
sqrt(||z||^2 - ||h||^2); the subtraction cancels catastrophically once
orthogonality degrades, which the driver detects and reports as a
``cancellation_failure`` outcome rather than a crash.

Right preconditioning is used throughout, so residual norms are always
those of the original system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import diagnostics
from .gram_schmidt import (
    FactorState,
    HappyBreakdown,
    cgs_iterated,
    cgs2_lvl2,
    mgs_level1,
    mgs_lvl2,
)
from .kernels import (
    EPS,
    KrylovBasis,
    ReductionLedger,
    as_vector,
    fused_mdot_norm,
    maxpy,
    norm2,
    spmv,
    _local_norm,
)

CONVERGED = "converged"
STALLED_MAXITER = "stalled_maxiter"
BREAKDOWN = "breakdown"
CANCELLATION_FAILURE = "cancellation_failure"

METHODS = ("mgs_l1", "cgs1_ghysels", "cgs2", "two_sync_cgs2", "one_sync_mgs",
           "pipeline2")

_METHOD_ALIASES = {
    "mgs-l1": "mgs_l1",
    "mgs": "mgs_l1",
    "cgs1-ghysels": "cgs1_ghysels",
    "ghysels": "cgs1_ghysels",
    "two-sync": "two_sync_cgs2",
    "two_sync": "two_sync_cgs2",
    "one-sync": "one_sync_mgs",
    "one_sync": "one_sync_mgs",
}


def canonical_method(name):
    """Resolve a user-facing method name to its canonical identifier."""
    key = name.strip().lower()
    key = _METHOD_ALIASES.get(key, key)
    if key not in METHODS:
        raise ValueError(f"unknown method {name!r}; choose from {METHODS}")
    return key


@dataclass
class GmresConfig:
    restart_m: int = 50
    max_restarts: int = 10
    rel_tol: float = 1e-6
    method: str = "one_sync_mgs"
    precond: str = "none"
    breakdown_tol_factor: float = 1.0

    def __post_init__(self):
        if self.restart_m < 1:
            raise ValueError("restart_m must be >= 1")
        if not self.rel_tol > 0.0:
            raise ValueError("rel_tol must be positive")
        self.method = canonical_method(self.method)
        if self.precond not in ("none", "jacobi"):
            raise ValueError("precond must be 'none' or 'jacobi'")


class Preconditioner:
    """Right preconditioner: identity or division by the matrix diagonal."""

    def __init__(self, kind, A=None):
        if kind not in ("none", "jacobi"):
            raise ValueError("precond must be 'none' or 'jacobi'")
        self.kind = kind
        self.inv_diag = None
        if kind == "jacobi":
            d = A.diagonal_values()
            if np.any(d == 0.0):
                raise ValueError("jacobi preconditioner requires a zero-free diagonal")
            self.inv_diag = 1.0 / d


def apply_preconditioner(precond, v):
    """Apply M^{-1} to v; ``None`` or kind 'none' is the identity."""
    v = as_vector(v)
    if precond is None or precond.kind == "none":
        return v
    return v * precond.inv_diag


class GivensState:
    """Accumulated Givens rotations, the rotated triangle, and the rotated rhs.

    ``g`` starts as beta * e_1; after i rotations, |g[i]| is the implicit
    residual norm of the iteration-i least-squares problem.
    """

    def __init__(self, m, beta):
        self.rotations: list[tuple[float, float]] = []
        self.g = np.zeros(m + 1)
        self.g[0] = beta
        self.tri = np.zeros((m + 1, m))


def _rotation(a, b):
    # Identity when the subdiagonal entry is already zero.
    if b == 0.0:
        return 1.0, 0.0
    if a == 0.0:
        return 0.0, 1.0
    r = math.hypot(a, b)
    return a / r, b / r


def givens_update(state, h_col, i):
    """Fold Hessenberg column i (1-based, i+1 entries) into the triangle.

    Applies the stored rotations, computes and stores rotation i
    annihilating the subdiagonal entry, updates the rotated rhs, and
    returns the implicit residual norm |g[i]|.
    """
    if len(state.rotations) != i - 1:
        raise ValueError(f"expected {i - 1} prior rotations, have {len(state.rotations)}")
    h = np.asarray(h_col, dtype=np.float64).copy()
    if h.shape[0] != i + 1:
        raise ValueError(f"column {i} must have {i + 1} entries")
    for k, (c, s) in enumerate(state.rotations):
        t = c * h[k] + s * h[k + 1]
        h[k + 1] = -s * h[k] + c * h[k + 1]
        h[k] = t
    c, s = _rotation(h[i - 1], h[i])
    h[i - 1] = c * h[i - 1] + s * h[i]
    h[i] = 0.0
    state.rotations.append((c, s))
    gi = state.g[i - 1]
    state.g[i - 1] = c * gi
    state.g[i] = -s * gi
    state.tri[: i + 1, i - 1] = h
    return float(abs(state.g[i]))


class SingularHessenberg(Exception):
    """The rotated triangle has a zero diagonal: least-squares breakdown."""


def solve_least_squares(state, k):
    """Back-substitute the rotated k x k triangle for the update coefficients."""
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        d = state.tri[i, i]
        if d == 0.0:
            raise SingularHessenberg(f"zero diagonal at {i}")
        y[i] = (state.g[i] - state.tri[i, i + 1 : k] @ y[i + 1 : k]) / d
    return y


@dataclass
class IterationRecord:
    iteration: int
    implicit_rel_res: float
    true_rel_res: float | None = None
    s_norm: float | None = None
    orth_loss: float | None = None
    reductions: int = 0


class ConvergenceHistory:
    """Per-iteration records plus attachments for offline analysis.

    ``basis`` and ``hessenberg`` hold the final cycle's normalized Krylov
    columns V_{k+1} and extended Hessenberg Hbar_k, enough to verify the
    Arnoldi recurrence after the fact.
    """

    def __init__(self):
        self.records: list[IterationRecord] = []
        self.outcome: str | None = None
        self.denom = 1.0
        self.cycle_starts: list[int] = []
        self.basis = None
        self.hessenberg = None
        self.k = 0
        self.final_true_rel_res = None
        self.method = None

    @property
    def iterations(self):
        return len(self.records)

    def implicit_curve(self):
        return np.array([r.implicit_rel_res for r in self.records])

    def stall_iteration(self, level=0.99):
        """First iteration whose basis-independence measure reached ``level``."""
        for rec in self.records:
            if rec.s_norm is not None and rec.s_norm >= level:
                return rec.iteration
        return None


class _SolverRun:
    """One solve: restart shell plus a per-variant cycle body."""

    def __init__(self, A, b, x0, config, ledger, diagnostics_every,
                 true_residual_every):
        if A.n_rows != A.n_cols:
            raise ValueError("GMRES needs a square matrix")
        self.A = A
        self.n = A.n_rows
        self.b = as_vector(b, self.n)
        if not np.any(self.b):
            raise ValueError("right-hand side must be nonzero")
        self.x = as_vector(x0, self.n).copy() if x0 is not None else np.zeros(self.n)
        self.config = config
        self.ledger = ledger if ledger is not None else ReductionLedger()
        self.pc = Preconditioner(config.precond, A)
        self.m = min(config.restart_m, self.n)
        self.diag_every = diagnostics_every
        self.true_every = true_residual_every
        self.history = ConvergenceHistory()
        self.history.method = config.method
        self.global_it = 0

    # -- shared pieces -----------------------------------------------------

    def _op(self, v):
        return spmv(self.A, apply_preconditioner(self.pc, v))

    def _diagnostics(self, V, ncols):
        if not self.diag_every or self.global_it % self.diag_every:
            return None, None
        Q = V.view(ncols)
        return diagnostics.paige_metric(Q), diagnostics.orthogonality_loss(Q)

    def _trial_true_rel(self, V, gs, k):
        if k < 1:
            return None
        y = solve_least_squares(gs, k)
        x_try = self.x + apply_preconditioner(self.pc, V.view(k) @ y)
        return _local_norm(self.b - spmv(self.A, x_try)) / self.history.denom

    def _record(self, V, gs, ncols_norm, rel, nred, k_so_far):
        s_norm, orth = self._diagnostics(V, ncols_norm)
        true_rel = None
        if self.true_every and self.global_it % self.true_every == 0:
            true_rel = self._trial_true_rel(V, gs, k_so_far)
        self.history.records.append(IterationRecord(
            iteration=self.global_it,
            implicit_rel_res=float(rel),
            true_rel_res=None if true_rel is None else float(true_rel),
            s_norm=s_norm,
            orth_loss=orth,
            reductions=nred,
        ))

    def _extract(self, V, gs, k):
        if k >= 1:
            y = solve_least_squares(gs, k)
            self.x = self.x + apply_preconditioner(self.pc, V.view(k) @ y)

    def _stash(self, V, H, k, ncols_norm):
        self.history.k = k
        cols = min(ncols_norm, k + 1)
        basis = np.zeros((self.n, k + 1))
        basis[:, :cols] = V.view(cols)
        self.history.basis = basis
        self.history.hessenberg = H[: k + 1, :k].copy()

    # -- non-lagged cycle (mgs_l1 / cgs2 / cgs1_ghysels) ---------------------

    def _cycle_direct(self, r, beta, target):
        method = self.config.method
        btf = self.config.breakdown_tol_factor
        V = KrylovBasis(self.n, self.m + 1)
        V.push(r / beta)
        gs = GivensState(self.m, beta)
        H = np.zeros((self.m + 1, self.m))
        status = "full"
        k = self.m
        extracted = False
        for i in range(1, self.m + 1):
            self.global_it += 1
            self.ledger.iteration = self.global_it
            mark = len(self.ledger)
            z = self._op(V.column(i - 1))
            broke = False
            if method == "cgs1_ghysels":
                y, znorm = fused_mdot_norm(V.view(i), z, z, self.ledger)
                H[:i, i - 1] = y
                rad = znorm * znorm - float(np.dot(y, y))
                if rad > 0.0 and rad >= 4.0 * EPS * znorm * znorm:
                    h = math.sqrt(rad)
                    H[i, i - 1] = h
                    V.push(maxpy(z, V.view(i), -y) / h)
                else:
                    # The Pythagorean subtraction lost all its digits; with
                    # the subdiagonal forced to zero the implicit residual
                    # reads zero, so only a true-residual check can tell
                    # exhaustion of the space from numerical cancellation.
                    H[i, i - 1] = 0.0
                    res = givens_update(gs, H[: i + 1, i - 1], i)
                    try:
                        y_ls = solve_least_squares(gs, i)
                        x_cand = self.x + apply_preconditioner(
                            self.pc, V.view(i) @ y_ls)
                        true_abs = norm2(self.b - spmv(self.A, x_cand),
                                         self.ledger)
                    except SingularHessenberg:
                        x_cand = None
                        true_abs = math.inf
                    if x_cand is not None and (true_abs <= target or rad == 0.0):
                        self._record(V, gs, V.n_cols, res / self.history.denom,
                                     len(self.ledger) - mark, i)
                        self.x = x_cand
                        k = i
                        extracted = True
                        status = CONVERGED if true_abs <= target else BREAKDOWN
                    else:
                        # Aborted attempt: no completed iteration to record.
                        k = i - 1
                        status = CANCELLATION_FAILURE
                    break
            else:
                try:
                    if method == "cgs2":
                        q, r_col, r_diag = cgs_iterated(V.view(i), z, 2,
                                                        self.ledger, btf)
                    else:
                        q, r_col, r_diag = mgs_level1(V.view(i), z, self.ledger, btf)
                    H[:i, i - 1] = r_col
                    H[i, i - 1] = r_diag
                    V.push(q)
                except HappyBreakdown as e:
                    H[:i, i - 1] = e.r_col
                    H[i, i - 1] = 0.0
                    broke = True
            res = givens_update(gs, H[: i + 1, i - 1], i)
            rel = res / self.history.denom
            self._record(V, gs, V.n_cols, rel, len(self.ledger) - mark, i)
            if res <= target or broke:
                k = i
                status = CONVERGED if res <= target else BREAKDOWN
                break
        if not extracted:
            self._extract(V, gs, k)
        self._stash(V, H, k, V.n_cols)
        return status

    # -- lagged cycle (one_sync_mgs / two_sync_cgs2 / pipeline2) -------------

    def _cycle_lagged(self, r, beta, target, pipeline=False):
        kernel = cgs2_lvl2 if self.config.method == "two_sync_cgs2" else mgs_lvl2
        btf = self.config.breakdown_tol_factor
        V = KrylovBasis(self.n, self.m + 2)
        fs = FactorState(self.m + 2)
        gs = GivensState(self.m, beta)
        H = np.zeros((self.m + 1, self.m))
        V.push(r / beta)
        base = self.global_it
        # Startup: produce the look-ahead column and its coefficients; the
        # first Hessenberg column stays open until the deferred norm lands.
        self.ledger.iteration = base
        V.push(self._op(V.column(0)))
        kernel(V, fs, 2, self.ledger, krylov_scale=True, breakdown_tol_factor=btf)
        H[0, 0] = fs.R[0, 1]
        status = "full"
        k = self.m

        def advance(i, eligible):
            """SpMV + one lagged orthogonalization; finishes H column i."""
            self.ledger.iteration = base + i
            mark = len(self.ledger)
            V.push(self._op(V.column(i)))
            try:
                kernel(V, fs, i + 2, self.ledger, krylov_scale=True,
                       breakdown_tol_factor=btf, overlap_eligible=eligible)
            except HappyBreakdown:
                H[i, i - 1] = 0.0
                return len(self.ledger) - mark, True
            H[i, i - 1] = fs.R[i, i]
            if i < self.m:
                # Pre-computed coefficients for the next column; its own
                # subdiagonal entry arrives with the next deferred norm.
                # At i == m the look-ahead falls outside the restart window
                # and is discarded.
                H[: i + 1, i] = fs.R[: i + 1, i + 1]
            return len(self.ledger) - mark, False

        def settle(i, nred, broke):
            """Apply the deferred Givens update and record iteration i."""
            self.global_it = base + i
            res = givens_update(gs, H[: i + 1, i - 1], i)
            rel = res / self.history.denom
            self._record(V, gs, i if broke else i + 1, rel, nred, i)
            if res <= target or broke:
                return CONVERGED if res <= target else BREAKDOWN
            return None

        if not pipeline:
            for i in range(1, self.m + 1):
                nred, broke = advance(i, False)
                st = settle(i, nred, broke)
                if st:
                    status, k = st, i
                    break
        else:
            # Depth-2 schedule: two matvec+orthogonalization slots, then the
            # two deferred Givens updates.  Same arithmetic in the same
            # order as the sequential loop; only bookkeeping moves.
            i = 1
            while i <= self.m and status == "full":
                pair = [i] if i == self.m else [i, i + 1]
                staged = []
                for t in pair:
                    nred, broke = advance(t, True)
                    staged.append((t, nred, broke))
                    if broke:
                        break
                for t, nred, broke in staged:
                    st = settle(t, nred, broke)
                    if st:
                        status, k = st, t
                        break
                i += len(pair)
        ncols_norm = k + (0 if status == BREAKDOWN else 1)
        self._extract(V, gs, k)
        self._stash(V, H, k, ncols_norm)
        return status

    # -- restart shell -------------------------------------------------------

    def run(self):
        self.ledger.iteration = 0
        r = self.b - spmv(self.A, self.x)
        beta = norm2(r, self.ledger)
        self.history.denom = beta if beta > 0.0 else 1.0
        if beta == 0.0:
            self.history.outcome = CONVERGED
            self.history.final_true_rel_res = 0.0
            return self.x, self.history
        target = self.config.rel_tol * beta
        outcome = None
        saw_cancellation = False
        for _cycle in range(self.config.max_restarts):
            self.history.cycle_starts.append(self.global_it)
            if self.config.method in ("one_sync_mgs", "two_sync_cgs2"):
                status = self._cycle_lagged(r, beta, target)
            elif self.config.method == "pipeline2":
                status = self._cycle_lagged(r, beta, target, pipeline=True)
            else:
                status = self._cycle_direct(r, beta, target)
            if status in (CONVERGED, BREAKDOWN):
                outcome = status
                break
            if status == CANCELLATION_FAILURE:
                # The cycle aborted; restarting from the best iterate gives
                # an honest residual, which may already be at tolerance.
                saw_cancellation = True
            # Restart: the true residual is recomputed and reduced once.
            r = self.b - spmv(self.A, self.x)
            self.ledger.iteration = self.global_it
            beta = norm2(r, self.ledger)
            rel = beta / self.history.denom
            if self.history.records:
                self.history.records[-1].true_rel_res = rel
            if beta <= target:
                outcome = CONVERGED
                break
        if outcome is None:
            outcome = CANCELLATION_FAILURE if saw_cancellation else STALLED_MAXITER
        # Final verification reduce.
        self.ledger.iteration = self.global_it
        final_rel = norm2(self.b - spmv(self.A, self.x), self.ledger) / self.history.denom
        self.history.final_true_rel_res = final_rel
        if self.history.records:
            self.history.records[-1].true_rel_res = final_rel
        self.history.outcome = outcome
        return self.x, self.history


def _run(method, A, b, x0, config, ledger, diagnostics_every, true_residual_every):
    config = replace(config, method=method) if config is not None else \
        GmresConfig(method=method)
    return _SolverRun(A, b, x0, config, ledger, diagnostics_every,
                      true_residual_every).run()


def gmres_mgs_l1(A, b, x0=None, config=None, ledger=None, diagnostics_every=1,
                 true_residual_every=0):
    """Level-1 modified Gram-Schmidt GMRES: i + 1 reductions at iteration i."""
    return _run("mgs_l1", A, b, x0, config, ledger, diagnostics_every,
                true_residual_every)


def gmres_cgs2(A, b, x0=None, config=None, ledger=None, diagnostics_every=1,
               true_residual_every=0):
    """Two-pass classical Gram-Schmidt GMRES: 3 reductions per iteration."""
    return _run("cgs2", A, b, x0, config, ledger, diagnostics_every,
                true_residual_every)


def gmres_cgs1_ghysels(A, b, x0=None, config=None, ledger=None,
                       diagnostics_every=1, true_residual_every=0):
    """Single-pass classical GMRES with the Pythagorean norm substitute.

    One fused reduction per iteration while it runs; expected to end in
    ``cancellation_failure`` on ill-conditioned systems.
    """
    return _run("cgs1_ghysels", A, b, x0, config, ledger, diagnostics_every,
                true_residual_every)


def gmres_two_sync(A, b, x0=None, config=None, ledger=None, diagnostics_every=1,
                   true_residual_every=0):
    """Lagged two-pass classical GMRES: exactly 2 reductions per iteration."""
    return _run("two_sync_cgs2", A, b, x0, config, ledger, diagnostics_every,
                true_residual_every)


def gmres_one_sync(A, b, x0=None, config=None, ledger=None, diagnostics_every=1,
                   true_residual_every=0):
    """Lagged compact-WY modified GMRES: exactly 1 reduction per iteration."""
    return _run("one_sync_mgs", A, b, x0, config, ledger, diagnostics_every,
                true_residual_every)


def gmres_pipeline2(A, b, x0=None, config=None, ledger=None, diagnostics_every=1,
                    true_residual_every=0):
    """Depth-2 schedule of the one-reduction variant, executed sequentially.

    Produces bitwise-identical residual histories to ``gmres_one_sync``;
    reduction events carry an ``overlap_eligible`` tag recording that, at
    issue time, the schedule held independent work (the pair partner's
    matvec or the deferred rotation updates) that a message-passing run
    could overlap with the reduction.  Overlap is recorded, not executed.
    """
    return _run("pipeline2", A, b, x0, config, ledger, diagnostics_every,
                true_residual_every)


_DISPATCH = {
    "mgs_l1": gmres_mgs_l1,
    "cgs2": gmres_cgs2,
    "cgs1_ghysels": gmres_cgs1_ghysels,
    "two_sync_cgs2": gmres_two_sync,
    "one_sync_mgs": gmres_one_sync,
    "pipeline2": gmres_pipeline2,
}


def solve(A, b, x0=None, config=None, ledger=None, diagnostics_every=1,
          true_residual_every=0):
    """Dispatch to the variant named by ``config.method``."""
    config = config if config is not None else GmresConfig()
    fn = _DISPATCH[config.method]
    return fn(A, b, x0, config, ledger, diagnostics_every, true_residual_every)
