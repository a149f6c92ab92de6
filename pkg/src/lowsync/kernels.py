"""Core vector/matrix primitives with global-reduction accounting.

Every operation whose distributed-memory realization would require an
all-ranks summation (dot products, mass inner products, norms) appends one
event to a :class:`ReductionLedger`.  Operations that are data-parallel by
rows (sparse matvec, multi-vector AXPY) append nothing.  The ledger is the
desk-scale stand-in for counting AllReduce calls, so event counts are an
exact contract, not a statistic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = np.finfo(np.float64).eps

MDOT = "mdot"
NORM = "norm"
FUSED = "fused_mdot_norm"
DOT = "dot"

_KINDS = (MDOT, NORM, FUSED, DOT)


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class NonFiniteError(ArithmeticError):
    """A NaN or Inf appeared where the contract requires finite values."""


def as_vector(x, n=None):
    """Coerce to a contiguous float64 1-d array, optionally checking length."""
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"expected a vector, got shape {v.shape}")
    if n is not None and v.shape[0] != n:
        raise DimensionError(f"expected length {n}, got {v.shape[0]}")
    return v


def require_finite(v, label="vector"):
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"{label} contains NaN or Inf")
    return v


@dataclass
class ReductionEvent:
    iteration: int
    kind: str
    scalar_count: int
    overlap_eligible: bool = False


class ReductionLedger:
    """Append-only log of global-reduction events.

    ``iteration`` is an attribution cursor set by the solver loop; every
    recorded event is stamped with its current value.  A fused event counts
    as exactly one event no matter how many scalars it reduces.
    """

    def __init__(self):
        self.events: list[ReductionEvent] = []
        self.iteration = 0

    def record(self, kind, scalar_count, overlap_eligible=False):
        if kind not in _KINDS:
            raise ValueError(f"unknown reduction kind {kind!r}")
        self.events.append(
            ReductionEvent(self.iteration, kind, int(scalar_count), overlap_eligible)
        )

    def __len__(self):
        return len(self.events)

    def events_in_iteration(self, iteration):
        return [e for e in self.events if e.iteration == iteration]

    def counts_per_iteration(self):
        """Map iteration -> number of events attributed to it."""
        out: dict[int, int] = {}
        for e in self.events:
            out[e.iteration] = out.get(e.iteration, 0) + 1
        return out

    def counts_by_kind(self):
        out = {k: 0 for k in _KINDS}
        for e in self.events:
            out[e.kind] += 1
        return out


@dataclass
class CsrMatrix:
    """Square-or-rectangular sparse matrix in compressed-sparse-row form.

    ``row_ptr`` has length ``n_rows + 1`` and is non-decreasing; column
    indices are strictly increasing within each row.
    """

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        self.col_idx = np.ascontiguousarray(self.col_idx, dtype=np.int64)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        self.validate()

    def validate(self):
        nnz = self.values.shape[0]
        if self.row_ptr.shape[0] != self.n_rows + 1:
            raise ValueError("row_ptr must have length n_rows + 1")
        if self.col_idx.shape[0] != nnz:
            raise ValueError("col_idx and values must have equal length")
        if self.row_ptr[0] != 0 or self.row_ptr[-1] != nnz:
            raise ValueError("row_ptr must start at 0 and end at nnz")
        if np.any(np.diff(self.row_ptr) < 0):
            raise ValueError("row_ptr must be non-decreasing")
        if nnz and (self.col_idx.min() < 0 or self.col_idx.max() >= self.n_cols):
            raise ValueError("column index out of range")
        for i in range(self.n_rows):
            lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
            if hi - lo > 1 and np.any(np.diff(self.col_idx[lo:hi]) <= 0):
                raise ValueError(f"column indices not strictly increasing in row {i}")

    @property
    def nnz(self):
        return self.values.shape[0]

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @classmethod
    def from_dense(cls, M, drop_tol=0.0):
        M = np.asarray(M, dtype=np.float64)
        n_rows, n_cols = M.shape
        row_ptr = [0]
        col_idx = []
        values = []
        for i in range(n_rows):
            for j in range(n_cols):
                if abs(M[i, j]) > drop_tol:
                    col_idx.append(j)
                    values.append(M[i, j])
            row_ptr.append(len(values))
        return cls(n_rows, n_cols, np.array(row_ptr), np.array(col_idx, dtype=np.int64),
                   np.array(values, dtype=np.float64))

    @classmethod
    def from_coo(cls, n_rows, n_cols, rows, cols, vals):
        """Build from coordinate triples; duplicates are summed, rows sorted."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            keep = np.ones(rows.size, dtype=bool)
            keep[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            group = np.cumsum(keep) - 1
            summed = np.zeros(group[-1] + 1)
            np.add.at(summed, group, vals)
            rows, cols, vals = rows[keep], cols[keep], summed
        row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.add.at(row_ptr, rows + 1, 1)
        row_ptr = np.cumsum(row_ptr)
        return cls(n_rows, n_cols, row_ptr, cols, vals)

    @classmethod
    def diagonal(cls, diag):
        diag = np.asarray(diag, dtype=np.float64)
        n = diag.shape[0]
        return cls(n, n, np.arange(n + 1), np.arange(n), diag.copy())

    def diagonal_values(self):
        """Extract the main diagonal (zeros where absent)."""
        d = np.zeros(min(self.n_rows, self.n_cols))
        for i in range(d.shape[0]):
            lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
            k = np.searchsorted(self.col_idx[lo:hi], i)
            if k < hi - lo and self.col_idx[lo + k] == i:
                d[i] = self.values[lo + k]
        return d

    def frobenius_norm(self):
        return float(np.sqrt(np.dot(self.values, self.values)))

    def to_dense(self):
        M = np.zeros((self.n_rows, self.n_cols))
        for i in range(self.n_rows):
            lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
            M[i, self.col_idx[lo:hi]] = self.values[lo:hi]
        return M


class KrylovBasis:
    """Column store for basis vectors, column-major so each column is contiguous.

    ``lag`` tracks how many trailing columns are still waiting for their
    deferred normalization (0 or 1).  Capacity is fixed at construction; the
    lagged solvers need two look-ahead columns beyond the restart length.
    """

    def __init__(self, n, capacity):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.n = n
        self.capacity = capacity
        self.columns = np.zeros((n, capacity), order="F")
        self.n_cols = 0
        self.lag = 0

    def push(self, vec):
        """Append a column; returns its index."""
        if self.n_cols >= self.capacity:
            raise ValueError("basis is at capacity")
        self.columns[:, self.n_cols] = as_vector(vec, self.n)
        self.n_cols += 1
        return self.n_cols - 1

    def view(self, p):
        """First p columns as an (n, p) view, no copy."""
        if p < 0 or p > self.n_cols:
            raise ValueError(f"cannot view {p} of {self.n_cols} columns")
        return self.columns[:, :p]

    def column(self, j):
        if j < 0 or j >= self.n_cols:
            raise IndexError(f"column {j} of {self.n_cols}")
        return self.columns[:, j]

    def reset(self):
        self.n_cols = 0
        self.lag = 0

    def check_normalized(self):
        """Verify columns up to n_cols - lag have unit norm within 4*eps*sqrt(n)."""
        tol = 4.0 * EPS * np.sqrt(self.n)
        for j in range(self.n_cols - self.lag):
            nrm = float(np.linalg.norm(self.columns[:, j]))
            if abs(nrm - 1.0) > tol:
                raise ValueError(f"column {j} has norm {nrm!r}, outside unit tolerance")
        return True


def spmv(A, x):
    """Sparse matrix-vector product y = A x.

    Row-partitioned work; in the communication model this is local exchange
    only, so no ledger event is recorded.
    """
    x = as_vector(x, A.n_cols)
    with np.errstate(invalid="ignore"):
        prod = A.values * x[A.col_idx]
        y = np.zeros(A.n_rows)
        counts = np.diff(A.row_ptr)
        nonempty = counts > 0
        if prod.size:
            starts = A.row_ptr[:-1][nonempty]
            y[nonempty] = np.add.reduceat(prod, starts)
    require_finite(y, "spmv result")
    return y


def dot(x, y, ledger):
    """Single inner product; one ledger event of kind 'dot'."""
    x = as_vector(x)
    y = as_vector(y, x.shape[0])
    ledger.record(DOT, 1)
    return float(np.dot(x, y))


def norm2(x, ledger, overlap_eligible=False):
    """Euclidean norm with overflow-safe scaling; one 'norm' event."""
    x = as_vector(x)
    if np.any(np.isnan(x)):
        raise NonFiniteError("norm2 input contains NaN")
    ledger.record(NORM, 1, overlap_eligible)
    return _local_norm(x)


def _local_norm(x):
    # Scale by the largest magnitude so squaring cannot overflow.
    amax = float(np.max(np.abs(x))) if x.size else 0.0
    if amax == 0.0:
        return 0.0
    scaled = x / amax
    return amax * float(np.sqrt(np.dot(scaled, scaled)))


def mass_inner_product(X, y, ledger, overlap_eligible=False):
    """v[j] = <x_j, y> for all p columns of X in one reduction.

    p = 0 is a legal no-op: returns an empty array and records nothing.
    """
    X = np.asarray(X)
    p = X.shape[1]
    if p == 0:
        return np.zeros(0)
    y = as_vector(y, X.shape[0])
    ledger.record(MDOT, p, overlap_eligible)
    return X.T @ y


def fused_mdot_norm(X, y, z, ledger, overlap_eligible=False):
    """Mass inner product X^T y fused with ||z||_2 in one reduction.

    Records a single 'fused_mdot_norm' event covering p + 1 scalars.
    """
    X = np.asarray(X)
    p = X.shape[1]
    y = as_vector(y, X.shape[0])
    z = as_vector(z, X.shape[0])
    ledger.record(FUSED, p + 1, overlap_eligible)
    return X.T @ y, _local_norm(z)


def mdot_pair(X, u, w, ledger, kind=MDOT, overlap_eligible=False):
    """One reduction covering X^T u and X^T w jointly, returned as (p, 2).

    Batching two vectors into a single reduction is what makes the
    two-synchronization and lagged kernels possible.  When u is a
    not-yet-normalized column of X itself, the last entry of column 0 is
    u^T u, from which the deferred norm is recovered; callers record the
    event as 'fused_mdot_norm' in that case and as 'mdot' otherwise.
    """
    X = np.asarray(X)
    p = X.shape[1]
    if p == 0:
        return np.zeros((0, 2))
    u = as_vector(u, X.shape[0])
    w = as_vector(w, X.shape[0])
    ledger.record(kind, 2 * p, overlap_eligible)
    out = np.empty((p, 2))
    out[:, 0] = X.T @ u
    out[:, 1] = X.T @ w
    return out


def maxpy(y, X, alpha):
    """Multi-vector AXPY: y + sum_j alpha[j] * x_j.  Reduction-free.

    Summation order is the left-to-right column order, matching a loop of
    single AXPYs to a few ulps.
    """
    X = np.asarray(X)
    p = X.shape[1]
    alpha = as_vector(alpha, p) if p else np.zeros(0)
    y = as_vector(y, X.shape[0] if p else None)
    if p == 0:
        return y.copy()
    return y + X @ alpha
