"""Experiment harness: problem generators, Matrix Market I/O, runners.

The runner wires a generated (or loaded) system into a solver, then writes
machine-readable convergence output: a CSV with one row per iteration and a
JSON summary whose reduction totals are taken straight from the ledger.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .gmres import (
    BREAKDOWN,
    CANCELLATION_FAILURE,
    CONVERGED,
    GmresConfig,
    solve,
)
from .kernels import CsrMatrix, ReductionLedger, spmv

CSV_FIELDS = ("iter", "implicit_rel_res", "true_rel_res", "s_norm",
              "orth_loss", "reductions")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_STALL = 2
EXIT_BREAKDOWN = 3

# Diagnostics defaults to on below this size; the Gram matrix behind the
# orthogonality metrics costs O(n p^2), too much for large loaded systems.
DIAGNOSTICS_SIZE_LIMIT = 2000


class MatrixMarketError(ValueError):
    """Malformed or unsupported Matrix Market content."""


def load_matrix_market(path):
    """Parse a Matrix Market coordinate file into CSR form.

    Accepts real (or integer) general and symmetric matrices; symmetric
    storage is expanded to the full pattern.  One-based indices are
    converted, duplicates summed, rows sorted.
    """
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        header = fh.readline()
        tokens = header.strip().split()
        if len(tokens) != 5 or tokens[0].lower() != "%%matrixmarket":
            raise MatrixMarketError(f"malformed header: {header.strip()!r}")
        obj, fmt, fld, sym = (t.lower() for t in tokens[1:])
        if obj != "matrix":
            raise MatrixMarketError(f"unsupported object {obj!r}")
        if fmt != "coordinate":
            raise MatrixMarketError(f"only coordinate format is supported, got {fmt!r}")
        if fld in ("complex", "pattern"):
            raise MatrixMarketError(f"{fld} fields are not supported, real data required")
        if fld not in ("real", "integer"):
            raise MatrixMarketError(f"unknown field type {fld!r}")
        if sym not in ("general", "symmetric"):
            raise MatrixMarketError(f"unsupported symmetry {sym!r}")

        size_line = None
        for line in fh:
            s = line.strip()
            if not s or s.startswith("%"):
                continue
            size_line = s
            break
        if size_line is None:
            raise MatrixMarketError("missing size line")
        parts = size_line.split()
        if len(parts) != 3:
            raise MatrixMarketError(f"bad size line: {size_line!r}")
        n_rows, n_cols, nnz = (int(p) for p in parts)

        rows, cols, vals = [], [], []
        stored = 0
        for line in fh:
            s = line.strip()
            if not s or s.startswith("%"):
                continue
            parts = s.split()
            if len(parts) != 3:
                raise MatrixMarketError(f"bad entry line: {s!r}")
            i, j = int(parts[0]) - 1, int(parts[1]) - 1
            v = float(parts[2])
            if not (0 <= i < n_rows and 0 <= j < n_cols):
                raise MatrixMarketError(f"entry ({i + 1}, {j + 1}) out of range")
            stored += 1
            rows.append(i)
            cols.append(j)
            vals.append(v)
            if sym == "symmetric" and i != j:
                rows.append(j)
                cols.append(i)
                vals.append(v)
        if stored != nnz:
            raise MatrixMarketError(f"declared {nnz} entries, found {stored}")
    return CsrMatrix.from_coo(n_rows, n_cols, rows, cols, vals)


def gen_simoncini(n=100, first=1e-8):
    """Diagonal test matrix diag(first, 2, 3, ..., n).

    With the defaults the condition number is n / first = 1e10, controlled
    entirely by the tiny leading entry; it exposes the limiting accuracy of
    an orthogonalization scheme long before the iteration count does.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    diag = np.arange(1, n + 1, dtype=np.float64)
    diag[0] = first
    return CsrMatrix.diagonal(diag)


def gen_laplace2d(nx=10):
    """Five-point Laplacian on an nx-by-nx grid with Dirichlet boundary."""
    if nx < 1:
        raise ValueError("nx must be >= 1")
    n = nx * nx
    rows, cols, vals = [], [], []
    for iy in range(nx):
        for ix in range(nx):
            i = iy * nx + ix
            rows.append(i)
            cols.append(i)
            vals.append(4.0)
            for jx, jy in ((ix - 1, iy), (ix + 1, iy), (ix, iy - 1), (ix, iy + 1)):
                if 0 <= jx < nx and 0 <= jy < nx:
                    rows.append(i)
                    cols.append(jy * nx + jx)
                    vals.append(-1.0)
    return CsrMatrix.from_coo(n, n, rows, cols, vals)


def gen_rhs(kind, A, seed=None):
    """Right-hand side: unit-norm seeded Gaussian, or the image of all-ones."""
    if kind == "ones_image":
        return spmv(A, np.ones(A.n_cols))
    if kind == "random":
        if seed is None:
            raise ValueError("random rhs requires a seed")
        rng = np.random.default_rng(seed)
        b = rng.standard_normal(A.n_rows)
        return b / np.linalg.norm(b)
    raise ValueError(f"unknown rhs kind {kind!r}")


@dataclass
class ExperimentSpec:
    """One experiment: exactly one problem source, a rhs recipe, a solver."""

    problem: str = "simoncini"           # simoncini | laplace2d | mtx
    matrix_path: str | None = None
    n: int = 100
    first_diag: float = 1e-8
    nx: int = 10
    rhs: str = "random"                  # random | ones_image
    seed: int | None = 42
    solver: GmresConfig = field(default_factory=GmresConfig)
    csv_path: str | None = None
    json_path: str | None = None
    plot_path: str | None = None
    diagnostics_every: int | None = None  # None: auto by problem size

    def __post_init__(self):
        if self.problem not in ("simoncini", "laplace2d", "mtx"):
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.problem == "mtx" and not self.matrix_path:
            raise ValueError("mtx problem requires matrix_path")
        if self.problem != "mtx" and self.matrix_path:
            raise ValueError("exactly one problem source allowed")
        if self.rhs == "random" and self.seed is None:
            raise ValueError("random rhs requires a seed")

    def build_matrix(self):
        if self.problem == "simoncini":
            return gen_simoncini(self.n, self.first_diag)
        if self.problem == "laplace2d":
            return gen_laplace2d(self.nx)
        return load_matrix_market(self.matrix_path)


def _fmt(x):
    if x is None:
        return ""
    return repr(float(x))


def write_csv(history, path):
    """One row per executed iteration; floats round-trip exactly via repr."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(CSV_FIELDS) + "\n")
        for rec in history.records:
            fh.write(",".join([
                str(rec.iteration),
                _fmt(rec.implicit_rel_res),
                _fmt(rec.true_rel_res),
                _fmt(rec.s_norm),
                _fmt(rec.orth_loss),
                str(rec.reductions),
            ]) + "\n")


def write_json(history, ledger, spec, path):
    summary = summarize(history, ledger, spec)
    with open(path, "w", encoding="ascii") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")


def summarize(history, ledger, spec):
    return {
        "outcome": history.outcome,
        "iterations": history.iterations,
        "total_reductions": len(ledger),
        "total_reductions_by_kind": ledger.counts_by_kind(),
        "stall_iteration": history.stall_iteration(),
        "final_true_rel_res": history.final_true_rel_res,
        "config": {
            "method": spec.solver.method,
            "restart_m": spec.solver.restart_m,
            "max_restarts": spec.solver.max_restarts,
            "rel_tol": spec.solver.rel_tol,
            "precond": spec.solver.precond,
            "problem": spec.problem,
            "rhs": spec.rhs,
            "seed": spec.seed,
        },
    }


def emit_plot_data(history, path, method="", problem=""):
    """Whitespace-separated (iter, rel_res, s_norm) columns for gnuplot."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# method={method} problem={problem}\n")
        fh.write("# iter rel_res s_norm\n")
        for rec in history.records:
            s = rec.s_norm if rec.s_norm is not None else float("nan")
            fh.write(f"{rec.iteration} {repr(float(rec.implicit_rel_res))} "
                     f"{repr(float(s))}\n")


def run_experiment(spec):
    """Build, solve, write outputs; exit code reflects the outcome."""
    A = spec.build_matrix()
    b = gen_rhs(spec.rhs, A, spec.seed)
    ledger = ReductionLedger()
    diag_every = spec.diagnostics_every
    if diag_every is None:
        diag_every = 1 if A.n_rows <= DIAGNOSTICS_SIZE_LIMIT else 0
    x, history = solve(A, b, None, spec.solver, ledger,
                       diagnostics_every=diag_every)
    if spec.csv_path:
        write_csv(history, spec.csv_path)
    if spec.json_path:
        write_json(history, ledger, spec, spec.json_path)
    if spec.plot_path:
        emit_plot_data(history, spec.plot_path, method=spec.solver.method,
                       problem=spec.problem)
    if history.outcome == CONVERGED:
        return EXIT_OK
    if history.outcome in (BREAKDOWN, CANCELLATION_FAILURE):
        return EXIT_BREAKDOWN
    return EXIT_STALL
