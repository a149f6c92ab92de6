import json
import os
import subprocess
import sys

import numpy as np
import pytest

from lowsync import (
    ExperimentSpec,
    GmresConfig,
    MatrixMarketError,
    ReductionLedger,
    emit_plot_data,
    gen_laplace2d,
    gen_rhs,
    gen_simoncini,
    gmres_mgs_l1,
    load_matrix_market,
    run_experiment,
)
from lowsync.cli import main as cli_main
from lowsync.harness import CSV_FIELDS

from helpers import EPS

IDENTITY_MTX = """%%MatrixMarket matrix coordinate real general
3 3 3
1 1 1.0
2 2 1.0
3 3 1.0
"""

SYMMETRIC_MTX = """%%MatrixMarket matrix coordinate real symmetric
% lower triangle only
3 3 4
1 1 2.0
2 1 -1.0
2 2 2.0
3 3 2.0
"""


class TestGenerators:
    def test_simoncini_small(self):
        A = gen_simoncini(3)
        assert np.array_equal(A.diagonal_values(), [1e-8, 2.0, 3.0])

    def test_simoncini_default_nnz(self):
        A = gen_simoncini()
        assert A.nnz == 100

    def test_simoncini_condition_number(self):
        d = gen_simoncini().diagonal_values()
        assert d.max() / d.min() == pytest.approx(1e10, rel=1e-12)

    def test_laplace2d_stencil(self):
        A = gen_laplace2d(3)
        M = A.to_dense()
        assert M[4, 4] == 4.0  # interior point
        assert M[4, 1] == M[4, 3] == M[4, 5] == M[4, 7] == -1.0
        assert A.n_rows == 9

    def test_rhs_ones_image(self):
        A = gen_simoncini(4)
        b = gen_rhs("ones_image", A)
        assert np.array_equal(b, A.diagonal_values())

    def test_rhs_random_unit_norm(self):
        A = gen_simoncini(50)
        b = gen_rhs("random", A, seed=42)
        assert abs(np.linalg.norm(b) - 1.0) <= 4 * EPS

    def test_rhs_random_deterministic(self):
        A = gen_simoncini(20)
        b1 = gen_rhs("random", A, seed=9)
        b2 = gen_rhs("random", A, seed=9)
        assert np.array_equal(b1, b2)

    def test_rhs_random_requires_seed(self):
        with pytest.raises(ValueError):
            gen_rhs("random", gen_simoncini(4), None)


class TestMatrixMarket:
    def test_identity(self, tmp_path):
        p = tmp_path / "eye.mtx"
        p.write_text(IDENTITY_MTX)
        A = load_matrix_market(p)
        assert list(A.row_ptr) == [0, 1, 2, 3]
        assert np.array_equal(A.to_dense(), np.eye(3))

    def test_symmetric_expansion(self, tmp_path):
        p = tmp_path / "sym.mtx"
        p.write_text(SYMMETRIC_MTX)
        A = load_matrix_market(p)
        # one off-diagonal stored entry expands to two
        assert A.nnz == 2 * 1 + 3
        M = A.to_dense()
        assert M[0, 1] == M[1, 0] == -1.0

    def test_malformed_header(self, tmp_path):
        p = tmp_path / "bad.mtx"
        p.write_text("%%NotMatrixMarket stuff\n1 1 1\n1 1 1.0\n")
        with pytest.raises(MatrixMarketError):
            load_matrix_market(p)

    def test_complex_rejected(self, tmp_path):
        p = tmp_path / "c.mtx"
        p.write_text("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1.0 0.0\n")
        with pytest.raises(MatrixMarketError, match="complex"):
            load_matrix_market(p)

    def test_pattern_rejected(self, tmp_path):
        p = tmp_path / "p.mtx"
        p.write_text("%%MatrixMarket matrix coordinate pattern general\n1 1 1\n1 1\n")
        with pytest.raises(MatrixMarketError, match="pattern"):
            load_matrix_market(p)

    def test_array_format_rejected(self, tmp_path):
        p = tmp_path / "a.mtx"
        p.write_text("%%MatrixMarket matrix array real general\n2 2\n1.0\n0.0\n0.0\n1.0\n")
        with pytest.raises(MatrixMarketError, match="coordinate"):
            load_matrix_market(p)

    def test_duplicates_summed(self, tmp_path):
        p = tmp_path / "dup.mtx"
        p.write_text("%%MatrixMarket matrix coordinate real general\n"
                     "2 2 3\n1 1 1.5\n1 1 2.5\n2 2 1.0\n")
        A = load_matrix_market(p)
        assert A.to_dense()[0, 0] == 4.0

    def test_entry_count_checked(self, tmp_path):
        p = tmp_path / "short.mtx"
        p.write_text("%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1.0\n")
        with pytest.raises(MatrixMarketError):
            load_matrix_market(p)

    def test_thermal1_if_present(self):
        path = os.environ.get("THERMAL1_MTX", "thermal1.mtx")
        if not os.path.exists(path):
            pytest.skip("thermal1.mtx not available locally")
        A = load_matrix_market(path)
        assert A.n_rows == 82654
        assert A.nnz == 574458


class TestExperimentSpec:
    def test_problem_source_exclusivity(self):
        with pytest.raises(ValueError):
            ExperimentSpec(problem="simoncini", matrix_path="x.mtx")
        with pytest.raises(ValueError):
            ExperimentSpec(problem="mtx")

    def test_random_rhs_needs_seed(self):
        with pytest.raises(ValueError):
            ExperimentSpec(problem="simoncini", rhs="random", seed=None)


class TestOutputs:
    def _run(self, tmp_path, method="mgs_l1", problem="simoncini", n=30,
             tol=1e-8, restart=30, max_restarts=1):
        spec = ExperimentSpec(
            problem=problem, n=n,
            solver=GmresConfig(restart_m=restart, max_restarts=max_restarts,
                               rel_tol=tol, method=method),
            csv_path=str(tmp_path / "out.csv"),
            json_path=str(tmp_path / "out.json"),
        )
        code = run_experiment(spec)
        return code, spec

    def test_csv_row_count_equals_iterations(self, tmp_path):
        code, spec = self._run(tmp_path)
        lines = open(spec.csv_path).read().splitlines()
        assert lines[0] == ",".join(CSV_FIELDS)
        with open(spec.json_path) as fh:
            summary = json.load(fh)
        assert len(lines) - 1 == summary["iterations"]

    def test_csv_bit_identical_across_runs(self, tmp_path):
        _, spec1 = self._run(tmp_path)
        first = open(spec1.csv_path).read()
        _, spec2 = self._run(tmp_path)
        second = open(spec2.csv_path).read()
        assert first == second

    def test_json_totals_match_ledger(self, tmp_path):
        A = gen_simoncini(25)
        b = gen_rhs("random", A, seed=42)
        led = ReductionLedger()
        _, hist = gmres_mgs_l1(A, b, config=GmresConfig(restart_m=25, rel_tol=1e-8),
                               ledger=led)
        from lowsync.harness import summarize
        spec = ExperimentSpec(problem="simoncini", n=25)
        summary = summarize(hist, led, spec)
        assert summary["total_reductions"] == len(led)
        assert sum(summary["total_reductions_by_kind"].values()) == len(led)

    def test_exit_code_converged(self, tmp_path):
        # identity-like problem: one iteration, clean exit
        spec = ExperimentSpec(
            problem="laplace2d", nx=4, rhs="ones_image",
            solver=GmresConfig(restart_m=16, rel_tol=1e-10),
            csv_path=str(tmp_path / "l.csv"),
        )
        assert run_experiment(spec) == 0

    def test_exit_code_stall(self, tmp_path):
        code, spec = self._run(tmp_path, problem="simoncini", n=100, tol=1e-14,
                               restart=100)
        assert code == 2
        with open(spec.json_path) as fh:
            summary = json.load(fh)
        assert summary["outcome"] == "stalled_maxiter"
        assert 70 <= summary["stall_iteration"] <= 90

    def test_exit_code_cancellation(self, tmp_path):
        code, _ = self._run(tmp_path, method="cgs1_ghysels", problem="simoncini",
                            n=100, tol=1e-14, restart=100)
        assert code == 3

    def test_identity_single_row(self, tmp_path):
        spec = ExperimentSpec(
            problem="simoncini", n=6, first_diag=1.0, rhs="ones_image",
            solver=GmresConfig(restart_m=6, rel_tol=1e-10, precond="jacobi"),
            csv_path=str(tmp_path / "i.csv"),
        )
        assert run_experiment(spec) == 0
        lines = open(spec.csv_path).read().splitlines()
        assert len(lines) - 1 == 1


class TestPlotData:
    def test_empty_history_header_only(self, tmp_path):
        from lowsync.gmres import ConvergenceHistory
        hist = ConvergenceHistory()
        path = tmp_path / "plot.dat"
        emit_plot_data(hist, path, method="cgs2", problem="simoncini")
        lines = path.read_text().splitlines()
        assert all(line.startswith("#") for line in lines)
        assert "method=cgs2" in lines[0]

    def test_round_trip_exact(self, tmp_path):
        A = gen_simoncini(20)
        b = gen_rhs("random", A, seed=42)
        _, hist = gmres_mgs_l1(A, b, config=GmresConfig(restart_m=20, rel_tol=1e-10))
        path = tmp_path / "plot.dat"
        emit_plot_data(hist, path, method="mgs_l1", problem="simoncini")
        data = np.loadtxt(path)
        data = np.atleast_2d(data)
        for row, rec in zip(data, hist.records):
            assert int(row[0]) == rec.iteration
            assert row[1] == rec.implicit_rel_res  # exact round trip
            if rec.s_norm is not None:
                assert row[2] == rec.s_norm

    def test_two_methods_comparable(self, tmp_path):
        A = gen_simoncini(20)
        b = gen_rhs("random", A, seed=42)
        cfg = GmresConfig(restart_m=20, max_restarts=1, rel_tol=1e-14)
        paths = []
        for name, fn in (("mgs_l1", gmres_mgs_l1),):
            _, hist = fn(A, b, config=cfg)
            p = tmp_path / f"{name}.dat"
            emit_plot_data(hist, p, method=name, problem="simoncini")
            paths.append(p)
        d = np.atleast_2d(np.loadtxt(paths[0]))
        assert d.shape[1] == 3


class TestCli:
    def test_bad_flag_exits_one(self, capsys):
        code = cli_main(["--no-such-flag"])
        assert code == 1
        err = capsys.readouterr().err
        assert "usage" in err.lower()

    def test_missing_problem_exits_one(self, capsys):
        assert cli_main([]) == 1

    def test_unknown_method_exits_one(self, capsys):
        assert cli_main(["--problem", "simoncini", "--method", "householder"]) == 1

    def test_full_run_writes_outputs(self, tmp_path):
        csv = tmp_path / "run.csv"
        js = tmp_path / "run.json"
        code = cli_main([
            "--problem", "simoncini:30",
            "--rhs", "random:42",
            "--method", "two-sync",
            "--restart", "30",
            "--max-restarts", "1",
            "--tol", "1e-10",
            "--csv", str(csv),
            "--json", str(js),
        ])
        assert code == 0
        assert csv.exists() and js.exists()
        summary = json.loads(js.read_text())
        assert summary["config"]["method"] == "two_sync_cgs2"
        assert summary["config"]["seed"] == 42

    def test_matrix_file_input(self, tmp_path):
        p = tmp_path / "eye.mtx"
        p.write_text(IDENTITY_MTX)
        code = cli_main(["--matrix", str(p), "--rhs", "ones-image",
                         "--method", "mgs-l1", "--restart", "3"])
        assert code == 0

    def test_missing_file_exits_one(self, capsys):
        assert cli_main(["--matrix", "/nonexistent/x.mtx"]) == 1

    def test_problem_spec_with_params(self, tmp_path):
        js = tmp_path / "s.json"
        code = cli_main(["--problem", "simoncini:50,2.0", "--tol", "1e-8",
                         "--restart", "50", "--json", str(js)])
        assert code == 0
        assert json.loads(js.read_text())["config"]["problem"] == "simoncini"

    def test_module_entry_point(self, tmp_path):
        env = dict(os.environ)
        env["PYTHONPATH"] = os.pathsep.join(
            [str(p) for p in sys.path if p] + [os.getcwd()])
        proc = subprocess.run(
            [sys.executable, "-m", "lowsync", "--problem", "laplace2d:3",
             "--rhs", "ones-image", "--tol", "1e-8"],
            capture_output=True, text=True, env=env,
        )
        assert proc.returncode == 0

    def test_plot_flag(self, tmp_path):
        dat = tmp_path / "c.dat"
        code = cli_main(["--problem", "simoncini:20", "--restart", "20",
                         "--tol", "1e-6", "--plot", str(dat)])
        assert code in (0, 2)
        assert dat.exists()
