import csv
import io
import json

import numpy as np
import pytest
import scipy.sparse as sp

from sparse_lse.cli import main
from sparse_lse.harness import load_problem
from sparse_lse.mmio import write_matrix_market


@pytest.fixture(scope="module")
def problem_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "prob.npz"
    assert main(["gen", "--m", "80", "--n", "40", "--p", "3", "--density", "0.1", "--seed", "2",
                 "--out", str(path)]) == 0
    return path


class TestGen:
    def test_writes_loadable_problem(self, problem_file):
        prob = load_problem(problem_file)
        assert (prob.m, prob.n, prob.p) == (80, 40, 3)

    def test_bad_dimensions_exit_one(self, tmp_path, capsys):
        assert main(["gen", "--m", "5", "--n", "5", "--p", "1", "--out", str(tmp_path / "x.npz")]) == 1
        assert "error" in capsys.readouterr().err


class TestSolve:
    def test_json_to_stdout(self, problem_file, capsys):
        assert main(["solve", "--problem", str(problem_file), "--method", "qr-update"]) == 0
        rows = json.loads(capsys.readouterr().out)
        assert len(rows) == 1 and rows[0]["status"] == "ok"
        assert rows[0]["norm_rc"] <= 1e-12

    def test_all_methods_csv(self, problem_file, tmp_path):
        out = tmp_path / "r.csv"
        code = main(["solve", "--problem", str(problem_file), "--method", "all", "--gamma", "1e4",
                     "--format", "csv", "--out", str(out)])
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out.read_text())))
        assert len(rows) == 9
        assert {r["status"] for r in rows} == {"ok"}

    def test_omega_sweep(self, problem_file, capsys):
        argv = ["solve", "--problem", str(problem_file), "--method", "reg-cholesky", "--method", "lagrange",
                "--omega", "1e-2", "--omega", "1e-4", "--format", "table"]
        assert main(argv) == 0
        lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.strip()]
        assert len(lines) == 4

    def test_identifier_override(self, problem_file, capsys):
        main(["solve", "--problem", str(problem_file), "--method", "nullspace", "--id", "mine"])
        assert json.loads(capsys.readouterr().out)[0]["identifier"] == "mine"

    def test_nonconvergence_exit_two(self, problem_file, capsys):
        code = main(["solve", "--problem", str(problem_file), "--method", "reg-gmres", "--maxit", "1"])
        assert code == 2
        assert json.loads(capsys.readouterr().out)[0]["status"] == "nonconvergence"

    def test_method_error_exit_one(self, problem_file, capsys):
        code = main(["solve", "--problem", str(problem_file), "--method", "weighted-normal", "--gamma", "0.5"])
        assert code == 1

    def test_default_gamma_breakdown_reported(self, problem_file, capsys):
        code = main(["solve", "--problem", str(problem_file), "--method", "weighted-normal"])
        assert code == 1
        assert "NotPositiveDefinite" in capsys.readouterr().err

    def test_unknown_method(self, problem_file, capsys):
        assert main(["solve", "--problem", str(problem_file), "--method", "svd"]) == 1
        assert "qr-update" in capsys.readouterr().err

    def test_usage_error(self, capsys):
        assert main_exit(["solve", "--method", "qr-update"]) == 1

    def test_matrix_market_input(self, tmp_path, capsys):
        rng = np.random.default_rng(3)
        D = rng.standard_normal((60, 15)) * (rng.random((60, 15)) < 0.15)
        D[np.arange(60), np.arange(60) % 15] = 1.0
        D[:4] = rng.standard_normal((4, 15))
        path = tmp_path / "sample.mtx"
        write_matrix_market(path, sp.csc_matrix(D))
        code = main(["solve", "--matrix", str(path), "--mode", "densest", "--remove", "4", "--keep", "2",
                     "--method", "direct-elim"])
        assert code == 0
        row = json.loads(capsys.readouterr().out)[0]
        assert row["identifier"] == "sample" and row["p"] == 2

    def test_malformed_matrix_market(self, tmp_path, capsys):
        path = tmp_path / "bad.mtx"
        path.write_text("%%MatrixMarket matrix coordinate real general\n2 2 1\n5 1 1.0\n")
        assert main(["solve", "--matrix", str(path), "--method", "qr-update"]) == 1
        assert "line 3" in capsys.readouterr().err


class TestOracle:
    def test_prints_solution(self, problem_file, capsys):
        assert main(["oracle", "--problem", str(problem_file)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert len(out["x"]) == 40 and len(out["lambda"]) == 3
        assert out["norm_rc"] <= 1e-12


def main_exit(argv):
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code
