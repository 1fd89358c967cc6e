import numpy as np
import pandas as pd
import pytest

import cli
from problem_generators import cycle_matrix
from sparse_core import build_from_triplets, read_vector, write_matrix_market


def read_report(path):
    out = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        key, _, value = line.partition(": ")
        out[key] = value
    return out


def solve_cycle(instances_dir, tmp_path, name="run", *extra):
    report, trace = tmp_path / f"{name}.txt", tmp_path / f"{name}.csv"
    code = cli.main(["solve", "--problem", "pagerank", "--matrix", str(instances_dir / "cycle2.mtx"),
                     "--oracle", "double-sample", "--prox", "entropy", "--eps", "0.05", "--seed", "7",
                     "--report", str(report), "--trace", str(trace), *extra])
    return code, report, trace


def test_solve_two_cycle(instances_dir, tmp_path):
    code, report, trace = solve_cycle(instances_dir, tmp_path)
    assert code == cli.EXIT_OK
    fields = read_report(report)
    assert fields["status"] == "ok"
    assert fields["seed"] == "7"
    assert fields["iterations"] == "2219"
    assert float(fields["final_f"]) <= 0.05
    frame = pd.read_csv(trace)
    assert list(frame.columns) == ["iteration", "f", "g", "touched_rows"]
    assert frame["iteration"].diff().dropna().gt(0).all()


def test_replay_gives_identical_traces(instances_dir, tmp_path):
    _, report_a, trace_a = solve_cycle(instances_dir, tmp_path, "a")
    _, report_b, trace_b = solve_cycle(instances_dir, tmp_path, "b")
    assert trace_a.read_bytes() == trace_b.read_bytes()
    a, b = read_report(report_a), read_report(report_b)
    a.pop("wall_time")
    b.pop("wall_time")
    assert a == b


def test_amplified_solve_writes_solution(instances_dir, tmp_path):
    solution = tmp_path / "x.mtx"
    code, report, _ = solve_cycle(instances_dir, tmp_path, "amp", "--sigma", "0.25", "--solution", str(solution))
    assert code == cli.EXIT_OK
    fields = read_report(report)
    assert fields["trajectories"] == "2"
    assert len(fields["trajectory_f"].split(",")) == 2
    x = read_vector(solution)
    assert x.shape == (2,)
    assert x.sum() == pytest.approx(1.0)


def test_seed_from_environment(instances_dir, tmp_path, monkeypatch):
    monkeypatch.setenv(cli.SEED_ENV, "42")
    report = tmp_path / "r.txt"
    code = cli.main(["solve", "--problem", "pagerank", "--matrix", str(instances_dir / "cycle2.mtx"),
                     "--oracle", "sum-rand", "--iterations", "50", "--step-rule", "fixed",
                     "--report", str(report)])
    assert code == cli.EXIT_OK
    assert read_report(report)["seed"] == "42"


def test_bad_seed_environment(instances_dir, monkeypatch):
    monkeypatch.setenv(cli.SEED_ENV, "seven")
    with pytest.raises(SystemExit):
        cli.main(["solve", "--problem", "pagerank", "--matrix", str(instances_dir / "cycle2.mtx")])


def test_maxform_deterministic(instances_dir, tmp_path, capsys):
    report = tmp_path / "r.txt"
    code = cli.main(["solve", "--problem", "maxform", "--matrix", str(instances_dir / "a.mtx"),
                     "--oracle", "deterministic", "--prox", "euclidean-free", "--eps", "0.1",
                     "--report", str(report)])
    assert code == cli.EXIT_OK
    assert "assuming R = 1" in capsys.readouterr().out
    fields = read_report(report)
    assert int(fields["counter_oracle_calls"]) == int(fields["iterations"])
    assert "counter_touched_rows" in fields


def test_missing_file_names_the_path(tmp_path, capsys):
    missing = tmp_path / "nope.mtx"
    code = cli.main(["solve", "--problem", "pagerank", "--matrix", str(missing), "--oracle", "double-sample",
                     "--eps", "0.05"])
    assert code != 0
    assert "nope.mtx" in capsys.readouterr().out


def test_non_stochastic_matrix_rejected(tmp_path, capsys):
    path = tmp_path / "bad.mtx"
    write_matrix_market(path, build_from_triplets([(0, 1, 1.0), (1, 0, 0.5)], 2, 2))
    code = cli.main(["solve", "--problem", "pagerank", "--matrix", str(path), "--oracle", "double-sample",
                     "--eps", "0.05"])
    assert code == cli.EXIT_INVALID
    assert "non-stochastic row 1" in capsys.readouterr().out


@pytest.mark.parametrize("args, message", [
    (["--problem", "pagerank", "--oracle", "two-spike"], "unsupported pairing"),
    (["--problem", "pagerank", "--oracle", "double-sample", "--prox", "euclidean-free"], "unsupported pairing"),
    (["--problem", "blocksum", "--oracle", "two-spike", "--prox", "euclidean-free"], "--blocks"),
])
def test_invalid_specs(instances_dir, capsys, args, message):
    code = cli.main(["solve", "--matrix", str(instances_dir / "cycle2.mtx"), *args])
    assert code == cli.EXIT_INVALID
    assert message in capsys.readouterr().out


def test_help_lists_pairings():
    text = cli.build_parser().format_help()
    assert "constrained-lp" in text
    assert "double-sample" in text


def lp_args(instances_dir, rhs=None, radius="0.5"):
    args = ["solve", "--problem", "constrained-lp", "--matrix", str(instances_dir / "lp_A.mtx"),
            "--rhs", str(rhs or instances_dir / "lp_b.mtx"), "--cost", str(instances_dir / "lp_c.mtx"),
            "--oracle", "deterministic", "--prox", "euclidean-orthant", "--anchor", "0.5", "--eps-g", "0.05"]
    return args + ["--radius", radius] if radius else args


def test_constrained_lp(instances_dir, tmp_path):
    report = tmp_path / "lp.txt"
    code = cli.main(lp_args(instances_dir) + ["--report", str(report)])
    assert code == cli.EXIT_OK
    fields = read_report(report)
    assert fields["status"] == "ok"
    assert float(fields["final_g"]) <= 0.05 + 1e-12
    assert float(fields["final_f"]) <= 1.07
    assert int(fields["productive_steps"]) + int(fields["j_steps"]) == int(fields["iterations"])


def test_constrained_lp_without_productive_steps(instances_dir, tmp_path):
    rhs = tmp_path / "b.mtx"
    write_matrix_market(rhs, np.array([-10.0]))
    report = tmp_path / "lp.txt"
    code = cli.main(lp_args(instances_dir, rhs, radius=None) + ["--iterations", "5", "--report", str(report)])
    assert code == cli.EXIT_CHECK_FAILED
    fields = read_report(report)
    assert fields["status"] == "failed"
    assert fields["productive_steps"] == "0"


def test_constrained_lp_inconsistent_iterations(instances_dir, capsys):
    code = cli.main(lp_args(instances_dir) + ["--iterations", "5"])
    assert code == cli.EXIT_INVALID
    assert "inconsistent" in capsys.readouterr().out


def test_constrained_lp_with_equality(instances_dir, tmp_path):
    # x1 = x2 on top of x1 >= 1
    eq_matrix, eq_rhs = tmp_path / "C.mtx", tmp_path / "d.mtx"
    write_matrix_market(eq_matrix, build_from_triplets([(0, 0, 1.0), (0, 1, -1.0)], 1, 2))
    write_matrix_market(eq_rhs, np.array([0.0]))
    report, solution = tmp_path / "lp.txt", tmp_path / "x.mtx"
    code = cli.main(lp_args(instances_dir, radius="1") + ["--eq-matrix", str(eq_matrix), "--eq-rhs", str(eq_rhs),
                                                          "--report", str(report), "--solution", str(solution)])
    assert code == cli.EXIT_OK
    fields = read_report(report)
    assert int(fields["productive_steps"]) >= 1
    assert float(fields["final_g"]) <= 0.05 + 1e-12
    x = read_vector(solution)
    assert x[0] >= 0.95 - 1e-12
    assert abs(x[0] - x[1]) <= 0.05 + 1e-12


def test_equality_needs_both_files(instances_dir, capsys):
    code = cli.main(lp_args(instances_dir) + ["--eq-matrix", str(instances_dir / "lp_A.mtx")])
    assert code == cli.EXIT_INVALID
    assert "go together" in capsys.readouterr().out


@pytest.mark.parametrize("oracle", ["double-sample", "sum-rand", "deterministic"])
def test_verify_two_cycle(instances_dir, capsys, oracle):
    code = cli.main(["verify-oracle", "--problem", "pagerank", "--matrix", str(instances_dir / "cycle2.mtx"),
                     "--oracle", oracle])
    out = capsys.readouterr().out
    assert code == cli.EXIT_OK, out
    assert "max |E[grad] - exact|" in out


@pytest.mark.parametrize("row_function", ["affine", "abs"])
def test_verify_two_spike(instances_dir, row_function):
    code = cli.main(["verify-oracle", "--problem", "maxform", "--matrix", str(instances_dir / "a.mtx"),
                     "--oracle", "two-spike", "--prox", "euclidean-free", "--row-function", row_function,
                     "--seed", "3"])
    assert code == cli.EXIT_OK


def test_verify_blocksum(instances_dir):
    code = cli.main(["verify-oracle", "--problem", "blocksum", "--matrix", str(instances_dir / "a.mtx"),
                     "--oracle", "two-spike", "--prox", "euclidean-free", "--blocks", "0,1,2"])
    assert code == cli.EXIT_OK


def test_verify_size_gate(tmp_path, capsys):
    path = tmp_path / "cycle100.mtx"
    write_matrix_market(path, cycle_matrix(100))
    code = cli.main(["verify-oracle", "--problem", "pagerank", "--matrix", str(path), "--oracle", "double-sample"])
    assert code == cli.EXIT_INVALID
    assert "too large" in capsys.readouterr().out
