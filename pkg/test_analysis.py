import numpy as np
import pytest
from numpy.testing import assert_allclose

from analysis import RunAnalyzer, stationary_vector
from oracles import DoubleSampleOracle, PageRankProblem, SumRandomizationOracle
from prox import ProxSetup
from solvers import SolverConfig, mirror_descent
from sparse_core import build_from_triplets


def test_stationary_vector_two_cycle(cycle2):
    assert_allclose(stationary_vector(cycle2), [0.5, 0.5])


def test_stationary_vector_random_chain(small_chain):
    v = stationary_vector(small_chain)
    assert v.sum() == pytest.approx(1.0)
    assert_allclose(small_chain.row_view.T @ v, v, atol=1e-9)


def test_stationary_vector_periodic_chain():
    # bipartite: power iteration from the uniform start oscillates
    P = build_from_triplets([(0, 1, 0.5), (0, 2, 0.5), (1, 0, 1.0), (2, 0, 1.0)], 3, 3)
    assert_allclose(stationary_vector(P), [0.5, 0.25, 0.25], atol=1e-12)


@pytest.fixture
def analyzer(small_chain):
    problem = PageRankProblem(small_chain)
    config = SolverConfig(prox=ProxSetup.entropy_simplex(6), horizon_N=400, step_rule="fixed", seed=1)
    reports = {
        "double-sample": mirror_descent(config, DoubleSampleOracle(problem)),
        "sum-rand": mirror_descent(config, SumRandomizationOracle(problem), trajectory=1),
    }
    return RunAnalyzer(small_chain, reports)


def test_compare(analyzer):
    results = analyzer.compare()
    assert set(results["runs"]) == {"double-sample", "sum-rand"}
    errors = {name: stats["l1_error"] for name, stats in results["runs"].items()}
    assert results["best"] == min(errors, key=errors.get)
    assert results["runs"]["double-sample"]["uniforms_per_step"] == 2.0
    assert results["runs"]["sum-rand"]["uniforms_per_step"] == 1.0


def test_to_frame(analyzer):
    frame = analyzer.to_frame(analyzer.compare())
    assert frame["run"].tolist() == ["double-sample", "sum-rand"]
    assert {"final_f", "l1_error", "linf_error", "touched_rows_per_step"} <= set(frame.columns)


def test_visualize_saves_figure(analyzer, tmp_path):
    path = tmp_path / "convergence.png"
    analyzer.visualize(analyzer.compare(), save_path=str(path))
    assert path.stat().st_size > 0
