"""Compare finished runs against the reference stationary vector and chart them."""
from __future__ import annotations

import logging

import matplotlib.pyplot as plt
import networkx as nx
import numpy as np
import pandas as pd

from sparse_core import SparseMatrixDual

logger = logging.getLogger(__name__)


def stationary_vector(P: SparseMatrixDual) -> np.ndarray:
    """x = P^T x on the simplex; networkx power iteration, dense eigensolve if it stalls."""
    G = nx.DiGraph()
    G.add_nodes_from(range(P.n))
    G.add_weighted_edges_from(P.triplets())
    try:
        ranks = nx.pagerank(G, alpha=1.0, tol=1e-12, max_iter=10_000)
        return np.array([ranks[i] for i in range(P.n)])
    except nx.PowerIterationFailedConvergence:
        # periodic chains (e.g. a plain cycle) never settle under power iteration
        logger.debug("power iteration stalled, using a dense eigensolve")
    values, vectors = np.linalg.eig(P.row_view.T.toarray())
    v = np.real(vectors[:, int(np.argmin(np.abs(values - 1.0)))])
    return v / v.sum()


class RunAnalyzer:
    def __init__(self, P: SparseMatrixDual, reports: dict):
        self.P = P
        self.reports = reports
        self.reference = stationary_vector(P)

    def get_stats(self, report) -> dict:
        """Accuracy and cost figures of a single run."""
        iterations = max(report.iterations, 1)

        # 1. distance to the reference vector
        error = np.abs(report.solution - self.reference)

        # 2. uniforms drawn per iteration (randomness budget of the oracle)
        uniforms = report.counters.get("uniforms", 0) / iterations

        # 3. rows whose cached dot product changed, per iteration
        touched = report.counters.get("touched_rows", 0) / iterations

        return {
            "final_f": report.final_f,
            "l1_error": float(error.sum()),
            "linf_error": float(error.max()),
            "iterations": report.iterations,
            "uniforms_per_step": uniforms,
            "touched_rows_per_step": touched,
            "wall_time": report.wall_time,
        }

    def compare(self) -> dict:
        """Stats of every run plus the name of the run closest to the reference."""
        stats = {name: self.get_stats(r) for name, r in self.reports.items()}
        # closest in l1
        best = min(stats, key=lambda name: stats[name]["l1_error"]) if stats else None
        return {"runs": stats, "best": best}

    def to_frame(self, results: dict) -> pd.DataFrame:
        # one row per run, for the Excel export
        frame = pd.DataFrame(results["runs"]).T
        frame.index.name = "run"
        return frame.reset_index()

    def visualize(self, results: dict, save_path=None):
        """f-trace of every run on a log scale, with the l1 error in the legend."""
        plt.figure(figsize=(10, 6))
        # one curve per run; f is clipped so exact zeros stay on the log axis
        for name, report in self.reports.items():
            frame = report.trace_frame()
            f = frame["f"].clip(lower=1e-16)
            plt.semilogy(frame["iteration"], f, label=f"{name} (l1 err {results['runs'][name]['l1_error']:.2e})")
        # labels
        plt.xlabel("iteration")
        plt.ylabel("f(x^k)")
        plt.title("Convergence of sparse mirror descent")
        plt.legend()
        plt.tight_layout()
        # saved directly when a path is given, otherwise plt.show (hijacked by workflow.py)
        if save_path:
            plt.savefig(save_path, dpi=150, bbox_inches="tight")
            plt.close()
        else:
            plt.show()


if __name__ == "__main__":
    from oracles import DoubleSampleOracle, PageRankProblem, SumRandomizationOracle
    from problem_generators import random_stochastic_matrix
    from prox import ProxSetup
    from solvers import SolverConfig, mirror_descent

    P = random_stochastic_matrix(50, seed=1)
    problem = PageRankProblem(P)
    # same budget for both oracles; sum-randomization certifies a much larger M
    config = SolverConfig(prox=ProxSetup.entropy_simplex(50), horizon_N=20_000, step_rule="fixed", seed=1)
    reports = {
        "double-sample": mirror_descent(config, DoubleSampleOracle(problem)),
        "sum-rand": mirror_descent(config, SumRandomizationOracle(problem), trajectory=1),
    }
    analyzer = RunAnalyzer(P, reports)
    res = analyzer.compare()
    print("=" * 60)
    print(analyzer.to_frame(res).to_string(index=False))
    print("=" * 60)
    print(f"🏆 closest to the reference vector: {res['best']}")
    print("\n🎨 drawing convergence chart...")
    analyzer.visualize(res)
