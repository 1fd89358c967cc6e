import os
import time

import matplotlib.pyplot as plt
import numpy as np

try:
    import analysis
    import problem_generators
    from oracles import (DoubleSampleOracle, ExactMaxFormOracle, ExactPageRankOracle, MaxFormProblem,
                         PageRankProblem, SumRandomizationOracle, TwoSpikeOracle)
    from prox import ProxSetup
    from solvers import NoProductiveStepsError, SolverConfig, constrained_mirror_descent, mirror_descent
    from sparse_core import build_from_triplets, write_matrix_market
except ImportError as e:
    print(f"❌ failed to import project modules: {e}")
    print("run workflow.py from the repository root.")
    raise SystemExit(1)

# ================= global configuration =================
INSTANCE_SIZE = 100
INSTANCE_SEED = int(os.getenv("SPARSEMIRROR_SEED", "0"))
EPSILON = 0.05
# shared budget for oracles whose certified M differ
FIXED_BUDGET = 20_000
LP_EPSILON_G = 0.05

# ================= save-then-show for matplotlib =================
current_save_path = None
original_show = plt.show


def custom_show(*args, **kwargs):
    """Save the current figure to current_save_path, then show it."""
    if current_save_path:
        plt.savefig(current_save_path, dpi=300, bbox_inches='tight')
        print(f"   💾 figure saved: {current_save_path}")
    original_show(*args, **kwargs)


plt.show = custom_show


# ================= helpers =================

def create_output_folder():
    """Timestamped output directory."""
    timestamp = time.strftime("%Y%m%d_%H%M%S")
    folder_name = f"Output_{timestamp}"
    os.makedirs(folder_name, exist_ok=True)
    print(f"📂 output folder: {os.path.abspath(folder_name)}")
    return folder_name


def save_run(output_dir, name, report):
    report_path = os.path.join(output_dir, f"{name}_report.txt")
    with open(report_path, "w", encoding="utf-8") as f:
        for key, value in report.summary().items():
            f.write(f"{key}: {value!r}\n" if isinstance(value, float) else f"{key}: {value}\n")
    trace_path = os.path.join(output_dir, f"{name}_trace.csv")
    report.trace_frame().to_csv(trace_path, index=False, float_format="%.17g")
    print(f"✅ {name}: f = {report.final_f:.3e} in {report.iterations} iterations ({report.wall_time:.2f}s)")


def main():
    global current_save_path
    print("🚀 starting the sparse mirror descent demo pipeline...\n")

    # 0. preparation
    output_dir = create_output_folder()

    # ================= step 1: instance =================
    print("\n--- [Step 1/5] generating a strongly connected chain ---")
    # random out-edges plus self-loops, rows normalised to 1
    P = problem_generators.random_stochastic_matrix(INSTANCE_SIZE, seed=INSTANCE_SEED)
    matrix_path = os.path.join(output_dir, "1_P.mtx")
    write_matrix_market(matrix_path, P, comment=f"random chain n={INSTANCE_SIZE} seed={INSTANCE_SEED}")
    print(f"✅ P saved: {matrix_path} (nnz={P.nnz}, s_n={P.s_n}, s_m={P.s_m})")

    # validates P (square, nonnegative, stochastic rows)
    problem = PageRankProblem(P)
    setup = ProxSetup.entropy_simplex(P.n)

    # ================= step 2: least-squares PageRank =================
    print("\n--- [Step 2/5] 1/2 ||(P^T - I) x||^2 over the simplex ---")
    # double-sample: target accuracy (M = 2); sum-rand (M ~ n) and exact: shared fixed budget
    target = SolverConfig(prox=setup, epsilon=EPSILON, seed=INSTANCE_SEED)
    budget = SolverConfig(prox=setup, horizon_N=FIXED_BUDGET, step_rule="fixed", seed=INSTANCE_SEED)
    reports = {
        "double-sample": mirror_descent(target, DoubleSampleOracle(problem)),
        "sum-rand": mirror_descent(budget, SumRandomizationOracle(problem)),
        "deterministic": mirror_descent(budget, ExactPageRankOracle(problem)),
    }
    # report + trace for every run
    for name, report in reports.items():
        save_run(output_dir, f"2_{name}", report)

    # ================= step 3: max-norm PageRank =================
    print("\n--- [Step 3/5] max_k (A_k^T x) with the two-spike oracle ---")
    # same chain, max-form objective; f_exact keeps the least-squares value in the trace
    inf_problem = MaxFormProblem.affine(problem.A)
    reports["two-spike-inf"] = mirror_descent(budget, TwoSpikeOracle(inf_problem),
                                              f_exact=lambda x: 0.5 * float(np.sum(problem.residual(x) ** 2)))
    save_run(output_dir, "3_two-spike-inf", reports["two-spike-inf"])

    # ================= step 4: comparison =================
    print("\n--- [Step 4/5] comparison against the reference vector ---")
    analyzer = analysis.RunAnalyzer(P, reports)
    results = analyzer.compare()

    # save Excel
    excel_path = os.path.join(output_dir, "4_comparison.xlsx")
    analyzer.to_frame(results).to_excel(excel_path, index=False)
    print(f"✅ comparison saved: {excel_path}")
    print(f"   🏆 closest to the reference: {results['best']}")
    # set save path -> draw -> custom_show saves and shows
    print("   🎨 drawing convergence chart...")
    current_save_path = os.path.join(output_dir, "4_convergence.png")
    analyzer.visualize(results)

    # ================= step 5: constrained LP toy =================
    print("\n--- [Step 5/5] switching scheme on min x1 + x2 s.t. x1 >= 1 ---")
    # f(x) = c^T x as a one-row max-form, g(x) = 1 - x1
    A, b, c = problem_generators.lp_toy()
    f_problem = MaxFormProblem.affine(build_from_triplets(
        [(0, j, v) for j, v in enumerate(c)], 1, len(c)))
    g_problem = MaxFormProblem.affine(A, b)
    # anchor (0.5, 0.5); R = 0.5 gives N = 401, h_f = h_g = 0.025
    config = SolverConfig(prox=ProxSetup.euclidean_orthant([0.5, 0.5]), R=0.5, epsilon_g=LP_EPSILON_G,
                          M_f=np.sqrt(2), M_g=np.sqrt(2), seed=INSTANCE_SEED)
    try:
        lp = constrained_mirror_descent(config, ExactMaxFormOracle(f_problem), ExactMaxFormOracle(g_problem))
        save_run(output_dir, "5_lp", lp)
        print(f"   x_bar = {np.round(lp.x_bar, 4)}, g(x_bar) = {lp.final_g:.3e}, N_I = {lp.productive_steps}")
    except NoProductiveStepsError as e:
        print(f"❌ LP run failed: {e}")

    print(f"\n🎉 pipeline finished, files in: {output_dir}")


if __name__ == "__main__":
    main()
