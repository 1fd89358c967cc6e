"""Command-line front end.

    python cli.py solve --problem pagerank --matrix instances/cycle2.mtx \\
        --oracle double-sample --prox entropy --eps 0.05 --seed 7 --trace trace.csv
    python cli.py verify-oracle --problem pagerank --matrix instances/cycle2.mtx --oracle sum-rand
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse

import oracles
from oracles import (
    BlockSumOracle,
    BlockSumProblem,
    DoubleSampleOracle,
    ExactMaxFormOracle,
    ExactPageRankOracle,
    MaxFormProblem,
    PageRankProblem,
    SumRandomizationOracle,
    TwoSpikeOracle,
)
from prox import ProxKind, ProxSetup, SimplexState
from argmax_tracker import ArgmaxTree
from solvers import (
    Averaging,
    ConfigError,
    NoProductiveStepsError,
    SolverConfig,
    amplify,
    constrained_mirror_descent,
    mirror_descent,
)
from sparse_core import RowDotCache, SparseMatrixDual, SparseMirrorError, read_matrix_market, read_vector, \
    write_matrix_market

logger = logging.getLogger("sparsemirror")

SEED_ENV = "SPARSEMIRROR_SEED"
# exhaustive enumeration is only attempted up to this many rows / columns
MAX_ENUMERATION_SIZE = 8
VERIFY_TOLERANCE = 1e-12

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INVALID = 0, 1, 2

_EUCLIDEAN = ("euclidean-free", "euclidean-orthant")
_ALL_PROX = _EUCLIDEAN + ("entropy",)

# (problem, oracle) -> prox kinds that pair with it
COMPATIBILITY = {
    ("pagerank", "double-sample"): ("entropy",),
    ("pagerank", "sum-rand"): ("entropy",),
    ("pagerank", "deterministic"): ("entropy",),
    ("pagerank-inf", "two-spike"): ("entropy",),
    ("pagerank-inf", "deterministic"): ("entropy",),
    ("maxform", "two-spike"): _ALL_PROX,
    ("maxform", "deterministic"): _ALL_PROX,
    ("blocksum", "two-spike"): _ALL_PROX,
    ("blocksum", "deterministic"): _ALL_PROX,
    ("constrained-lp", "two-spike"): _EUCLIDEAN,
    ("constrained-lp", "deterministic"): _EUCLIDEAN,
}


def compatibility_table() -> str:
    lines = [f"{'problem':<16}{'oracle':<16}prox"]
    for (problem, oracle), proxes in COMPATIBILITY.items():
        lines.append(f"{problem:<16}{oracle:<16}{', '.join(proxes)}")
    return "\n".join(lines)


@dataclass
class RunSpec:
    problem: str
    matrix: str
    oracle: str = "deterministic"
    prox: str = "entropy"
    eps: Optional[float] = None
    sigma: float = 0.5
    seed: int = 0
    trace: Optional[str] = None
    report: Optional[str] = None
    solution: Optional[str] = None
    iterations: Optional[int] = None
    radius: Optional[float] = None
    lipschitz: Optional[float] = None
    step_rule: str = "target"
    offsets: Optional[str] = None
    row_function: str = "affine"
    blocks: list = field(default_factory=list)
    anchor: Optional[str] = None
    rhs: Optional[str] = None
    cost: Optional[str] = None
    eq_matrix: Optional[str] = None
    eq_rhs: Optional[str] = None
    eps_f: Optional[float] = None
    eps_g: Optional[float] = None
    workers: int = 1
    best_iterate: bool = False

    def validate(self):
        proxes = COMPATIBILITY.get((self.problem, self.oracle))
        if proxes is None or self.prox not in proxes:
            raise ConfigError(f"unsupported pairing problem={self.problem} oracle={self.oracle} "
                              f"prox={self.prox}; supported:\n{compatibility_table()}")
        if self.problem == "constrained-lp" and (self.rhs is None or self.cost is None):
            raise ConfigError("constrained-lp needs --rhs and --cost")
        if self.problem == "blocksum" and not self.blocks:
            raise ConfigError("blocksum needs --blocks")
        if (self.eq_matrix is None) != (self.eq_rhs is None):
            raise ConfigError("--eq-matrix and --eq-rhs go together")


# ================= problem assembly =================

def _prox_setup(spec: RunSpec, n: int) -> ProxSetup:
    kind = ProxKind(spec.prox)
    if kind is ProxKind.ENTROPY:
        return ProxSetup.entropy_simplex(n)
    if kind is ProxKind.EUCLIDEAN_FREE:
        return ProxSetup.euclidean_free(n)
    if spec.anchor is None:
        anchor = np.ones(n)
    else:
        try:
            anchor = np.full(n, float(spec.anchor))
        except ValueError:
            anchor = read_vector(spec.anchor)
    return ProxSetup.euclidean_orthant(anchor)


def _load_maxform(spec: RunSpec) -> MaxFormProblem:
    A = read_matrix_market(spec.matrix)
    offsets = read_vector(spec.offsets) if spec.offsets else None
    return MaxFormProblem(A, offsets, oracles.SIGMAS[spec.row_function])


def load_problem(spec: RunSpec):
    """Problem object plus a factory for fresh per-trajectory oracles."""
    if spec.problem in ("pagerank", "pagerank-inf"):
        pagerank = PageRankProblem(read_matrix_market(spec.matrix))
        if spec.problem == "pagerank":
            factory = {"double-sample": DoubleSampleOracle, "sum-rand": SumRandomizationOracle,
                       "deterministic": ExactPageRankOracle}[spec.oracle]
            return pagerank, lambda: factory(pagerank)
        problem = MaxFormProblem.affine(pagerank.A)
    elif spec.problem == "maxform":
        problem = _load_maxform(spec)
    elif spec.problem == "blocksum":
        problem = BlockSumProblem(spec.blocks, _load_maxform(spec))
        if spec.oracle == "two-spike":
            return problem, lambda: BlockSumOracle(problem)
        return problem, lambda: ExactMaxFormOracle(problem)
    else:
        raise ConfigError(f"{spec.problem} is not an unconstrained problem")
    factory = TwoSpikeOracle if spec.oracle == "two-spike" else ExactMaxFormOracle
    return problem, lambda: factory(problem)


def load_constrained(spec: RunSpec) -> tuple[MaxFormProblem, MaxFormProblem]:
    """f(x) = c^T x and g(x) = max_k(A_k^T x - b_k), equalities folded into two rows each."""
    A = read_matrix_market(spec.matrix)
    b = read_vector(spec.rhs)
    c = read_vector(spec.cost)
    if len(c) != A.n:
        raise ConfigError(f"{spec.cost}: cost has {len(c)} entries for {A.n} columns")
    rows, rhs = [A.row_view], [b]
    if spec.eq_matrix:
        C = read_matrix_market(spec.eq_matrix)
        d = read_vector(spec.eq_rhs)
        rows += [C.row_view, -C.row_view]
        rhs += [d, -d]
    G = SparseMatrixDual.from_scipy(sparse.vstack(rows, format="csr"))
    offsets = np.concatenate(rhs)
    f = MaxFormProblem.affine(SparseMatrixDual.from_scipy(sparse.csr_matrix(c.reshape(1, -1))), [0.0])
    return f, MaxFormProblem.affine(G, offsets)


def solver_config(spec: RunSpec, setup: ProxSetup) -> SolverConfig:
    radius = spec.radius
    if radius is None and spec.iterations is None and not setup.is_simplex:
        print("⚠️ no --radius or --iterations given for a Euclidean prox, assuming R = 1")
        radius = 1.0
    return SolverConfig(
        prox=setup,
        epsilon=spec.eps,
        horizon_N=spec.iterations,
        M=spec.lipschitz,
        R=radius,
        step_rule=spec.step_rule,
        seed=spec.seed,
        confidence_sigma=spec.sigma,
        averaging=Averaging.BEST if spec.best_iterate else Averaging.MEAN,
        epsilon_f=spec.eps_f,
        epsilon_g=spec.eps_g,
    )


# ================= output =================

def format_report(spec: RunSpec, report, extra: Optional[dict] = None) -> str:
    lines = {"problem": spec.problem, "matrix": spec.matrix, "oracle": spec.oracle, "prox": spec.prox}
    lines.update(extra or {})
    lines.update(report.summary())
    return "".join(f"{key}: {_fmt(value)}\n" for key, value in lines.items())


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def write_outputs(spec: RunSpec, report, text: str):
    if spec.report:
        with open(spec.report, "w", encoding="utf-8") as f:
            f.write(text)
        print(f"✅ report written: {spec.report}")
    else:
        print(text, end="")
    if spec.trace:
        report.trace_frame().to_csv(spec.trace, index=False, float_format="%.17g")
        print(f"✅ trace written: {spec.trace}")
    if spec.solution and report.solution is not None:
        write_matrix_market(spec.solution, report.solution, comment=f"{spec.problem} solution")
        print(f"✅ solution written: {spec.solution}")


# ================= commands =================

def cmd_solve(spec: RunSpec) -> int:
    spec.validate()
    print(f"🚀 solving {spec.problem} ({spec.matrix}) with {spec.oracle} / {spec.prox}, seed {spec.seed}")

    if spec.problem == "constrained-lp":
        f_problem, g_problem = load_constrained(spec)
        setup = _prox_setup(spec, f_problem.n)
        config = solver_config(spec, setup)
        factory = TwoSpikeOracle if spec.oracle == "two-spike" else ExactMaxFormOracle
        try:
            report = constrained_mirror_descent(config, factory(f_problem), factory(g_problem))
        except NoProductiveStepsError as e:
            text = format_report(spec, e.report, {"status": "failed", "reason": "no productive steps"})
            write_outputs(spec, e.report, text)
            print(f"❌ {e}")
            return EXIT_CHECK_FAILED
        write_outputs(spec, report, format_report(spec, report, {"status": "ok"}))
        return EXIT_OK

    problem, make_oracle = load_problem(spec)
    setup = _prox_setup(spec, problem.n)
    config = solver_config(spec, setup)
    f_exact = make_oracle().objective

    def run(trajectory):
        return mirror_descent(config, make_oracle(), f_exact=f_exact, trajectory=trajectory)

    best, reports = amplify(config, run, f_exact, workers=spec.workers)
    report = next(r for r in reports if r.solution is best)
    extra = {"status": "ok", "trajectories": len(reports)}
    if len(reports) > 1:
        extra["trajectory_f"] = ",".join(repr(r.final_f) for r in reports)
    write_outputs(spec, report, format_report(spec, report, extra))
    print(f"✅ f(x) = {report.final_f:.6g} after {report.iterations} iterations")
    return EXIT_OK


def _verification_point(spec: RunSpec, n: int, simplex: bool) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    if simplex:
        return rng.dirichlet(np.ones(n))
    return rng.normal(size=n)


def cmd_verify_oracle(spec: RunSpec) -> int:
    spec.validate()
    problem, make_oracle = load_problem(spec)
    m = problem.inner.m if isinstance(problem, BlockSumProblem) else getattr(problem, "m", problem.n)
    if max(m, problem.n) > MAX_ENUMERATION_SIZE:
        raise ConfigError(f"instance too large for enumeration: m={m}, n={problem.n} "
                          f"(limit {MAX_ENUMERATION_SIZE})")
    setup = _prox_setup(spec, problem.n)
    x = _verification_point(spec, problem.n, setup.is_simplex)
    exact = oracles.exact_subgradient(problem, x).dense(problem.n)

    if spec.oracle == "deterministic":
        oracle = make_oracle()
        state = SimplexState(np.log(x)) if setup.is_simplex else x.copy()
        oracle.reset(setup, state)
        outcomes = [(1.0, oracle.sample(state, None))]
    elif spec.oracle == "double-sample":
        outcomes = oracles.enumerate_double_sample(problem, x)
    elif spec.oracle == "sum-rand":
        outcomes = oracles.enumerate_sum_randomization(problem, RowDotCache(problem.A, x))
    elif isinstance(problem, BlockSumProblem):
        tracker = ArgmaxTree(problem.inner, x, blocks=problem.blocks)
        outcomes = oracles.enumerate_blocksum(problem, tracker)
    else:
        outcomes = oracles.enumerate_two_spike(problem, ArgmaxTree(problem, x))

    outcomes = list(outcomes)
    expected = oracles.expected_gradient(outcomes, problem.n)
    deviation = float(np.max(np.abs(expected - exact), initial=0.0))
    worst_ratio = max((g.norm(setup.dual_norm) / g.m_bound for _, g in outcomes if g.m_bound > 0), default=0.0)
    print(f"📊 {len(outcomes)} outcomes enumerated at a seeded point (seed {spec.seed})")
    print(f"max |E[grad] - exact| = {deviation:.3e}")
    print(f"max ||grad||_* / m_bound = {worst_ratio:.6f}")
    if deviation <= VERIFY_TOLERANCE and worst_ratio <= 1 + VERIFY_TOLERANCE:
        print("✅ oracle is unbiased at this point")
        return EXIT_OK
    print("❌ oracle check failed")
    return EXIT_CHECK_FAILED


# ================= argument parsing =================

def _blocks(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"❌ {SEED_ENV}={raw!r} is not an integer") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsemirror",
        description="Sparse randomized mirror descent.",
        epilog="supported pairings:\n" + compatibility_table(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", required=True,
                        choices=["pagerank", "pagerank-inf", "maxform", "blocksum", "constrained-lp"])
    common.add_argument("--matrix", required=True, help="Matrix Market file (P, or A)")
    common.add_argument("--oracle", default="deterministic",
                        choices=["double-sample", "sum-rand", "two-spike", "deterministic"])
    common.add_argument("--prox", default="entropy", choices=list(_ALL_PROX))
    common.add_argument("--seed", type=int, default=None, help=f"defaults to ${SEED_ENV}, then 0")
    common.add_argument("--offsets", help="row offsets b (Matrix Market vector)")
    common.add_argument("--row-function", default="affine", choices=sorted(oracles.SIGMAS))
    common.add_argument("--blocks", type=_blocks, default=[], help="block bounds, e.g. 0,3,6")
    common.add_argument("--anchor", help="orthant anchor: a number or a vector file")

    solve = sub.add_parser("solve", parents=[common], help="run mirror descent")
    solve.add_argument("--eps", type=float, help="target accuracy")
    solve.add_argument("--sigma", type=float, default=0.5, help="confidence; runs ceil(log2(1/sigma)) trajectories")
    solve.add_argument("--iterations", type=int, help="iteration budget N")
    solve.add_argument("--radius", type=float, help="distance bound R")
    solve.add_argument("--lipschitz", type=float, help="override the certified gradient bound M")
    solve.add_argument("--step-rule", default="target", choices=["target", "fixed"])
    solve.add_argument("--rhs", help="b for constrained-lp")
    solve.add_argument("--cost", help="c for constrained-lp")
    solve.add_argument("--eq-matrix", help="C for constrained-lp equalities")
    solve.add_argument("--eq-rhs", help="d for constrained-lp equalities")
    solve.add_argument("--eps-f", type=float)
    solve.add_argument("--eps-g", type=float)
    solve.add_argument("--best-iterate", action="store_true", help="report the best iterate (deterministic only)")
    solve.add_argument("--workers", type=int, default=1)
    solve.add_argument("--trace", help="CSV trace output")
    solve.add_argument("--report", help="report output (key: value lines)")
    solve.add_argument("--solution", help="write the solution vector as Matrix Market")
    solve.set_defaults(handler=cmd_solve)

    verify = sub.add_parser("verify-oracle", parents=[common], help="exhaustive unbiasedness check")
    verify.set_defaults(handler=cmd_verify_oracle)
    return parser


def spec_from_args(args) -> RunSpec:
    fields = RunSpec.__dataclass_fields__
    values = {name: getattr(args, name) for name in fields if hasattr(args, name)}
    if values.get("seed") is None:
        values["seed"] = _default_seed()
    return RunSpec(**values)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    spec = spec_from_args(args)
    try:
        return args.handler(spec)
    except (SparseMirrorError, OSError) as e:
        print(f"❌ {e}")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
