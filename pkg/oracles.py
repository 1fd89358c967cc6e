"""Stochastic and exact (sub)gradient oracles.

Problem types hold immutable data. Sampling functions take an explicit
uniform source (anything with ``random()``) and document how many uniforms
they consume, so every draw can be replayed or enumerated. The ``*Oracle``
classes bind a problem to the per-trajectory state a solver needs (caches,
argmax trackers) behind one interface.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Optional, Protocol, Sequence

import numpy as np

from argmax_tracker import ArgmaxTree
from prox import ProxSetup, SimplexState, SparseVector, tracked_point
from sampling import EmptyDistributionError, WeightTree, build_signed_row_samplers
from sparse_core import (
    DEFAULT_REFRESH_PERIOD,
    IdentityShiftedView,
    ProblemError,
    RowDotCache,
    SparseMatrixDual,
    SparseMirrorError,
    SparseOperator,
)

logger = logging.getLogger(__name__)

# slack for rounding when checking |sigma'| <= M
_LIPSCHITZ_SLACK = 1e-12


class IncompatibleNormError(SparseMirrorError, ValueError):
    pass


@dataclass(frozen=True)
class StochGrad:
    entries: SparseVector
    m_bound: float
    meta: dict = field(default_factory=dict)

    def norm(self, kind: str) -> float:
        return self.entries.norm(kind)

    def dense(self, n: int) -> np.ndarray:
        return self.entries.dense(n)


class UniformSource(Protocol):
    def random(self) -> float: ...


class ReplayUniforms:
    """Feeds a fixed list of uniforms; used to enumerate oracle outcomes."""

    def __init__(self, values: Sequence[float]):
        self._values = list(values)
        self.consumed = 0

    def random(self) -> float:
        if self.consumed >= len(self._values):
            raise IndexError(f"only {len(self._values)} uniforms were scripted")
        u = self._values[self.consumed]
        self.consumed += 1
        return u


# ================= scalar functions sigma_k =================

class AffineSigma:
    """sigma_k(t) = t - b_k."""

    name = "affine"
    lipschitz = 1.0

    def value(self, t, b):
        return t - b

    def derivative(self, t, b):
        return np.ones_like(np.asarray(t, dtype=float))


class AbsSigma:
    """sigma_k(t) = |t - b_k|; derivative 0 at the kink."""

    name = "abs"
    lipschitz = 1.0

    def value(self, t, b):
        return np.abs(t - b)

    def derivative(self, t, b):
        return np.sign(np.asarray(t, dtype=float) - b)


AFFINE = AffineSigma()
ABSOLUTE = AbsSigma()
SIGMAS = {"affine": AFFINE, "abs": ABSOLUTE}


# ================= problems =================

class PageRankProblem:
    """f(x) = 1/2 ||(P^T - I) x||^2 over the simplex, P row-stochastic."""

    def __init__(self, P: SparseMatrixDual, tol: float = 1e-9):
        if P.m != P.n:
            raise ProblemError(f"P must be square, got {P.m}x{P.n}")
        if P.nnz and P.row_view.data.min() < 0:
            raise ProblemError("P has negative entries")
        sums = np.asarray(P.row_view.sum(axis=1)).ravel()
        bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
        if bad.size:
            k = int(bad[0])
            raise ProblemError(f"non-stochastic row {k}: sum {sums[k]:.12g}")
        self.P = P
        self.A = IdentityShiftedView(P.T, -1.0)
        self.n = P.n

    @cached_property
    def row_trees(self) -> list[WeightTree]:
        return [WeightTree(*self.P.row(k)) for k in range(self.n)]

    def residual(self, x) -> np.ndarray:
        return self.A.matvec(x)


class MaxFormProblem:
    """f(x) = max_k sigma(A_k^T x - b_k) for one sigma family and per-row offsets."""

    def __init__(self, A: SparseOperator, offsets=None, sigma=AFFINE):
        self.A = A
        self.offsets = np.zeros(A.m) if offsets is None else np.asarray(offsets, dtype=float).ravel()
        if self.offsets.shape != (A.m,):
            raise ProblemError(f"{len(self.offsets)} offsets for {A.m} rows")
        self.sigma = sigma

    @classmethod
    def affine(cls, A, b=None) -> "MaxFormProblem":
        return cls(A, b, AFFINE)

    @property
    def m(self) -> int:
        return self.A.m

    @property
    def n(self) -> int:
        return self.A.n

    @property
    def M(self) -> float:
        return self.sigma.lipschitz

    @property
    def homogeneous(self) -> bool:
        """sigma_k(c t) = c sigma_k(t) for c > 0: affine with zero offsets."""
        return self.sigma is AFFINE and not np.any(self.offsets)

    @cached_property
    def samplers(self):
        return build_signed_row_samplers(self.A)

    def leaf_values(self, dots, rows=None):
        b = self.offsets if rows is None else self.offsets[rows]
        return self.sigma.value(np.asarray(dots, dtype=float), b)

    def derivative(self, k: int, t: float) -> float:
        s = float(self.sigma.derivative(t, self.offsets[k]))
        if abs(s) > self.M + _LIPSCHITZ_SLACK:
            raise ProblemError(f"|sigma'| = {abs(s)} exceeds Lipschitz bound {self.M} at row {k}")
        return s

    def evaluate(self, x, rows: Optional[slice] = None) -> tuple[int, float]:
        """(k, value) of the largest row term, lowest index on ties."""
        values = self.leaf_values(self.A.matvec(x))
        start = 0
        if rows is not None:
            start = rows.start
            values = values[rows]
        k = int(np.argmax(values))
        return start + k, float(values[k])

    def objective(self, x) -> float:
        return self.evaluate(x)[1]


class BlockSumProblem:
    """(1/r) sum over contiguous row blocks of the block maximum."""

    def __init__(self, bounds: Sequence[int], inner: MaxFormProblem):
        bounds = [int(b) for b in bounds]
        if len(bounds) < 2 or bounds[0] != 0 or bounds[-1] != inner.m:
            raise ProblemError(f"block bounds must run from 0 to {inner.m}, got {bounds}")
        if any(b <= a for a, b in zip(bounds, bounds[1:])):
            raise ProblemError(f"block bounds must be strictly increasing, got {bounds}")
        self.bounds = bounds
        self.inner = inner

    @property
    def blocks(self) -> list[tuple[int, int]]:
        return list(zip(self.bounds, self.bounds[1:]))

    @property
    def r(self) -> int:
        return len(self.bounds) - 1

    @property
    def n(self) -> int:
        return self.inner.n

    def objective(self, x) -> float:
        return float(np.mean([self.inner.evaluate(x, slice(a, b))[1] for a, b in self.blocks]))


# ================= exact values and gradients =================

def pagerank_objective(problem: PageRankProblem, x) -> float:
    y = problem.residual(x)
    return 0.5 * float(np.dot(y, y))


def pagerank_exact_gradient(problem: PageRankProblem, x) -> np.ndarray:
    """A^T A x with A = P^T - I, i.e. P y - y for y = P^T x - x."""
    return problem.A.rmatvec(problem.residual(x))


def _row_vector(A: SparseOperator, k: int, factor: float) -> SparseVector:
    idx, vals = A.row(k)
    return SparseVector(np.asarray(idx, dtype=np.int64), vals * factor)


def exact_subgradient(problem, x) -> SparseVector:
    """A deterministic (sub)gradient; max-form ties go to the lowest row."""
    x = np.asarray(x, dtype=float)
    if isinstance(problem, PageRankProblem):
        g = pagerank_exact_gradient(problem, x)
        nz = np.flatnonzero(g)
        return SparseVector(nz, g[nz])
    if isinstance(problem, MaxFormProblem):
        k, _ = problem.evaluate(x)
        return _row_vector(problem.A, k, problem.derivative(k, problem.A.row_dot(k, x)))
    if isinstance(problem, BlockSumProblem):
        inner = problem.inner
        parts = []
        for a, b in problem.blocks:
            k, _ = inner.evaluate(x, slice(a, b))
            parts.append(_row_vector(inner.A, k, inner.derivative(k, inner.A.row_dot(k, x)) / problem.r))
        return SparseVector.from_arrays(np.concatenate([p.indices for p in parts]),
                                        np.concatenate([p.values for p in parts]))
    raise TypeError(f"no exact subgradient for {type(problem).__name__}")


# ================= stochastic oracles =================

def pagerank_double_sample(problem: PageRankProblem, x, rng: UniformSource, cdf=None) -> StochGrad:
    """xi ~ x, then j ~ row xi of P; returns column j minus column xi of P - I.

    Consumes two uniforms. ``cdf`` may carry a precomputed cumulative sum of x.
    """
    if cdf is None:
        cdf = np.cumsum(x)
    u = rng.random()
    xi = min(int(np.searchsorted(cdf, u * cdf[-1], side="right")), problem.n - 1)
    try:
        j = problem.row_trees[xi].sample(rng.random())
    except EmptyDistributionError:
        raise ProblemError(f"non-stochastic row {xi}") from None
    if j == xi:
        entries = SparseVector.zero()
    else:
        idx_j, val_j = problem.A.row(j)
        idx_x, val_x = problem.A.row(xi)
        entries = SparseVector.from_arrays(np.concatenate([idx_j, idx_x]), np.concatenate([val_j, -val_x]))
    return StochGrad(entries, 2.0, {"xi": xi, "j": j})


def pagerank_sum_randomization(problem: PageRankProblem, cache: RowDotCache, rng: UniformSource,
                               scale: float = 1.0) -> StochGrad:
    """n (A_xi^T x) A_xi for xi uniform; one uniform.

    ``cache`` holds <A_k, v> with x = scale * v.
    """
    n = problem.n
    xi = min(int(rng.random() * n), n - 1)
    dot = scale * float(cache.values[xi])
    idx, vals = problem.A.row(xi)
    entries = SparseVector(np.asarray(idx, dtype=np.int64), n * dot * vals)
    bound = n * abs(dot) * float(np.max(np.abs(vals))) if len(vals) else 0.0
    return StochGrad(entries, bound, {"xi": xi})


def maxform_two_spike(problem: MaxFormProblem, tracker: ArgmaxTree, samplers, rng: UniformSource,
                      block: Optional[int] = None) -> StochGrad:
    """s (||A+_k||_1 e_i - ||A-_k||_1 e_j) for the active row k; always two uniforms."""
    k, _ = tracker.current(block)
    s = problem.derivative(k, tracker.row_dot(k))
    sampler = samplers[k]
    u_pos, u_neg = rng.random(), rng.random()
    idx, vals = [], []
    meta = {"k": k}
    if sampler.l1_pos > 0:
        i = sampler.pos.sample(u_pos)
        idx.append(i)
        vals.append(s * sampler.l1_pos)
        meta["i"] = i
    if sampler.l1_neg > 0:
        j = sampler.neg.sample(u_neg)
        idx.append(j)
        vals.append(-s * sampler.l1_neg)
        meta["j"] = j
    entries = SparseVector.from_arrays(idx, vals) if s != 0.0 else SparseVector.zero()
    return StochGrad(entries, abs(s) * (sampler.l1_pos + sampler.l1_neg), meta)


def blocksum_oracle(problem: BlockSumProblem, tracker: ArgmaxTree, rng: UniformSource,
                    samplers=None) -> StochGrad:
    """Uniform block, then a two-spike draw inside it; not rescaled by r. Three uniforms."""
    block = min(int(rng.random() * problem.r), problem.r - 1)
    samplers = problem.inner.samplers if samplers is None else samplers
    grad = maxform_two_spike(problem.inner, tracker, samplers, rng, block=block)
    grad.meta["block"] = block
    return grad


# ================= outcome enumeration =================

def _leaf_midpoints(tree: WeightTree) -> list[tuple[float, float]]:
    """(u, probability) hitting every positive leaf of a tree once."""
    if tree.total <= 0:
        return [(0.5, 1.0)]
    w = tree.weights
    before = np.cumsum(w) - w
    return [((before[i] + w[i] / 2) / tree.total, w[i] / tree.total) for i in range(len(w)) if w[i] > 0]


def enumerate_double_sample(problem: PageRankProblem, x) -> Iterator[tuple[float, StochGrad]]:
    x = np.asarray(x, dtype=float)
    total = x.sum()
    before = np.cumsum(x) - x
    for xi in np.flatnonzero(x > 0):
        u1 = (before[xi] + x[xi] / 2) / total
        for u2, p in _leaf_midpoints(problem.row_trees[xi]):
            yield x[xi] / total * p, pagerank_double_sample(problem, x, ReplayUniforms([u1, u2]))


def enumerate_sum_randomization(problem: PageRankProblem, cache: RowDotCache, scale=1.0):
    n = problem.n
    for xi in range(n):
        yield 1.0 / n, pagerank_sum_randomization(problem, cache, ReplayUniforms([(xi + 0.5) / n]), scale)


def enumerate_two_spike(problem: MaxFormProblem, tracker: ArgmaxTree, samplers=None, block=None):
    samplers = problem.samplers if samplers is None else samplers
    k, _ = tracker.current(block)
    for u1, p1 in _leaf_midpoints(samplers[k].pos):
        for u2, p2 in _leaf_midpoints(samplers[k].neg):
            yield p1 * p2, maxform_two_spike(problem, tracker, samplers, ReplayUniforms([u1, u2]), block)


def enumerate_blocksum(problem: BlockSumProblem, tracker: ArgmaxTree):
    r = problem.r
    samplers = problem.inner.samplers
    for b in range(r):
        u0 = (b + 0.5) / r
        k, _ = tracker.current(b)
        for u1, p1 in _leaf_midpoints(samplers[k].pos):
            for u2, p2 in _leaf_midpoints(samplers[k].neg):
                yield p1 * p2 / r, blocksum_oracle(problem, tracker, ReplayUniforms([u0, u1, u2]))


def expected_gradient(outcomes, n: int) -> np.ndarray:
    mean = np.zeros(n)
    mass = 0.0
    for p, grad in outcomes:
        mean += p * grad.dense(n)
        mass += p
    if not math.isclose(mass, 1.0, rel_tol=0, abs_tol=1e-12):
        raise ProblemError(f"outcome probabilities sum to {mass}")
    return mean


# ================= trajectory-bound oracles =================

class _TrackedOracle:
    """Shared plumbing for oracles that keep an ArgmaxTree over the iterate."""

    supported_norms = ("l2", "linf")
    deterministic = False
    # two-spike samples are bounded by ||A_k||_1 in every dual norm
    spike_bound = True

    def __init__(self, problem, refresh_period: int = DEFAULT_REFRESH_PERIOD):
        self.problem = problem
        self.refresh_period = refresh_period
        self.tracker: Optional[ArgmaxTree] = None
        self.calls = 0

    @property
    def _maxform(self) -> MaxFormProblem:
        return self.problem.inner if isinstance(self.problem, BlockSumProblem) else self.problem

    @property
    def _blocks(self):
        return self.problem.blocks if isinstance(self.problem, BlockSumProblem) else None

    def reset(self, setup: ProxSetup, state):
        vec, scale = tracked_point(state)
        self.tracker = ArgmaxTree(self._maxform, vec, scale, blocks=self._blocks,
                                  refresh_period=self.refresh_period)
        self.calls = 0

    def observe(self, changes, state):
        vec, scale = tracked_point(state)
        if changes is None:
            self.tracker.rebuild(vec, scale)
            return
        self.tracker.set_scale(scale)
        self.tracker.notify(changes)

    def value(self, state=None) -> float:
        if self._blocks is None:
            return self.tracker.current()[1]
        return float(np.mean([self.tracker.current(b)[1] for b in range(len(self._blocks))]))

    def objective(self, x) -> float:
        return self.problem.objective(x)

    def lipschitz_bound(self, norm: str) -> float:
        A = self._maxform.A
        return self._maxform.M * float(np.max(A.row_norms("l1" if self.spike_bound else norm), initial=0.0))

    def counters(self) -> dict:
        t = self.tracker
        return {
            "oracle_calls": self.calls,
            "touched_rows": t.touch_counter if t else 0,
            "tree_path_updates": t.path_updates if t else 0,
            "tree_rebuilds": t.rebuilds if t else 0,
        }


class TwoSpikeOracle(_TrackedOracle):
    def sample(self, state, rng) -> StochGrad:
        self.calls += 1
        return maxform_two_spike(self.problem, self.tracker, self.problem.samplers, rng)


class BlockSumOracle(_TrackedOracle):
    def sample(self, state, rng) -> StochGrad:
        self.calls += 1
        return blocksum_oracle(self.problem, self.tracker, rng)


class ExactMaxFormOracle(_TrackedOracle):
    """s_k A_k for the tracked argmax row (block average for block sums)."""

    deterministic = True
    spike_bound = False

    def sample(self, state, rng=None) -> StochGrad:
        self.calls += 1
        inner = self._maxform
        blocks = range(len(self._blocks)) if self._blocks else [None]
        parts = []
        for b in blocks:
            k, _ = self.tracker.current(b)
            s = inner.derivative(k, self.tracker.row_dot(k)) / len(blocks)
            parts.append(_row_vector(inner.A, k, s))
        entries = parts[0] if len(parts) == 1 else SparseVector.from_arrays(
            np.concatenate([p.indices for p in parts]), np.concatenate([p.values for p in parts]))
        return StochGrad(entries, entries.norm("l1"), {"rows": len(parts)})


class DoubleSampleOracle:
    supported_norms = ("linf",)
    deterministic = False

    def __init__(self, problem: PageRankProblem):
        self.problem = problem
        self.calls = 0

    def reset(self, setup, state):
        self.calls = 0

    def observe(self, changes, state):
        pass

    def sample(self, state, rng) -> StochGrad:
        self.calls += 1
        x = state.point() if isinstance(state, SimplexState) else state
        return pagerank_double_sample(self.problem, x, rng)

    def value(self, state) -> float:
        x = state.point() if isinstance(state, SimplexState) else state
        return pagerank_objective(self.problem, x)

    def objective(self, x) -> float:
        return pagerank_objective(self.problem, x)

    def lipschitz_bound(self, norm: str) -> float:
        return 2.0

    def counters(self) -> dict:
        return {"oracle_calls": self.calls, "touched_rows": 0, "tree_path_updates": 0, "tree_rebuilds": 0}


class ExactPageRankOracle(DoubleSampleOracle):
    deterministic = True

    def sample(self, state, rng=None) -> StochGrad:
        self.calls += 1
        x = state.point() if isinstance(state, SimplexState) else state
        g = exact_subgradient(self.problem, x)
        return StochGrad(g, 2.0, {})


class SumRandomizationOracle(DoubleSampleOracle):
    """Keeps <A_k, w> current so each draw costs one row of A."""

    def __init__(self, problem: PageRankProblem, refresh_period: int = DEFAULT_REFRESH_PERIOD):
        super().__init__(problem)
        self.refresh_period = refresh_period
        self.cache: Optional[RowDotCache] = None
        self._scale = 1.0

    def reset(self, setup, state):
        vec, self._scale = tracked_point(state)
        self.cache = RowDotCache(self.problem.A, vec, self.refresh_period)
        self.calls = 0

    def observe(self, changes, state):
        vec, self._scale = tracked_point(state)
        if changes is None:
            self.cache.reset(vec)
            return
        for j, delta in changes:
            self.cache.apply(j, delta)

    def sample(self, state, rng) -> StochGrad:
        self.calls += 1
        return pagerank_sum_randomization(self.problem, self.cache, rng, self._scale)

    def lipschitz_bound(self, norm: str) -> float:
        # |A_k^T x| <= ||A_k||_inf on the simplex
        linf = self.problem.A.row_norms("linf")
        return self.problem.n * float(np.max(linf ** 2, initial=0.0))

    def counters(self) -> dict:
        touched = self.cache.touched_rows if self.cache else 0
        return {"oracle_calls": self.calls, "touched_rows": touched, "tree_path_updates": 0, "tree_rebuilds": 0}


class KnownOptimumOracle:
    """Unconstrained surrogate max{f - f_*, g}: steps on whichever term is larger."""

    def __init__(self, f_oracle, g_oracle, f_star: float):
        self.f_oracle = f_oracle
        self.g_oracle = g_oracle
        self.f_star = float(f_star)
        self.supported_norms = tuple(set(f_oracle.supported_norms) & set(g_oracle.supported_norms))
        self.deterministic = f_oracle.deterministic and g_oracle.deterministic
        self.f_steps = 0
        self.g_steps = 0

    def reset(self, setup, state):
        self.f_oracle.reset(setup, state)
        self.g_oracle.reset(setup, state)
        self.f_steps = self.g_steps = 0

    def observe(self, changes, state):
        self.f_oracle.observe(changes, state)
        self.g_oracle.observe(changes, state)

    def sample(self, state, rng) -> StochGrad:
        if self.f_oracle.value(state) - self.f_star >= self.g_oracle.value(state):
            self.f_steps += 1
            return self.f_oracle.sample(state, rng)
        self.g_steps += 1
        return self.g_oracle.sample(state, rng)

    def value(self, state) -> float:
        return max(self.f_oracle.value(state) - self.f_star, self.g_oracle.value(state))

    def objective(self, x) -> float:
        return max(self.f_oracle.objective(x) - self.f_star, self.g_oracle.objective(x))

    def lipschitz_bound(self, norm: str) -> float:
        return max(self.f_oracle.lipschitz_bound(norm), self.g_oracle.lipschitz_bound(norm))

    def counters(self) -> dict:
        merged = {}
        for part in (self.f_oracle.counters(), self.g_oracle.counters()):
            for key, value in part.items():
                merged[key] = merged.get(key, 0) + value
        merged["f_steps"] = self.f_steps
        merged["g_steps"] = self.g_steps
        return merged


class ZeroOracle:
    """g = 0 everywhere; the trajectory never leaves the start point."""

    supported_norms = ("l2", "linf")
    deterministic = True

    def __init__(self, n: int):
        self.n = n
        self.calls = 0

    def reset(self, setup, state):
        self.calls = 0

    def observe(self, changes, state):
        pass

    def sample(self, state, rng=None) -> StochGrad:
        self.calls += 1
        return StochGrad(SparseVector.zero(), 0.0, {})

    def value(self, state) -> float:
        return 0.0

    def objective(self, x) -> float:
        return 0.0

    def lipschitz_bound(self, norm: str) -> float:
        return 0.0

    def counters(self) -> dict:
        return {"oracle_calls": self.calls, "touched_rows": 0, "tree_path_updates": 0, "tree_rebuilds": 0}
