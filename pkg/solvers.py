"""Mirror descent drivers.

``mirror_descent`` runs one trajectory with a constant step and returns the
running mean of its iterates. ``constrained_mirror_descent`` switches between
f- and g-steps on the exact constraint value and averages only the productive
(feasible) iterates. ``amplify`` keeps the best of several independent
trajectories.
"""
from __future__ import annotations

import enum
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
import pandas as pd

from prox import (
    FixedHorizon,
    ProxError,
    ProxKind,
    ProxSetup,
    TargetAccuracy,
    initial_state,
    make_averager,
    mirror_step,
    point_of,
    step_size,
)
from oracles import IncompatibleNormError
from sparse_core import DEFAULT_REFRESH_PERIOD, ProblemError, SparseMirrorError

logger = logging.getLogger(__name__)

# default number of trace points per trajectory
TRACE_POINTS = 1000


class ConfigError(SparseMirrorError, ValueError):
    pass


class NonFiniteIterateError(SparseMirrorError, RuntimeError):
    def __init__(self, iteration: int, message: str = ""):
        super().__init__(f"non-finite iterate at iteration {iteration}" + (f": {message}" if message else ""))
        self.iteration = iteration


class NoProductiveStepsError(SparseMirrorError, RuntimeError):
    def __init__(self, report: "RunReport"):
        super().__init__(f"no productive steps in {report.iterations} iterations "
                         f"(every iterate violated the constraint tolerance)")
        self.report = report


class Averaging(str, enum.Enum):
    MEAN = "mean"
    BEST = "best"
    PRODUCTIVE = "productive"


@dataclass
class SolverConfig:
    prox: ProxSetup
    epsilon: Optional[float] = None
    horizon_N: Optional[int] = None
    M: Optional[float] = None
    # distance bound; defaults to sqrt(ln n) on the simplex
    R: Optional[float] = None
    step_rule: str = "target"
    seed: int = 0
    confidence_sigma: float = 0.5
    averaging: Averaging = Averaging.MEAN
    epsilon_f: Optional[float] = None
    epsilon_g: Optional[float] = None
    M_f: Optional[float] = None
    M_g: Optional[float] = None
    trace_every: Optional[int] = None
    check_iterates: bool = False
    refresh_period: int = DEFAULT_REFRESH_PERIOD

    def radius(self) -> Optional[float]:
        if self.R is not None:
            return self.R
        if self.prox.is_simplex and self.prox.n > 1:
            return math.sqrt(math.log(self.prox.n))
        return None

    def plan(self, oracle_bound: float) -> tuple[float, int, float]:
        """(alpha, N, M) for an unconstrained run."""
        M = self.M if self.M is not None else oracle_bound
        if not M > 0:
            # only a zero oracle certifies M = 0; any step leaves its trajectory fixed
            M = 1.0
        R = self.radius()
        N = self.horizon_N
        if self.epsilon is not None and R is not None:
            derived = derive_horizon(self.epsilon, M, R)
            if N is None:
                N = derived
            elif self.step_rule == "target" and N != derived:
                raise ConfigError(f"horizon {N} inconsistent with epsilon {self.epsilon} (expected {derived})")
        if N is None:
            raise ConfigError("horizon_N is required when no distance bound R is known")
        if self.step_rule == "target":
            if self.epsilon is None:
                raise ConfigError("the target-accuracy step rule needs epsilon")
            alpha = step_size(TargetAccuracy(self.epsilon, M))
        elif self.step_rule == "fixed":
            if R is None:
                raise ConfigError("the fixed-horizon step rule needs R")
            alpha = step_size(FixedHorizon(R, M, N))
        else:
            raise ConfigError(f"unknown step rule {self.step_rule!r}")
        return alpha, int(N), M


@dataclass(frozen=True)
class TracePoint:
    iteration: int
    f: float
    g: Optional[float]
    touched_rows: int


@dataclass
class RunReport:
    x_bar: Optional[np.ndarray]
    iterations: int
    alpha: float
    seed: int
    trajectory: int = 0
    averaging: Averaging = Averaging.MEAN
    trace: list = field(default_factory=list)
    counters: dict = field(default_factory=dict)
    final_f: Optional[float] = None
    final_g: Optional[float] = None
    x_best: Optional[np.ndarray] = None
    best_f: Optional[float] = None
    productive_steps: Optional[int] = None
    j_steps: Optional[int] = None
    steps: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def solution(self) -> Optional[np.ndarray]:
        if self.averaging is Averaging.BEST and self.x_best is not None:
            return self.x_best
        return self.x_bar

    @property
    def f_values(self) -> list[tuple[int, float]]:
        return [(p.iteration, p.f) for p in self.trace]

    @property
    def constraint_trace(self) -> list[tuple[int, float]]:
        return [(p.iteration, p.g) for p in self.trace if p.g is not None]

    def trace_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(p) for p in self.trace], columns=["iteration", "f", "g", "touched_rows"])

    def summary(self) -> dict:
        out = {
            "final_f": self.final_f,
            "iterations": self.iterations,
            "alpha": self.alpha,
            "seed": self.seed,
            "trajectory": self.trajectory,
            "averaging": self.averaging.value,
        }
        if self.final_g is not None:
            out["final_g"] = self.final_g
        if self.best_f is not None:
            out["best_f"] = self.best_f
        if self.productive_steps is not None:
            out["productive_steps"] = self.productive_steps
            out["j_steps"] = self.j_steps
        for name, value in self.steps.items():
            out[f"step_{name}"] = value
        for name, value in sorted(self.counters.items()):
            out[f"counter_{name}"] = value
        out["wall_time"] = self.wall_time
        return out


class UniformStream:
    """PCG64 uniforms for one trajectory, counting every draw.

    Trajectory t uses child t of SeedSequence(seed), the same stream
    ``SeedSequence(seed).spawn(k)[t]`` yields for any k > t.
    """

    def __init__(self, seed: int = 0, trajectory: int = 0):
        self.seed = seed
        self.trajectory = trajectory
        self._generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(trajectory,))))
        self.count = 0

    def random(self) -> float:
        self.count += 1
        return float(self._generator.random())


def derive_horizon(epsilon: float, M: float, R: float, constrained: bool = False) -> int:
    """N = ceil(2 M^2 R^2 / eps^2), plus one for the constrained scheme."""
    for name, value in (("epsilon", epsilon), ("M", M), ("R", R)):
        if not value > 0:
            raise ConfigError(f"{name} must be positive, got {value}")
    # rounding guard so exact integers are not pushed up by float noise
    N = math.ceil(round(2.0 * M * M * R * R / (epsilon * epsilon), 9))
    return N + 1 if constrained else N


def _check_norms(setup: ProxSetup, *oracles):
    for oracle in oracles:
        if setup.dual_norm not in oracle.supported_norms:
            raise IncompatibleNormError(
                f"{type(oracle).__name__} certifies {'/'.join(oracle.supported_norms)} bounds, "
                f"the {setup.kind.value} prox needs {setup.dual_norm}")


def _check_step(setup: ProxSetup, grad, state, changes, k: int, check: bool):
    if changes:
        deltas = np.fromiter((d for _, d in changes), dtype=float, count=len(changes))
        if not np.all(np.isfinite(deltas)):
            raise NonFiniteIterateError(k)
    if not check:
        return
    bound = grad.m_bound * (1 + 1e-12) + 1e-12
    if grad.norm(setup.dual_norm) > bound:
        raise ProblemError(f"gradient norm {grad.norm(setup.dual_norm)} above certified bound {grad.m_bound}"
                           f" at iteration {k}")
    x = point_of(state)
    if not np.all(np.isfinite(x)):
        raise NonFiniteIterateError(k)
    if setup.kind is not ProxKind.EUCLIDEAN_FREE and x.min() < 0:
        raise NonFiniteIterateError(k, "iterate left the feasible set")
    if setup.is_simplex and abs(x.sum() - 1.0) > 1e-12:
        raise NonFiniteIterateError(k, f"simplex mass {x.sum()!r}")


def _counters(oracles, rng: UniformStream) -> dict:
    merged = {}
    for oracle in oracles:
        for key, value in oracle.counters().items():
            merged[key] = merged.get(key, 0) + value
    merged["uniforms"] = rng.count
    return merged


def mirror_descent(config: SolverConfig, oracle, prox: Optional[ProxSetup] = None,
                   f_exact: Optional[Callable] = None, trajectory: int = 0) -> RunReport:
    setup = prox or config.prox
    _check_norms(setup, oracle)
    if config.averaging is Averaging.BEST and not oracle.deterministic:
        raise ConfigError("best-iterate output needs a deterministic oracle")
    alpha, N, M = config.plan(oracle.lipschitz_bound(setup.dual_norm))
    f_exact = f_exact or oracle.objective
    trace_every = config.trace_every or max(1, N // TRACE_POINTS)
    track_best = oracle.deterministic

    state = initial_state(setup, config.refresh_period)
    oracle.reset(setup, state)
    averager = make_averager(setup, state)
    rng = UniformStream(config.seed, trajectory)
    logger.info("trajectory %d: N=%d alpha=%.6g M=%.6g prox=%s", trajectory, N, alpha, M, setup.kind.value)

    trace = []
    best_f, x_best = math.inf, None
    started = time.perf_counter()
    for k in range(1, N + 1):
        if track_best:
            f_k = oracle.value(state)
            if f_k < best_f:
                best_f, x_best = f_k, point_of(state).copy()
        averager.add_current(state)
        if (k - 1) % trace_every == 0:
            f_now = f_exact(point_of(state))
            touched = oracle.counters().get("touched_rows", 0)
            trace.append(TracePoint(k, f_now, None, touched))
            logger.debug("k=%d f=%.6g", k, f_now)
        grad = oracle.sample(state, rng)
        try:
            state, changes = mirror_step(setup, state, grad.entries, alpha)
        except ProxError as e:
            raise NonFiniteIterateError(k, str(e)) from e
        _check_step(setup, grad, state, changes, k, config.check_iterates)
        averager.apply(changes, state)
        oracle.observe(changes, state)

    x_bar = averager.mean(state)
    report = RunReport(
        x_bar=x_bar,
        iterations=N,
        alpha=alpha,
        seed=config.seed,
        trajectory=trajectory,
        averaging=config.averaging,
        trace=trace,
        counters=_counters([oracle], rng),
        final_f=float(f_exact(x_bar)),
        x_best=x_best,
        best_f=float(best_f) if x_best is not None else None,
        wall_time=time.perf_counter() - started,
    )
    logger.info("trajectory %d done: f(x_bar)=%.6g in %.3fs", trajectory, report.final_f, report.wall_time)
    return report


def constrained_mirror_descent(config: SolverConfig, f_oracle, g_oracle,
                               g_exact: Optional[Callable] = None, trajectory: int = 0) -> RunReport:
    """Switching scheme: f-step with h_f when g(x^k) <= eps_g, else g-step with h_g.

    ``g_exact`` maps a point to g(x); by default the g-oracle's tracked value
    is used, which is exact for max-form constraints.
    """
    setup = config.prox
    _check_norms(setup, f_oracle, g_oracle)
    eps_g = config.epsilon_g
    if eps_g is None or not eps_g > 0:
        raise ConfigError(f"epsilon_g must be positive, got {eps_g}")
    M_f = config.M_f if config.M_f is not None else f_oracle.lipschitz_bound(setup.dual_norm)
    M_g = config.M_g if config.M_g is not None else g_oracle.lipschitz_bound(setup.dual_norm)
    if not (M_f > 0 and M_g > 0):
        raise ConfigError(f"M_f and M_g must be positive, got {M_f} and {M_g}")
    N = config.horizon_N
    R = config.radius()
    if R is not None:
        derived = derive_horizon(eps_g, M_g, R, constrained=True)
        if N is None:
            N = derived
        elif N != derived:
            raise ConfigError(f"horizon {N} inconsistent with epsilon_g {eps_g} (expected {derived})")
    if N is None:
        raise ConfigError("horizon_N or R is required for the constrained scheme")
    h_g = eps_g / M_g ** 2
    h_f = config.epsilon_f / M_f ** 2 if config.epsilon_f is not None else eps_g / (M_f * M_g)
    trace_every = config.trace_every or max(1, N // TRACE_POINTS)
    track_best = f_oracle.deterministic

    state = initial_state(setup, config.refresh_period)
    f_oracle.reset(setup, state)
    g_oracle.reset(setup, state)
    averager = make_averager(setup, state)
    rng = UniformStream(config.seed, trajectory)
    logger.info("constrained trajectory %d: N=%d h_f=%.6g h_g=%.6g", trajectory, N, h_f, h_g)

    def g_value():
        return g_exact(point_of(state)) if g_exact is not None else g_oracle.value(state)

    trace = []
    productive = j_steps = 0
    best_f, x_best = math.inf, None
    started = time.perf_counter()
    for k in range(1, N + 1):
        g_k = g_value()
        if not math.isfinite(g_k):
            raise NonFiniteIterateError(k, "constraint value")
        if (k - 1) % trace_every == 0:
            f_now = f_oracle.objective(point_of(state))
            trace.append(TracePoint(k, f_now, g_k, _counters([f_oracle, g_oracle], rng)["touched_rows"]))
        if g_k <= eps_g:
            productive += 1
            averager.add_current(state)
            if track_best:
                f_k = f_oracle.value(state)
                if f_k < best_f:
                    best_f, x_best = f_k, point_of(state).copy()
            grad, h = f_oracle.sample(state, rng), h_f
        else:
            j_steps += 1
            grad, h = g_oracle.sample(state, rng), h_g
        try:
            state, changes = mirror_step(setup, state, grad.entries, h)
        except ProxError as e:
            raise NonFiniteIterateError(k, str(e)) from e
        _check_step(setup, grad, state, changes, k, config.check_iterates)
        averager.apply(changes, state)
        f_oracle.observe(changes, state)
        g_oracle.observe(changes, state)

    report = RunReport(
        x_bar=None,
        iterations=N,
        alpha=h_f,
        seed=config.seed,
        trajectory=trajectory,
        averaging=Averaging.PRODUCTIVE,
        trace=trace,
        counters=_counters([f_oracle, g_oracle], rng),
        x_best=x_best,
        best_f=float(best_f) if x_best is not None else None,
        productive_steps=productive,
        j_steps=j_steps,
        steps={"h_f": h_f, "h_g": h_g},
        wall_time=time.perf_counter() - started,
    )
    if not productive:
        raise NoProductiveStepsError(report)
    report.x_bar = averager.mean(state)
    report.final_f = float(f_oracle.objective(report.x_bar))
    report.final_g = float(g_exact(report.x_bar) if g_exact is not None else g_oracle.objective(report.x_bar))
    logger.info("constrained trajectory %d done: f=%.6g g=%.6g N_I=%d N_J=%d",
                trajectory, report.final_f, report.final_g, productive, j_steps)
    return report


def trajectories_for(sigma: float) -> int:
    if not 0 < sigma < 1:
        raise ConfigError(f"confidence sigma must lie in (0, 1), got {sigma}")
    return max(1, math.ceil(round(math.log2(1.0 / sigma), 9)))


def amplify(config: SolverConfig, solver: Callable[[int], RunReport], f_exact: Callable,
            workers: int = 1) -> tuple[np.ndarray, list[RunReport]]:
    """Run ceil(log2(1/sigma)) trajectories and keep the one with the smallest exact f.

    ``solver(t)`` must build its own oracle state and run trajectory t.
    """
    count = trajectories_for(config.confidence_sigma)
    if workers > 1 and count > 1:
        with ThreadPoolExecutor(max_workers=min(workers, count)) as pool:
            reports = list(pool.map(solver, range(count)))
    else:
        reports = [solver(t) for t in range(count)]
    values = [float(f_exact(r.solution)) for r in reports]
    best = int(np.argmin(values))
    logger.info("amplified %d trajectories: best %d with f=%.6g", count, best, values[best])
    return reports[best].solution, reports
