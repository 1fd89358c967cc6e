"""Mirror maps: Euclidean on R^n, Euclidean on the orthant, entropy on the simplex.

Euclidean states are plain numpy vectors updated in place. The simplex state
keeps unnormalised weights w_i = exp(log_weights_i) and their sum Z, so a
sparse gradient touches only its support; x = w / Z is materialised on demand.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

import numpy as np
from scipy.special import logsumexp, rel_entr, softmax

from sparse_core import DEFAULT_REFRESH_PERIOD, SparseMirrorError

logger = logging.getLogger(__name__)

# log-weights beyond this magnitude are recentred before exp() overflows
LOG_WEIGHT_LIMIT = 300.0


class ProxError(SparseMirrorError, ValueError):
    pass


class ProxKind(str, enum.Enum):
    EUCLIDEAN_FREE = "euclidean-free"
    EUCLIDEAN_ORTHANT = "euclidean-orthant"
    ENTROPY = "entropy"


@dataclass(frozen=True, eq=False)
class ProxSetup:
    kind: ProxKind
    n: int
    anchor: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.n < 1:
            raise ProxError(f"dimension must be positive, got {self.n}")
        if self.kind is ProxKind.EUCLIDEAN_ORTHANT:
            anchor = np.asarray(self.anchor, dtype=float)
            if anchor.shape != (self.n,):
                raise ProxError(f"anchor of length {anchor.size} for dimension {self.n}")
            if not np.all(anchor > 0):
                raise ProxError("anchor must be strictly positive")
            object.__setattr__(self, "anchor", anchor)

    @classmethod
    def euclidean_free(cls, n: int) -> "ProxSetup":
        return cls(ProxKind.EUCLIDEAN_FREE, n)

    @classmethod
    def euclidean_orthant(cls, anchor) -> "ProxSetup":
        anchor = np.atleast_1d(np.asarray(anchor, dtype=float))
        return cls(ProxKind.EUCLIDEAN_ORTHANT, len(anchor), anchor)

    @classmethod
    def entropy_simplex(cls, n: int) -> "ProxSetup":
        return cls(ProxKind.ENTROPY, n)

    @property
    def is_simplex(self) -> bool:
        return self.kind is ProxKind.ENTROPY

    @property
    def norm(self) -> str:
        return "l1" if self.is_simplex else "l2"

    @property
    def dual_norm(self) -> str:
        """Norm in which gradient bounds must be certified."""
        return "linf" if self.is_simplex else "l2"


class SparseVector(NamedTuple):
    indices: np.ndarray
    values: np.ndarray

    @classmethod
    def from_pairs(cls, pairs) -> "SparseVector":
        """Coalesce (index, value) pairs; repeated indices are summed, zeros dropped."""
        pairs = list(pairs)
        if not pairs:
            return cls.zero()
        idx = np.fromiter((p[0] for p in pairs), dtype=np.int64, count=len(pairs))
        val = np.fromiter((p[1] for p in pairs), dtype=float, count=len(pairs))
        return cls.from_arrays(idx, val)

    @classmethod
    def from_arrays(cls, indices, values) -> "SparseVector":
        indices = np.asarray(indices, dtype=np.int64)
        values = np.asarray(values, dtype=float)
        uniq, inverse = np.unique(indices, return_inverse=True)
        summed = np.zeros(len(uniq))
        np.add.at(summed, inverse, values)
        keep = summed != 0.0
        return cls(uniq[keep], summed[keep])

    @classmethod
    def zero(cls) -> "SparseVector":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0))

    def __len__(self):
        return len(self.indices)

    def dense(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        np.add.at(out, self.indices, self.values)
        return out

    def norm(self, kind: str) -> float:
        if not len(self.values):
            return 0.0
        return float(np.linalg.norm(self.values, {"l1": 1, "l2": 2, "linf": np.inf}[kind]))

    def scaled(self, factor: float) -> "SparseVector":
        return SparseVector(self.indices, self.values * factor)

    def pairs(self) -> list[tuple[int, float]]:
        return list(zip(self.indices.tolist(), self.values.tolist()))


# ================= simplex state =================

@dataclass(eq=False)
class SimplexState:
    log_weights: np.ndarray
    weights: np.ndarray = field(init=False)
    weight_sum: float = field(init=False)
    refresh_period: int = DEFAULT_REFRESH_PERIOD
    steps_since_refresh: int = 0
    rescale_count: int = 0

    def __post_init__(self):
        self.log_weights = np.array(self.log_weights, dtype=float)
        self.recompute()

    @classmethod
    def uniform(cls, n: int, refresh_period: int = DEFAULT_REFRESH_PERIOD) -> "SimplexState":
        return cls(np.zeros(n), refresh_period=refresh_period)

    @property
    def n(self) -> int:
        return len(self.log_weights)

    @property
    def log_normalizer(self) -> float:
        return math.log(self.weight_sum)

    @property
    def scale(self) -> float:
        """x = scale * weights."""
        return 1.0 / self.weight_sum

    def recompute(self):
        self.weights = np.exp(self.log_weights)
        self.weight_sum = float(self.weights.sum())
        self.steps_since_refresh = 0

    def point(self) -> np.ndarray:
        return softmax(self.log_weights)

    def dense_log_normalizer(self) -> float:
        return float(logsumexp(self.log_weights))

    def recentre(self):
        self.log_weights -= logsumexp(self.log_weights)
        self.recompute()
        self.rescale_count += 1
        logger.debug("simplex log-weights recentred (%d)", self.rescale_count)


ProxState = Union[np.ndarray, SimplexState]


def start_point(setup: ProxSetup) -> np.ndarray:
    if setup.kind is ProxKind.EUCLIDEAN_FREE:
        return np.zeros(setup.n)
    if setup.kind is ProxKind.EUCLIDEAN_ORTHANT:
        return setup.anchor.copy()
    return np.full(setup.n, 1.0 / setup.n)


def initial_state(setup: ProxSetup, refresh_period: int = DEFAULT_REFRESH_PERIOD) -> ProxState:
    if setup.is_simplex:
        return SimplexState.uniform(setup.n, refresh_period)
    return start_point(setup)


def point_of(state: ProxState) -> np.ndarray:
    if isinstance(state, SimplexState):
        return state.point()
    return state


def tracked_point(state: ProxState) -> tuple[np.ndarray, float]:
    """The vector trackers follow, and the factor turning it into x."""
    if isinstance(state, SimplexState):
        return state.weights, state.scale
    return state, 1.0


def mirror_step(setup: ProxSetup, state: ProxState, g: SparseVector, alpha: float):
    """One prox step along a sparse gradient; Euclidean states change in place.

    Returns (state, changes). ``changes`` lists (coordinate, delta) of the
    tracked vector (x itself, or the simplex weights w) and is None when every
    coordinate moved (simplex recentring).
    """
    if not alpha > 0 or not math.isfinite(alpha):
        raise ProxError(f"step size must be positive and finite, got {alpha}")
    idx, vals = g.indices, g.values
    if len(idx) and not np.all(np.isfinite(vals)):
        raise ProxError("non-finite gradient entry")
    if len(idx) and (idx.min() < 0 or idx.max() >= setup.n):
        raise ProxError(f"gradient index out of range [0, {setup.n})")

    if setup.kind is ProxKind.EUCLIDEAN_FREE:
        delta = -alpha * vals
        state[idx] += delta
        moved = delta != 0.0
        return state, list(zip(idx[moved].tolist(), delta[moved].tolist()))

    if setup.kind is ProxKind.EUCLIDEAN_ORTHANT:
        old = state[idx]
        new = np.maximum(old - alpha * vals, 0.0)
        state[idx] = new
        delta = new - old
        moved = delta != 0.0
        return state, list(zip(idx[moved].tolist(), delta[moved].tolist()))

    return _entropy_step(state, idx, vals, alpha)


def _entropy_step(state: SimplexState, idx, vals, alpha):
    if not len(idx):
        return state, []
    new_log = state.log_weights[idx] - alpha * vals
    state.log_weights[idx] = new_log
    if new_log.max() > LOG_WEIGHT_LIMIT:
        state.recentre()
        return state, None

    old_w = state.weights[idx]
    new_w = np.exp(new_log)
    state.weights[idx] = new_w
    old_sum = state.weight_sum
    state.weight_sum = old_sum + float(np.sum(new_w - old_w))
    state.steps_since_refresh += 1
    # heavy cancellation or a stale sum: recompute from scratch
    if (state.steps_since_refresh >= state.refresh_period or not state.weight_sum > 0.5 * old_sum
            or not math.isfinite(state.weight_sum)):
        state.recompute()
    if not state.weight_sum > 0 or abs(math.log(state.weight_sum)) > LOG_WEIGHT_LIMIT:
        state.recentre()
        return state, None
    delta = new_w - old_w
    return state, list(zip(idx.tolist(), delta.tolist()))


# ================= step rules =================

@dataclass(frozen=True)
class TargetAccuracy:
    epsilon: float
    M: float


@dataclass(frozen=True)
class FixedHorizon:
    R: float
    M: float
    N: int

    @classmethod
    def simplex(cls, n: float, M: float, N: int) -> "FixedHorizon":
        """R = sqrt(ln n) for the entropy prox."""
        if n <= 1:
            raise ProxError(f"simplex dimension must exceed 1, got {n}")
        return cls(math.sqrt(math.log(n)), M, N)


def step_size(mode: Union[TargetAccuracy, FixedHorizon]) -> float:
    if isinstance(mode, TargetAccuracy):
        _require_positive(epsilon=mode.epsilon, M=mode.M)
        return mode.epsilon / mode.M ** 2
    if isinstance(mode, FixedHorizon):
        _require_positive(R=mode.R, M=mode.M, N=mode.N)
        return mode.R / mode.M * math.sqrt(2.0 / mode.N)
    raise TypeError(f"unknown step rule {mode!r}")


def _require_positive(**params):
    for name, value in params.items():
        if not value > 0:
            raise ProxError(f"{name} must be positive, got {value}")


def bregman_divergence(setup: ProxSetup, x, y) -> float:
    """V_x(y); diagnostic only."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if setup.is_simplex:
        return float(np.sum(rel_entr(y, x)))
    return 0.5 * float(np.dot(y - x, y - x))


# ================= running means =================

class EuclideanAverager:
    """Mean of the iterates it was told about, in O(|changes|) per step.

    Coordinate j contributes x_j * (adds since its last change) lazily; the
    solver must call ``add_current`` before the step and ``apply`` after it.
    """

    def __init__(self, x):
        n = len(x)
        self.count = 0
        self._acc = np.zeros(n)
        self._stamp = np.zeros(n, dtype=np.int64)

    def add_current(self, state):
        self.count += 1

    def apply(self, changes, state):
        if changes is None:
            raise ProxError("Euclidean averaging needs sparse changes")
        for j, delta in changes:
            old = state[j] - delta
            self._acc[j] += old * (self.count - self._stamp[j])
            self._stamp[j] = self.count

    def mean(self, state) -> np.ndarray:
        if not self.count:
            raise ProxError("no iterates were averaged")
        return (self._acc + state * (self.count - self._stamp)) / self.count


class SimplexAverager:
    """Dense running sum of materialised simplex iterates."""

    def __init__(self, n: int):
        self.count = 0
        self._acc = np.zeros(n)

    def add_current(self, state: SimplexState):
        self._acc += state.point()
        self.count += 1

    def apply(self, changes, state):
        pass

    def mean(self, state=None) -> np.ndarray:
        if not self.count:
            raise ProxError("no iterates were averaged")
        return self._acc / self.count


def make_averager(setup: ProxSetup, state: ProxState):
    if setup.is_simplex:
        return SimplexAverager(setup.n)
    return EuclideanAverager(state)
