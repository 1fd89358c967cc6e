"""k(x) = argmax_k sigma_k(A_k^T x) under sparse changes of x.

Leaves of a segment tree hold the row terms; internal nodes hold (max, argmax)
with the lower index winning ties. A change of x_j re-evaluates only the rows
of column j and repairs their root paths.

For homogeneous problems (affine, zero offsets) the tracked vector may be an
unnormalised simplex weight vector w with x = scale * w: leaves then store
A_k^T w and the scale is applied on read, which leaves the argmax unchanged.
"""
from __future__ import annotations

import logging
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from sparse_core import DEFAULT_REFRESH_PERIOD, IndexOutOfRangeError, ProblemError, RowDotCache

if TYPE_CHECKING:
    from oracles import MaxFormProblem

logger = logging.getLogger(__name__)


class _SegmentTree:
    __slots__ = ("size", "depth", "best", "arg")

    def __init__(self, rows: np.ndarray, values: np.ndarray):
        depth = int(np.ceil(np.log2(len(rows)))) if len(rows) > 1 else 0
        self.size = 1 << depth
        self.depth = depth
        self.best = np.full(2 * self.size, -np.inf)
        self.arg = np.full(2 * self.size, -1, dtype=np.int64)
        self.arg[self.size:self.size + len(rows)] = rows
        self.fill(values)

    def fill(self, values):
        size = self.size
        self.best[size:size + len(values)] = values
        level = size // 2
        while level >= 1:
            left = self.best[2 * level:4 * level:2]
            right = self.best[2 * level + 1:4 * level:2]
            take_left = left >= right
            self.best[level:2 * level] = np.where(take_left, left, right)
            self.arg[level:2 * level] = np.where(take_left, self.arg[2 * level:4 * level:2],
                                                 self.arg[2 * level + 1:4 * level:2])
            level //= 2

    def update(self, pos: int, value: float) -> int:
        """Set leaf ``pos``; returns the number of internal nodes repaired."""
        best, arg = self.best, self.arg
        node = self.size + pos
        best[node] = value
        node //= 2
        while node >= 1:
            left, right = 2 * node, 2 * node + 1
            if best[left] >= best[right]:
                best[node], arg[node] = best[left], arg[left]
            else:
                best[node], arg[node] = best[right], arg[right]
            node //= 2
        return self.depth

    @property
    def root(self) -> tuple[int, float]:
        return int(self.arg[1]), float(self.best[1])


class ArgmaxTree:
    def __init__(self, problem: "MaxFormProblem", x, scale: float = 1.0,
                 blocks: Optional[Sequence[tuple[int, int]]] = None,
                 refresh_period: int = DEFAULT_REFRESH_PERIOD):
        if problem.m == 0:
            raise ProblemError("no rows")
        self.problem = problem
        self.scale = float(scale)
        self.lazy_scale = problem.homogeneous
        self.cache = RowDotCache(problem.A, x, refresh_period)
        self.blocks = list(blocks) if blocks else [(0, problem.m)]
        self._block_of = np.empty(problem.m, dtype=np.int64)
        for b, (start, stop) in enumerate(self.blocks):
            self._block_of[start:stop] = b
        leaves = self._leaves()
        self._trees = [_SegmentTree(np.arange(start, stop), leaves[start:stop]) for start, stop in self.blocks]
        self.touch_counter = 0
        self.path_updates = 0
        self.rebuilds = 0
        self._seen_refreshes = self.cache.refresh_count

    def _leaves(self, rows=None) -> np.ndarray:
        dots = self.cache.values if rows is None else self.cache.values[rows]
        if self.lazy_scale:
            return dots.copy()
        return self.problem.leaf_values(self.scale * dots, rows)

    def _refill(self):
        leaves = self._leaves()
        for tree, (start, stop) in zip(self._trees, self.blocks):
            tree.fill(leaves[start:stop])
        self.rebuilds += 1
        self._seen_refreshes = self.cache.refresh_count

    def notify(self, changes) -> tuple[int, float]:
        n = self.problem.n
        for j, delta in changes:
            if not 0 <= j < n:
                raise IndexOutOfRangeError(f"coordinate {j} out of range [0, {n})")
            updated = self.cache.apply(j, delta)
            self.touch_counter += len(updated)
            if self.cache.refresh_count != self._seen_refreshes:
                self._refill()
                continue
            if not updated:
                continue
            rows = np.fromiter((k for k, _ in updated), dtype=np.int64, count=len(updated))
            leaves = self._leaves(rows)
            for k, leaf in zip(rows.tolist(), leaves.tolist()):
                b = self._block_of[k]
                self.path_updates += self._trees[b].update(k - self.blocks[b][0], leaf)
        return self.current()

    def set_scale(self, scale: float):
        scale = float(scale)
        if scale == self.scale:
            return
        self.scale = scale
        if not self.lazy_scale:
            self._refill()

    def rebuild(self, x, scale: float = 1.0):
        self.scale = float(scale)
        self.cache.reset(x)
        self._refill()
        logger.debug("argmax tree rebuilt (%d)", self.rebuilds)

    def current(self, block: Optional[int] = None) -> tuple[int, float]:
        if block is None:
            # blocks are contiguous and ascending: the first maximal block holds the lowest index
            roots = [tree.root for tree in self._trees]
            k, value = max(roots, key=lambda kv: kv[1]) if len(roots) > 1 else roots[0]
        else:
            k, value = self._trees[block].root
        return k, value * self.scale if self.lazy_scale else value

    def row_dot(self, k: int) -> float:
        """A_k^T x for the tracked point."""
        return self.scale * float(self.cache.values[k])

    def leaf(self, k: int) -> float:
        b = self._block_of[k]
        tree = self._trees[b]
        value = float(tree.best[tree.size + k - self.blocks[b][0]])
        return value * self.scale if self.lazy_scale else value

    def counters(self) -> dict:
        return {"touched_rows": self.touch_counter, "tree_path_updates": self.path_updates,
                "tree_rebuilds": self.rebuilds}


def build(problem: "MaxFormProblem", x, **kwargs) -> ArgmaxTree:
    return ArgmaxTree(problem, x, **kwargs)


def notify(tree: ArgmaxTree, changes) -> tuple[int, float]:
    return tree.notify(changes)


def current(tree: ArgmaxTree) -> tuple[int, float]:
    return tree.current()
