"""Discrete sampling from nonnegative weights in O(log nnz).

Weights sit in the leaves of a complete binary tree whose internal nodes hold
subtree sums. A draw consumes exactly one uniform variate supplied by the
caller, so a draw is a pure function of (tree, u).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from sparse_core import SparseMirrorError, SparseOperator


class SamplingError(SparseMirrorError, ValueError):
    pass


class EmptyDistributionError(SamplingError):
    def __init__(self, message="empty distribution"):
        super().__init__(message)


class WeightTree:
    """Cumulative binary tree; node 1 is the root, leaf i is node size + i."""

    __slots__ = ("ids", "weights", "_sums", "_size", "_depth")

    def __init__(self, ids, weights):
        ids = np.asarray(ids, dtype=np.int64).ravel()
        weights = np.asarray(weights, dtype=float).ravel()
        if ids.shape != weights.shape:
            raise SamplingError(f"{len(ids)} ids for {len(weights)} weights")
        if weights.size and (not np.all(np.isfinite(weights)) or weights.min() < 0):
            i = int(np.flatnonzero(~(weights >= 0) | ~np.isfinite(weights))[0])
            raise SamplingError(f"weight of element {ids[i]} is {weights[i]}, must be finite and >= 0")
        self.ids = ids
        self.weights = weights

        depth = max(0, int(np.ceil(np.log2(len(weights))))) if len(weights) > 1 else 0
        size = 1 << depth
        sums = np.zeros(2 * size)
        sums[size:size + len(weights)] = weights
        # one vectorised pass per level, O(size) total
        level = size // 2
        while level >= 1:
            sums[level:2 * level] = sums[2 * level:4 * level:2] + sums[2 * level + 1:4 * level:2]
            level //= 2
        self._sums = sums
        self._size = size
        self._depth = depth

    def __len__(self):
        return len(self.ids)

    @property
    def total(self) -> float:
        return float(self._sums[1]) if len(self.ids) else 0.0

    @property
    def depth(self) -> int:
        return self._depth

    def node_sum(self, node: int) -> float:
        return float(self._sums[node])

    def items(self) -> list[tuple[int, float]]:
        return list(zip(self.ids.tolist(), self.weights.tolist()))

    def sample(self, u: float) -> int:
        if self.total <= 0:
            raise EmptyDistributionError()
        sums = self._sums
        target = u * sums[1]
        node = 1
        while node < self._size:
            left = sums[2 * node]
            # an empty right subtree is never entered, whatever rounding did
            if target < left or sums[2 * node + 1] <= 0:
                node = 2 * node
            else:
                target -= left
                node = 2 * node + 1
        return int(self.ids[node - self._size])

    def sample_many(self, us) -> np.ndarray:
        """Vectorised ``sample``; element-wise identical results."""
        if self.total <= 0:
            raise EmptyDistributionError()
        us = np.asarray(us, dtype=float)
        sums = self._sums
        targets = us * sums[1]
        nodes = np.ones(us.shape, dtype=np.int64)
        for _ in range(self._depth):
            left = sums[2 * nodes]
            go_left = (targets < left) | (sums[2 * nodes + 1] <= 0)
            targets = np.where(go_left, targets, targets - left)
            nodes = 2 * nodes + (~go_left)
        return self.ids[nodes - self._size]

    def __repr__(self):
        return f"WeightTree(leaves={len(self)}, total={self.total:g})"


def build_weight_tree(weights: Iterable[Sequence]) -> WeightTree:
    """Build from (id, weight) pairs."""
    pairs = list(weights)
    return WeightTree([p[0] for p in pairs], [p[1] for p in pairs])


def sample(tree: WeightTree, u: float) -> int:
    return tree.sample(u)


@dataclass(frozen=True)
class SignedRowSampler:
    """A_k = A_k^+ - A_k^-, each part ready for O(log) draws."""

    pos: WeightTree
    neg: WeightTree

    @property
    def l1_pos(self) -> float:
        return self.pos.total

    @property
    def l1_neg(self) -> float:
        return self.neg.total

    def reconstruct(self, n: int) -> np.ndarray:
        row = np.zeros(n)
        row[self.pos.ids] += self.pos.weights
        row[self.neg.ids] -= self.neg.weights
        return row


def signed_row_sampler(indices, values) -> SignedRowSampler:
    indices = np.asarray(indices)
    values = np.asarray(values, dtype=float)
    positive = values > 0
    negative = values < 0
    return SignedRowSampler(WeightTree(indices[positive], values[positive]),
                            WeightTree(indices[negative], -values[negative]))


def build_signed_row_samplers(matrix: SparseOperator) -> list[SignedRowSampler]:
    return [signed_row_sampler(*matrix.row(k)) for k in range(matrix.m)]
