import math

import numpy as np
import pytest

import argmax_tracker
from argmax_tracker import ArgmaxTree
from oracles import ABSOLUTE, MaxFormProblem
from problem_generators import random_sparse_matrix
from sparse_core import IndexOutOfRangeError, ProblemError, build_from_triplets


@pytest.fixture
def diag12():
    return MaxFormProblem.affine(build_from_triplets([(0, 0, 1.0), (1, 1, 2.0)], 2, 2))


def test_build(diag12):
    tree = argmax_tracker.build(diag12, [1.0, 1.0])
    assert (tree.leaf(0), tree.leaf(1)) == (1.0, 2.0)
    assert argmax_tracker.current(tree) == (1, 2.0)


def test_tie_goes_to_lowest_row():
    problem = MaxFormProblem.affine(build_from_triplets([(0, 0, 1.0), (1, 0, 1.0)], 2, 2))
    assert ArgmaxTree(problem, [1.0, 0.0]).current() == (0, 1.0)


def test_all_rows_tie_at_zero():
    problem = MaxFormProblem.affine(build_from_triplets([(k, k, 1.0) for k in range(5)], 5, 5))
    assert ArgmaxTree(problem, np.zeros(5)).current() == (0, 0.0)


def test_no_rows():
    problem = MaxFormProblem.affine(build_from_triplets([], 0, 2))
    with pytest.raises(ProblemError, match="no rows"):
        ArgmaxTree(problem, [0.0, 0.0])


def test_notify_diagonal(diag12):
    tree = ArgmaxTree(diag12, [1.0, 1.0])
    assert argmax_tracker.notify(tree, [(0, 5.0)]) == (0, 6.0)
    assert (tree.leaf(0), tree.leaf(1)) == (6.0, 2.0)


def test_notify_nothing(diag12):
    tree = ArgmaxTree(diag12, [1.0, 1.0])
    assert tree.notify([]) == (1, 2.0)
    assert tree.touch_counter == 0


def test_notify_lowers_the_leader(diag12):
    tree = ArgmaxTree(diag12, [1.0, 1.0])
    assert tree.notify([(1, -1.0)]) == (0, 1.0)
    assert (tree.leaf(0), tree.leaf(1)) == (1.0, 0.0)


def test_single_row():
    problem = MaxFormProblem.affine(build_from_triplets([(0, 1, 3.0)], 1, 2))
    assert ArgmaxTree(problem, [0.0, 2.0]).current() == (0, 6.0)


def test_notify_out_of_range(diag12):
    with pytest.raises(IndexOutOfRangeError):
        ArgmaxTree(diag12, [1.0, 1.0]).notify([(2, 1.0)])


def test_lazy_scale_for_homogeneous_rows(diag12):
    tree = ArgmaxTree(diag12, [2.0, 2.0], scale=0.5)
    assert tree.lazy_scale
    assert tree.current() == (1, 2.0)
    tree.set_scale(0.25)
    assert tree.current() == (1, 1.0)
    assert tree.row_dot(0) == 0.5
    assert tree.rebuilds == 0


def test_scale_change_refills_with_offsets():
    problem = MaxFormProblem(build_from_triplets([(0, 0, 1.0), (1, 1, 1.0)], 2, 2), offsets=[0.0, 1.0])
    tree = ArgmaxTree(problem, [2.0, 4.0], scale=1.0)
    assert tree.current() == (1, 3.0)
    tree.set_scale(0.25)
    # x = (0.5, 1): leaves 0.5 and 0
    assert tree.current() == (0, 0.5)
    assert tree.rebuilds == 1


def test_blocks_have_their_own_roots():
    problem = MaxFormProblem.affine(build_from_triplets([(0, 0, 1.0), (1, 0, 3.0), (2, 0, 3.0)], 3, 1))
    tree = ArgmaxTree(problem, [1.0], blocks=[(0, 1), (1, 3)])
    assert tree.current(0) == (0, 1.0)
    assert tree.current(1) == (1, 3.0)
    assert tree.current() == (1, 3.0)


def test_equal_block_maxima_pick_the_first_block():
    problem = MaxFormProblem.affine(build_from_triplets([(0, 0, 2.0), (1, 0, 2.0)], 2, 1))
    tree = ArgmaxTree(problem, [1.0], blocks=[(0, 1), (1, 2)])
    assert tree.current() == (0, 2.0)


def test_counters_follow_column_sizes():
    A = random_sparse_matrix(64, 40, 3, seed=5)
    tree = ArgmaxTree(MaxFormProblem.affine(A), np.zeros(40))
    tree.notify([(7, 1.0), (11, -2.0)])
    assert tree.touch_counter == 6
    assert tree.path_updates == 6 * math.ceil(math.log2(64))
    assert tree.counters()["tree_rebuilds"] == 0


def test_cache_refresh_triggers_refill():
    A = random_sparse_matrix(10, 10, 2, seed=1)
    problem = MaxFormProblem.affine(A)
    x = np.zeros(10)
    tree = ArgmaxTree(problem, x, refresh_period=3)
    for j in (1, 2, 3):
        x[j] += 1.0
        tree.notify([(j, 1.0)])
    assert tree.rebuilds == 1
    assert tree.current() == problem.evaluate(x)


def _check_against_scratch(problem, tree, x, scale=1.0):
    values = problem.leaf_values(problem.A.matvec(scale * x))
    k, value = tree.current()
    best = values.max()
    assert math.isclose(value, best, rel_tol=1e-9, abs_tol=1e-12)
    assert math.isclose(values[k], best, rel_tol=1e-9, abs_tol=1e-12)


@pytest.mark.parametrize("offsets, sigma", [(False, None), (True, None), (True, ABSOLUTE)])
def test_fuzz_against_recomputation(offsets, sigma):
    rng = np.random.default_rng(11)
    m, n = 30, 20
    A = random_sparse_matrix(m, n, 4, seed=2)
    b = rng.normal(size=m) if offsets else None
    problem = MaxFormProblem(A, b, sigma) if sigma else MaxFormProblem.affine(A, b)
    x = rng.normal(size=n)
    tree = ArgmaxTree(problem, x, refresh_period=500)
    for _ in range(10_000):
        changes = [(int(j), float(d)) for j, d in zip(rng.choice(n, size=2, replace=False), rng.normal(size=2))]
        for j, d in changes:
            x[j] += d
        tree.notify(changes)
        _check_against_scratch(problem, tree, x)
    assert tree.rebuilds == 40
