import numpy as np
import pytest
from numpy.testing import assert_allclose

from sampling import (
    EmptyDistributionError,
    SamplingError,
    WeightTree,
    build_signed_row_samplers,
    build_weight_tree,
    sample,
    signed_row_sampler,
)
from sparse_core import build_from_triplets


@pytest.mark.parametrize("pairs, total, leaves", [
    ([(0, 1.0), (1, 3.0)], 4.0, 2),
    ([(5, 2.0)], 2.0, 1),
    ([], 0.0, 0),
])
def test_build_totals(pairs, total, leaves):
    tree = build_weight_tree(pairs)
    assert tree.total == total
    assert len(tree) == leaves


def test_internal_nodes_hold_subtree_sums():
    tree = build_weight_tree([(i, float(i + 1)) for i in range(5)])
    assert tree.depth == 3
    # leaves live at nodes 8..12
    assert tree.node_sum(4) == 1.0 + 2.0
    assert tree.node_sum(2) == 1.0 + 2.0 + 3.0 + 4.0
    assert tree.node_sum(3) == 5.0
    assert tree.node_sum(1) == 15.0


def test_negative_weight_rejected():
    with pytest.raises(SamplingError, match="element 3"):
        build_weight_tree([(0, 1.0), (3, -0.5)])


def test_empty_distribution():
    with pytest.raises(EmptyDistributionError, match="empty distribution"):
        sample(build_weight_tree([]), 0.5)
    with pytest.raises(EmptyDistributionError):
        build_weight_tree([(0, 0.0), (1, 0.0)]).sample(0.3)


@pytest.mark.parametrize("u, expected", [(0.1, 0), (0.9, 1)])
def test_cumulative_threshold(u, expected):
    assert sample(build_weight_tree([(0, 1.0), (1, 3.0)]), u) == expected


@pytest.mark.parametrize("u", [0.0, 0.3, 0.999999])
def test_singleton(u):
    assert sample(build_weight_tree([(7, 5.0)]), u) == 7


def test_zero_weight_leaves_never_drawn():
    tree = build_weight_tree([(0, 0.0), (1, 2.0), (2, 0.0), (3, 0.0)])
    us = np.linspace(0.0, 1.0, 101)[:-1]
    assert set(tree.sample_many(us).tolist()) == {1}
    # trailing zero leaves: u close to 1 must not fall off the end
    assert sample(build_weight_tree([(0, 1.0), (1, 0.0), (2, 0.0)]), 0.9999999999) == 0


def test_sample_is_pure_and_vectorised_matches():
    rng = np.random.default_rng(0)
    tree = WeightTree(np.arange(13), rng.uniform(size=13))
    us = rng.uniform(size=500)
    scalar = [tree.sample(u) for u in us]
    assert tree.sample_many(us).tolist() == scalar
    assert [tree.sample(u) for u in us] == scalar


@pytest.mark.slow
def test_empirical_frequencies():
    rng = np.random.default_rng(1)
    weights = rng.uniform(size=200)
    tree = WeightTree(np.arange(200), weights)
    draws = tree.sample_many(rng.uniform(size=1_000_000))
    freq = np.bincount(draws, minlength=200) / len(draws)
    p = weights / weights.sum()
    # 5 standard deviations per leaf
    assert np.all(np.abs(freq - p) <= 5 * np.sqrt(p * (1 - p) / len(draws)) + 1e-12)


@pytest.mark.parametrize("values, l1_pos, l1_neg", [
    ([-1.0, 1.0], 1.0, 1.0),
    ([0.0, 0.0], 0.0, 0.0),
    ([2.0, -3.0, 5.0], 7.0, 3.0),
])
def test_signed_split(values, l1_pos, l1_neg):
    s = signed_row_sampler(np.arange(len(values)), values)
    assert (s.l1_pos, s.l1_neg) == (l1_pos, l1_neg)
    assert_allclose(s.reconstruct(len(values)), values)


def test_signed_split_supports():
    s = signed_row_sampler([0, 1], [-1.0, 1.0])
    assert s.pos.ids.tolist() == [1]
    assert s.neg.ids.tolist() == [0]


def test_row_samplers_for_matrix():
    A = build_from_triplets([(0, 0, 2.0), (0, 2, -3.0), (0, 3, 5.0), (1, 1, -1.0)], 2, 4)
    samplers = build_signed_row_samplers(A)
    assert len(samplers) == 2
    assert_allclose(samplers[0].reconstruct(4), [2.0, 0.0, -3.0, 5.0])
    assert (samplers[1].l1_pos, samplers[1].l1_neg) == (0.0, 1.0)
