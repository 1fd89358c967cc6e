"""Small synthetic instances: cycles, random strongly connected chains, sparse A."""
from __future__ import annotations

import numpy as np
import networkx as nx
from scipy import sparse

from sparse_core import SparseMatrixDual, build_from_triplets


def cycle_matrix(n: int) -> SparseMatrixDual:
    """P[i, i+1 mod n] = 1; stationary vector uniform."""
    return build_from_triplets([(i, (i + 1) % n, 1.0) for i in range(n)], n, n)


def random_chain_graph(n: int, out_degree: int = 3, self_loops: bool = True, seed: int = 0) -> nx.DiGraph:
    """Directed cycle plus random extra edges, so the graph is strongly connected."""
    rng = np.random.default_rng(seed)
    G = nx.cycle_graph(n, create_using=nx.DiGraph)
    for u in range(n):
        targets = rng.choice(n, size=min(out_degree, n), replace=False)
        G.add_edges_from((u, int(v)) for v in targets if self_loops or int(v) != u)
        if self_loops:
            G.add_edge(u, u)
    for u, v in G.edges:
        G[u][v]["weight"] = float(rng.uniform(0.1, 1.0))
    return G


def stochastic_matrix_from_graph(G: nx.DiGraph) -> SparseMatrixDual:
    """Row-normalised weighted adjacency of G (nodes must be 0..n-1)."""
    n = G.number_of_nodes()
    W = nx.to_scipy_sparse_array(G, nodelist=range(n), weight="weight", format="csr")
    sums = np.asarray(W.sum(axis=1)).ravel()
    if np.any(sums <= 0):
        raise ValueError(f"node {int(np.flatnonzero(sums <= 0)[0])} has no out-edges")
    return SparseMatrixDual.from_scipy(sparse.diags(1.0 / sums) @ W)


def random_stochastic_matrix(n: int, out_degree: int = 3, seed: int = 0) -> SparseMatrixDual:
    return stochastic_matrix_from_graph(random_chain_graph(n, out_degree, seed=seed))


def random_sparse_matrix(m: int, n: int, col_nnz: int, seed: int = 0) -> SparseMatrixDual:
    """Every column has exactly ``col_nnz`` normal entries in distinct rows."""
    rng = np.random.default_rng(seed)
    rows = np.concatenate([rng.choice(m, size=col_nnz, replace=False) for _ in range(n)])
    cols = np.repeat(np.arange(n), col_nnz)
    vals = rng.normal(size=n * col_nnz)
    vals[vals == 0.0] = 1.0
    return SparseMatrixDual.from_scipy(sparse.coo_matrix((vals, (rows, cols)), shape=(m, n)))


def lp_toy():
    """min x1 + x2 s.t. 1 - x1 <= 0 on the orthant; x* = (1, 0), f* = 1."""
    A = build_from_triplets([(0, 0, -1.0)], 1, 2)
    b = np.array([-1.0])
    c = np.array([1.0, 1.0])
    return A, b, c
