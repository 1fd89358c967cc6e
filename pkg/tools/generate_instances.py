import argparse
import os
import sys

# script lives in tools/, modules at the repository root
sys.path.insert(0, os.path.normpath(os.path.join(os.path.dirname(__file__), '..')))

import numpy as np  # noqa: E402

import problem_generators  # noqa: E402
from sparse_core import build_from_triplets, write_matrix_market  # noqa: E402

# Configuration: sizes of the optional random instances (--random)
sizes = {
    'chain': [100, 1000],
    'sparse': [(1000, 1000, 5)],
}


def fixtures():
    """The committed instances/ files, as (file name, data, comment)."""
    A, b, c = problem_generators.lp_toy()
    return [
        ('cycle2.mtx', problem_generators.cycle_matrix(2),
         '2-cycle P = [[0, 1], [1, 0]]; stationary vector (1/2, 1/2)'),
        ('a.mtx', build_from_triplets([(0, 0, 1.0), (1, 1, 2.0)], 2, 2), 'A = diag(1, 2)'),
        ('lp_A.mtx', A, 'LP toy constraint 1 - x1 <= 0 as -x1 <= -1'),
        ('lp_b.mtx', b, ''),
        ('lp_c.mtx', np.asarray(c), ''),
    ]


def random_instances(seed):
    for n in sizes['chain']:
        yield (f'chain{n}_seed{seed}.mtx', problem_generators.random_stochastic_matrix(n, seed=seed),
               f'random strongly connected chain n={n} seed={seed}')
    for m, n, col_nnz in sizes['sparse']:
        yield (f'sparse{m}x{n}_s{col_nnz}.mtx', problem_generators.random_sparse_matrix(m, n, col_nnz, seed=seed),
               f'{col_nnz} normal entries per column seed={seed}')


def main():
    parser = argparse.ArgumentParser(description='Write the Matrix Market test instances.')
    parser.add_argument('--out', default=os.path.join(os.path.dirname(__file__), '..', 'instances'))
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--random', action='store_true', help='also write large random chains and sparse matrices')
    args = parser.parse_args()

    out_dir = os.path.normpath(args.out)
    os.makedirs(out_dir, exist_ok=True)
    items = fixtures()
    if args.random:
        items += list(random_instances(args.seed))

    for name, data, comment in items:
        write_matrix_market(os.path.join(out_dir, name), data, comment=comment)

    print(f'✅ wrote {len(items)} instances to {out_dir}')
    for name, _, _ in items:
        print(f'   - {name}')


if __name__ == '__main__':
    main()
