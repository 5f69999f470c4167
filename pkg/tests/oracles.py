"""Independent reference computations shared by several test modules."""
import dataclasses
import itertools

import numpy as np

from hetcache.combinatorics import solve_marginal_lp
from hetcache.model import ContentParams, reference_phy, zipf_popularity


def qp_projection(x, K):
    """Exact projection onto the capped simplex by enumerating which
    coordinates sit at 0, 1 or strictly inside; each pattern fixes the free
    level in closed form and the closest feasible point wins."""
    x = np.asarray(x, float)
    best, best_d = None, np.inf
    for pattern in itertools.product((0, 1, 2), repeat=x.size):
        pattern = np.array(pattern)
        ones = np.count_nonzero(pattern == 1)
        free = pattern == 2
        T = (pattern == 1).astype(float)
        if free.any():
            T[free] = x[free] - (x[free].sum() - (K - ones)) / free.sum()
        elif ones != K:
            continue
        if np.any(T < -1e-12) or np.any(T > 1 + 1e-12) or abs(T.sum() - K) > 1e-9:
            continue
        d = np.sum((T - x) ** 2)
        if d < best_d - 1e-15:
            best, best_d = T, d
    return best


def random_equal_alpha_instance(rng):
    """Random network with a common path-loss exponent, a Zipf library and
    a consecutive pico pool."""
    alpha = float(rng.choice([3.0, 3.5, 4.0, 4.5]))
    lam1 = 10 ** rng.uniform(-7, -6)
    phy = dataclasses.replace(reference_phy(None), lambda1=lam1, lambda2=lam1 * 10 ** rng.uniform(0.2, 1.5),
                              P1=10 ** rng.uniform(0.5, 2.5), alpha1=alpha, alpha2=alpha)
    N = int(rng.integers(5, 12))
    K1c = int(rng.integers(1, 3))
    K2c = int(rng.integers(1, min(4, N - K1c)))
    content = ContentParams(N=N, a=zipf_popularity(N, float(rng.uniform(0.3, 1.5))), K1c=K1c, K2c=K2c, K1b=0)
    pool = int(rng.integers(K2c + 1, N - K1c + 1)) if N - K1c > K2c else K2c
    F2c = tuple(range(K1c + 1, K1c + 1 + pool))
    return phy, content, F2c


def marginal_matching_samples(idx, T, rng, count=100, pool=16):
    """``count`` random distributions with marginals ``T``: Dirichlet mixes
    of LP vertices reached from random objectives."""
    verts = np.array([solve_marginal_lp(idx, T, c=rng.standard_normal(idx.I))[0] for _ in range(pool)])
    return rng.dirichlet(np.full(pool, 0.5), size=count) @ verts
