"""Random small CTC instances shared by the test modules."""

import numpy as np

from ctcprior.lattice import min_feasible_T
from ctcprior.types import Priors

ALPHAS = (0.0, 0.3, 1.0)


def random_rows(rng, T, K):
    """Normalized log-posterior rows drawn from a Dirichlet."""
    return np.log(rng.dirichlet(np.ones(K), size=T))


def random_instance(rng, max_T=8, max_U=3, max_K=4, alpha=None):
    """Return (log_rows, w, priors) with T >= min_feasible_T(w)."""
    K = int(rng.integers(2, max_K + 1))
    while True:
        U = int(rng.integers(1, max_U + 1))
        w = tuple(int(x) for x in rng.integers(1, K, size=U))
        T = int(rng.integers(1, max_T + 1))
        if T >= min_feasible_T(w):
            break
    a = float(rng.choice(ALPHAS)) if alpha is None else alpha
    priors = Priors.from_probs(rng.dirichlet(np.ones(K)), alpha=a)
    return random_rows(rng, T, K), w, priors
