import numpy as np
import pytest
from hypothesis import strategies as st

from hmmva.model import Categorical, GaussianKnownVariance, HmmParams, stationary_distribution

GRID = np.array([0.0, 0.25, 0.5, 0.75, 1.0])


def random_stochastic(rng, rows, cols, zero_prob=0.0, grid=False):
    """Random row-stochastic matrix; ``grid`` draws from coarse values so that exact ties occur."""
    while True:
        if grid:
            M = rng.integers(0, 4, size=(rows, cols)).astype(float)
        else:
            M = rng.dirichlet(np.ones(cols), size=rows)
        M[rng.random((rows, cols)) < zero_prob] = 0.0
        s = M.sum(axis=1, keepdims=True)
        if np.all(s > 0):
            return M / s


def random_categorical_hmm(rng, K=None, A=None, zero_prob=0.2, grid=None, stationary=False):
    K = int(rng.integers(2, 4)) if K is None else K
    A = int(rng.integers(2, 5)) if A is None else A
    grid = bool(rng.random() < 0.3) if grid is None else grid
    P = random_stochastic(rng, K, K, zero_prob, grid)
    F = random_stochastic(rng, K, A, zero_prob, grid)
    if stationary:
        pi = stationary_distribution(P)
    else:
        pi = random_stochastic(rng, 1, K, 0.0, grid)[0]
    return HmmParams(P, pi, tuple(Categorical(tuple(f)) for f in F), stationary=stationary)


@st.composite
def small_instances(draw, max_n=8):
    """(params, x) with K in {2,3}, alphabet <= 4, n <= max_n."""
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    params = random_categorical_hmm(rng)
    n = draw(st.integers(1, max_n))
    x = rng.integers(0, params.emissions[0].n_symbols, size=n)
    return params, x


@pytest.fixture
def symmetric_mixture():
    return HmmParams.mixture([0.5, 0.5], [GaussianKnownVariance(-1.0, 1.0), GaussianKnownVariance(1.0, 1.0)])


@pytest.fixture
def case1_hmm():
    P = np.array([[0.8, 0.2], [0.3, 0.7]])
    return HmmParams(P, stationary_distribution(P), (GaussianKnownVariance(0.0, 1.0), GaussianKnownVariance(2.0, 1.0)))
