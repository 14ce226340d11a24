"""Batch Viterbi decoding in the log domain with full predecessor sets.

The trellis keeps, for every position ``u`` and state ``j``, the whole set
``t(u, j)`` of maximising predecessors rather than a single back-pointer.  Two
log-scores are treated as tied when they differ by at most ``TIE_TOL``.

Backtracking picks the smallest admissible state at every step, starting from
the smallest maximiser at the end.  Read backwards this is the lexicographic
minimum, i.e. the reverse-lexicographic minimum of the set of optimal paths.
"""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numba
import numpy as np

from .errors import AllPathsImpossible, InstanceTooLarge
from .model import HmmParams

TIE_TOL = 1e-12
TIE_POLICY = "reverse-lex-min"
MAX_BRUTE_FORCE_PATHS = 10**6


@numba.njit(cache=True, nogil=True)
def _forward_kernel(first, logP, ll, tol):
    n, K = ll.shape
    scores = np.empty((n, K))
    pred = np.zeros((max(n - 1, 0), K, K), dtype=np.bool_)
    for j in range(K):
        scores[0, j] = first[j] + ll[0, j]
    for u in range(1, n):
        for j in range(K):
            m = -np.inf
            for l in range(K):
                c = scores[u - 1, l] + logP[l, j]
                if c > m:
                    m = c
            for l in range(K):
                pred[u - 1, j, l] = scores[u - 1, l] + logP[l, j] >= m - tol
            scores[u, j] = m + ll[u, j]
    return scores, pred


@numba.njit(cache=True, nogil=True)
def _backtrack_kernel(pred, last):
    n = pred.shape[0] + 1
    K = pred.shape[1]
    path = np.empty(n, dtype=np.int64)
    path[n - 1] = last
    for u in range(n - 2, -1, -1):
        j = path[u + 1]
        chosen = -1
        for l in range(K):
            if pred[u, j, l]:
                chosen = l
                break
        path[u] = chosen
    return path


@dataclass(frozen=True)
class Trellis:
    """Log scores ``scores[u, l]`` and predecessor sets ``pred[u, j, l] = (l in t(u, j))``.

    Positions are 0-based and relative to the window; ``origin`` is the
    absolute index of the first window position.  ``initial_row`` is ``None``
    when the first column was seeded with the initial law, otherwise the state
    whose transition row seeded it.
    """

    scores: np.ndarray
    pred: np.ndarray
    origin: int = 0
    initial_row: int | None = None

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    @property
    def K(self) -> int:
        return self.scores.shape[1]

    def t(self, u: int, j: int) -> frozenset:
        """Maximising predecessors of state ``j`` at position ``u + 1``."""
        return frozenset(np.flatnonzero(self.pred[u, j]).tolist())


@dataclass(frozen=True)
class Alignment:
    path: np.ndarray
    log_likelihood: float
    tie_policy: str = TIE_POLICY

    def __len__(self):
        return len(self.path)


def initial_scores(params: HmmParams, initial_row: int | None = None) -> np.ndarray:
    if initial_row is None:
        return params.log_initial
    return params.log_transition[initial_row]


def trellis_from_loglik(first, logP, ll, *, origin=0, initial_row=None, tol=TIE_TOL) -> Trellis:
    """Trellis from precomputed log terms; no impossibility check."""
    ll = np.ascontiguousarray(ll, dtype=float)
    if ll.ndim != 2 or ll.shape[0] < 1:
        raise ValueError("observation window must be nonempty")
    scores, pred = _forward_kernel(
        np.ascontiguousarray(first, dtype=float), np.ascontiguousarray(logP, dtype=float), ll, float(tol)
    )
    return Trellis(scores, pred, origin, initial_row)


def forward_trellis(params: HmmParams, x, initial_row: int | None = None, origin: int = 0,
                    tol: float = TIE_TOL) -> Trellis:
    """Forward pass of the Viterbi recursion over the window ``x``.

    Raises :class:`AllPathsImpossible` if every path has zero likelihood.
    """
    x = np.asarray(x)
    if x.shape[0] < 1:
        raise ValueError("observation window must be nonempty")
    tr = trellis_from_loglik(
        initial_scores(params, initial_row), params.log_transition, params.loglik(x),
        origin=origin, initial_row=initial_row, tol=tol,
    )
    if not np.isfinite(tr.scores[-1].max()):
        raise AllPathsImpossible("every state path has zero likelihood for this window")
    return tr


def backtrack_canonical(trellis: Trellis, end_state: int | None = None, tol: float = TIE_TOL) -> Alignment:
    """Canonical path: smallest final maximiser, then smallest predecessor at every step.

    With ``end_state`` the path is forced to finish there (the maximiser of the
    likelihood constrained to end in that state).
    """
    last_scores = trellis.scores[-1]
    if end_state is None:
        best = last_scores.max()
        if not np.isfinite(best):
            raise AllPathsImpossible("every state path has zero likelihood for this window")
        end_state = int(np.flatnonzero(last_scores >= best - tol)[0])
    elif not np.isfinite(last_scores[end_state]):
        raise AllPathsImpossible(f"no path of positive likelihood ends in state {end_state}")
    path = _backtrack_kernel(trellis.pred, int(end_state))
    return Alignment(path, float(last_scores[end_state]))


def viterbi(params: HmmParams, x, initial_row: int | None = None, end_state: int | None = None) -> Alignment:
    """Convenience wrapper: forward pass plus canonical backtracking."""
    return backtrack_canonical(forward_trellis(params, x, initial_row), end_state)


def path_log_likelihood(params: HmmParams, x, y, initial_row: int | None = None) -> float:
    """``log Lambda(y; x)``: initial (or row) term, transitions and emissions."""
    x = np.asarray(x)
    y = np.asarray(y, dtype=np.int64)
    if x.shape[0] != y.shape[0]:
        raise ValueError("x and y must have equal length")
    ll = params.loglik(x)
    total = initial_scores(params, initial_row)[y[0]]
    total = total + ll[np.arange(y.size), y].sum()
    if y.size > 1:
        total = total + params.log_transition[y[:-1], y[1:]].sum()
    return float(total)


@functools.lru_cache(maxsize=64)
def _all_paths(K: int, n: int) -> np.ndarray:
    paths = np.array(list(itertools.product(range(K), repeat=n)), dtype=np.int64).reshape(-1, n)
    paths.setflags(write=False)
    return paths


def enumerate_path_scores(params: HmmParams, x, initial_row: int | None = None):
    """All ``K**n`` paths (rows, lexicographic order) with their log-likelihoods."""
    x = np.asarray(x)
    n, K = x.shape[0], params.K
    if K**n > MAX_BRUTE_FORCE_PATHS:
        raise InstanceTooLarge(f"K**n = {K**n} exceeds {MAX_BRUTE_FORCE_PATHS}")
    paths = _all_paths(K, n)
    ll = params.loglik(x)
    logP = params.log_transition
    scores = initial_scores(params, initial_row)[paths[:, 0]] + ll[0, paths[:, 0]]
    for k in range(1, n):
        scores = scores + logP[paths[:, k - 1], paths[:, k]] + ll[k, paths[:, k]]
    return paths, scores


def brute_force_optimal_set(params: HmmParams, x, initial_row: int | None = None,
                            end_state: int | None = None, tol: float = TIE_TOL) -> set:
    """Every path attaining the maximal likelihood (within ``tol`` in log space), by enumeration."""
    paths, scores = enumerate_path_scores(params, x, initial_row)
    if end_state is not None:
        keep = paths[:, -1] == end_state
        paths, scores = paths[keep], scores[keep]
    best = scores.max()
    if not np.isfinite(best):
        raise AllPathsImpossible("every state path has zero likelihood")
    return {tuple(p) for p in paths[scores >= best - tol].tolist()}


def reverse_lex_min(paths) -> tuple:
    """Minimum under comparison from the last coordinate backwards."""
    return min(paths, key=lambda p: tuple(reversed(p)))
