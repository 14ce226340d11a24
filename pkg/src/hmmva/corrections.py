"""Limits of the Viterbi-training estimators and the VA corrections.

For a mixture (all transition rows equal to the weights ``pi``) the Viterbi
alignment classifies each observation by ``argmax_l pi_l f_l(x)``, so the
limits are integrals of the mixture density over a partition of the line.
For one-dimensional Gaussians these are closed-form truncated moments.  For
general HMMs the limits are estimated by Monte Carlo over independent
replicas.  :func:`estimate_limit_measures` estimates the limit measures
themselves from one long decoded run, optionally checking them against the
regenerative cycle decomposition.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .alignment_stream import BarrierSpec, cycle_tallies, streaming_decode
from .errors import CorrectionUnavailable, EmptyCell, EmptyClassInAllReplicas
from .model import (
    GaussianKnownVariance,
    HmmParams,
    gaussian_pairwise_roots,
    normalise_rows,
    sample_hmm,
)
from .training import empirical_estimates
from .viterbi import viterbi

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _phi(z):
    z = np.asarray(z, dtype=float)
    with np.errstate(over="ignore"):
        return np.where(np.isfinite(z), np.exp(-0.5 * z * z) / _SQRT_2PI, 0.0)


def _zphi(z):
    """``z * phi(z)`` with the limits at +-inf."""
    z = np.asarray(z, dtype=float)
    fz = np.where(np.isfinite(z), z, 0.0)
    return np.where(np.isfinite(z), fz * _phi(fz), 0.0)


def _mass(a, b):
    """``Phi(b) - Phi(a)`` evaluated on the tail that keeps precision."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.where(a > 0, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))


# ---------------------------------------------------------------------------
# partitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VoronoiPartition1D:
    """Cells ``S_l`` of ``argmax_l (log pi_l + log f_l(x))``, ties to the smaller index.

    ``cells[l]`` is a tuple of disjoint ``(lo, hi)`` intervals (possibly
    empty).  Boundary points belong to the smaller-index neighbour.
    """

    boundaries: np.ndarray
    cells: tuple
    log_weights: np.ndarray
    emissions: tuple

    def owner(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        scores = self.log_weights[:, None] + np.array([e.logpdf(x) for e in self.emissions])
        return np.argmax(scores, axis=0)


def _require_gaussian_mixture(params: HmmParams):
    if not params.is_mixture():
        raise CorrectionUnavailable("analytic limits need mixture structure (all transition rows equal)")
    if params.kind not in ("gaussian", "gaussian_known_variance"):
        raise CorrectionUnavailable("analytic mixture partitions need one-dimensional Gaussian emissions")


def mixture_partition_1d(params: HmmParams) -> VoronoiPartition1D:
    _require_gaussian_mixture(params)
    logw = params.log_initial
    roots = gaussian_pairwise_roots(logw, params.emissions)
    edges = np.concatenate([[-np.inf], roots, [np.inf]])
    probe = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if np.isinf(lo) and np.isinf(hi):
            probe.append(0.0)
        elif np.isinf(lo):
            probe.append(hi - 1.0)
        elif np.isinf(hi):
            probe.append(lo + 1.0)
        else:
            probe.append(0.5 * (lo + hi))
    scores = logw[:, None] + np.array([e.logpdf(np.array(probe)) for e in params.emissions])
    owners = np.argmax(scores, axis=0)
    cells = [[] for _ in range(params.K)]
    boundaries = []
    for idx, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        l = int(owners[idx])
        if cells[l] and cells[l][-1][1] == lo:
            cells[l][-1] = (cells[l][-1][0], hi)
        else:
            cells[l].append((float(lo), float(hi)))
            if np.isfinite(lo):
                boundaries.append(float(lo))
    return VoronoiPartition1D(np.array(boundaries), tuple(tuple(c) for c in cells), logw, params.emissions)


@dataclass(frozen=True)
class MixtureLimits:
    mu: tuple
    q: np.ndarray
    partition: VoronoiPartition1D | None


def mixture_limits(params: HmmParams) -> MixtureLimits:
    """Limit class MLEs ``mu_l`` and limit class frequencies ``q_l`` of VT on a mixture.

    Gaussian kinds use truncated-normal moments over the partition cells;
    categorical mixtures classify each symbol directly.
    """
    if params.discrete:
        return _categorical_mixture_limits(params)
    part = mixture_partition_1d(params)
    w = params.initial
    K = params.K
    q = np.zeros(K)
    m1 = np.zeros(K)
    m2 = np.zeros(K)
    for l, cell in enumerate(part.cells):
        for lo, hi in cell:
            for k, e in enumerate(params.emissions):
                if w[k] == 0:
                    continue
                s = e.std
                a, b = (lo - e.mean) / s, (hi - e.mean) / s
                mass = float(_mass(a, b))
                d1 = float(_phi(a) - _phi(b))
                d2 = mass + float(_zphi(a) - _zphi(b))
                q[l] += w[k] * mass
                m1[l] += w[k] * (e.mean * mass + s * d1)
                m2[l] += w[k] * (e.mean**2 * mass + 2 * e.mean * s * d1 + s * s * d2)
    mu = []
    for l, e in enumerate(params.emissions):
        if not q[l] > 0:
            raise EmptyCell(f"cell of state {l} has zero probability; its limit is undefined")
        mean = m1[l] / q[l]
        if isinstance(e, GaussianKnownVariance):
            mu.append(np.array([mean]))
        else:
            mu.append(np.array([mean, m2[l] / q[l] - mean * mean]))
    return MixtureLimits(tuple(mu), np.tile(q, (K, 1)), part)


def _categorical_mixture_limits(params: HmmParams) -> MixtureLimits:
    if not params.is_mixture():
        raise CorrectionUnavailable("analytic limits need mixture structure (all transition rows equal)")
    F = np.array([e.probs for e in params.emissions])
    with np.errstate(divide="ignore"):
        owner = np.argmax(params.log_initial[:, None] + np.log(F), axis=0)
    f = params.initial @ F
    K = params.K
    q = np.array([f[owner == l].sum() for l in range(K)])
    mu = []
    for l in range(K):
        if not q[l] > 0:
            raise EmptyCell(f"no symbol is classified to state {l}")
        mu.append(np.where(owner == l, f, 0.0) / q[l])
    return MixtureLimits(tuple(mu), np.tile(q, (K, 1)), None)


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-8, max_depth: int = 50, min_depth: int = 4) -> float:
    """Adaptive Simpson quadrature, refined until successive estimates differ by less than ``tol``.

    The first ``min_depth`` levels are always split, so that a coarse
    estimate cannot agree with its refinement by accident on a long tail.
    """

    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        level = max_depth - depth
        if depth <= 0 or (level >= min_depth and abs(left + right - whole) <= tol):
            return left + right + (left + right - whole) / 15.0
        return rec(a, m, fa, flm, fm, left, tol / 2, depth - 1) + rec(m, b, fm, frm, fb, right, tol / 2, depth - 1)

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return rec(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, max_depth)


def quadrature_limits(params: HmmParams, tol: float = 1e-8, width: float = 12.0) -> MixtureLimits:
    """Independent check of :func:`mixture_limits` by adaptive Simpson on each cell, truncated at mean +- 12 sd."""
    part = mixture_partition_1d(params)
    w = params.initial
    lo_all = min(e.mean - width * e.std for e in params.emissions)
    hi_all = max(e.mean + width * e.std for e in params.emissions)

    def density(x):
        return sum(wk * math.exp(float(e.logpdf(x))) for wk, e in zip(w, params.emissions))

    K = params.K
    q, m1, m2 = np.zeros(K), np.zeros(K), np.zeros(K)
    for l, cell in enumerate(part.cells):
        for lo, hi in cell:
            a, b = max(lo, lo_all), min(hi, hi_all)
            if a >= b:
                continue
            q[l] += adaptive_simpson(density, a, b, tol)
            m1[l] += adaptive_simpson(lambda x: x * density(x), a, b, tol)
            m2[l] += adaptive_simpson(lambda x: x * x * density(x), a, b, tol)
    mu = []
    for l, e in enumerate(params.emissions):
        mean = m1[l] / q[l]
        mu.append(np.array([mean]) if isinstance(e, GaussianKnownVariance) else np.array([mean, m2[l] / q[l] - mean**2]))
    return MixtureLimits(tuple(mu), np.tile(q, (K, 1)), part)


# ---------------------------------------------------------------------------
# correction tables
# ---------------------------------------------------------------------------


def _exact_offset(target: np.ndarray, base: np.ndarray) -> np.ndarray:
    """``d`` with ``base + d == target`` bit for bit, nudging ``d`` by ulps when rounding interferes.

    Exactness is always reachable when ``base`` and ``target`` share a sign
    and are within a factor of two of each other.  Otherwise it may be
    impossible (e.g. ``base`` in [2, 4), ``d`` in [4, 8) and ``target`` on a
    finer grid); those entries keep the correctly rounded ``target - base``.
    """
    target = np.asarray(target, dtype=float)
    base = np.asarray(base, dtype=float)
    d0 = target - base
    d = d0.copy()
    for _ in range(8):
        off = base + d
        bad = off != target
        if not bad.any():
            return d
        d = np.where(bad, np.nextafter(d, np.where(off < target, np.inf, -np.inf)), d)
    return np.where(base + d == target, d, d0)


@dataclass(frozen=True)
class CorrectionTable:
    """Limits ``mu_l``, ``q_ij`` and corrections ``delta_l = theta_l - mu_l``, ``R = P - q``.

    In mixture mode every row of ``q`` and ``R`` holds the class-level values.
    Standard errors are present for the Monte Carlo method only.
    """

    mu: tuple
    q: np.ndarray
    delta: tuple
    R: np.ndarray
    method: str
    mixture: bool
    mu_se: tuple | None = None
    q_se: np.ndarray | None = None
    replicas_used: np.ndarray | None = None

    @property
    def delta_se(self):
        return self.mu_se

    @property
    def R_se(self):
        return self.q_se

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "mixture": self.mixture,
            "mu": [m.tolist() for m in self.mu],
            "q": self.q.tolist(),
            "delta": [d.tolist() for d in self.delta],
            "R": self.R.tolist(),
        }
        if self.mu_se is not None:
            out["mu_se"] = [m.tolist() for m in self.mu_se]
            out["q_se"] = self.q_se.tolist()
            out["replicas_used"] = self.replicas_used.tolist()
        return out


def corrections_from_limits(params: HmmParams, limits: MixtureLimits, method: str = "analytic",
                            mixture: bool = True, mu_se=None, q_se=None, replicas_used=None) -> CorrectionTable:
    delta = tuple(_exact_offset(e.theta, mu) for e, mu in zip(params.emissions, limits.mu))
    R = _exact_offset(params.transition, limits.q)
    return CorrectionTable(tuple(np.asarray(m, dtype=float) for m in limits.mu), np.asarray(limits.q, dtype=float),
                           delta, R, method, mixture, mu_se, q_se, replicas_used)


def _replica(params: HmmParams, L: int, seed, mixture: bool):
    real = sample_hmm(params, L, seed)
    v = viterbi(params, real.observed).path
    est = empirical_estimates(real.observed, v, params, mixture)
    K = params.K
    mu = [np.full(params.emissions[l].theta.shape, np.nan) if est.empty_classes[l] else est.emissions[l].theta
          for l in range(K)]
    if mixture:
        q = np.tile(est.weights, (K, 1))
    else:
        q = np.where(est.fallback_rows[:, None], np.nan, est.transition)
    return mu, q


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("HMMVA_THREADS", "1")))
    except ValueError:
        return 1


def mc_limits(params: HmmParams, L: int, R: int, seed, mixture: bool | None = None,
              threads: int | None = None) -> CorrectionTable:
    """Monte Carlo limits: average of alignment-based estimates over ``R`` independent replicas of length ``L``.

    Replica ``i`` uses the ``i``-th child of ``SeedSequence(seed)``, so the
    thread count cannot change the result.  Replicas in which a class is empty
    (or a transition row unvisited) are left out of that entry's average.
    """
    if L < 2 or R < 2:
        raise ValueError("need L >= 2 and R >= 2")
    mixture = params.is_mixture() if mixture is None else mixture
    children = np.random.SeedSequence(seed).spawn(R)
    n_threads = threads if threads is not None else _threads()
    if n_threads > 1:
        with ThreadPoolExecutor(n_threads) as pool:
            results = list(pool.map(lambda s: _replica(params, L, s, mixture), children))
    else:
        results = [_replica(params, L, s, mixture) for s in children]
    K = params.K
    mu, mu_se, used = [], [], np.zeros(K, dtype=np.int64)
    for l in range(K):
        stack = np.array([r[0][l] for r in results])
        ok = ~np.isnan(stack[:, 0])
        used[l] = int(ok.sum())
        if used[l] == 0:
            raise EmptyClassInAllReplicas(f"state {l} received no observation in any of the {R} replicas")
        mu.append(stack[ok].mean(axis=0))
        mu_se.append(stack[ok].std(axis=0, ddof=1) / math.sqrt(used[l]) if used[l] > 1 else np.full(stack.shape[1], np.nan))
    qs = np.array([r[1] for r in results])
    cnt = np.sum(~np.isnan(qs), axis=0)
    if np.any(cnt == 0):
        i = int(np.argwhere(cnt == 0)[0][0])
        raise EmptyClassInAllReplicas(f"state {i} was never left in any of the {R} replicas")
    with np.errstate(invalid="ignore"):
        q = np.nanmean(qs, axis=0)
        q_se = np.where(cnt > 1, np.nanstd(qs, axis=0, ddof=1) / np.sqrt(cnt), np.nan)
    return corrections_from_limits(params, MixtureLimits(tuple(mu), q, None), "monte-carlo", mixture,
                                   tuple(mu_se), q_se, used)


# ---------------------------------------------------------------------------
# correction providers for VA
# ---------------------------------------------------------------------------


class AnalyticCorrections:
    """Exact mixture corrections; raises :class:`CorrectionUnavailable` for general HMMs."""

    method = "analytic"

    def __call__(self, params: HmmParams) -> CorrectionTable:
        return corrections_from_limits(params, mixture_limits(params))


@dataclass(frozen=True)
class MonteCarloCorrections:
    """MC corrections with a fixed seed (common random numbers across VA iterations)."""

    L: int = 10_000
    R: int = 8
    seed: int = 0
    mixture: bool | None = None
    method = "monte-carlo"

    def __call__(self, params: HmmParams) -> CorrectionTable:
        return mc_limits(params, self.L, self.R, self.seed, self.mixture)


class ZeroCorrections:
    """No adjustment: VA with these reproduces VT's parameter trajectory."""

    method = "zero"

    def __call__(self, params: HmmParams) -> CorrectionTable:
        zero_mu = tuple(e.theta for e in params.emissions)
        return CorrectionTable(zero_mu, params.transition.copy(), tuple(np.zeros_like(m) for m in zero_mu),
                               np.zeros((params.K, params.K)), "zero", params.is_mixture())


# ---------------------------------------------------------------------------
# limit measures from one long run
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LimitMeasureEstimate:
    """Full-run estimates of the limit measures, optionally with their regenerative cross-estimates.

    ``Q[l]`` is a histogram over ``edges`` (Gaussian) or an atom table over
    the symbols (categorical).  ``q`` rows are transition frequencies of the
    decoded path.  ``regen_*`` fields are ``None`` without a barrier or when
    no regeneration was observed.
    """

    Q: np.ndarray
    edges: np.ndarray | None
    q: np.ndarray
    occupancy: np.ndarray
    transition_counts: np.ndarray
    n: int
    seed: object
    regen_Q: np.ndarray | None = None
    regen_q: np.ndarray | None = None
    cycles: int = 0
    tv: np.ndarray | None = None
    mean_cycle: float = math.nan
    cycle_se: float = math.nan
    n_regenerations: int = 0
    regen_error: str | None = None
    max_buffer: int = 0


def _labels(params: HmmParams, x, bins: int, edges):
    if params.discrete:
        return np.asarray(x, dtype=np.int64), params.emissions[0].n_symbols, None
    x = np.asarray(x, dtype=float)
    if edges is None:
        lo, hi = float(x.min()), float(x.max())
        if hi <= lo:
            hi = lo + 1.0
        edges = np.linspace(lo, hi, bins + 1)
    edges = np.asarray(edges, dtype=float)
    lab = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, edges.size - 2)
    return lab, edges.size - 1, edges


def _normalise_rows(C: np.ndarray) -> np.ndarray:
    return normalise_rows(C)


def estimate_limit_measures(params: HmmParams, n: int, seed, barrier: BarrierSpec | None = None,
                            bins: int = 200, edges=None, r_max: int | None = None) -> LimitMeasureEstimate:
    """Simulate ``n`` steps, decode with the streaming decoder and tabulate the empirical limit measures."""
    if n < 2:
        raise ValueError("n must be >= 2")
    real = sample_hmm(params, n, seed)
    res = streaming_decode(params, real.observed, r_max=r_max, barrier=barrier, hidden=real.hidden)
    path = res.path
    K = params.K
    labels, n_labels, edges = _labels(params, real.observed, bins, edges)
    counts = np.zeros((K, n_labels))
    np.add.at(counts, (path, labels), 1.0)
    trans = np.zeros((K, K))
    np.add.at(trans, (path[:-1], path[1:]), 1.0)
    Q = _normalise_rows(counts)
    q = _normalise_rows(trans)
    out = dict(Q=Q, edges=edges, q=q, occupancy=counts.sum(axis=1), transition_counts=trans, n=n, seed=seed,
               max_buffer=res.max_buffer)
    if barrier is not None:
        regen = res.regen
        if regen is None or regen.cycles == 0:
            out["regen_error"] = "no complete regeneration cycle in the run"
        else:
            tal = cycle_tallies(regen, path, labels, K, n_labels)
            m_hat = tal.label_counts.sum(axis=0)
            rQ = _normalise_rows(m_hat)
            rq = _normalise_rows(tal.transitions.sum(axis=0))
            with np.errstate(invalid="ignore"):
                tv = 0.5 * np.nansum(np.abs(Q - rQ), axis=1)
            out.update(regen_Q=rQ, regen_q=rq, cycles=regen.cycles, tv=tv, mean_cycle=regen.mean_cycle,
                       cycle_se=regen.cycle_se, n_regenerations=len(regen.tau))
    return LimitMeasureEstimate(**out)


def coarsen(Q: np.ndarray, factor: int) -> np.ndarray:
    """Merge groups of ``factor`` adjacent bins."""
    K, B = Q.shape
    if B % factor:
        raise ValueError("bin count must be divisible by the factor")
    return Q.reshape(K, B // factor, factor).sum(axis=2)
