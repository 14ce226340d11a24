"""HMM parameters, emission families, sampling and per-class estimation.

Three emission families are supported:

* ``gaussian_known_variance``: theta = (mean,), variance held fixed;
* ``gaussian``: theta = (mean, variance);
* ``categorical``: theta = probability vector over symbols ``0..A-1``.

Densities are taken with respect to Lebesgue measure for the Gaussian kinds and
counting measure for the categorical kind.  All states of one model share a
single family kind.  Probabilities are combined in the log domain throughout,
with ``-inf`` standing for an exact zero.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from functools import cached_property
from typing import ClassVar, Mapping, Sequence, Union

import numpy as np

from .errors import (
    BadEmissionParam,
    DegenerateVariance,
    EmptyClass,
    NegativeEntry,
    NonStationaryInitial,
    NonStochasticRow,
    ParameterError,
    PeriodicChain,
    ReducibleChain,
)

ROW_TOL = 1e-12
STATIONARY_TOL = 1e-10

_LOG_2PI = math.log(2.0 * math.pi)


def _log(a):
    with np.errstate(divide="ignore"):
        return np.log(a)


# ---------------------------------------------------------------------------
# emission families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianKnownVariance:
    """Normal emission whose variance is fixed; only the mean is estimated."""

    mean: float
    var: float
    kind: ClassVar[str] = "gaussian_known_variance"
    discrete: ClassVar[bool] = False

    def __post_init__(self):
        _check_gaussian(self.mean, self.var)

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.mean], dtype=float)

    def with_theta(self, theta) -> "GaussianKnownVariance":
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return GaussianKnownVariance(float(theta[0]), self.var)

    def logpdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return -0.5 * (_LOG_2PI + math.log(self.var) + (x - self.mean) ** 2 / self.var)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.mean + math.sqrt(self.var) * rng.standard_normal(size)

    @property
    def std(self) -> float:
        return math.sqrt(self.var)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": {"mean": self.mean, "var": self.var}}


@dataclass(frozen=True)
class Gaussian:
    """Normal emission with unknown mean and variance."""

    mean: float
    var: float
    kind: ClassVar[str] = "gaussian"
    discrete: ClassVar[bool] = False

    def __post_init__(self):
        _check_gaussian(self.mean, self.var)

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.mean, self.var], dtype=float)

    def with_theta(self, theta) -> "Gaussian":
        theta = np.asarray(theta, dtype=float)
        return Gaussian(float(theta[0]), float(theta[1]))

    def logpdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return -0.5 * (_LOG_2PI + math.log(self.var) + (x - self.mean) ** 2 / self.var)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.mean + math.sqrt(self.var) * rng.standard_normal(size)

    @property
    def std(self) -> float:
        return math.sqrt(self.var)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": {"mean": self.mean, "var": self.var}}


@dataclass(frozen=True)
class Categorical:
    """Distribution over the symbols ``0..len(probs)-1``.

    ``symbols`` optionally names the symbols for file I/O; it does not affect
    any computation.
    """

    probs: tuple
    symbols: tuple | None = None
    kind: ClassVar[str] = "categorical"
    discrete: ClassVar[bool] = True

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        if not probs:
            raise BadEmissionParam("categorical emission needs at least one symbol")
        if any(not math.isfinite(p) or p < 0 for p in probs):
            raise BadEmissionParam(f"categorical probabilities must be finite and >= 0: {probs}")
        if abs(math.fsum(probs) - 1.0) > ROW_TOL:
            raise BadEmissionParam(f"categorical probabilities sum to {math.fsum(probs)!r}, not 1")
        if self.symbols is not None:
            symbols = tuple(str(s) for s in self.symbols)
            if len(symbols) != len(probs) or len(set(symbols)) != len(symbols):
                raise BadEmissionParam("symbols must be distinct and match probs in length")
            object.__setattr__(self, "symbols", symbols)

    @property
    def n_symbols(self) -> int:
        return len(self.probs)

    @property
    def support(self) -> frozenset:
        return frozenset(i for i, p in enumerate(self.probs) if p > 0)

    @property
    def theta(self) -> np.ndarray:
        return np.array(self.probs, dtype=float)

    def with_theta(self, theta) -> "Categorical":
        return Categorical(tuple(np.asarray(theta, dtype=float)), self.symbols)

    def logpdf(self, x) -> np.ndarray:
        x = np.asarray(x)
        logp = _log(np.array(self.probs))
        out = np.full(x.shape, -np.inf)
        idx = x.astype(np.int64, copy=False) if x.dtype.kind in "iu" else None
        if idx is None:
            xf = x.astype(float)
            ok = np.isfinite(xf) & (xf == np.round(xf))
            idx = np.where(ok, xf, -1).astype(np.int64)
        ok = (idx >= 0) & (idx < len(self.probs))
        out[ok] = logp[idx[ok]]
        return out

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.choice(len(self.probs), size=size, p=np.array(self.probs))

    def to_dict(self) -> dict:
        params = {"probs": list(self.probs)}
        if self.symbols is not None:
            params["symbols"] = list(self.symbols)
        return {"kind": self.kind, "params": params}


Emission = Union[GaussianKnownVariance, Gaussian, Categorical]
EMISSION_KINDS = {
    GaussianKnownVariance.kind: GaussianKnownVariance,
    Gaussian.kind: Gaussian,
    Categorical.kind: Categorical,
}


def _check_gaussian(mean, var):
    if not math.isfinite(mean):
        raise BadEmissionParam(f"gaussian mean must be finite, got {mean!r}")
    if not (math.isfinite(var) and var > 0):
        raise BadEmissionParam(f"gaussian variance must be finite and > 0, got {var!r}")


def emission_from_dict(spec: Mapping) -> Emission:
    """Build an emission from ``{"kind": ..., "params": {...}}``; unknown keys are errors."""
    if not isinstance(spec, Mapping):
        raise BadEmissionParam(f"emission entry must be an object, got {type(spec).__name__}")
    extra = set(spec) - {"kind", "params"}
    if extra:
        raise BadEmissionParam(f"unknown emission fields: {sorted(extra)}")
    kind = spec.get("kind")
    if kind not in EMISSION_KINDS:
        raise BadEmissionParam(f"unknown emission kind {kind!r}; expected one of {sorted(EMISSION_KINDS)}")
    params = spec.get("params")
    if not isinstance(params, Mapping):
        raise BadEmissionParam("emission 'params' must be an object")
    allowed = {"probs", "symbols"} if kind == "categorical" else {"mean", "var"}
    required = {"probs"} if kind == "categorical" else {"mean", "var"}
    if set(params) - allowed:
        raise BadEmissionParam(f"unknown {kind} params: {sorted(set(params) - allowed)}")
    if required - set(params):
        raise BadEmissionParam(f"missing {kind} params: {sorted(required - set(params))}")
    try:
        if kind == "categorical":
            return Categorical(tuple(params["probs"]), params.get("symbols"))
        return EMISSION_KINDS[kind](float(params["mean"]), float(params["var"]))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, BadEmissionParam):
            raise
        raise BadEmissionParam(str(exc)) from exc


def emission_logpdf(emission: Emission, x) -> np.ndarray:
    """Log-density of ``x`` under ``emission``; ``-inf`` outside the support."""
    return emission.logpdf(x)


@dataclass(frozen=True)
class WeightedSample:
    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        weights = np.asarray(self.weights, dtype=float)
        if values.shape != weights.shape or values.ndim != 1:
            raise ValueError("values and weights must be 1-d arrays of equal length")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and nonnegative")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    @classmethod
    def unweighted(cls, values) -> "WeightedSample":
        values = np.asarray(values)
        return cls(values, np.ones(values.shape[0]))


def weighted_mle(emission: Emission, sample: WeightedSample, var_floor: float | None = None) -> Emission:
    """Maximise ``sum_i w_i log f(x_i; theta)`` over theta within ``emission``'s family.

    The returned emission is of the same kind; for the known-variance Gaussian
    the variance is carried over.  With ``var_floor=None`` a Gaussian sample
    concentrated on one point raises :class:`DegenerateVariance`; otherwise the
    variance estimate is floored at ``var_floor``.
    """
    total = sample.total_weight
    if not total > 0:
        raise EmptyClass("weighted sample has zero total weight")
    w = sample.weights / total
    if isinstance(emission, Categorical):
        idx = np.asarray(sample.values).astype(np.int64)
        if np.any((idx < 0) | (idx >= emission.n_symbols)):
            raise BadEmissionParam("sample holds symbols outside the alphabet")
        probs = np.bincount(idx, weights=w, minlength=emission.n_symbols)
        probs = probs / probs.sum()
        return Categorical(tuple(probs), emission.symbols)
    x = np.asarray(sample.values, dtype=float)
    mean = float(np.dot(w, x))
    if isinstance(emission, GaussianKnownVariance):
        return GaussianKnownVariance(mean, emission.var)
    var = float(np.dot(w, (x - mean) ** 2))
    if var_floor is None:
        support = x[sample.weights > 0]
        if support.size == 0 or np.all(support == support[0]) or var <= 0:
            raise DegenerateVariance("gaussian MLE needs at least two distinct weighted points")
    else:
        var = max(var, var_floor)
    return Gaussian(mean, var)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


def normalise_rows(C) -> np.ndarray:
    """Divide each row by its total so that it sums to 1 exactly (``math.fsum``); zero rows become NaN.

    Rounding of the quotients is absorbed into each row's largest entry by ulp steps.
    """
    C = np.asarray(C, dtype=float)
    flat = C.reshape(-1, C.shape[-1])
    out = np.full(flat.shape, np.nan)
    for i, row in enumerate(flat):
        s = row.sum()
        if not s > 0:
            continue
        r = row / s
        j = int(np.argmax(r))
        t = math.fsum(r)
        if t != 1.0:
            r[j] += 1.0 - t
        for _ in range(64):
            t = math.fsum(r)
            if t == 1.0:
                break
            r[j] = np.nextafter(r[j], np.inf if t < 1.0 else -np.inf)
        out[i] = r
    return out.reshape(C.shape)


def _as_readonly(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class HmmParams:
    """Validated parameter vector (transition matrix, initial law, emissions).

    Construction validates everything; instances are immutable.  The
    ``stationary`` flag demands ``initial @ transition == initial``.
    """

    transition: np.ndarray
    initial: np.ndarray
    emissions: tuple
    stationary: bool = True

    def __post_init__(self):
        P = _as_readonly(self.transition)
        pi = _as_readonly(self.initial)
        emissions = tuple(self.emissions)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "initial", pi)
        object.__setattr__(self, "emissions", emissions)
        _check_params(P, pi, emissions, self.stationary)

    @property
    def K(self) -> int:
        return self.transition.shape[0]

    @property
    def kind(self) -> str:
        return self.emissions[0].kind

    @property
    def discrete(self) -> bool:
        return self.emissions[0].discrete

    @cached_property
    def log_transition(self) -> np.ndarray:
        return _log(self.transition)

    @cached_property
    def log_initial(self) -> np.ndarray:
        return _log(self.initial)

    def loglik(self, x) -> np.ndarray:
        """(n, K) matrix of emission log-densities."""
        x = np.asarray(x)
        out = np.empty((x.shape[0], self.K))
        for l, e in enumerate(self.emissions):
            out[:, l] = e.logpdf(x)
        return out

    def is_mixture(self, tol: float = ROW_TOL) -> bool:
        """True when every transition row equals the initial law (i.i.d. regime)."""
        return bool(np.all(np.abs(self.transition - self.initial[None, :]) <= tol))

    def replace(self, **changes) -> "HmmParams":
        fields_ = {
            "transition": self.transition,
            "initial": self.initial,
            "emissions": self.emissions,
            "stationary": self.stationary,
        }
        fields_.update(changes)
        return HmmParams(**fields_)

    def theta_vector(self) -> np.ndarray:
        return np.concatenate([e.theta for e in self.emissions])

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "transition": self.transition.tolist(),
            "initial": self.initial.tolist(),
            "emissions": [e.to_dict() for e in self.emissions],
            "stationary": bool(self.stationary),
        }

    @classmethod
    def mixture(cls, weights, emissions) -> "HmmParams":
        """The i.i.d. mixture viewed as an HMM with rows ``p_ij = weights_j``."""
        w = np.asarray(weights, dtype=float)
        return cls(np.tile(w, (w.size, 1)), w, tuple(emissions), stationary=True)


def _check_params(P, pi, emissions, stationary):
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
        raise ParameterError(f"transition must be a square K x K matrix with K >= 1, got shape {P.shape}")
    K = P.shape[0]
    if pi.shape != (K,):
        raise ParameterError(f"initial must have length {K}, got shape {pi.shape}")
    if len(emissions) != K:
        raise ParameterError(f"need {K} emissions, got {len(emissions)}")
    if not np.all(np.isfinite(P)) or not np.all(np.isfinite(pi)):
        raise ParameterError("transition and initial must be finite")
    if np.any(P < 0):
        i, j = np.argwhere(P < 0)[0]
        raise NegativeEntry(f"transition[{i}][{j}] = {P[i, j]!r} is negative")
    if np.any(pi < 0):
        raise NegativeEntry(f"initial has a negative entry: {pi.tolist()}")
    sums = P.sum(axis=1)
    bad = np.abs(sums - 1.0) > ROW_TOL
    if np.any(bad):
        i = int(np.argmax(bad))
        raise NonStochasticRow(f"transition row {i} sums to {sums[i]!r}")
    if abs(pi.sum() - 1.0) > ROW_TOL:
        raise NonStochasticRow(f"initial sums to {pi.sum()!r}")
    kinds = {getattr(e, "kind", None) for e in emissions}
    if None in kinds or not kinds <= set(EMISSION_KINDS):
        raise BadEmissionParam("emissions must be GaussianKnownVariance, Gaussian or Categorical instances")
    if len(kinds) != 1:
        raise BadEmissionParam(f"all states must share one emission kind, got {sorted(kinds)}")
    if kinds == {"categorical"} and len({e.n_symbols for e in emissions}) != 1:
        raise BadEmissionParam("categorical emissions must share one alphabet size")
    if stationary:
        resid = np.max(np.abs(pi @ P - pi))
        if resid > STATIONARY_TOL:
            raise NonStationaryInitial(f"|pi P - pi|_inf = {resid:.3g} exceeds {STATIONARY_TOL}")


def validate_params(candidate: Mapping) -> HmmParams:
    """Validate a raw parameter bundle (the JSON model-file layout).

    Fields: ``K``, ``transition``, ``initial``, ``emissions``, ``stationary``
    (optional, default true).  Unknown fields are errors and nothing is ever
    renormalised.
    """
    if not isinstance(candidate, Mapping):
        raise ParameterError("parameter bundle must be a mapping")
    allowed = {"K", "transition", "initial", "emissions", "stationary"}
    extra = set(candidate) - allowed
    if extra:
        raise ParameterError(f"unknown model fields: {sorted(extra)}")
    missing = {"K", "transition", "initial", "emissions"} - set(candidate)
    if missing:
        raise ParameterError(f"missing model fields: {sorted(missing)}")
    K = candidate["K"]
    if not isinstance(K, int) or isinstance(K, bool) or K < 1:
        raise ParameterError(f"K must be an integer >= 1, got {K!r}")
    stationary = candidate.get("stationary", True)
    if not isinstance(stationary, bool):
        raise ParameterError("stationary must be a boolean")
    try:
        P = np.array(candidate["transition"], dtype=float)
        pi = np.array(candidate["initial"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParameterError(f"transition/initial must be numeric arrays: {exc}") from exc
    if P.shape != (K, K) or pi.shape != (K,):
        raise ParameterError(f"dimension mismatch: K={K}, transition {P.shape}, initial {pi.shape}")
    emissions = candidate["emissions"]
    if not isinstance(emissions, Sequence) or isinstance(emissions, (str, bytes)):
        raise ParameterError("emissions must be a list")
    return HmmParams(P, pi, tuple(emission_from_dict(e) for e in emissions), stationary)


# ---------------------------------------------------------------------------
# chain structure
# ---------------------------------------------------------------------------


def _bool_power_positive(A: np.ndarray, m_max: int):
    """Smallest m <= m_max with (A^m) entrywise positive, or None."""
    A = A.astype(np.int64)
    B = A.copy()
    for m in range(1, m_max + 1):
        if np.all(B > 0):
            return m
        B = ((B @ A) > 0).astype(np.int64)
    return None


def primitive_power(P, m_max: int | None = None):
    """Smallest m <= m_max (default K**2) with P^m > 0 (zeros compared exactly)."""
    P = np.asarray(P, dtype=float)
    K = P.shape[0]
    return _bool_power_positive(P > 0, K * K if m_max is None else m_max)


def stationary_distribution(P) -> np.ndarray:
    """Unique invariant law of an irreducible aperiodic stochastic matrix."""
    P = np.asarray(P, dtype=float)
    K = P.shape[0]
    if primitive_power(P) is None:
        adj = (P > 0).astype(np.int64) + np.eye(K, dtype=np.int64)
        if _bool_power_positive(adj, max(K - 1, 1)) is None:
            raise ReducibleChain("transition matrix is reducible")
        raise PeriodicChain("transition matrix is periodic")
    A = P.T - np.eye(K)
    A[-1, :] = 1.0
    b = np.zeros(K)
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)
    # one refinement step against rounding
    pi = pi + np.linalg.solve(A, b - A @ pi)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Realization:
    hidden: np.ndarray
    observed: np.ndarray
    seed: object = None

    def __post_init__(self):
        if len(self.hidden) != len(self.observed) or len(self.hidden) < 1:
            raise ValueError("hidden and observed must have equal length >= 1")

    @property
    def n(self) -> int:
        return len(self.hidden)


def sample_hmm(params: HmmParams, n: int, seed) -> Realization:
    """Draw ``(y_{1:n}, x_{1:n})``; identical seeds give bit-identical output."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    init_cum = np.cumsum(params.initial).tolist()
    rows_cum = [np.cumsum(row).tolist() for row in params.transition]
    K = params.K
    last = K - 1
    hidden = np.empty(n, dtype=np.int64)
    y = min(bisect.bisect_right(init_cum, u[0]), last)
    hidden[0] = y
    uu = u.tolist()
    for k in range(1, n):
        y = min(bisect.bisect_right(rows_cum[y], uu[k]), last)
        hidden[k] = y
    observed = np.empty(n, dtype=np.int64 if params.discrete else float)
    for l, e in enumerate(params.emissions):
        idx = np.flatnonzero(hidden == l)
        if idx.size:
            observed[idx] = e.sample(rng, idx.size)
    return Realization(hidden, observed, seed)


# ---------------------------------------------------------------------------
# support structure: clusters and the dominance condition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClusterCheck:
    is_cluster: bool
    reason: str
    power: int | None = None

    def __bool__(self):
        return self.is_cluster


def _support_mass(params: HmmParams, C: frozenset):
    """(min over j in C, max over j not in C) of P_j(intersection of supports over C)."""
    if params.discrete:
        common = frozenset.intersection(*(params.emissions[i].support for i in C))
        mass = [sum(params.emissions[j].probs[s] for s in common) for j in range(params.K)]
    else:
        mass = [1.0] * params.K
    inside = min(mass[j] for j in C)
    outside = max((mass[j] for j in range(params.K) if j not in C), default=0.0)
    return inside, outside


def check_cluster(params: HmmParams, C, m_max: int | None = None) -> ClusterCheck:
    C = frozenset(int(c) for c in C)
    if not C:
        raise ValueError("cluster candidate must be nonempty")
    if not C <= set(range(params.K)):
        raise ValueError(f"states {sorted(C)} outside 0..{params.K - 1}")
    inside, outside = _support_mass(params, C)
    if not inside > 0:
        return ClusterCheck(False, "empty_intersection")
    if outside > 0:
        return ClusterCheck(False, "detectable_outside")
    idx = sorted(C)
    Q = params.transition[np.ix_(idx, idx)]
    m = _bool_power_positive(Q > 0, len(idx) ** 2 if m_max is None else m_max)
    if m is None:
        return ClusterCheck(False, "no_positive_power")
    return ClusterCheck(True, "ok", m)


def gaussian_pairwise_roots(log_weights, emissions) -> np.ndarray:
    """Sorted real solutions of ``a_l + log f_l(x) = a_j + log f_j(x)`` over all pairs l < j."""
    roots = []
    K = len(emissions)
    for l in range(K):
        for j in range(l + 1, K):
            roots.extend(_gaussian_log_ratio_roots(log_weights[l], emissions[l], log_weights[j], emissions[j]))
    return np.array(sorted(set(roots)), dtype=float)


def _gaussian_log_ratio_roots(al, el, aj, ej):
    # a_l - a_j - 0.5 log(vl/vj) - (x-ml)^2/(2vl) + (x-mj)^2/(2vj) = A x^2 + B x + C
    if not (np.isfinite(al) and np.isfinite(aj)):
        return []
    ml, vl, mj, vj = el.mean, el.var, ej.mean, ej.var
    A = 0.5 / vj - 0.5 / vl
    B = ml / vl - mj / vj
    C = al - aj - 0.5 * math.log(vl / vj) - 0.5 * ml * ml / vl + 0.5 * mj * mj / vj
    g = lambda x: A * x * x + B * x + C  # noqa: E731
    scale = abs(A) + abs(B) + abs(C)
    if scale == 0:
        return []
    if abs(A) <= 1e-14 * (abs(B) + abs(C)) or A == 0:
        return [] if B == 0 else [_polish(g, -C / B)]
    disc = B * B - 4 * A * C
    if disc < 0:
        return []
    sq = math.sqrt(disc)
    q = -0.5 * (B + math.copysign(sq, B))
    out = []
    if q != 0:
        out.append(q / A)
        out.append(C / q)
    else:
        out.append(0.0)
    return sorted({_polish(g, r) for r in out})


def _polish(g, x0, tol=1e-12):
    """Refine a root by bisection when a sign change brackets it."""
    h = max(1e-6, 1e-6 * abs(x0))
    lo, hi = x0 - h, x0 + h
    glo, ghi = g(lo), g(hi)
    if glo == 0:
        return lo
    if ghi == 0 or glo * ghi > 0:
        return x0
    while hi - lo > tol * max(1.0, abs(x0)):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0:
            return mid
        if glo * gm < 0:
            hi = mid
        else:
            lo, glo = mid, gm
    return 0.5 * (lo + hi)


def check_dominance(params: HmmParams) -> dict:
    """For each state l, whether ``f_l(x) max_j p_jl > max_{i != l} f_i(x) max_j p_ji`` on a set of positive P_l-mass.

    Exact for categorical emissions (symbol enumeration).  For Gaussians the
    comparison is a union of intervals delimited by pairwise quadratic roots,
    so testing one interior point per interval is exact up to root accuracy.
    """
    a = _log(params.transition.max(axis=0))
    K = params.K
    result = {}
    if params.discrete:
        A = params.emissions[0].n_symbols
        F = np.array([e.logpdf(np.arange(A)) for e in params.emissions])  # K x A
        for l in range(K):
            lhs = a[l] + F[l]
            rhs = np.max(np.delete(a[:, None] + F, l, axis=0), axis=0) if K > 1 else np.full(A, -np.inf)
            mask = lhs > rhs
            result[l] = bool(np.sum(np.array(params.emissions[l].probs)[mask]) > 0)
        return result
    roots = gaussian_pairwise_roots(a, params.emissions)
    probes = _interval_probes(roots, params.emissions)
    F = np.array([e.logpdf(probes) for e in params.emissions])
    for l in range(K):
        lhs = a[l] + F[l]
        rhs = np.max(np.delete(a[:, None] + F, l, axis=0), axis=0) if K > 1 else np.full(probes.size, -np.inf)
        result[l] = bool(np.any(lhs > rhs))
    return result


def _interval_probes(roots, emissions) -> np.ndarray:
    """One interior point of each interval cut out by ``roots``."""
    lo = min(e.mean - 20 * math.sqrt(e.var) for e in emissions)
    hi = max(e.mean + 20 * math.sqrt(e.var) for e in emissions)
    if roots.size == 0:
        return np.array([0.5 * (lo + hi)])
    pts = [min(roots[0] - 1.0, lo)]
    pts.extend(0.5 * (roots[:-1] + roots[1:]))
    pts.append(max(roots[-1] + 1.0, hi))
    return np.array(pts)
