"""Viterbi training (VT), adjusted Viterbi training (VA) and EM.

Two parametrisations are trained:

* HMM mode: the transition matrix and the emissions are re-estimated while
  the initial law stays at its starting value.  This keeps every VT step a
  coordinate ascent of the joint likelihood and every EM step a generalised
  EM step.
* mixture mode (``p_ij = pi_j``): the class weights are re-estimated and all
  transition rows are set equal to them, i.e. independent training.

Mixture mode is chosen automatically when the starting parameters have that
structure.  With ``estimate_regime=False`` the transition matrix (or the
weights) is treated as known and only the emissions are trained.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np

from .errors import EmptyClass
from .model import Categorical, Gaussian, HmmParams, WeightedSample, normalise_rows, weighted_mle
from .viterbi import path_log_likelihood, viterbi

VAR_FLOOR = 1e-8
HISTORY_CAP = 1000


@dataclass(frozen=True)
class EmpiricalEstimates:
    """Alignment-based estimates with the masks of where fallbacks were used."""

    transition: np.ndarray
    weights: np.ndarray | None
    emissions: tuple
    fallback_rows: np.ndarray
    empty_classes: np.ndarray
    occupancy: np.ndarray
    class_samples: tuple
    mixture: bool
    regime_estimated: bool = True

    def to_params(self, previous: HmmParams) -> HmmParams:
        if not self.regime_estimated:
            return previous.replace(emissions=self.emissions)
        if self.mixture:
            return HmmParams.mixture(self.weights, self.emissions)
        return HmmParams(self.transition, previous.initial, self.emissions, stationary=False)


def empirical_estimates(x, v, fallback: HmmParams, mixture: bool | None = None,
                        var_floor: float | None = VAR_FLOOR, estimate_regime: bool = True) -> EmpiricalEstimates:
    """Transition frequencies and per-class MLEs read off the alignment ``v``.

    Rows of states absent from ``v[:-1]`` copy the fallback row; classes with
    no assigned observation keep the fallback emission.
    """
    x = np.asarray(x)
    v = np.asarray(v, dtype=np.int64)
    if x.shape[0] != v.shape[0]:
        raise ValueError("observations and alignment must have equal length")
    K = fallback.K
    mixture = fallback.is_mixture() if mixture is None else mixture
    occupancy = np.bincount(v, minlength=K).astype(float)
    counts = np.zeros((K, K))
    np.add.at(counts, (v[:-1], v[1:]), 1.0)
    from_counts = counts.sum(axis=1)
    fallback_rows = from_counts == 0
    P = np.where(fallback_rows[:, None], fallback.transition, np.nan_to_num(normalise_rows(counts)))
    weights = normalise_rows(occupancy) if mixture else None
    if mixture:
        P = np.tile(weights, (K, 1))
        fallback_rows = np.zeros(K, dtype=bool)
    emissions, samples = [], []
    empty = occupancy == 0
    for l in range(K):
        sample = WeightedSample.unweighted(x[v == l])
        samples.append(sample)
        if empty[l]:
            emissions.append(fallback.emissions[l])
        else:
            emissions.append(_mle(fallback.emissions[l], sample, var_floor))
    return EmpiricalEstimates(P, weights, tuple(emissions), fallback_rows, empty, occupancy, tuple(samples), mixture,
                              estimate_regime)


def _mle(emission, sample, var_floor):
    if isinstance(emission, Categorical):
        return weighted_mle(emission, sample)
    return weighted_mle(emission, sample, var_floor)


@dataclass
class TrainState:
    """Outcome of a training run; ``history`` keeps at most ``HISTORY_CAP`` recent parameter vectors."""

    method: str
    iteration: int
    params: HmmParams
    alignment: np.ndarray
    joint_loglik: float
    observed_loglik: float | None = None
    converged: bool = False
    history: list = field(default_factory=list)
    joint_trace: list = field(default_factory=list)
    observed_trace: list = field(default_factory=list)
    fallbacks: list = field(default_factory=list)
    correction_se: list = field(default_factory=list)

    def record(self, params: HmmParams, cap: int):
        self.history.append(params)
        if len(self.history) > cap:
            del self.history[0]


def _aligned(params, x):
    path = viterbi(params, x).path
    return path, path_log_likelihood(params, x, path)


def _fallback_record(est: EmpiricalEstimates) -> dict:
    return {"rows": np.flatnonzero(est.fallback_rows).tolist(), "classes": np.flatnonzero(est.empty_classes).tolist()}


def vt_train(psi0: HmmParams, x, max_iters: int = 100, mixture: bool | None = None,
             var_floor: float | None = VAR_FLOOR, history_cap: int = HISTORY_CAP,
             estimate_regime: bool = True) -> TrainState:
    """Viterbi training: align, re-estimate, repeat until the alignment repeats exactly."""
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    x = np.asarray(x)
    mixture = psi0.is_mixture() if mixture is None else mixture
    psi = psi0
    v, jl = _aligned(psi, x)
    state = TrainState("vt", 0, psi, v, jl, joint_trace=[jl])
    state.record(psi, history_cap)
    for k in range(1, max_iters + 1):
        est = empirical_estimates(x, v, psi, mixture, var_floor, estimate_regime)
        psi = est.to_params(psi)
        v_new, jl = _aligned(psi, x)
        state.iteration, state.params, state.joint_loglik = k, psi, jl
        state.joint_trace.append(jl)
        state.fallbacks.append(_fallback_record(est))
        state.record(psi, history_cap)
        repeated = np.array_equal(v_new, v)
        v = v_new
        state.alignment = v
        if repeated:
            state.converged = True
            break
    return state


def _project_simplex_rows(P: np.ndarray) -> np.ndarray:
    """Clip to [0, 1] and renormalise the rows that left the simplex; others are returned untouched."""
    P = np.array(P, dtype=float)
    bad = np.any((P < 0) | (P > 1), axis=1) | (np.abs(P.sum(axis=1) - 1.0) > 1e-12)
    if np.any(bad):
        Q = np.clip(P[bad], 0.0, 1.0)
        s = Q.sum(axis=1, keepdims=True)
        Q = np.where(s > 0, Q / np.where(s > 0, s, 1.0), 1.0 / P.shape[1])
        P[bad] = Q
    return P


def _corrected_emission(emission, theta, var_floor):
    if isinstance(emission, Categorical):
        probs = _project_simplex_rows(np.asarray(theta, dtype=float)[None, :])[0]
        return emission.with_theta(probs)
    if isinstance(emission, Gaussian):
        theta = np.array(theta, dtype=float)
        theta[1] = max(theta[1], var_floor if var_floor is not None else VAR_FLOOR)
    return emission.with_theta(theta)


def va_train(psi0: HmmParams, x, corrections: Callable, max_iters: int = 100, tol: float = 1e-8,
             mixture: bool | None = None, var_floor: float | None = VAR_FLOOR,
             history_cap: int = HISTORY_CAP, estimate_regime: bool = True) -> TrainState:
    """Adjusted Viterbi training.

    ``corrections(psi)`` returns a :class:`~hmmva.corrections.CorrectionTable`
    whose ``delta`` is added to the class MLEs and whose ``R`` is added to the
    transition frequencies (the class weights in mixture mode).  Stops when the
    sup-norm parameter change falls below ``tol``.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    x = np.asarray(x)
    mixture = psi0.is_mixture() if mixture is None else mixture
    psi = psi0
    v, jl = _aligned(psi, x)
    state = TrainState("va", 0, psi, v, jl, joint_trace=[jl])
    state.record(psi, history_cap)
    for k in range(1, max_iters + 1):
        est = empirical_estimates(x, v, psi, mixture, var_floor, estimate_regime)
        table = corrections(psi)
        emissions = tuple(
            _corrected_emission(e, e.theta + d, var_floor) for e, d in zip(est.emissions, table.delta)
        )
        if not estimate_regime:
            new = psi.replace(emissions=emissions)
        elif mixture:
            w = _project_simplex_rows((est.weights + table.R[0])[None, :])[0]
            new = HmmParams.mixture(w, emissions)
        else:
            P = _project_simplex_rows(est.transition + table.R)
            new = HmmParams(P, psi.initial, emissions, stationary=False)
        change = max(
            float(np.max(np.abs(new.transition - psi.transition))),
            float(np.max(np.abs(new.theta_vector() - psi.theta_vector()))),
        )
        psi = new
        v, jl = _aligned(psi, x)
        state.iteration, state.params, state.alignment, state.joint_loglik = k, psi, v, jl
        state.joint_trace.append(jl)
        state.fallbacks.append(_fallback_record(est))
        if getattr(table, "method", None) == "monte-carlo":
            state.correction_se.append({"delta": [d.tolist() for d in table.delta_se], "R": table.R_se.tolist()})
        state.record(psi, history_cap)
        if change < tol:
            state.converged = True
            break
    return state


# ---------------------------------------------------------------------------
# EM
# ---------------------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _forward_backward_kernel(pi, P, B):
    """Scaled forward-backward on emission factors ``B`` (n, K); returns (gamma, xi_sum, sum log c)."""
    n, K = B.shape
    alpha = np.empty((n, K))
    c = np.empty(n)
    s = 0.0
    for j in range(K):
        alpha[0, j] = pi[j] * B[0, j]
        s += alpha[0, j]
    c[0] = s
    for j in range(K):
        alpha[0, j] /= s
    for u in range(1, n):
        s = 0.0
        for j in range(K):
            a = 0.0
            for i in range(K):
                a += alpha[u - 1, i] * P[i, j]
            a *= B[u, j]
            alpha[u, j] = a
            s += a
        c[u] = s
        for j in range(K):
            alpha[u, j] /= s
    beta = np.ones(K)
    gamma = np.empty((n, K))
    xi = np.zeros((K, K))
    for j in range(K):
        gamma[n - 1, j] = alpha[n - 1, j]
    nb = np.empty(K)
    for u in range(n - 2, -1, -1):
        for i in range(K):
            acc = 0.0
            for j in range(K):
                t = P[i, j] * B[u + 1, j] * beta[j] / c[u + 1]
                xi[i, j] += alpha[u, i] * t
                acc += t
            nb[i] = acc
        for i in range(K):
            beta[i] = nb[i]
            gamma[u, i] = alpha[u, i] * beta[i]
    logc = 0.0
    for u in range(n):
        logc += np.log(c[u])
    return gamma, xi, logc


def e_step(params: HmmParams, x, mixture: bool | None = None):
    """Posterior state probabilities, expected transition counts and the observed-data log-likelihood."""
    x = np.asarray(x)
    mixture = params.is_mixture() if mixture is None else mixture
    ll = params.loglik(x)
    m = ll.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(m)):
        raise EmptyClass("an observation has zero density under every state")
    if mixture:
        a = params.log_initial[None, :] + ll
        am = a.max(axis=1, keepdims=True)
        w = np.exp(a - am)
        s = w.sum(axis=1, keepdims=True)
        gamma = w / s
        return gamma, None, float(np.sum(am[:, 0] + np.log(s[:, 0])))
    gamma, xi, logc = _forward_backward_kernel(
        np.ascontiguousarray(params.initial), np.ascontiguousarray(params.transition), np.exp(ll - m)
    )
    return gamma, xi, float(logc + m.sum())


def observed_loglik(params: HmmParams, x) -> float:
    return e_step(params, x)[2]


def _m_step(params: HmmParams, x, gamma, xi, mixture, var_floor, estimate_regime=True):
    K = params.K
    emissions = []
    for l in range(K):
        w = gamma[:, l]
        if not w.sum() > 0:
            emissions.append(params.emissions[l])
            continue
        emissions.append(_mle(params.emissions[l], WeightedSample(x, w), var_floor))
    if not estimate_regime:
        return params.replace(emissions=tuple(emissions))
    if mixture:
        return HmmParams.mixture(gamma.mean(axis=0), tuple(emissions))
    P = normalise_rows(xi)
    P = np.where(np.isnan(P), params.transition, P)
    return HmmParams(P, params.initial, tuple(emissions), stationary=False)


def em_train(psi0: HmmParams, x, max_iters: int = 200, tol: float = 1e-10, mixture: bool | None = None,
             var_floor: float | None = VAR_FLOOR, history_cap: int = HISTORY_CAP,
             estimate_regime: bool = True) -> TrainState:
    """Baum-Welch with closed-form M-steps; stops when the relative log-likelihood gain is below ``tol``."""
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    x = np.asarray(x)
    mixture = psi0.is_mixture() if mixture is None else mixture
    psi = psi0
    gamma, xi, ol = e_step(psi, x, mixture)
    state = TrainState("em", 0, psi, np.empty(0, dtype=np.int64), float("nan"), ol, observed_trace=[ol])
    state.record(psi, history_cap)
    for k in range(1, max_iters + 1):
        psi = _m_step(psi, x, gamma, xi, mixture, var_floor, estimate_regime)
        gamma, xi, new = e_step(psi, x, mixture)
        state.iteration, state.params, state.observed_loglik = k, psi, new
        state.observed_trace.append(new)
        state.record(psi, history_cap)
        gain = new - ol
        ol = new
        if gain < tol * abs(new):
            state.converged = True
            break
    state.alignment, state.joint_loglik = _aligned(psi, x)
    return state


TRAINERS = {"vt": vt_train, "va": va_train, "em": em_train}
