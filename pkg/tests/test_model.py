import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from hmmva.errors import (
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
from hmmva.model import (
    Categorical,
    Gaussian,
    GaussianKnownVariance,
    HmmParams,
    WeightedSample,
    check_cluster,
    check_dominance,
    emission_from_dict,
    emission_logpdf,
    sample_hmm,
    stationary_distribution,
    validate_params,
    weighted_mle,
)


def bundle(P, pi, emissions=None, **extra):
    K = len(pi)
    emissions = emissions or [{"kind": "gaussian", "params": {"mean": float(l), "var": 1.0}} for l in range(K)]
    return {"K": K, "transition": P, "initial": pi, "emissions": emissions, **extra}


class TestValidate:
    def test_symmetric_valid(self):
        p = validate_params(bundle([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5]))
        assert p.K == 2 and p.stationary

    def test_row_sum(self):
        with pytest.raises(NonStochasticRow):
            validate_params(bundle([[0.49, 0.49], [0.5, 0.5]], [0.5, 0.5]))

    def test_row_sum_tolerance_is_tight(self):
        with pytest.raises(NonStochasticRow):
            validate_params(bundle([[0.5, 0.5 + 1e-11], [0.5, 0.5]], [0.5, 0.5], stationary=False))
        validate_params(bundle([[0.5, 0.5 + 1e-13], [0.5, 0.5]], [0.5, 0.5], stationary=False))

    def test_negative(self):
        with pytest.raises(NegativeEntry):
            validate_params(bundle([[1.1, -0.1], [0.5, 0.5]], [0.5, 0.5]))

    def test_non_stationary_only_when_flagged(self):
        P = [[0.9, 0.1], [0.2, 0.8]]
        with pytest.raises(NonStationaryInitial):
            validate_params(bundle(P, [0.5, 0.5]))
        assert not validate_params(bundle(P, [0.5, 0.5], stationary=False)).stationary

    def test_bad_emission(self):
        with pytest.raises(BadEmissionParam):
            validate_params(bundle([[1.0]], [1.0], [{"kind": "gaussian", "params": {"mean": 0, "var": 0}}]))
        with pytest.raises(BadEmissionParam):
            validate_params(bundle([[1.0]], [1.0], [{"kind": "poisson", "params": {}}]))

    def test_strict_fields(self):
        with pytest.raises(ParameterError):
            validate_params(bundle([[1.0]], [1.0], colour="red"))
        with pytest.raises(BadEmissionParam):
            emission_from_dict({"kind": "gaussian", "params": {"mean": 0, "var": 1, "skew": 0}})

    def test_dimension_mismatch(self):
        with pytest.raises(ParameterError):
            validate_params({"K": 3, "transition": [[1.0]], "initial": [1.0], "emissions": []})

    def test_mixed_kinds_rejected(self):
        with pytest.raises(BadEmissionParam):
            HmmParams([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5], (Gaussian(0, 1), GaussianKnownVariance(1, 1)))

    def test_no_silent_renormalisation(self):
        raw = bundle([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5])
        p = validate_params(raw)
        assert p.transition.tolist() == raw["transition"]
        with pytest.raises(ValueError):
            p.transition[0, 0] = 1.0

    def test_roundtrip(self):
        p = validate_params(bundle([[0.9, 0.1], [0.2, 0.8]], [2 / 3, 1 / 3]))
        assert validate_params(p.to_dict()).to_dict() == p.to_dict()


class TestStationary:
    def test_symmetric(self):
        assert np.allclose(stationary_distribution([[0.5, 0.5], [0.5, 0.5]]), [0.5, 0.5])

    def test_closed_form(self):
        pi = stationary_distribution([[0.9, 0.1], [0.2, 0.8]])
        assert np.allclose(pi, [2 / 3, 1 / 3], atol=1e-14)

    def test_identity_reducible(self):
        with pytest.raises(ReducibleChain):
            stationary_distribution(np.eye(2))

    def test_periodic(self):
        with pytest.raises(PeriodicChain):
            stationary_distribution([[0.0, 1.0], [1.0, 0.0]])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**6), st.integers(1, 6))
    def test_invariance(self, seed, K):
        rng = np.random.default_rng(seed)
        P = rng.dirichlet(np.ones(K), size=K)
        pi = stationary_distribution(P)
        assert np.max(np.abs(pi @ P - pi)) < 1e-10
        assert abs(pi.sum() - 1.0) < 1e-12
        assert np.all(pi > 0)


class TestEmissions:
    def test_standard_normal_mode(self):
        assert emission_logpdf(Gaussian(0, 1), 0.0) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)

    def test_gaussian_at_mean(self):
        assert Gaussian(2, 4).logpdf(2.0) == pytest.approx(-0.5 * math.log(8 * math.pi), abs=1e-15)

    def test_categorical_zero(self):
        c = Categorical((0.5, 0.0, 0.5))
        assert c.logpdf(1) == -np.inf
        assert c.logpdf(7) == -np.inf
        assert c.support == frozenset({0, 2})

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-5, 5), st.floats(0.05, 10))
    def test_gaussian_normalises(self, mean, var):
        for e in (Gaussian(mean, var), GaussianKnownVariance(mean, var)):
            s = math.sqrt(var)
            total, _ = integrate.quad(lambda x: math.exp(e.logpdf(x)), mean - 10 * s, mean + 10 * s, epsabs=1e-12)
            assert abs(total - 1) < 1e-6

    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=6).filter(lambda v: sum(v) > 0))
    def test_categorical_normalises(self, w):
        probs = np.array(w) / sum(w)
        probs[-1] = 1.0 - probs[:-1].sum()
        if probs[-1] < 0:
            return
        c = Categorical(tuple(probs))
        assert abs(np.exp(c.logpdf(np.arange(len(w)))).sum() - 1) < 1e-12


class TestWeightedMle:
    def test_known_variance_mean(self):
        e = weighted_mle(GaussianKnownVariance(0, 3), WeightedSample.unweighted([1.0, 2.0, 3.0]))
        assert e.mean == pytest.approx(2.0) and e.var == 3

    def test_categorical_frequencies(self):
        e = weighted_mle(Categorical((0.5, 0.5)), WeightedSample(np.array([0, 1]), np.array([3.0, 1.0])))
        assert e.probs == pytest.approx((0.75, 0.25))

    def test_empty(self):
        with pytest.raises(EmptyClass):
            weighted_mle(Gaussian(0, 1), WeightedSample.unweighted(np.array([])))

    def test_degenerate_variance(self):
        with pytest.raises(DegenerateVariance):
            weighted_mle(Gaussian(0, 1), WeightedSample.unweighted([1.0, 1.0]))
        assert weighted_mle(Gaussian(0, 1), WeightedSample.unweighted([1.0, 1.0]), var_floor=1e-8).var == 1e-8

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6))
    def test_perturbation_never_improves(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=20)
        w = rng.random(20)
        sample = WeightedSample(x, w)

        def objective(e):
            return float(np.dot(w, e.logpdf(x)))

        for family in (Gaussian(0, 1), GaussianKnownVariance(0, 2.0)):
            best = weighted_mle(family, sample)
            base = objective(best)
            for k in range(best.theta.size):
                for sgn in (-1, 1):
                    theta = best.theta.copy()
                    theta[k] += sgn * 1e-3
                    assert objective(best.with_theta(theta)) <= base + 1e-12

        symbols = rng.integers(0, 3, 20)
        cat = weighted_mle(Categorical((1 / 3, 1 / 3, 1 / 3)), WeightedSample(symbols, w))
        base = float(np.dot(w, cat.logpdf(symbols)))
        for a in range(3):
            for b in range(3):
                if a != b and cat.probs[a] > 1e-3:
                    probs = np.array(cat.probs)
                    probs[a] -= 1e-3
                    probs[b] += 1e-3
                    assert float(np.dot(w, Categorical(tuple(probs)).logpdf(symbols))) <= base + 1e-12


class TestSampling:
    def test_single_state(self):
        p = HmmParams([[1.0]], [1.0], (Gaussian(0, 1),))
        assert np.all(sample_hmm(p, 50, 0).hidden == 0)

    def test_determinism(self, case1_hmm):
        a, b = sample_hmm(case1_hmm, 1000, 42), sample_hmm(case1_hmm, 1000, 42)
        assert np.array_equal(a.hidden, b.hidden) and np.array_equal(a.observed, b.observed)

    def test_frequencies(self):
        P = np.array([[0.9, 0.1, 0.0], [0.2, 0.5, 0.3], [0.1, 0.4, 0.5]])
        pi = stationary_distribution(P)
        p = HmmParams(P, pi, tuple(Gaussian(m, 1) for m in range(3)))
        n = 10**5
        y = sample_hmm(p, n, 3).hidden
        counts = np.zeros((3, 3))
        np.add.at(counts, (y[:-1], y[1:]), 1)
        occ = counts.sum(axis=1, keepdims=True)
        phat = counts / occ
        se = np.sqrt(P * (1 - P) / occ)
        assert np.all(np.abs(phat - P) <= 3 * se + 1e-15)
        freq = np.bincount(y, minlength=3) / n
        # marginal frequencies of a Markov chain: inflate the iid error by the chain's relaxation time
        tau = 1 / (1 - sorted(np.abs(np.linalg.eigvals(P)))[-2])
        se_pi = np.sqrt(pi * (1 - pi) / n * (2 * tau))
        assert np.all(np.abs(freq - pi) <= 3 * se_pi)

    def test_categorical_observations_in_support(self):
        p = HmmParams([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5], (Categorical((1.0, 0.0)), Categorical((0.0, 1.0))))
        r = sample_hmm(p, 500, 1)
        assert np.array_equal(r.hidden, r.observed)


class TestClusters:
    def test_gaussian_whole_space(self, case1_hmm):
        c = check_cluster(case1_hmm, {0, 1})
        assert c and c.power == 1

    def test_disjoint_supports_singletons(self):
        p = HmmParams([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5], (Categorical((1.0, 0.0)), Categorical((0.0, 1.0))))
        assert check_cluster(p, {0}) and check_cluster(p, {1})
        assert check_cluster(p, {0, 1}).reason == "empty_intersection"

    def test_identity_has_no_positive_power(self):
        p = HmmParams(np.eye(2), [0.5, 0.5], (Gaussian(0, 1), Gaussian(1, 1)))
        assert check_cluster(p, {0, 1}).reason == "no_positive_power"

    def test_detectable_outside(self):
        p = HmmParams([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5], (Categorical((1.0, 0.0)), Categorical((0.5, 0.5))))
        assert check_cluster(p, {0}).reason == "detectable_outside"
        assert check_cluster(p, {1}).reason == "detectable_outside"


class TestDominance:
    def test_distinct_gaussians(self, case1_hmm):
        assert check_dominance(case1_hmm) == {0: True, 1: True}

    def test_dominated_categorical(self):
        p = HmmParams([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5], (Categorical((0.5, 0.5)), Categorical((0.5, 0.5))))
        assert check_dominance(p) == {0: False, 1: False}

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6))
    def test_gaussian_against_grid(self, seed):
        rng = np.random.default_rng(seed)
        K = int(rng.integers(2, 4))
        P = rng.dirichlet(np.ones(K), size=K)
        em = tuple(Gaussian(float(rng.normal(0, 2)), float(rng.uniform(0.3, 3))) for _ in range(K))
        p = HmmParams(P, stationary_distribution(P), em)
        a = np.log(P.max(axis=0))
        grid = np.linspace(-40, 40, 200001)
        F = a[:, None] + np.array([e.logpdf(grid) for e in em])
        for l, flag in check_dominance(p).items():
            others = np.delete(F, l, axis=0).max(axis=0)
            margin = F[l] - others
            if flag:
                assert margin.max() > -1e-9
            else:
                assert margin.max() < 1e-9
