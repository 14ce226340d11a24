import numpy as np
import pytest
from scipy.special import logsumexp

from conftest import random_categorical_hmm
from hmmva.corrections import AnalyticCorrections, MonteCarloCorrections, ZeroCorrections
from hmmva.errors import AllPathsImpossible
from hmmva.model import Categorical, Gaussian, HmmParams, sample_hmm
from hmmva.training import (
    VAR_FLOOR,
    _project_simplex_rows,
    e_step,
    em_train,
    empirical_estimates,
    observed_loglik,
    va_train,
    vt_train,
)
from hmmva.viterbi import enumerate_path_scores


def _three_state():
    P = np.array([[0.7, 0.2, 0.1], [0.1, 0.8, 0.1], [0.2, 0.2, 0.6]])
    return HmmParams(P, [1 / 3, 1 / 3, 1 / 3], (Gaussian(-2.0, 1.0), Gaussian(0.0, 0.5), Gaussian(2.5, 1.5)),
                     stationary=False)


class TestEmpiricalEstimates:
    def test_constant_alignment_uses_fallback(self, case1_hmm):
        x = np.linspace(-1, 1, 10)
        est = empirical_estimates(x, np.zeros(10, dtype=int), case1_hmm)
        assert est.transition[0, 0] == 1.0
        assert np.array_equal(est.transition[1], case1_hmm.transition[1])
        assert est.fallback_rows.tolist() == [False, True]
        assert est.empty_classes.tolist() == [False, True]
        assert est.emissions[1] == case1_hmm.emissions[1]
        assert est.emissions[0].mean == pytest.approx(0.0, abs=1e-15)

    def test_two_points(self, case1_hmm):
        est = empirical_estimates([0.5, 1.5], [0, 1], case1_hmm)
        assert est.transition[0].tolist() == [0.0, 1.0]
        assert np.array_equal(est.transition[1], case1_hmm.transition[1])
        assert est.emissions[0].mean == 0.5 and est.emissions[1].mean == 1.5

    def test_rows_sum_to_one_and_masks(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            p = random_categorical_hmm(rng, K=3)
            v = rng.integers(0, 3, 20)
            x = rng.integers(0, p.emissions[0].n_symbols, 20)
            est = empirical_estimates(x, v, p)
            assert np.allclose(est.transition.sum(axis=1), 1.0, atol=1e-15)
            assert np.array_equal(est.fallback_rows, np.bincount(v[:-1], minlength=3) == 0)
            assert np.array_equal(est.empty_classes, est.occupancy == 0)

    def test_true_path_recovers_truth(self, case1_hmm):
        real = sample_hmm(case1_hmm, 100_000, 1)
        est = empirical_estimates(real.observed, real.hidden, case1_hmm)
        occ = np.bincount(real.hidden[:-1], minlength=2)
        P = case1_hmm.transition
        se = np.sqrt(P * (1 - P) / occ[:, None])
        assert np.all(np.abs(est.transition - P) < 3 * se)
        n_l = np.bincount(real.hidden, minlength=2)
        for l in range(2):
            assert abs(est.emissions[l].mean - case1_hmm.emissions[l].mean) < 3 / np.sqrt(n_l[l])

    def test_mixture_weights(self, symmetric_mixture):
        v = np.array([0, 0, 1, 0])
        est = empirical_estimates(np.zeros(4), v, symmetric_mixture)
        assert est.mixture
        assert est.weights.tolist() == [0.75, 0.25]
        assert np.array_equal(est.transition, np.tile(est.weights, (2, 1)))

    def test_regime_fixed(self, case1_hmm):
        est = empirical_estimates(np.array([0.0, 3.0, 3.0]), [0, 1, 1], case1_hmm, estimate_regime=False)
        new = est.to_params(case1_hmm)
        assert np.array_equal(new.transition, case1_hmm.transition)
        assert new.emissions[1].mean == 3.0

    def test_variance_floor(self):
        p = HmmParams([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5], (Gaussian(0, 1), Gaussian(3, 1)))
        est = empirical_estimates([1.0, 2.0, 2.0], [1, 0, 0], p)
        assert est.emissions[0].var == VAR_FLOOR
        assert est.emissions[1].var == VAR_FLOOR

    def test_length_mismatch(self, case1_hmm):
        with pytest.raises(ValueError):
            empirical_estimates([0.0, 1.0], [0], case1_hmm)


class TestVT:
    def test_fixed_point_stops_after_one_iteration(self):
        x = np.array([0.3, -1.2, 2.2, 0.7])
        psi0 = HmmParams([[1.0]], [1.0], (Gaussian(x.mean(), x.var()),))
        st = vt_train(psi0, x)
        assert st.iteration == 1 and st.converged
        assert st.params.emissions[0].mean == pytest.approx(x.mean(), abs=1e-12)
        assert st.params.emissions[0].var == pytest.approx(x.var(), abs=1e-12)

    def test_case1_converges(self, case1_hmm):
        x = sample_hmm(case1_hmm, 10_000, 2).observed
        st = vt_train(case1_hmm, x)
        assert st.converged and st.iteration < 100
        assert len(st.history) == st.iteration + 1
        assert len(st.alignment) == len(x)

    def test_idempotent_after_convergence(self, case1_hmm):
        x = sample_hmm(case1_hmm, 3000, 3).observed
        st = vt_train(case1_hmm, x)
        again = vt_train(st.params, x)
        assert again.iteration == 1 and again.converged
        assert np.array_equal(again.alignment, st.alignment)
        assert np.allclose(again.params.theta_vector(), st.params.theta_vector(), rtol=0, atol=1e-12)
        assert np.allclose(again.params.transition, st.params.transition, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("seed", range(4))
    def test_joint_likelihood_non_decreasing(self, seed):
        rng = np.random.default_rng(seed)
        truth = _three_state()
        x = sample_hmm(truth, 3000, seed).observed
        start = truth.replace(emissions=tuple(Gaussian(e.mean + rng.normal(0, 0.5), e.var) for e in truth.emissions))
        st = vt_train(start, x)
        assert np.all(np.diff(st.joint_trace) >= -1e-9)

    def test_joint_likelihood_non_decreasing_categorical(self):
        rng = np.random.default_rng(4)
        done = 0
        while done < 20:
            p = random_categorical_hmm(rng, zero_prob=0.0)
            x = sample_hmm(p, 300, rng).observed
            try:
                st = vt_train(p, x)
            except AllPathsImpossible:
                continue
            done += 1
            assert np.all(np.diff(st.joint_trace) >= -1e-9)

    def test_deterministic(self, case1_hmm):
        x = sample_hmm(case1_hmm, 2000, 5).observed
        a, b = vt_train(case1_hmm, x), vt_train(case1_hmm, x)
        assert a.joint_trace == b.joint_trace
        assert np.array_equal(a.params.theta_vector(), b.params.theta_vector())

    def test_history_cap(self, case1_hmm):
        x = sample_hmm(case1_hmm, 2000, 6).observed
        st = vt_train(case1_hmm, x, history_cap=2)
        assert len(st.history) == min(2, st.iteration + 1)

    def test_bad_max_iters(self, case1_hmm):
        with pytest.raises(ValueError):
            vt_train(case1_hmm, [0.0, 1.0], max_iters=0)

    def test_mixture_bias_direction(self, symmetric_mixture):
        x = sample_hmm(symmetric_mixture, 20_000, 7).observed
        st = vt_train(symmetric_mixture, x, max_iters=1)
        assert st.params.emissions[0].mean < -1.1
        assert st.params.emissions[1].mean > 1.1


class TestVA:
    def test_zero_corrections_match_vt(self, case1_hmm):
        x = sample_hmm(case1_hmm, 3000, 8).observed
        vt = vt_train(case1_hmm, x)
        va = va_train(case1_hmm, x, ZeroCorrections())
        for a, b in zip(vt.history, va.history):
            assert np.array_equal(a.transition, b.transition)
            assert np.array_equal(a.theta_vector(), b.theta_vector())
        assert va.iteration in (vt.iteration, vt.iteration + 1)
        assert np.array_equal(va.alignment, vt.alignment)

    def test_one_step_smaller_than_vt(self, symmetric_mixture):
        x = sample_hmm(symmetric_mixture, 20_000, 9).observed
        vt = vt_train(symmetric_mixture, x, max_iters=1, estimate_regime=False)
        va = va_train(symmetric_mixture, x, AnalyticCorrections(), max_iters=1, estimate_regime=False)
        truth = symmetric_mixture.theta_vector()
        assert np.max(np.abs(va.params.theta_vector() - truth)) < np.max(np.abs(vt.params.theta_vector() - truth))

    def test_monte_carlo_records_standard_errors(self, case1_hmm):
        x = sample_hmm(case1_hmm, 2000, 10).observed
        st = va_train(case1_hmm, x, MonteCarloCorrections(L=2000, R=4, seed=1), max_iters=2)
        assert len(st.correction_se) == st.iteration
        assert len(st.correction_se[0]["R"]) == 2
        assert np.allclose(st.params.transition.sum(axis=1), 1.0)

    def test_simplex_projection(self):
        P = np.array([[0.2, 0.8], [-0.1, 1.05]])
        Q = _project_simplex_rows(P)
        assert np.array_equal(Q[0], P[0])
        assert Q[1].tolist() == [0.0, 1.0]
        assert np.all(Q >= 0) and np.allclose(Q.sum(axis=1), 1.0)


class TestEM:
    def test_observed_loglik_matches_enumeration(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            p = random_categorical_hmm(rng)
            x = rng.integers(0, p.emissions[0].n_symbols, int(rng.integers(1, 7)))
            _, scores = enumerate_path_scores(p, x)
            if not np.isfinite(scores.max()):
                continue
            assert observed_loglik(p, x) == pytest.approx(logsumexp(scores), abs=1e-10)

    def test_posteriors_normalised(self, case1_hmm):
        x = sample_hmm(case1_hmm, 500, 12).observed
        gamma, xi, _ = e_step(case1_hmm, x)
        assert np.allclose(gamma.sum(axis=1), 1.0)
        assert np.allclose(xi.sum(), len(x) - 1)

    @pytest.mark.parametrize("seed", range(3))
    def test_monotone(self, seed):
        truth = _three_state()
        x = sample_hmm(truth, 3000, seed).observed
        start = truth.replace(emissions=tuple(Gaussian(e.mean + 0.7, 2 * e.var) for e in truth.emissions))
        st = em_train(start, x, max_iters=60)
        assert np.all(np.diff(st.observed_trace) >= -1e-9)

    def test_monotone_categorical(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            p = random_categorical_hmm(rng, zero_prob=0.0)
            x = sample_hmm(p, 400, rng).observed
            st = em_train(p, x, max_iters=40)
            assert np.all(np.diff(st.observed_trace) >= -1e-9)

    def test_one_state_is_mle(self):
        x = np.random.default_rng(14).normal(1.5, 2.0, 1000)
        st = em_train(HmmParams([[1.0]], [1.0], (Gaussian(0.0, 1.0),)), x)
        assert st.params.emissions[0].mean == pytest.approx(x.mean(), abs=1e-12)
        assert st.params.emissions[0].var == pytest.approx(x.var(), rel=1e-12)

    def test_mixture_unbiased_while_vt_biased(self, symmetric_mixture):
        x = sample_hmm(symmetric_mixture, 100_000, 15).observed
        em = em_train(symmetric_mixture, x, estimate_regime=False)
        mu = em.params.emissions[0].mean
        # standard error from the observed information of the first mean
        gamma, _, _ = e_step(em.params, x)
        score = gamma[:, 0] * (x - mu)
        se = 1.0 / np.sqrt(np.sum(score**2))
        assert abs(mu - (-1.0)) < 3 * se
        vt = vt_train(symmetric_mixture, x, estimate_regime=False)
        assert abs(vt.params.emissions[0].mean - (-1.0)) > 0.1

    def test_categorical_mstep_keeps_support(self):
        P = np.array([[0.9, 0.1], [0.2, 0.8]])
        p = HmmParams(P, [0.5, 0.5], (Categorical((0.7, 0.3, 0.0)), Categorical((0.1, 0.4, 0.5))), stationary=False)
        x = sample_hmm(p, 2000, 16).observed
        st = em_train(p, x, max_iters=20)
        assert st.params.emissions[0].probs[2] == 0.0
        assert np.allclose(st.params.transition.sum(axis=1), 1.0)
