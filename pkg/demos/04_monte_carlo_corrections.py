"""Corrections for a general HMM by simulation.

Outside mixtures there is no closed form for the limits, so they are
estimated by decoding independent simulated replicas.  On a mixture the
simulation can be checked against the exact answer.  The fixed seed gives
common random numbers across iterations of adjusted training.
"""
import numpy as np

from hmmva import (
    GaussianKnownVariance,
    HmmParams,
    MonteCarloCorrections,
    mc_limits,
    mixture_limits,
    sample_hmm,
    stationary_distribution,
    va_train,
    vt_train,
)

mix = HmmParams.mixture([0.5, 0.5], [GaussianKnownVariance(-1.0, 1.0), GaussianKnownVariance(1.0, 1.0)])
mc = mc_limits(mix, L=10_000, R=8, seed=0)
exact = mixture_limits(mix)
for l in range(2):
    z = abs(mc.mu[l][0] - exact.mu[l][0]) / mc.mu_se[l][0]
    print(f"class {l}: MC limit {mc.mu[l][0]:.4f} +- {mc.mu_se[l][0]:.4f}, exact {exact.mu[l][0]:.4f} ({z:.2f} SE)")

P = np.array([[0.8, 0.2], [0.3, 0.7]])
hmm = HmmParams(P, stationary_distribution(P), (GaussianKnownVariance(0.0, 1.0), GaussianKnownVariance(2.0, 1.0)))
table = mc_limits(hmm, L=10_000, R=16, seed=0)
np.set_printoptions(precision=4, suppress=True)
print("two-state HMM transition corrections R:\n", table.R)
print("their standard errors:\n", table.R_se)
print("mean corrections:", [round(float(d[0]), 4) for d in table.delta])

x = sample_hmm(hmm, 100_000, seed=2).observed
vt = vt_train(hmm, x)
va = va_train(hmm, x, MonteCarloCorrections(10_000, 16, 0))


def sup_error(p):
    return max(np.max(np.abs(p.transition - hmm.transition)), np.max(np.abs(p.theta_vector() - hmm.theta_vector())))


print(f"sup-norm error after VT: {sup_error(vt.params):.4f}; after VA: {sup_error(va.params):.4f}")
