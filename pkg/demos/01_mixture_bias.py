"""Why plain Viterbi training is biased, and how the adjustment removes it.

On the symmetric mixture 0.5 N(-1, 1) + 0.5 N(1, 1) the Viterbi alignment
classifies each point by its sign.  The points classified to the left
component have mean -1.1666, not -1, so Viterbi training moves away from
the truth even when started there.  Adding the exact correction
theta - mu(theta) cancels that move.
"""
import numpy as np

from hmmva import (
    AnalyticCorrections,
    GaussianKnownVariance,
    HmmParams,
    em_train,
    mixture_limits,
    sample_hmm,
    va_train,
    vt_train,
)

truth = HmmParams.mixture([0.5, 0.5], [GaussianKnownVariance(-1.0, 1.0), GaussianKnownVariance(1.0, 1.0)])

limits = mixture_limits(truth)
print("cells of the Viterbi partition:", limits.partition.cells)
print(f"limit of the class-0 mean under the true parameters: {limits.mu[0][0]:.5f}")

table = AnalyticCorrections()(truth)
print(f"correction for class 0: {table.delta[0][0]:+.5f}; weight corrections: {table.R[0]}")

x = sample_hmm(truth, 100_000, seed=1).observed
vt = vt_train(truth, x, max_iters=1, estimate_regime=False)
va = va_train(truth, x, AnalyticCorrections(), max_iters=1, estimate_regime=False)
print(f"one VT step from the truth: class-0 mean -1 -> {vt.params.emissions[0].mean:.4f}")
print(f"one VA step from the truth: class-0 mean -1 -> {va.params.emissions[0].mean:.4f}")

vt = vt_train(truth, x, estimate_regime=False)
va = va_train(truth, x, AnalyticCorrections(), estimate_regime=False)
em = em_train(truth, x, estimate_regime=False)
for name, st in (("VT", vt), ("VA", va), ("EM", em)):
    means = np.array([e.mean for e in st.params.emissions])
    print(f"{name}: {st.iteration:3d} iterations, final means {np.round(means, 4)}")
