"""Barriers turn the alignment into a regenerative process.

For this categorical model the single symbol 0 is a barrier: after any
history at all, seeing 0 makes its position a node of state 0.  The
positions where the barrier occurs cut the decoded run into independent
cycles, and per-cycle averages give a second estimate of the limit
measures that agrees with the plain full-run frequencies.
"""
import numpy as np

from hmmva import Categorical, HmmParams, certify_barrier, estimate_limit_measures, find_barrier, stationary_distribution

P = np.array([[0.7, 0.3], [0.4, 0.6]])
params = HmmParams(P, stationary_distribution(P), (Categorical((0.6, 0.3, 0.1)), Categorical((0.1, 0.3, 0.6))))

barrier = find_barrier(params)
print("barrier found:", barrier)
print("certified:", certify_barrier(params, barrier))

est = estimate_limit_measures(params, 100_000, seed=0, barrier=barrier)
np.set_printoptions(precision=4, suppress=True)
print("full-run limit measures Q (rows: states, columns: symbols):\n", est.Q)
print("regenerative estimate:\n", est.regen_Q)
print("total variation per state:", est.tv)
print(f"{est.cycles} cycles, mean cycle length {est.mean_cycle:.4f} +- {est.cycle_se:.4f}")
print("alignment transition frequencies q:\n", est.q)
