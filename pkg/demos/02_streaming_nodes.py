"""Decoding an unbounded stream with bounded memory.

A node is a position where some optimal path is forced through a known
state whatever comes next.  The streaming decoder emits the alignment up
to each node and forgets it, so its buffer stays short.  On a Gaussian
model the concatenated output equals the batch Viterbi path.
"""
import numpy as np

from hmmva import GaussianKnownVariance, HmmParams, StreamingDecoder, sample_hmm, stationary_distribution, viterbi

P = np.array([[0.8, 0.2], [0.3, 0.7]])
params = HmmParams(P, stationary_distribution(P), (GaussianKnownVariance(0.0, 1.0), GaussianKnownVariance(2.0, 1.0)))
x = sample_hmm(params, 20_000, seed=4).observed

dec = StreamingDecoder(params)
pieces = []
for value in x:
    for seg in dec.push(value):
        pieces.append(seg.states)
tail = dec.flush()
if tail is not None:
    pieces.append(tail.states)
path = np.concatenate(pieces)

orders = np.bincount([e.order for e in dec.events])
print(f"{len(dec.events)} nodes in {len(x)} observations; by order: {dict(enumerate(orders.tolist()))}")
print(f"largest buffer held: {dec.max_buffer}, mean buffer: {dec.mean_buffer:.2f}")
print("first nodes (position, state, order):", [(e.position, e.state, e.order) for e in dec.events[:6]])
print("streaming path equals the batch Viterbi path:", bool(np.array_equal(path, viterbi(params, x).path)))
