"""Brute-force checks shared by the unit and acceptance tests."""
from dataclasses import dataclass, field

import numpy as np

from conftest import random_categorical_hmm, random_stochastic
from hmmva.alignment_stream import detect_node, is_barrier, segment_scores
from hmmva.errors import AllPathsImpossible
from hmmva.model import Categorical, HmmParams, sample_hmm
from hmmva.viterbi import TIE_TOL, brute_force_optimal_set, forward_trellis


@dataclass
class OracleReport:
    instances: int = 0
    checks: int = 0
    failures: list = field(default_factory=list)


def node_soundness(rng, n_instances: int, max_n: int = 8) -> OracleReport:
    """Every detected node must be confirmed by the optimal set.

    A node of order ``r`` at ``u`` is checked when position ``u + r + 1``
    exists; order-0 nodes are also checked at the very last position.
    """
    rep = OracleReport()
    while rep.instances < n_instances:
        p = random_categorical_hmm(rng)
        n = int(rng.integers(1, max_n + 1))
        x = rng.integers(0, p.emissions[0].n_symbols, n)
        try:
            tr = forward_trellis(p, x)
            opt = brute_force_optimal_set(p, x)
        except AllPathsImpossible:
            continue
        rep.instances += 1
        for u in range(n):
            for r in range(n - u):
                if r > 0 and u + r + 1 >= n:
                    continue
                e = detect_node(tr, segment_scores(p, x, u, r), u, r)
                if e is None:
                    continue
                rep.checks += 1
                through = [y[u] == e.state for y in opt]
                if not any(through) or (e.strong and not all(through)):
                    rep.failures.append((p, x, e))
    return rep


def indicator_model(rng, K: int, base_symbols: int = 2) -> HmmParams:
    """Random sparse categorical HMM plus one symbol per state that only that state emits.

    A one-symbol indicating prefix concentrates the scores on a single state,
    which realises each basis row of the barrier test exactly.
    """
    P = random_stochastic(rng, K, K, zero_prob=0.25, grid=bool(rng.random() < 0.5))
    F = random_stochastic(rng, K, base_symbols, zero_prob=0.3, grid=bool(rng.random() < 0.5))
    share = rng.uniform(0.1, 0.4, size=K)
    probs = np.hstack([F * (1 - share)[:, None], np.diag(share)])
    pi = rng.dirichlet(np.ones(K))
    return HmmParams(P, pi, tuple(Categorical(tuple(row)) for row in probs), stationary=False)


def _passing_states(p: HmmParams, x, pos: int, r: int):
    """States satisfying the node inequalities at ``pos``; None if the sequence is impossible."""
    try:
        tr = forward_trellis(p, x)
    except AllPathsImpossible:
        return None
    S = tr.scores[pos][:, None] + segment_scores(p, x, pos, r).matrix
    ok = np.all(S >= S.max(axis=0)[None, :] - TIE_TOL, axis=1)
    return {int(l) for l in np.flatnonzero(ok)}


@dataclass
class BarrierReport:
    accepted: int = 0
    rejected: int = 0
    oracle_checks: int = 0
    oracle_failures: list = field(default_factory=list)
    disagreements: list = field(default_factory=list)


def barrier_persistence(rng, n_models: int, blocks_per_model: int = 12, prefixes: int = 100,
                        max_total: int = 10) -> BarrierReport:
    """Compare the basis barrier test with direct prefix tests and the path oracle.

    For each block the direct test intersects the node-passing state sets over
    the K indicating one-symbol prefixes and ``prefixes`` prefixes sampled from
    the model.  Accepted blocks are also confirmed by brute force: some optimal
    path of ``prefix + block + suffix`` passes through ``l`` at the node
    (all of them for strong barriers).  The suffix is nonempty for ``r > 0``,
    since only then does the position after the bridge exist.
    """
    rep = BarrierReport()
    for _ in range(n_models):
        K = int(rng.integers(2, 4))
        p = indicator_model(rng, K)
        A = p.emissions[0].n_symbols
        indicators = [A - K + i for i in range(K)]
        for _ in range(blocks_per_model):
            M = int(rng.integers(1, 4))
            r = int(rng.integers(0, M))
            # mostly base symbols, so that rejections are common too
            block = np.where(rng.random(M) < 0.75, rng.integers(0, A - K, M), rng.integers(A - K, A, M))
            res = is_barrier(p, block, r)
            pref = [np.array([s]) for s in indicators]
            for _ in range(prefixes):
                w = int(rng.integers(1, max_total - M))
                pref.append(sample_hmm(p, w, rng).observed)
            common = None
            for z in pref:
                passing = _passing_states(p, np.concatenate([z, block]), len(z) + M - 1 - r, r)
                if passing is not None:
                    common = passing if common is None else common & passing
            direct = min(common) if common else None
            basis = res.state if res is not None else None
            if common is not None and basis != direct:
                rep.disagreements.append((p, block, r, res, common))
            if res is None:
                rep.rejected += 1
                continue
            rep.accepted += 1
            for z in pref[K:]:
                room = max_total - len(z) - M
                s_len = int(rng.integers(1 if r > 0 else 0, room + 1))
                tail = rng.integers(0, A, s_len)
                x = np.concatenate([z, block, tail])
                pos = len(z) + M - 1 - r
                try:
                    opt = brute_force_optimal_set(p, x)
                except AllPathsImpossible:
                    continue
                rep.oracle_checks += 1
                through = [y[pos] == res.state for y in opt]
                if not any(through) or (res.strong and not all(through)):
                    rep.oracle_failures.append((p, x, pos, res))
    return rep
