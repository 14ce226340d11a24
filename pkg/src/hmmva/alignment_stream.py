"""Nodes, barriers, the piecewise proper alignment and a bounded-memory decoder.

Everything is max-plus arithmetic on log-likelihoods.  A *bridge* of order
``r`` at position ``u`` is the best log-likelihood of a path leaving state ``i``
at ``u`` and arriving in state ``j`` at ``u + r + 1`` through the observations
``x[u+1 : u+r+1]``; order 0 is just the log transition matrix.  Position ``u``
is an ``l``-node of order ``r`` when

    delta_u(l) + bridge_r[l, j] >= delta_u(i) + bridge_r[i, j]   for all i, j,

so some optimal path passes through ``l`` at ``u`` whatever comes after
``u + r``.

Positions and states are 0-based.
"""
from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numba
import numpy as np

from .errors import AllPathsImpossible, NoRegenerations
from .model import HmmParams
from .viterbi import TIE_TOL, Trellis, _backtrack_kernel, trellis_from_loglik


def maxplus_matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``C[i, j] = max_q A[i, q] + B[q, j]``."""
    return (A[:, :, None] + B[None, :, :]).max(axis=1)


# ---------------------------------------------------------------------------
# bridges and nodes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SegmentScores:
    base: int
    order: int
    matrix: np.ndarray


def bridge_from_loglik(logP: np.ndarray, ll: np.ndarray) -> np.ndarray:
    """Bridge matrix through the emission rows ``ll`` (shape (r, K))."""
    M = logP
    for row in ll:
        M = maxplus_matmul(M, row[:, None] + logP)
    return M


def segment_scores(params: HmmParams, x, u: int, r: int) -> SegmentScores:
    """Order-``r`` bridge at position ``u`` of the window ``x`` (needs ``x[u+1 : u+r+1]``)."""
    x = np.asarray(x)
    if r < 0 or u < 0 or u + r >= x.shape[0] + (1 if r == 0 else 0):
        if not (r == 0 and 0 <= u):
            raise ValueError(f"window of length {x.shape[0]} does not cover a bridge of order {r} at {u}")
    ll = params.loglik(x[u + 1: u + r + 1]) if r > 0 else np.empty((0, params.K))
    return SegmentScores(u, r, bridge_from_loglik(params.log_transition, ll))


def node_condition(delta: np.ndarray, bridge: np.ndarray, tol: float = TIE_TOL):
    """Smallest ``l`` satisfying the node inequalities, with its strong flag; None if none."""
    S = delta[:, None] + bridge
    colmax = S.max(axis=0)
    ok = np.all(S >= colmax[None, :] - tol, axis=1)
    if not ok.any():
        return None
    l = int(np.argmax(ok))
    return l, _is_strict(S, l, tol)


def _is_strict(S: np.ndarray, l: int, tol: float) -> bool:
    others = np.delete(S, l, axis=0)
    return bool(np.all(S[l][None, :] > others + tol))


@dataclass(frozen=True)
class NodeEvent:
    """An ``state``-node of order ``order`` at absolute ``position``, confirmed at ``detected_at``."""

    position: int
    state: int
    order: int
    strong: bool
    detected_at: int
    barrier: bool = False


def detect_node(trellis: Trellis, segment: SegmentScores, u: int, r: int,
                tol: float = TIE_TOL) -> NodeEvent | None:
    """Test window position ``u`` of ``trellis`` for a node of order ``r``."""
    if segment.order != r or segment.base != u:
        raise ValueError("segment scores do not match (u, r)")
    if not 0 <= u < trellis.n:
        raise ValueError(f"position {u} outside the trellis window")
    res = node_condition(trellis.scores[u], segment.matrix, tol)
    if res is None:
        return None
    l, strong = res
    pos = trellis.origin + u
    return NodeEvent(pos, l, r, strong, pos + r)


# ---------------------------------------------------------------------------
# barriers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BarrierResult:
    state: int
    strong: bool


def is_barrier(params: HmmParams, block, r: int, tol: float = TIE_TOL) -> BarrierResult | None:
    """Exact-by-sufficiency barrier test on the basis rows of the max-plus recursion.

    After any prefix the scores entering the block are a max-plus combination
    ``max_i (c_i + delta^(i))`` of the trellises started from each transition
    row ``i``.  The node inequalities survive such combinations, so the block
    is an ``l``-barrier of order ``r`` when a common ``l`` passes the node test
    at block position ``M - 1 - r`` for all ``K`` starting rows; it is strong
    when every one of those tests is strict.
    """
    block = np.asarray(block)
    M = block.shape[0]
    if not 0 <= r < M:
        raise ValueError("need M > r >= 0")
    K = params.K
    logP = params.log_transition
    ll = params.loglik(block)
    k = M - 1 - r
    bridge = bridge_from_loglik(logP, ll[k + 1:])
    passing = np.ones(K, dtype=bool)
    strict = np.ones(K, dtype=bool)
    for i in range(K):
        delta = trellis_from_loglik(logP[i], logP, ll[: k + 1]).scores[k]
        S = delta[:, None] + bridge
        colmax = S.max(axis=0)
        ok = np.all(S >= colmax[None, :] - tol, axis=1)
        passing &= ok
        for l in range(K):
            if passing[l] and strict[l]:
                strict[l] = _is_strict(S, l, tol)
        if not passing.any():
            return None
    l = int(np.argmax(passing))
    return BarrierResult(l, bool(strict[l]))


def _interval_contains(intervals, value) -> bool:
    return any(lo <= value <= hi for lo, hi in intervals)


@dataclass(frozen=True)
class BarrierSpec:
    """A product set ``B_1 x ... x B_M`` of barriers of order ``order`` for ``state``.

    Categorical acceptance sets are frozensets of symbols; Gaussian ones are
    tuples of closed intervals ``(lo, hi)``.  ``state=None`` accepts a node of
    any state (used for mixtures, where every observation is a node).
    ``witness`` is a hidden path with positive probability of emitting a block
    in B that passes through ``state`` at block position ``M - 1 - order``.
    """

    sets: tuple
    order: int
    state: int | None
    witness: tuple | None = None

    def __post_init__(self):
        sets = tuple(s if isinstance(s, frozenset) else tuple((float(a), float(b)) for a, b in s)
                     for s in self.sets)
        object.__setattr__(self, "sets", sets)
        if not 0 <= self.order < len(sets):
            raise ValueError("need M > r >= 0")
        if self.witness is not None:
            w = tuple(int(q) for q in self.witness)
            if len(w) != len(sets):
                raise ValueError("witness path must have length M")
            if self.state is not None and w[len(sets) - 1 - self.order] != self.state:
                raise ValueError("witness path must pass through the barrier state at M - r")
            object.__setattr__(self, "witness", w)

    @property
    def length(self) -> int:
        return len(self.sets)

    @property
    def node_offset(self) -> int:
        """Offset of the encapsulated node from the block start."""
        return self.length - 1 - self.order

    def contains(self, block) -> bool:
        if len(block) != self.length:
            return False
        for s, v in zip(self.sets, block):
            if isinstance(s, frozenset):
                if int(v) not in s:
                    return False
            elif not _interval_contains(s, float(v)):
                return False
        return True

    @property
    def separated(self) -> bool:
        """No two blocks of B can overlap with a shift of at most ``order``."""
        for s in range(1, self.order + 1):
            if all(_sets_intersect(self.sets[m], self.sets[m + s]) for m in range(self.length - s)):
                return False
        return True

    def to_dict(self) -> dict:
        return {
            "sets": [sorted(s) if isinstance(s, frozenset) else [list(iv) for iv in s] for s in self.sets],
            "order": self.order,
            "state": self.state,
            "witness": list(self.witness) if self.witness is not None else None,
        }


def _sets_intersect(a, b) -> bool:
    if isinstance(a, frozenset) and isinstance(b, frozenset):
        return bool(a & b)
    if isinstance(a, frozenset) or isinstance(b, frozenset):
        return True
    return any(max(a0, b0) <= min(a1, b1) for a0, a1 in a for b0, b1 in b)


@dataclass(frozen=True)
class Certification:
    ok: bool
    strong: bool
    checked: int
    exact: bool


def certify_barrier(params: HmmParams, spec: BarrierSpec, probes_per_interval: int = 7,
                    max_blocks: int = 200_000) -> Certification:
    """Check that every block of ``spec`` is a barrier for ``spec.state``.

    Categorical product sets are enumerated (exact).  Interval sets can only be
    probed at finitely many points, so the result is then marked not exact.
    """
    if params.discrete:
        choices = [sorted(s) for s in spec.sets]
        exact = True
    else:
        choices = []
        for s in spec.sets:
            pts = []
            for lo, hi in s:
                lo_, hi_ = max(lo, -1e6), min(hi, 1e6)
                pts.extend(np.linspace(lo_, hi_, probes_per_interval).tolist())
            choices.append(pts)
        exact = False
    total = math.prod(len(c) for c in choices)
    if total > max_blocks:
        raise ValueError(f"{total} blocks exceed the certification budget {max_blocks}")
    strong = True
    for block in itertools.product(*choices):
        res = is_barrier(params, np.array(block), spec.order)
        if res is None or (spec.state is not None and res.state != spec.state):
            return Certification(False, False, total, exact)
        strong &= res.strong
    return Certification(True, strong, total, exact)


def find_barrier(params: HmmParams, max_length: int = 3, max_order: int | None = None,
                 state: int | None = None) -> BarrierSpec | None:
    """Search short categorical blocks for a separated barrier with a witness path.

    Blocks are tried by increasing length, then order, then lexicographically.
    The witness is the most probable hidden path of the block constrained
    through the barrier state at the node position.
    """
    if not params.discrete:
        raise ValueError("barrier search is implemented for categorical emissions")
    A = params.emissions[0].n_symbols
    for M in range(1, max_length + 1):
        for r in range(0, min(M - 1, max_order if max_order is not None else M - 1) + 1):
            for block in itertools.product(range(A), repeat=M):
                if any(block[s:] == block[:-s] for s in range(1, r + 1)):
                    continue
                res = is_barrier(params, np.array(block), r)
                if res is None or (state is not None and res.state != state):
                    continue
                witness = _best_witness(params, np.array(block), M - 1 - r, res.state)
                if witness is None:
                    continue
                return BarrierSpec(tuple(frozenset([b]) for b in block), r, res.state, witness)
    return None


def _best_witness(params: HmmParams, block, pos: int, state: int):
    K, M = params.K, block.shape[0]
    if K**M > 10**6:
        return None
    ll = params.loglik(block)
    best, arg = -np.inf, None
    pi = params.initial
    with np.errstate(divide="ignore"):
        log_stat = np.log(pi)
    for q in itertools.product(range(K), repeat=M):
        if q[pos] != state:
            continue
        s = log_stat[q[0]] + sum(ll[m, q[m]] for m in range(M))
        s += sum(params.log_transition[q[m - 1], q[m]] for m in range(1, M))
        if s > best:
            best, arg = s, q
    return arg if np.isfinite(best) else None


# ---------------------------------------------------------------------------
# streaming decoder
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    """Decoded states for absolute positions ``start..end`` (inclusive)."""

    start: int
    end: int
    states: np.ndarray

    def __len__(self):
        return self.end - self.start + 1


@numba.njit(cache=True, nogil=True)
def _advance_kernel(scores, pred, k, row, logP, first, bridges, tol):
    """Extend the window trellis to index ``k`` and every bridge by one emission row."""
    K = row.shape[0]
    if k == 0:
        for j in range(K):
            scores[0, j] = first[j] + row[j]
    else:
        for j in range(K):
            m = -np.inf
            for i in range(K):
                c = scores[k - 1, i] + logP[i, j]
                if c > m:
                    m = c
            for i in range(K):
                pred[k - 1, j, i] = scores[k - 1, i] + logP[i, j] >= m - tol
            scores[k, j] = m + row[j]
    step = np.empty((K, K))
    for q in range(K):
        for j in range(K):
            step[q, j] = row[q] + logP[q, j]
    tmp = np.empty((K, K))
    for r in range(bridges.shape[0] - 1, 0, -1):
        for i in range(K):
            for j in range(K):
                m = -np.inf
                for q in range(K):
                    c = bridges[r - 1, i, q] + step[q, j]
                    if c > m:
                        m = c
                tmp[i, j] = m
        bridges[r] = tmp


@numba.njit(cache=True, nogil=True)
def _scan_kernel(scores, bridges, t, start, last_u, last_r, r_max, tol):
    """First admissible ``(r, l, strong)`` in scan order, or ``r = -1``."""
    K = scores.shape[1]
    S = np.empty((K, K))
    colmax = np.empty(K)
    for r in range(min(r_max, t) + 1):
        u = t - r
        if u < start or u <= last_u + last_r:
            continue
        idx = u - start
        for j in range(K):
            colmax[j] = -np.inf
        for l in range(K):
            for j in range(K):
                S[l, j] = scores[idx, l] + bridges[r, l, j]
                if S[l, j] > colmax[j]:
                    colmax[j] = S[l, j]
        for l in range(K):
            ok = True
            for j in range(K):
                if not S[l, j] >= colmax[j] - tol:
                    ok = False
                    break
            if ok:
                strong = True
                for i in range(K):
                    if i == l:
                        continue
                    for j in range(K):
                        if not S[l, j] > S[i, j] + tol:
                            strong = False
                return r, l, strong
    return -1, -1, False


class StreamingDecoder:
    """Online piecewise Viterbi decoding with memory freed at every node.

    After each arrival at time ``t`` the decoder tests positions ``t - r`` for
    ``r = 0..r_max`` (smallest order first, smallest state on ties), skipping
    positions not separated from the previous node.  A node ``(u, l)`` causes
    the segment ending at ``u`` to be emitted by backtracking from ``l``; the
    trellis then restarts at ``u + 1`` from transition row ``l``.  With a
    ``barrier``, a block of B ending at ``t`` certifies its node first.

    An order-0 node is emitted at once.  A node of order ``r > 0`` only pins
    the alignment once position ``u + r + 1`` exists, so it is held until the
    next arrival and discarded if the stream is flushed first.
    """

    def __init__(self, params: HmmParams, r_max: int | None = None, barrier: BarrierSpec | None = None,
                 tol: float = TIE_TOL):
        self.params = params
        self.K = params.K
        self.r_max = 2 * self.K if r_max is None else int(r_max)
        if self.r_max < 0:
            raise ValueError("r_max must be >= 0")
        self.barrier = barrier
        self.tol = tol
        self._logP = params.log_transition
        self.time = 0
        self.events: list[NodeEvent] = []
        self.max_buffer = 0
        self._buffer_sum = 0
        self._closed = False
        self._start = 0
        self._init_row: int | None = None
        self._last_u = -1
        self._last_r = 0
        cap = 64
        self._ll = np.empty((cap, self.K))
        self._scores = np.empty((cap, self.K))
        self._pred = np.empty((cap, self.K, self.K), dtype=bool)
        self._len = 0
        self._bridges = np.broadcast_to(self._logP, (self.r_max + 1, self.K, self.K)).copy()
        self._recent = deque(maxlen=barrier.length if barrier is not None else 1)
        self._pending: tuple | None = None

    @property
    def buffer_length(self) -> int:
        return self._len

    @property
    def mean_buffer(self) -> float:
        return self._buffer_sum / self.time if self.time else 0.0

    def _grow(self):
        cap = 2 * self._ll.shape[0]
        for name in ("_ll", "_scores", "_pred"):
            old = getattr(self, name)
            new = np.empty((cap,) + old.shape[1:], dtype=old.dtype)
            new[: self._len] = old[: self._len]
            setattr(self, name, new)

    def push(self, x) -> list[Segment]:
        row = np.array([e.logpdf(x) for e in self.params.emissions], dtype=float).reshape(self.K)
        return self.push_loglik(row, x)

    def push_loglik(self, row: np.ndarray, raw=None) -> list[Segment]:
        """Feed one observation given its emission log-densities; return the segments it releases (0 to 2)."""
        if self._closed:
            raise RuntimeError("decoder was flushed; start a new one")
        t = self.time
        k = self._len
        if k == self._ll.shape[0]:
            self._grow()
        self._ll[k] = row
        first = self.params.log_initial if self._init_row is None else self._logP[self._init_row]
        _advance_kernel(self._scores, self._pred, k, self._ll[k], self._logP, first, self._bridges, self.tol)
        if not np.isfinite(self._scores[k].max()):
            raise AllPathsImpossible(f"every path has zero likelihood at time {t}")
        self._len = k + 1
        self.time = t + 1
        self._recent.append(raw)
        out = []
        if self._pending is not None:
            out.append(self._emit(*self._pending))
            self._pending = None
        if self._len > self.max_buffer:
            self.max_buffer = self._len
        found = self._scan(t)
        if found is not None:
            if found[2] == 0:
                out.append(self._emit(*found))
            else:
                self._pending = found
                self._last_u, self._last_r = found[0], found[2]
        self._buffer_sum += self._len
        return out

    def _admissible(self, u: int) -> bool:
        return u >= self._start and u > self._last_u + self._last_r

    def _scan(self, t: int) -> tuple | None:
        b = self.barrier
        if b is not None and t + 1 >= b.length and b.contains(list(self._recent)):
            u = t - b.order
            if self._admissible(u):
                res = node_condition(self._scores[u - self._start], self._bridges[b.order], self.tol)
                if res is not None and (b.state is None or res[0] == b.state):
                    return u, res[0], b.order, res[1], t, True
        r, l, strong = _scan_kernel(self._scores, self._bridges, t, self._start, self._last_u, self._last_r,
                                    self.r_max, self.tol)
        if r < 0:
            return None
        return t - r, int(l), int(r), bool(strong), t, False

    def _emit(self, u: int, l: int, r: int, strong: bool, t: int, barrier: bool = False) -> Segment:
        k = u - self._start
        states = _backtrack_kernel(self._pred[:k], l)
        seg = Segment(self._start, u, states)
        self.events.append(NodeEvent(u, l, r, strong, t, barrier))
        rest = self._ll[k + 1: self._len].copy()
        self._start = u + 1
        self._init_row = l
        self._last_u, self._last_r = u, r
        self._len = rest.shape[0]
        if self._len:
            tr = trellis_from_loglik(self._logP[l], self._logP, rest, tol=self.tol)
            self._ll[: self._len] = rest
            self._scores[: self._len] = tr.scores
            self._pred[: self._len - 1] = tr.pred
        return seg

    def flush(self) -> Segment | None:
        """Emit the residual buffer by unconstrained canonical backtracking and close the decoder.

        A node still awaiting confirmation is dropped; its positions go to the tail.
        """
        self._closed = True
        self._pending = None
        if self._len == 0:
            return None
        last = self._scores[self._len - 1]
        end = int(np.flatnonzero(last >= last.max() - self.tol)[0])
        states = _backtrack_kernel(self._pred[: self._len - 1], end)
        seg = Segment(self._start, self.time - 1, states)
        self._len = 0
        return seg


@dataclass
class StreamResult:
    segments: list
    events: list
    n: int
    max_buffer: int
    mean_buffer: float
    tail: Segment | None = None
    regen: "RegenStats | None" = None

    @property
    def path(self) -> np.ndarray:
        """Concatenated decoded states (segments plus the flushed tail)."""
        parts = [s.states for s in self.segments]
        if self.tail is not None:
            parts.append(self.tail.states)
        return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)


def streaming_decode(params: HmmParams, stream: Iterable, r_max: int | None = None, flush: bool = True,
                     barrier: BarrierSpec | None = None, hidden=None, chunk: int = 4096) -> StreamResult:
    """Run a :class:`StreamingDecoder` over ``stream``.

    Array inputs have their emission log-densities evaluated in chunks;
    other iterables are consumed one item at a time.  With ``barrier`` the
    regeneration summary is attached (``hidden`` enables true-state checks).
    """
    dec = StreamingDecoder(params, r_max, barrier)
    segments = []
    observed = [] if barrier is not None else None
    if isinstance(stream, np.ndarray):
        for lo in range(0, stream.shape[0], chunk):
            block = stream[lo: lo + chunk]
            ll = params.loglik(block)
            for row, raw in zip(ll, block.tolist()):
                segments.extend(dec.push_loglik(row, raw))
        if observed is not None:
            observed = stream
    else:
        for x in stream:
            segments.extend(dec.push(x))
            if observed is not None:
                observed.append(x)
    tail = dec.flush() if flush else None
    result = StreamResult(segments, dec.events, dec.time, dec.max_buffer, dec.mean_buffer, tail)
    if barrier is not None and dec.time:
        try:
            result.regen = regeneration_summary(dec.events, barrier, np.asarray(observed), dec.time, hidden)
        except NoRegenerations:
            result.regen = None
    return result


# ---------------------------------------------------------------------------
# regeneration bookkeeping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegenStats:
    """Node and regeneration times of one decoded run.

    ``tau`` are 0-based positions of barrier-certified nodes; ``gaps[0]`` is
    the 1-based time of the first one and ``gaps[i] = tau[i] - tau[i-1]``.
    ``nu`` lists the regeneration positions whose hidden block also equals the
    barrier witness (only with the true hidden path).
    """

    node_positions: np.ndarray
    tau: np.ndarray
    gaps: np.ndarray
    n: int
    nu: np.ndarray | None = None

    @property
    def cycles(self) -> int:
        """k(n): the number of complete cycles between consecutive regenerations."""
        return max(len(self.tau) - 1, 0)

    @property
    def mean_cycle(self) -> float:
        return float(self.gaps[1:].mean()) if self.cycles else math.nan

    @property
    def cycle_se(self) -> float:
        if self.cycles < 2:
            return math.nan
        return float(self.gaps[1:].std(ddof=1) / math.sqrt(self.cycles))


def regeneration_summary(events: Sequence[NodeEvent], barrier: BarrierSpec, x, n: int | None = None,
                         hidden=None) -> RegenStats:
    """Mark the node events encapsulated in a block of ``barrier``'s acceptance sets."""
    x = np.asarray(x)
    n = x.shape[0] if n is None else n
    positions = np.array(sorted(e.position for e in events), dtype=np.int64)
    M, off = barrier.length, barrier.node_offset
    tau, nu = [], []
    for e in sorted(events, key=lambda e: e.position):
        start = e.position - off
        if start < 0 or start + M > n:
            continue
        if barrier.state is not None and e.state != barrier.state:
            continue
        if not barrier.contains(x[start: start + M].tolist()):
            continue
        tau.append(e.position)
        if hidden is not None and barrier.witness is not None:
            if tuple(np.asarray(hidden[start: start + M]).tolist()) == barrier.witness:
                nu.append(e.position)
    if not tau:
        raise NoRegenerations("no barrier-certified node in the run")
    tau = np.array(tau, dtype=np.int64)
    gaps = np.diff(tau, prepend=-1)
    return RegenStats(positions, tau, gaps, n, np.array(nu, dtype=np.int64) if hidden is not None else None)


@dataclass(frozen=True)
class CycleTallies:
    """Per-cycle sums over ``(tau[k-1], tau[k]]`` for k = 1..k(n)."""

    occupancy: np.ndarray  # (cycles, K)
    label_counts: np.ndarray  # (cycles, K, L)
    transitions: np.ndarray  # (cycles, K, K)


def cycle_tallies(regen: RegenStats, path, labels, K: int, n_labels: int) -> CycleTallies:
    """Indicator sums per cycle: state occupancy, (state, label) counts and state transitions.

    A transition is tallied in the cycle of its origin position.
    """
    path = np.asarray(path, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    c = regen.cycles
    occ = np.zeros((c, K))
    lab = np.zeros((c, K, n_labels))
    trans = np.zeros((c, K, K))
    if c == 0:
        return CycleTallies(occ, lab, trans)
    lo, hi = regen.tau[0] + 1, regen.tau[-1] + 1
    pos = np.arange(lo, hi)
    cyc = np.searchsorted(regen.tau, pos, side="left") - 1
    np.add.at(occ, (cyc, path[pos]), 1.0)
    np.add.at(lab, (cyc, path[pos], labels[pos]), 1.0)
    tp = pos[pos + 1 < path.shape[0]]
    tc = cyc[: tp.shape[0]]
    np.add.at(trans, (tc, path[tp], path[tp + 1]), 1.0)
    return CycleTallies(occ, lab, trans)
