"""Canned experiments with reproducible seeding and tabular output.

Every CSV starts with two ``#`` comment lines carrying the configuration hash
and the seed list, followed by a header row.  Floats are written with 17
significant digits, so identical configurations give byte-identical files.
Wall-clock timings go to a separate ``*_timing.csv`` sidecar, which is the one
output that is not reproducible.

Randomness for seed ``s`` and purpose ``k`` comes from
``SeedSequence(s, spawn_key=(k,))``; seeds may be processed concurrently
(``HMMVA_THREADS``) and are always merged in seed order.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .alignment_stream import StreamingDecoder, find_barrier, streaming_decode
from .corrections import AnalyticCorrections, MonteCarloCorrections, estimate_limit_measures
from .errors import CorrectionUnavailable, ParameterError
from .io import load_barrier, load_model
from .model import HmmParams, sample_hmm
from .training import em_train, va_train, vt_train

EXPERIMENTS = ("bias-demo", "fixed-point", "node-census", "streaming-memory", "limits-check", "train-compare")

# purposes for seed splitting
_DATA, _CORRECTIONS = 0, 1


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    model: str
    n: int
    seeds: tuple
    out_dir: str
    methods: tuple = ("vt", "va", "em")
    max_iters: int = 100
    estimate_regime: bool = True
    mc_length: int = 10_000
    mc_replicas: int = 8
    r_max: int | None = None
    bins: int = 200
    barrier: str | None = None
    trace_points: int = 10

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise ParameterError(f"unknown experiment {self.name!r}; expected one of {list(EXPERIMENTS)}")
        if not Path(self.model).is_file():
            raise ParameterError(f"model file {self.model!r} does not exist")
        if self.barrier is not None and not Path(self.barrier).is_file():
            raise ParameterError(f"barrier file {self.barrier!r} does not exist")
        seeds = tuple(int(s) for s in self.seeds)
        if not seeds:
            raise ParameterError("seed list must be nonempty")
        object.__setattr__(self, "seeds", seeds)
        object.__setattr__(self, "methods", tuple(self.methods))
        bad = set(self.methods) - {"vt", "va", "em"}
        if bad:
            raise ParameterError(f"unknown methods {sorted(bad)}")
        if self.n < 2:
            raise ParameterError("n must be >= 2")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ParameterError(f"unknown config fields: {sorted(extra)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ParameterError(str(exc)) from exc

    def digest(self) -> str:
        """Hash of the configuration and of the referenced file contents."""
        h = hashlib.sha256()
        doc = asdict(self)
        doc.pop("out_dir")
        h.update(json.dumps(doc, sort_keys=True).encode())
        for p in (self.model, self.barrier):
            if p is not None:
                h.update(Path(p).read_bytes())
        return h.hexdigest()[:16]


def seed_stream(seed: int, purpose: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(purpose,))


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, header, rows, config: ExperimentConfig, digest: str) -> None:
    buf = io.StringIO()
    buf.write(f"# config_hash={digest}\n")
    buf.write(f"# seeds={' '.join(str(s) for s in config.seeds)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("HMMVA_THREADS", "1")))
    except ValueError:
        return 1


def _per_seed(func, config: ExperimentConfig):
    n = min(_threads(), len(config.seeds))
    if n > 1:
        with ThreadPoolExecutor(n) as pool:
            return list(pool.map(func, config.seeds))
    return [func(s) for s in config.seeds]


def _param_names(params: HmmParams):
    names = [f"p_{i}{j}" for i in range(params.K) for j in range(params.K)]
    for l, e in enumerate(params.emissions):
        if e.kind == "categorical":
            names += [f"theta_{l}_prob{a}" for a in range(e.n_symbols)]
        elif e.kind == "gaussian":
            names += [f"theta_{l}_mean", f"theta_{l}_var"]
        else:
            names += [f"theta_{l}_mean"]
    return names


def _param_values(params: HmmParams):
    return np.concatenate([params.transition.ravel(), params.theta_vector()])


def _provider(truth: HmmParams, config: ExperimentConfig, seed: int):
    try:
        AnalyticCorrections()(truth)
        return AnalyticCorrections()
    except CorrectionUnavailable:
        child = seed_stream(seed, _CORRECTIONS).generate_state(1)[0]
        return MonteCarloCorrections(config.mc_length, config.mc_replicas, int(child))


def _train(method, truth, x, config, seed, max_iters):
    kw = dict(max_iters=max_iters, estimate_regime=config.estimate_regime)
    if method == "vt":
        return vt_train(truth, x, **kw)
    if method == "va":
        return va_train(truth, x, _provider(truth, config, seed), **kw)
    return em_train(truth, x, **kw)


def _data(truth, config, seed):
    return sample_hmm(truth, config.n, seed_stream(seed, _DATA))


def _bias_rows(config, truth, seed, max_iters):
    x = _data(truth, config, seed).observed
    names, t = _param_names(truth), _param_values(truth)
    rows, timing = [], []
    for m in config.methods:
        start = time.perf_counter()
        st = _train(m, truth, x, config, seed, max_iters)
        timing.append((seed, m, time.perf_counter() - start))
        est = _param_values(st.params)
        for name, tv, ev in zip(names, t, est):
            rows.append((seed, m, st.iteration, st.converged, name, tv, ev, ev - tv))
    return rows, timing


def run_experiment(config: ExperimentConfig) -> list:
    """Run one experiment; returns the list of written files."""
    truth = load_model(config.model)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digest = config.digest()
    written = []

    def emit(fname, header, rows):
        p = out / fname
        write_csv(p, header, rows, config, digest)
        written.append(p)

    name = config.name
    if name in ("bias-demo", "fixed-point"):
        iters = 1 if name == "fixed-point" else config.max_iters
        results = _per_seed(lambda s: _bias_rows(config, truth, s, iters), config)
        rows = [r for res in results for r in res[0]]
        stem = name.replace("-", "_")
        if name == "fixed-point":
            rows = [(s, m, pn, tv, ev, d) for s, m, _, _, pn, tv, ev, d in rows]
            emit(f"{stem}.csv", ["seed", "method", "parameter", "truth", "after_one_step", "move"], rows)
        else:
            emit(f"{stem}.csv", ["seed", "method", "iterations", "converged", "parameter", "truth", "estimate",
                                 "error"], rows)
    elif name == "train-compare":
        results = _per_seed(lambda s: _bias_rows(config, truth, s, config.max_iters), config)
        rows, timing = [], []
        for res in results:
            by_method = {}
            for s, m, it, conv, _, _, _, err in res[0]:
                entry = by_method.setdefault(m, [s, m, it, conv, 0.0])
                entry[4] = max(entry[4], abs(err))
            rows.extend(tuple(v) for v in by_method.values())
            timing.extend(res[1])
        emit("train_compare.csv", ["seed", "method", "iterations", "converged", "sup_error"], rows)
        tp = out / "train_compare_timing.csv"
        tp.write_text("seed,method,runtime_seconds\n" + "".join(f"{s},{m},{fmt(t)}\n" for s, m, t in timing))
        written.append(tp)
    elif name == "node-census":
        def census(seed):
            res = streaming_decode(truth, _data(truth, config, seed).observed, r_max=config.r_max)
            pos = np.array([e.position for e in res.events], dtype=np.int64)
            orders = np.array([e.order for e in res.events], dtype=np.int64)
            strong = np.array([e.strong for e in res.events], dtype=bool)
            ord_rows = [(seed, int(r), int(np.sum(orders == r)), int(np.sum(strong & (orders == r))),
                         np.sum(orders == r) / config.n) for r in np.unique(orders)]
            gaps = np.diff(pos)
            vals, cnt = np.unique(gaps, return_counts=True) if gaps.size else (np.array([]), np.array([]))
            return ord_rows, [(seed, int(g), int(c)) for g, c in zip(vals, cnt)]
        results = _per_seed(census, config)
        emit("node_census_orders.csv", ["seed", "order", "count", "strong_count", "fraction_of_positions"],
             [r for res in results for r in res[0]])
        emit("node_census_gaps.csv", ["seed", "gap", "count"], [r for res in results for r in res[1]])
    elif name == "streaming-memory":
        def memory(seed):
            x = _data(truth, config, seed).observed
            dec = StreamingDecoder(truth, config.r_max)
            ll = truth.loglik(x)
            checkpoints = set(np.linspace(0, config.n, config.trace_points + 1, dtype=np.int64)[1:].tolist())
            rows = []
            for t, (row, raw) in enumerate(zip(ll, x.tolist()), 1):
                dec.push_loglik(row, raw)
                if t in checkpoints:
                    rows.append((seed, t, dec.max_buffer, dec.mean_buffer, len(dec.events)))
            return rows
        results = _per_seed(memory, config)
        emit("streaming_memory.csv", ["seed", "t", "max_buffer", "mean_buffer", "nodes"],
             [r for res in results for r in res])
    elif name == "limits-check":
        barrier = load_barrier(config.barrier) if config.barrier else (
            find_barrier(truth) if truth.discrete else None)

        def limits(seed):
            return estimate_limit_measures(truth, config.n, seed_stream(seed, _DATA), barrier, config.bins,
                                           r_max=config.r_max)
        results = _per_seed(limits, config)
        q_rows, Q_rows, sums = [], [], []
        for seed, est in zip(config.seeds, results):
            K = truth.K
            for l in range(K):
                for b in range(est.Q.shape[1]):
                    lo, hi = (est.edges[b], est.edges[b + 1]) if est.edges is not None else (b, b)
                    rq = est.regen_Q[l, b] if est.regen_Q is not None else float("nan")
                    Q_rows.append((seed, l, lo, hi, est.Q[l, b], rq))
                for j in range(K):
                    rq = est.regen_q[l, j] if est.regen_q is not None else float("nan")
                    q_rows.append((seed, l, j, est.q[l, j], rq, est.transition_counts[l].sum()))
            tv = float(np.nanmax(est.tv)) if est.tv is not None else float("nan")
            sums.append((seed, config.n, est.n_regenerations, est.cycles, est.mean_cycle, est.cycle_se, tv,
                         est.max_buffer))
        emit("limits_Q.csv", ["seed", "state", "bin_left", "bin_right", "full_run_mass", "regenerative_mass"], Q_rows)
        emit("limits_q.csv", ["seed", "i", "j", "full_run_q", "regenerative_q", "occupancy"], q_rows)
        emit("limits_summary.csv", ["seed", "n", "regenerations", "cycles", "mean_cycle", "cycle_se", "max_tv",
                                    "max_buffer"], sums)
    return written


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"{path}: invalid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(doc)
