"""``hmmva`` command line.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
Errors are reported on stderr as one JSON object ``{"error": ..., "message": ...}``.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import io as hio
from .alignment_stream import StreamingDecoder
from .corrections import (
    AnalyticCorrections,
    MonteCarloCorrections,
    ZeroCorrections,
    estimate_limit_measures,
    mc_limits,
)
from .errors import HmmvaError, NumericalError
from .experiments import EXPERIMENTS, ExperimentConfig, load_config, run_experiment
from .model import sample_hmm
from .training import em_train, va_train, vt_train
from .viterbi import viterbi

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _out(path):
    return open(path, "w", encoding="utf-8") if path and path != "-" else sys.stdout


def cmd_simulate(args):
    params = hio.load_model(args.model)
    real = sample_hmm(params, args.n, args.seed)
    fh = _out(args.out)
    hio.write_observations(fh, real.observed, params)
    if fh is not sys.stdout:
        fh.close()
    if args.hidden:
        with open(args.hidden, "w", encoding="utf-8") as hf:
            hio.write_states(hf, real.hidden)


def cmd_decode(args):
    params = hio.load_model(args.model)
    x = hio.read_observations(args.data, params)
    al = viterbi(params, x)
    fh = _out(args.out)
    hio.write_states(fh, al.path)
    if fh is not sys.stdout:
        fh.close()
    print(json.dumps({"log_likelihood": al.log_likelihood, "n": len(al), "tie_policy": al.tie_policy}),
          file=sys.stderr)


def _write_segment(out, seg):
    out.write(f"{seg.start + 1} {seg.end + 1} " + " ".join(str(s + 1) for s in seg.states.tolist()) + "\n")


def _write_node(out, e):
    out.write(f"NODE {e.position + 1} {e.state + 1} {e.order} {'true' if e.strong else 'false'}\n")


def cmd_stream(args):
    params = hio.load_model(args.model)
    barrier = hio.load_barrier(args.barrier) if args.barrier else None
    out = sys.stdout
    dec = StreamingDecoder(params, args.r_max, barrier)
    table = hio._symbol_table(params) if params.discrete else None
    for lineno, line in enumerate(sys.stdin, 1):
        token = line.strip()
        if not token:
            continue
        if token == "FLUSH":
            tail = dec.flush()
            if tail is not None:
                _write_segment(out, tail)
            out.write("FLUSH\n")
            out.flush()
            dec = StreamingDecoder(params, args.r_max, barrier)
            continue
        x = hio.parse_observation(token, params, table, f"<stdin>:{lineno}: ")
        n_events = len(dec.events)
        segs = dec.push(x)
        for e, seg in zip(dec.events[n_events:], segs):
            _write_node(out, e)
            _write_segment(out, seg)
        if segs:
            out.flush()
    tail = dec.flush()
    if tail is not None:
        _write_segment(out, tail)
    out.flush()


def _provider(args, params):
    kind = args.corrections
    if kind == "analytic":
        return AnalyticCorrections()
    if kind == "zero":
        return ZeroCorrections()
    if kind == "mc":
        return MonteCarloCorrections(args.length, args.replicas, args.seed)
    try:
        AnalyticCorrections()(params)
        return AnalyticCorrections()
    except NumericalError:
        return MonteCarloCorrections(args.length, args.replicas, args.seed)


def cmd_train(args):
    params = hio.load_model(args.model)
    x = hio.read_observations(args.data, params)
    kw = dict(max_iters=args.max_iters, estimate_regime=not args.fixed_regime)
    if args.method == "vt":
        st = vt_train(params, x, **kw)
    elif args.method == "va":
        st = va_train(params, x, _provider(args, params), **kw)
    else:
        st = em_train(params, x, **kw)
    doc = {
        "method": st.method,
        "iterations": st.iteration,
        "converged": st.converged,
        "params": st.params.to_dict(),
        "joint_loglik_trace": st.joint_trace,
        "observed_loglik_trace": st.observed_trace,
        "fallbacks": st.fallbacks,
        "correction_se": st.correction_se,
    }
    fh = _out(args.out)
    fh.write(json.dumps(doc, indent=2) + "\n")
    if fh is not sys.stdout:
        fh.close()


def cmd_corrections(args):
    params = hio.load_model(args.model)
    if args.method == "analytic":
        table = AnalyticCorrections()(params)
    else:
        table = mc_limits(params, args.length, args.replicas, args.seed)
    fh = _out(args.out)
    fh.write(json.dumps(table.to_dict(), indent=2) + "\n")
    if fh is not sys.stdout:
        fh.close()


def cmd_limits(args):
    params = hio.load_model(args.model)
    barrier = hio.load_barrier(args.barrier) if args.barrier else None
    est = estimate_limit_measures(params, args.n, args.seed, barrier, args.bins)
    fh = _out(args.out)
    fh.write("state,bin_left,bin_right,mass\n")
    for l in range(params.K):
        for b in range(est.Q.shape[1]):
            lo, hi = (est.edges[b], est.edges[b + 1]) if est.edges is not None else (b, b)
            fh.write(f"{l + 1},{lo:.17g},{hi:.17g},{est.Q[l, b]:.17g}\n")
    fh.write("\ni,j,q\n")
    for i in range(params.K):
        for j in range(params.K):
            fh.write(f"{i + 1},{j + 1},{est.q[i, j]:.17g}\n")
    if fh is not sys.stdout:
        fh.close()


def cmd_experiment(args):
    if args.config:
        config = load_config(args.config)
    else:
        if not (args.name and args.model and args.n and args.seeds and args.out_dir):
            raise hio.ModelFormatError("experiment needs --config or --name, --model, --n, --seeds and --out-dir")
        config = ExperimentConfig(args.name, args.model, args.n, tuple(args.seeds), args.out_dir,
                                  max_iters=args.max_iters, estimate_regime=not args.fixed_regime)
    for p in run_experiment(config):
        print(p)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hmmva", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample a realization")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.add_argument("--hidden", help="also write the hidden path (1-based)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("decode", help="canonical Viterbi alignment")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("stream", help="online decoding of observations on stdin")
    p.add_argument("--model", required=True)
    p.add_argument("--r-max", type=int, default=None)
    p.add_argument("--barrier")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("train", help="VT, VA or EM estimation")
    p.add_argument("--method", choices=["vt", "va", "em"], required=True)
    p.add_argument("--model", required=True, help="initial parameters")
    p.add_argument("--data", required=True)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--out", default="-")
    p.add_argument("--corrections", choices=["auto", "analytic", "mc", "zero"], default="auto")
    p.add_argument("--length", type=int, default=10_000)
    p.add_argument("--replicas", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fixed-regime", action="store_true", help="keep transitions/weights at their initial values")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("corrections", help="correction table")
    p.add_argument("--model", required=True)
    p.add_argument("--method", choices=["analytic", "mc"], required=True)
    p.add_argument("--length", type=int, default=10_000)
    p.add_argument("--replicas", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_corrections)

    p = sub.add_parser("limits", help="empirical limit measures from one long run")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--bins", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--barrier")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_limits)

    p = sub.add_parser("experiment", help="run a canned experiment")
    p.add_argument("--config", help="JSON experiment configuration")
    p.add_argument("--name", choices=EXPERIMENTS)
    p.add_argument("--model")
    p.add_argument("--n", type=int)
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--out-dir")
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--fixed-regime", action="store_true")
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except NumericalError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_NUMERIC
    except (HmmvaError, ValueError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
