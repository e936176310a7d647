"""``pulsemark`` command line: simulate, features, train, eval, diagnose, serve, emit-demo, dist."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import signal
import sys
import threading
from pathlib import Path

from . import similarity, synth
from .classify import HSA, evaluate, fit_hsa, load_bundle, save_bundle, train_bundle
from .classify.protocol import ALL_METHODS
from .collectord import DEFAULT_SILENCE_MS, WindowParams, records_to_sequences, replay, serve
from .core import AnomalyLabel, DatasetError, WindowSpec, load_dataset, save_dataset
from .demo import DemoConfig, run_demo
from .emitter import FileSink, StdoutSink, StreamSink
from .features import FEATURE_NAMES, extract

log = logging.getLogger("pulsemark")

COSTS = {"abs": similarity.CostKind.ABSOLUTE, "sq": similarity.CostKind.SQUARED}


class UsageError(Exception):
    pass


def _default_seed() -> int:
    env = os.environ.get("PULSEMARK_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"PULSEMARK_SEED must be an integer, got {env!r}") from None


def _add_seed(p):
    p.add_argument("--seed", type=int, default=None,
                   help="master seed (falls back to $PULSEMARK_SEED, then 0)")


def _add_similarity(p):
    p.add_argument("--band", type=int, default=None,
                   help="DTW/LB_Keogh band in samples (default: max(5, ceil(0.1*length)))")
    p.add_argument("--cost", choices=sorted(COSTS), default="sq", help="pointwise cost for DTW and LB_Keogh")


def _add_feature_window(p):
    p.add_argument("--window", type=int, default=5, help="feature window size w in samples")
    p.add_argument("--stride", type=int, default=5, help="feature window stride")


def _add_collector_window(p):
    p.add_argument("--window", type=int, default=64, help="online window W in samples")
    p.add_argument("--stride", type=int, default=16, help="samples between diagnoses")
    p.add_argument("--silence-ms", type=int, default=DEFAULT_SILENCE_MS, help="silence deadline in ms")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="pulsemark", description=__doc__, formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a labelled synthetic dataset", formatter_class=fmt)
    _add_seed(p)
    p.add_argument("--out", default="dataset", help="output dataset directory")
    p.add_argument("--profiles", default=",".join(synth.PROFILES_BY_ID),
                   help="comma-separated workload profiles")
    p.add_argument("--per-class", type=int, default=50, help="traces per class per workload")
    p.add_argument("--samples", type=int, default=None, help="override samples per trace")
    p.add_argument("--noise-free", action="store_true", help="zero noise on every profile")

    p = sub.add_parser("features", help="write the feature matrix of a dataset", formatter_class=fmt)
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--model", default=None, help="model bundle supplying prototypes (default: fit on dataset)")
    p.add_argument("--out", default="-", help="output CSV ('-' for stdout)")
    _add_feature_window(p)
    _add_similarity(p)

    p = sub.add_parser("train", help="fit models and write a model bundle", formatter_class=fmt)
    _add_seed(p)
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--out", default="model", help="bundle directory")
    p.add_argument("--methods", default=",".join(ALL_METHODS), help="methods to fit")
    _add_feature_window(p)
    _add_similarity(p)

    p = sub.add_parser("eval", help="repeated train/test evaluation", formatter_class=fmt)
    _add_seed(p)
    p.add_argument("--dataset", default="dataset", help="dataset directory")
    p.add_argument("--out", default="report.csv", help="report CSV path")
    p.add_argument("--methods", default=",".join(ALL_METHODS), help="methods to compare")
    p.add_argument("--train-frac", type=float, default=0.30, help="training fraction per stratum")
    p.add_argument("--repeats", type=int, default=3, help="number of random splits averaged")
    _add_feature_window(p)
    _add_similarity(p)

    p = sub.add_parser("diagnose", help="replay a recorded HB stream through the collector", formatter_class=fmt)
    p.add_argument("input", help="HB record file ('-' for stdin)")
    p.add_argument("--model", required=True, help="model bundle")
    p.add_argument("--out", default="-", help="DIAG output ('-' for stdout)")
    _add_collector_window(p)

    p = sub.add_parser("serve", help="run the online collector", formatter_class=fmt)
    p.add_argument("--model", required=True, help="model bundle")
    p.add_argument("--listen", default="-", help="host:port to accept HB streams on, or '-' for stdin")
    _add_collector_window(p)

    p = sub.add_parser("emit-demo", help="run an instrumented multi-threaded demo", formatter_class=fmt)
    _add_seed(p)
    p.add_argument("--threads", type=int, default=4, help="worker threads")
    p.add_argument("--inject", choices=["memleak", "shutdown"], default=None, help="anomaly to inject")
    p.add_argument("--out", default="-", help="record sink: file path, host:port, or '-' for stdout")
    p.add_argument("--duration", type=float, default=3.0, help="run length in seconds")
    p.add_argument("--interval-ms", type=int, default=50, help="emitter flush interval")
    p.add_argument("--trace-id", default="demo", help="trace id stamped on records")

    p = sub.add_parser("dist", help="DTW and LB_Keogh between two HB record files", formatter_class=fmt)
    p.add_argument("query", help="HB record file (first trace/thread is used)")
    p.add_argument("candidate", help="HB record file (first trace/thread is used)")
    _add_similarity(p)
    p.add_argument("--boundary", choices=[b.value for b in similarity.Boundary], default="free",
                   help="DTW origin-cell convention")
    return parser


def _seed(args) -> int:
    return args.seed if args.seed is not None else _default_seed()


def _open_out(path: str):
    if path == "-":
        return sys.stdout, False
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", encoding="utf-8", newline=""), True


def cmd_simulate(args) -> int:
    names = [n.strip() for n in args.profiles.split(",") if n.strip()]
    unknown = [n for n in names if n not in synth.PROFILES_BY_ID]
    if unknown or not names:
        raise UsageError(f"unknown profile(s) {', '.join(unknown) or '(none)'}; "
                         f"valid profiles: {', '.join(synth.PROFILES_BY_ID)}")
    profiles = [synth.PROFILES_BY_ID[n] for n in names]
    if args.samples is not None:
        from dataclasses import replace
        profiles = [replace(p, n_samples=args.samples) for p in profiles]
    if args.noise_free:
        profiles = [p.noise_free() for p in profiles]
    ds = synth.generate_dataset(profiles, args.per_class, _seed(args))
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} traces to {args.out}")
    return 0


def cmd_features(args) -> int:
    ds = load_dataset(args.dataset)
    cost = COSTS[args.cost]
    if args.model:
        prototypes = load_bundle(args.model).hsa.prototypes
    else:
        prototypes = fit_hsa(ds.traces, cost, args.band).prototypes
    spec = WindowSpec(args.window, args.stride)
    missing = sorted({tr.workload_id for tr in ds.traces} - set(prototypes))
    if missing:
        raise UsageError(f"no prototype for workload(s): {', '.join(missing)}")
    out, owned = _open_out(args.out)
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["trace_id", "label", *FEATURE_NAMES])
        for tr in ds.traces:
            fv = extract(tr.sequence, prototypes[tr.workload_id], spec, args.band, cost)
            writer.writerow([tr.trace_id, tr.label.value, *(repr(float(v)) for v in fv)])
    finally:
        if owned:
            out.close()
    return 0


def cmd_train(args) -> int:
    ds = load_dataset(args.dataset)
    bundle = train_bundle(ds, args.methods, _seed(args), WindowSpec(args.window, args.stride), args.band,
                          COSTS[args.cost])
    save_bundle(bundle, args.out)
    print(f"wrote model bundle ({', '.join(bundle.methods)}) to {args.out}")
    return 0


def cmd_eval(args) -> int:
    ds = load_dataset(args.dataset)
    ev = evaluate(args.methods, ds, args.train_frac, args.repeats, _seed(args),
                  WindowSpec(args.window, args.stride), args.band, COSTS[args.cost])
    ev.write_csv(args.out)
    print(f"{'method':8s} {'N':>7s} {'A':>7s} {'S':>7s} {'macroF':>7s} {'anomRec':>7s}")
    for m, rep in ev.reports().items():
        f = [rep.f_score[lab] for lab in AnomalyLabel]
        print(f"{m:8s} {f[0]:7.4f} {f[1]:7.4f} {f[2]:7.4f} {rep.macro_f:7.4f} {rep.anomaly_recall:7.4f}")
    beaten = ev.dominance_exceptions()
    if beaten:
        print(f"note: {', '.join(beaten)} exceed {HSA} macro-F on this run (flagged in report)")
    print(f"wrote {args.out}")
    return 0


def _window_params(args) -> WindowParams:
    return WindowParams(args.window, args.stride, args.silence_ms)


def cmd_diagnose(args) -> int:
    bundle = load_bundle(args.model)
    source = sys.stdin if args.input == "-" else args.input
    diags = replay(source, bundle, _window_params(args))
    out, owned = _open_out(args.out)
    try:
        out.writelines(d.line() for d in diags)
    finally:
        if owned:
            out.close()
    return 0


def cmd_serve(args) -> int:
    stop = threading.Event()

    def on_signal(signum, frame):
        stop.set()
        if args.listen == "-":
            raise KeyboardInterrupt

    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, on_signal)
    try:
        serve(args.listen, args.model, _window_params(args), stop_event=stop)
    except KeyboardInterrupt:
        pass
    return 0


def cmd_emit_demo(args) -> int:
    if args.out == "-":
        sink = StdoutSink()
    elif ":" in args.out and args.out.rpartition(":")[2].isdigit():
        sink = StreamSink(args.out)
    else:
        sink = FileSink(args.out)
    cfg = DemoConfig(threads=args.threads, duration=args.duration,
                     inject=AnomalyLabel(args.inject or "normal"), flush_interval_ms=args.interval_ms,
                     seed=_seed(args), trace_id=args.trace_id)
    run_demo(cfg, sink)
    return 0


def _first_sequence(path: str):
    with open(path, encoding="utf-8") as fh:
        seqs = records_to_sequences(fh)
    if not seqs:
        raise UsageError(f"{path}: no HB records")
    return seqs[0]


def cmd_dist(args) -> int:
    q, c = _first_sequence(args.query), _first_sequence(args.candidate)
    cost = COSTS[args.cost]
    aligned = similarity.stretch(c.rates, len(q))
    band = args.band if args.band is not None else similarity.default_band(len(q))
    d = similarity.dtw(q.rates, aligned, cost, band, args.boundary)
    lb = similarity.lb_keogh(q.rates, aligned, band, cost, args.boundary)
    print(f"dtw {d!r}")
    print(f"lb_keogh {lb!r}")
    print(f"band {band}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "features": cmd_features,
    "train": cmd_train,
    "eval": cmd_eval,
    "diagnose": cmd_diagnose,
    "serve": cmd_serve,
    "emit-demo": cmd_emit_demo,
    "dist": cmd_dist,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except (DatasetError, ValueError, OSError) as exc:
        print(f"pulsemark {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
