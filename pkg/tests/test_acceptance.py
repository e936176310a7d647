"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or directly as a script.
"""

import csv
import functools
import sys
import tempfile
import threading
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import brute_dtw  # noqa: E402

from pulsemark import similarity, synth  # noqa: E402
from pulsemark.classify import ALL_METHODS, evaluate, macro_f, train_bundle  # noqa: E402
from pulsemark.cli import main as cli_main  # noqa: E402
from pulsemark.collectord import WindowParams, classify_window, dataset_records, offline_windows, replay  # noqa: E402
from pulsemark.core import AnomalyLabel, Dataset, HeartbeatSequence, LabeledTrace, load_dataset, save_dataset  # noqa: E402
from pulsemark.emitter import EmitterConfig, FileSink, start  # noqa: E402
from pulsemark.features import extract, global_hb_ratio, global_time_ratio  # noqa: E402


def _seq(rates, times=None, trace_id="t"):
    rates = np.asarray(rates, dtype=float)
    times = np.arange(1, rates.size + 1, dtype=float) if times is None else np.asarray(times, dtype=float)
    return HeartbeatSequence(trace_id, 0, times, rates)


# --- criteria --------------------------------------------------------------


def criterion_1():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst, checks = 0.0, 0
    for _ in range(500):
        q = rng.normal(0, 10, int(rng.integers(2, 7)))
        c = rng.normal(0, 10, int(rng.integers(2, 7)))
        for cost in ("abs", "sq"):
            for band in (None, int(rng.integers(abs(len(q) - len(c)), 6))):
                for boundary in ("free", "standard"):
                    got = similarity.dtw(q, c, cost, band, boundary)
                    want = brute_dtw(q, c, cost == "sq", band, free_origin=boundary == "free")
                    worst = max(worst, abs(got - want) / max(abs(want), 1e-300))
                    checks += 1
    elapsed = time.perf_counter() - t0
    return worst <= 1e-12 and elapsed < 10, f"{checks} comparisons, max rel err {worst:.1e}, {elapsed:.1f}s"


def criterion_2():
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    violations, checks = 0, 0
    for _ in range(1000):
        q, c = rng.normal(50, 20, 32), rng.normal(50, 20, 32)
        for cost in ("abs", "sq"):
            for boundary in ("free", "standard"):
                lb = similarity.lb_keogh(q, c, 5, cost, boundary)
                d = similarity.dtw(q, c, cost, 5, boundary)
                violations += lb > d
                checks += 1
    elapsed = time.perf_counter() - t0
    return violations == 0 and elapsed < 10, f"{checks - violations}/{checks} hold, {elapsed:.1f}s"


def criterion_3():
    rng = np.random.default_rng(303)
    t0 = time.perf_counter()
    labels = list(AnomalyLabel)
    cands = []
    for i in range(200):
        n = int(rng.integers(24, 49))
        rates = np.abs(rng.normal(rng.choice([20.0, 50.0, 80.0]), 5, n))
        cands.append(LabeledTrace(_seq(rates, trace_id=f"c{i:03d}"), "w", labels[i % 3]))
    mismatches, pruned = 0, 0
    for _ in range(100):
        query = np.abs(rng.normal(rng.choice([20.0, 50.0, 80.0]), 5, int(rng.integers(24, 49))))
        best, dist, n_pruned = similarity.nn_search(query, cands)
        band = similarity.default_band(query.size)
        scan = min((similarity.dtw(query, similarity.stretch(c.sequence.rates, query.size), band=band), c.trace_id)
                   for c in cands)
        mismatches += (dist, best.trace_id) != scan
        pruned += n_pruned
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and pruned > 0 and elapsed < 60
    return ok, f"{100 - mismatches}/100 identical, pruned {pruned}, {elapsed:.1f}s"


def criterion_4():
    rng = np.random.default_rng(404)
    failures = []
    for i in range(100):
        n = int(rng.integers(8, 80))
        rates = rng.uniform(1, 500, n)
        if np.ptp(rates) == 0:
            rates[0] += 1
        times = np.cumsum(rng.uniform(0.05, 0.2, n))
        q = _seq(rates, times)
        if tuple(extract(q, q)) != (1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0):
            failures.append(f"identity#{i}")
        c = _seq(rng.uniform(1, 500, n), np.cumsum(rng.uniform(0.05, 0.2, n)))
        # Power-of-two factors keep the products exact in binary floating point.
        for s in (0.25, 0.5, 2.0, 4.0, 8.0):
            if global_hb_ratio(c.replace(rates=c.rates * s), q) != s * global_hb_ratio(c, q):
                failures.append(f"scale#{i}")
            if global_time_ratio(c.replace(rates=c.rates * s), q) != global_time_ratio(c, q):
                failures.append(f"scale-time#{i}")
            if global_time_ratio(c.replace(times=c.times * s), q) != s * global_time_ratio(c, q):
                failures.append(f"dilate#{i}")
    return not failures, "100 sequences, identity/scale/dilation exact" if not failures else ", ".join(failures[:5])


def criterion_5():
    total, n_threads, interval_ms = 10 ** 6, 8, 20
    per = [total // n_threads] * n_threads
    per[0] += total - sum(per)
    old_switch = sys.getswitchinterval()
    sys.setswitchinterval(1e-5)  # force frequent preemption between beat() and the flusher
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "stress.hb"
        try:
            session = start(EmitterConfig(interval_ms, FileSink(str(path))), "stress")
            handles = [session.register_thread(i) for i in range(n_threads)]
            gate = threading.Barrier(n_threads)

            def worker(handle, count, seed):
                rng = np.random.default_rng(seed)
                bursts = rng.integers(1, 2000, count // 500 + 1)
                gate.wait()
                done = 0
                for b in bursts:
                    for _ in range(min(int(b), count - done)):
                        handle.beat()
                    done = min(done + int(b), count)
                    time.sleep(0)
                while done < count:
                    handle.beat()
                    done += 1

            workers = [threading.Thread(target=worker, args=(h, n, i)) for i, (h, n) in enumerate(zip(handles, per))]
            for w in workers:
                w.start()
            for w in workers:
                w.join()
            session.stop()
        finally:
            sys.setswitchinterval(old_switch)
        emitted = 0.0
        records = 0
        for line in path.read_text().splitlines():
            if line.startswith("HB "):
                emitted += float(line.split()[4]) * interval_ms / 1000.0
                records += 1
    elapsed = time.perf_counter() - t0
    ok = emitted == total and session.total_beats == total and elapsed < 30
    return ok, f"sum(rate*interval) = {emitted!r} over {records} records, {elapsed:.1f}s"


@functools.lru_cache(maxsize=None)
def _protocol_run():
    tmp = Path(tempfile.mkdtemp(prefix="pulsemark-accept-"))
    t0 = time.perf_counter()
    cli_main(["simulate", "--seed", "42", "--out", str(tmp / "dataset")])
    cli_main(["eval", "--dataset", str(tmp / "dataset"), "--train-frac", "0.30", "--repeats", "3", "--seed", "42",
              "--out", str(tmp / "report.csv")])
    elapsed = time.perf_counter() - t0
    with open(tmp / "report.csv") as fh:
        rows = {row["method"]: row for row in csv.DictReader(fh)}
    n_traces = len(load_dataset(tmp / "dataset"))
    return rows, elapsed, n_traces


def criterion_6():
    rows, elapsed, n_traces = _protocol_run()
    ok = n_traces == 900 and set(rows) == set(ALL_METHODS) and elapsed < 600
    return ok, f"{n_traces} traces, methods {','.join(rows)}, {elapsed:.1f}s"


def criterion_7():
    rows, _, _ = _protocol_run()
    hsa = rows["HSA"]
    recall, mf = float(hsa["anomaly_recall"]), float(hsa["macro_f"])
    dominance = all(float(r["macro_f"]) <= mf or r["flag"] == "beats_hsa" for m, r in rows.items() if m != "HSA")
    ok = recall >= 0.90 and mf >= 0.85 and dominance
    return ok, f"HSA anomaly recall {recall:.4f}, macro-F {mf:.4f}, dominance-or-flag {dominance}"


def criterion_8():
    t0 = time.perf_counter()
    profiles = [p.noise_free() for p in synth.DEFAULT_PROFILES]
    ds = synth.generate_dataset(profiles, per_class_count=50, seed=42)
    rep = evaluate("HSA", ds, 0.30, 3, seed=42).reports()["HSA"]
    elapsed = time.perf_counter() - t0
    return rep.accuracy == 1.0 and elapsed < 120, f"HSA accuracy {rep.accuracy:.4f}, {elapsed:.1f}s"


def criterion_9():
    value = macro_f([1.00, 0.86, 1.00])
    return abs(value - 0.95) <= 0.005, f"macro-F {value:.4f}"


def criterion_10():
    t0 = time.perf_counter()
    params = WindowParams()
    bundle = train_bundle(synth.generate_dataset(synth.DEFAULT_PROFILES, per_class_count=5, seed=1), "HSA")
    stream = synth.generate_dataset(synth.DEFAULT_PROFILES, per_class_count=3, seed=2)
    with tempfile.TemporaryDirectory() as tmp:
        save_dataset(Dataset(sorted(stream.traces, key=lambda t: t.trace_id)[:50]), Path(tmp) / "ds")
        recorded = load_dataset(Path(tmp) / "ds")
        hb = Path(tmp) / "stream.hb"
        hb.write_text("".join(dataset_records(recorded)))
        diags = [d for d in replay(hb, bundle, params) if d.reason == "model"]
    online = [(d.trace_id, d.window_end_ts, d.label) for d in diags]
    offline = []
    for tr in sorted(recorded.traces, key=lambda t: t.trace_id):
        for end_ts, rates in offline_windows(tr.sequence, params):
            offline.append((tr.trace_id, end_ts, classify_window(bundle.hsa, rates, bundle.expected_length)[0]))
    agree = sum(a == b for a, b in zip(online, offline))
    elapsed = time.perf_counter() - t0
    ok = len(recorded) == 50 and len(online) == len(offline) > 0 and agree == len(offline) and elapsed < 120
    return ok, f"{agree}/{len(offline)} windows agree over {len(recorded)} traces, {elapsed:.1f}s"


CRITERIA = {
    1: ("DTW oracle equivalence", criterion_1),
    2: ("LB_Keogh lower-bound property", criterion_2),
    3: ("pruning exactness", criterion_3),
    4: ("feature identities", criterion_4),
    5: ("emitter conservation", criterion_5),
    6: ("protocol reproduction", criterion_6),
    7: ("HSA anomaly recall / macro-F / dominance", criterion_7),
    8: ("noise-free sanity", criterion_8),
    9: ("macro-F arithmetic", criterion_9),
    10: ("online/offline equivalence", criterion_10),
}


def run_criterion(number):
    name, fn = CRITERIA[number]
    try:
        ok, detail = fn()
    except Exception as exc:  # a crash is a failure, reported like any other
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return f"{'PASS' if ok else 'FAIL'} criterion {number:2d} {name}: {detail}", ok


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    line, ok = run_criterion(number)
    with capsys.disabled():
        print(f"\n{line}")
    assert ok, line


if __name__ == "__main__":
    results = [run_criterion(n) for n in sorted(CRITERIA)]
    for line, _ in results:
        print(line)
    sys.exit(0 if all(ok for _, ok in results) else 1)
