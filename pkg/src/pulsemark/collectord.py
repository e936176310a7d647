"""Online collector: rolling per-thread windows over HB streams, DIAG output.

Input lines::

    HB <trace_id> <thread_id> <timestamp_ms> <heart_rate>
    # end <trace_id>                  (written by the emitter on stop)

Output lines::

    DIAG <trace_id> <thread_id> <window_end_ts> <label> <distance> <reason>

``reason`` is ``model`` for window classifications and ``silence`` for the
missing-heartbeat rule. A thread is declared silent when a sibling thread of
the same trace reports a timestamp more than ``silence_ms`` past its last
record, or when the input ends without an end marker for its trace. Live
``serve`` additionally fires the rule on wall-clock silence.
"""

from __future__ import annotations

import logging
import math
import socketserver
import sys
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, TextIO

import numpy as np

from . import similarity
from .classify.bundle import ModelBundle, load_bundle
from .classify.hsa import HsaModel, predict_hsa
from .core import AnomalyLabel, Dataset, HeartbeatSequence, LabeledTrace, format_rate
from .emitter import END_PREFIX, parse_address

log = logging.getLogger(__name__)

DEFAULT_WINDOW = 64
DEFAULT_STRIDE = 16
DEFAULT_SILENCE_MS = 500  # 5 x the emitter's default flush interval


@dataclass(frozen=True)
class WindowParams:
    window: int = DEFAULT_WINDOW
    stride: int = DEFAULT_STRIDE
    silence_ms: int = DEFAULT_SILENCE_MS

    def __post_init__(self):
        if self.window < 2 or self.stride < 1 or self.silence_ms < 1:
            raise ValueError(f"invalid window parameters {self}")


@dataclass(frozen=True)
class Diag:
    trace_id: str
    thread_id: int
    window_end_ts: int
    label: AnomalyLabel
    distance: float
    reason: str

    def line(self) -> str:
        dist = "nan" if math.isnan(self.distance) else format_rate(self.distance)
        return (f"DIAG {self.trace_id} {self.thread_id} {self.window_end_ts} {self.label.value} "
                f"{dist} {self.reason}\n")

    @classmethod
    def parse(cls, line: str) -> "Diag":
        tag, trace_id, thread_id, ts, label, dist, reason = line.split()
        if tag != "DIAG":
            raise ValueError(f"not a DIAG line: {line!r}")
        return cls(trace_id, int(thread_id), int(ts), AnomalyLabel(label), float(dist), reason)


def parse_hb(line: str) -> tuple[str, int, int, float]:
    parts = line.split()
    if len(parts) != 5 or parts[0] != "HB":
        raise ValueError(f"malformed record {line.strip()!r}")
    trace_id, thread_id, ts, rate = parts[1], int(parts[2]), int(parts[3]), float(parts[4])
    if ts < 0 or not (rate >= 0 and math.isfinite(rate)):
        raise ValueError(f"out-of-range record {line.strip()!r}")
    return trace_id, thread_id, ts, rate


def classify_window(model: HsaModel, rates, expected_length: int) -> tuple[AnomalyLabel, float]:
    """Model decision for one window, resampled onto the model's trace length."""
    seq = similarity.stretch(np.asarray(rates, dtype=float), expected_length)
    return predict_hsa(model, seq)


def offline_windows(trace: HeartbeatSequence, params: WindowParams):
    """(end timestamp, rates) of every window the collector diagnoses for this sequence."""
    ts = trace.timestamps_ms
    first = max(params.window, params.stride) - 1
    for end in range(first, len(trace), params.stride):
        yield int(ts[end]), trace.rates[end - params.window + 1:end + 1]


class _ThreadWindow:
    __slots__ = ("ring", "since", "last_ts", "last_seen", "silent")

    def __init__(self, size: int):
        self.ring: deque[float] = deque(maxlen=size)
        self.since = 0
        self.last_ts = -1
        self.last_seen = 0.0
        self.silent = False


class Collector:
    """Stream state machine shared by ``replay`` and ``serve``."""

    def __init__(self, bundle: ModelBundle, params: WindowParams = WindowParams(),
                 emit: Callable[[Diag], None] | None = None, wallclock: Callable[[], float] = time.monotonic):
        self.bundle = bundle
        self.params = params
        self.expected_length = bundle.expected_length
        self.windows: dict[tuple[str, int], _ThreadWindow] = {}
        self._threads: dict[str, dict[int, _ThreadWindow]] = {}
        self.ended: set[str] = set()
        self.malformed = 0
        self.diags: list[Diag] = []
        self._emit = emit
        self._wallclock = wallclock
        self._lock = threading.Lock()

    def _out(self, diag: Diag) -> None:
        self.diags.append(diag)
        if self._emit is not None:
            self._emit(diag)

    def _silence(self, key, win: _ThreadWindow) -> None:
        win.silent = True
        self._out(Diag(key[0], key[1], win.last_ts, AnomalyLabel.SHUTDOWN, float("nan"), "silence"))

    def feed_line(self, line: str) -> None:
        stripped = line.strip()
        if not stripped:
            return
        with self._lock:
            if stripped.startswith("#"):
                if stripped.startswith(END_PREFIX + " "):
                    self.ended.add(stripped[len(END_PREFIX) + 1:].strip())
                return
            try:
                trace_id, thread_id, ts, rate = parse_hb(stripped)
            except ValueError:
                self.malformed += 1
                log.debug("skipping malformed line %r", stripped)
                return
            self._record(trace_id, thread_id, ts, rate)

    def _record(self, trace_id: str, thread_id: int, ts: int, rate: float) -> None:
        key = (trace_id, thread_id)
        win = self.windows.get(key)
        if win is None:
            win = self.windows[key] = _ThreadWindow(self.params.window)
            self._threads.setdefault(trace_id, {})[thread_id] = win
        if ts <= win.last_ts:
            self.malformed += 1
            return
        win.ring.append(rate)
        win.since += 1
        win.last_ts = ts
        win.last_seen = self._wallclock()
        win.silent = False
        # Sibling threads that fell behind this timestamp are silent.
        for other_id, other in self._threads[trace_id].items():
            if other is not win and not other.silent and ts - other.last_ts > self.params.silence_ms:
                self._silence((trace_id, other_id), other)
        if len(win.ring) == self.params.window and win.since >= self.params.stride:
            label, dist = classify_window(self.bundle.hsa, list(win.ring), self.expected_length)
            win.since = 0
            self._out(Diag(trace_id, thread_id, ts, label, dist, "model"))

    def check_wallclock(self) -> None:
        """Live-mode rule: flag threads with no record for ``silence_ms`` of wall time."""
        now = self._wallclock()
        with self._lock:
            for key, win in self.windows.items():
                if key[0] in self.ended or win.silent:
                    continue
                if (now - win.last_seen) * 1000.0 > self.params.silence_ms:
                    self._silence(key, win)

    def finish(self) -> None:
        """End of input: threads of traces without an end marker went silent."""
        with self._lock:
            for key in sorted(self.windows):
                win = self.windows[key]
                if key[0] not in self.ended and not win.silent:
                    self._silence(key, win)


def replay(path_or_lines, bundle, params: WindowParams = WindowParams()) -> list[Diag]:
    """Run the collector over a recorded stream and return its DIAG records."""
    if isinstance(bundle, (str, bytes)) or hasattr(bundle, "__fspath__"):
        bundle = load_bundle(bundle)
    collector = Collector(bundle, params)
    if isinstance(path_or_lines, (str, bytes)) or hasattr(path_or_lines, "__fspath__"):
        with open(path_or_lines, encoding="utf-8") as fh:
            for line in fh:
                collector.feed_line(line)
    else:
        for line in path_or_lines:
            collector.feed_line(line)
    collector.finish()
    if collector.malformed:
        log.warning("skipped %d malformed line(s)", collector.malformed)
    return collector.diags


class _LineWriter:
    def __init__(self, out: TextIO):
        self._out = out
        self._lock = threading.Lock()

    def __call__(self, diag: Diag) -> None:
        text = diag.line()
        with self._lock:
            self._out.write(text)
            self._out.flush()


def serve(listen: str | None, bundle, params: WindowParams = WindowParams(), out: TextIO | None = None,
          stdin: TextIO | None = None, stop_event: threading.Event | None = None) -> Collector:
    """Ingest HB lines from standard input (``listen`` None or ``-``) or TCP until terminated.

    Each TCP connection is one ingestion path; its end of stream is treated like
    the end of a replay file for the traces it carried.
    """
    if isinstance(bundle, (str, bytes)) or hasattr(bundle, "__fspath__"):
        bundle = load_bundle(bundle)
    out = out or sys.stdout
    writer = _LineWriter(out)
    collector = Collector(bundle, params, emit=writer)
    stop_event = stop_event or threading.Event()

    def watchdog():
        period = params.silence_ms / 4000.0
        while not stop_event.wait(period):
            collector.check_wallclock()

    dog = threading.Thread(target=watchdog, name="collectord-watchdog", daemon=True)
    dog.start()
    try:
        if listen in (None, "-"):
            for line in stdin or sys.stdin:
                collector.feed_line(line)
                if stop_event.is_set():
                    break
            collector.finish()
        else:
            _serve_tcp(listen, collector, stop_event)
    finally:
        stop_event.set()
        dog.join()
        if collector.malformed:
            log.warning("skipped %d malformed line(s)", collector.malformed)
    return collector


def _serve_tcp(listen: str, collector: Collector, stop_event: threading.Event) -> None:
    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            seen = set()
            for raw in self.rfile:
                line = raw.decode("utf-8", errors="replace")
                parts = line.split()
                if len(parts) >= 2 and parts[0] == "HB":
                    seen.add(parts[1])
                collector.feed_line(line)
            with collector._lock:
                for key in sorted(collector.windows):
                    win = collector.windows[key]
                    if key[0] in seen and key[0] not in collector.ended and not win.silent:
                        collector._silence(key, win)

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    with Server(parse_address(listen), Handler) as server:
        collector.address = server.server_address
        thread = threading.Thread(target=server.serve_forever, kwargs={"poll_interval": 0.1}, daemon=True)
        thread.start()
        log.info("listening on %s:%d", *server.server_address[:2])
        stop_event.wait()
        server.shutdown()
        thread.join()


# --- helpers bridging datasets and record streams ---------------------------


def dataset_records(ds: Dataset, end_markers: bool = True) -> Iterable[str]:
    """HB lines (trace by trace) for every sequence in a dataset."""
    for tr in sorted(ds.traces, key=lambda t: t.trace_id):
        seq = tr.sequence
        for ts, rate in zip(seq.timestamps_ms.tolist(), seq.rates.tolist()):
            yield f"HB {seq.trace_id} {seq.thread_id} {ts} {format_rate(rate)}\n"
        if end_markers:
            yield f"{END_PREFIX} {seq.trace_id}\n"


def records_to_sequences(lines: Iterable[str]) -> list[HeartbeatSequence]:
    """Group HB lines into one sequence per (trace, thread); bad lines are skipped."""
    stamps: dict[tuple[str, int], tuple[list, list]] = {}
    for line in lines:
        try:
            trace_id, thread_id, ts, rate = parse_hb(line)
        except ValueError:
            continue
        s, r = stamps.setdefault((trace_id, thread_id), ([], []))
        if s and ts <= s[-1]:
            continue
        s.append(ts)
        r.append(rate)
    return [HeartbeatSequence.from_ms(f"{t}.{th}", th, s, r) for (t, th), (s, r) in sorted(stamps.items())]


def records_to_traces(lines: Iterable[str], label, workload_id: str) -> list[LabeledTrace]:
    return [LabeledTrace(seq, workload_id, AnomalyLabel(label)) for seq in records_to_sequences(lines)]

