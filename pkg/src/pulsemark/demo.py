"""Instrumented demo workload: worker threads beat once per unit of work.

Each unit does a little arithmetic and then sleeps ``unit_ms`` so the beat
rate is set by the pacing rather than by raw CPU speed. Injected anomalies:

* ``memleak``: units slow down progressively, up to ``1 + leak_slowdown``
  times the base unit time at the end of the run;
* ``shutdown``: at ``cut`` of the run every worker stops beating; the process
  lingers for ``tail`` flush intervals (zero-rate records) and then dies
  without closing the stream cleanly.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass

import numpy as np

from .core import AnomalyLabel
from .emitter import EmitterConfig, Sink, StdoutSink, start


@dataclass(frozen=True)
class DemoConfig:
    threads: int = 4
    duration: float = 3.0
    unit_ms: float = 1.0
    inject: AnomalyLabel = AnomalyLabel.NORMAL
    leak_slowdown: float = 2.0
    cut: float = 0.5
    tail: int = 3
    flush_interval_ms: int = 50
    seed: int = 0
    trace_id: str = "demo"


def _work(rng: np.random.Generator, size: int = 64) -> float:
    return float(np.sum(rng.random(size)))


def run_demo(cfg: DemoConfig, sink: Sink = StdoutSink()):
    """Run the workload to completion and return the emitter session."""
    inject = AnomalyLabel(cfg.inject)
    if cfg.threads < 1:
        raise ValueError("need at least one thread")
    session = start(EmitterConfig(cfg.flush_interval_ms, sink), cfg.trace_id)
    handles = [session.register_thread(i) for i in range(cfg.threads)]
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.threads)
    t0 = time.monotonic()
    stop_at = cfg.cut * cfg.duration if inject is AnomalyLabel.SHUTDOWN else cfg.duration

    def worker(handle, seed):
        rng = np.random.default_rng(seed)
        unit = cfg.unit_ms / 1000.0
        while True:
            elapsed = time.monotonic() - t0
            if elapsed >= stop_at:
                return
            _work(rng)
            slow = 1.0
            if inject is AnomalyLabel.MEMLEAK:
                slow += cfg.leak_slowdown * elapsed / cfg.duration
            time.sleep(unit * slow)
            handle.beat()

    workers = [threading.Thread(target=worker, args=(h, s), name=f"demo-{h.thread_id}")
               for h, s in zip(handles, seeds)]
    for w in workers:
        w.start()
    for w in workers:
        w.join()
    if inject is AnomalyLabel.SHUTDOWN:
        time.sleep(cfg.tail * cfg.flush_interval_ms / 1000.0 + 0.01)
        session.abort()
    else:
        session.stop()
    return session
