"""In-process heartbeat API for instrumented multi-threaded programs.

Usage::

    session = start(EmitterConfig(sink=FileSink("run.hb")), trace_id="run-1")
    handle = session.register_thread(thread_id)
    ...
    handle.beat()          # once per unit of work, from the worker thread
    ...
    session.stop()

Every ``flush_interval_ms`` a background flusher snapshots and resets each
thread's beat counter and writes one record per registered thread::

    HB <trace_id> <thread_id> <timestamp_ms> <heart_rate>

``heart_rate`` is beats per second over the nominal flush interval. Silent
threads produce zero-rate records.
"""

from __future__ import annotations

import logging
import socket
import sys
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, TextIO, Union

from .core import format_rate

log = logging.getLogger(__name__)

HEADER_PREFIX = "# pulsemark-hb v1"
END_PREFIX = "# end"


class EmitterError(RuntimeError):
    pass


@dataclass(frozen=True)
class FileSink:
    path: str


@dataclass(frozen=True)
class StreamSink:
    address: str  # host:port


@dataclass(frozen=True)
class StdoutSink:
    pass


Sink = Union[FileSink, StreamSink, StdoutSink]


@dataclass(frozen=True)
class EmitterConfig:
    flush_interval_ms: int = 100
    sink: Sink = field(default_factory=StdoutSink)

    def __post_init__(self):
        if self.flush_interval_ms < 1:
            raise ValueError(f"flush_interval_ms must be >= 1, got {self.flush_interval_ms}")


@dataclass(frozen=True)
class Record:
    trace_id: str
    thread_id: int
    timestamp_ms: int
    beats: int
    heart_rate: float

    def line(self) -> str:
        return f"HB {self.trace_id} {self.thread_id} {self.timestamp_ms} {format_rate(self.heart_rate)}\n"


def parse_address(address: str) -> tuple[str, int]:
    host, sep, port = address.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected host:port, got {address!r}")
    return host or "127.0.0.1", int(port)


class _SocketWriter:
    def __init__(self, sock: socket.socket):
        self._sock = sock

    def write(self, text: str) -> None:
        self._sock.sendall(text.encode("utf-8"))

    def flush(self) -> None:
        pass

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_WR)
        except OSError:
            pass
        self._sock.close()


def _open_sink(sink: Sink) -> tuple[TextIO, bool]:
    """Open the sink eagerly so failures surface at start; returns (writer, owned)."""
    if isinstance(sink, StdoutSink):
        return sys.stdout, False
    if isinstance(sink, FileSink):
        try:
            return open(sink.path, "w", encoding="utf-8", newline="\n"), True
        except OSError as exc:
            raise EmitterError(f"cannot open sink file {sink.path!r}: {exc}") from exc
    if isinstance(sink, StreamSink):
        try:
            sock = socket.create_connection(parse_address(sink.address), timeout=5)
        except (OSError, ValueError) as exc:
            raise EmitterError(f"cannot connect to {sink.address!r}: {exc}") from exc
        sock.settimeout(None)
        return _SocketWriter(sock), True
    raise EmitterError(f"unsupported sink {sink!r}")


class ThreadHandle:
    """Per-thread registration token; ``beat()`` is the hot path."""

    __slots__ = ("trace_id", "thread_id", "_count", "_lock", "closed")

    def __init__(self, session: "EmitterSession", thread_id: int):
        self.trace_id = session.trace_id
        self.thread_id = thread_id
        self._count = 0
        # Uncontended except against the flusher's snapshot; never held across I/O.
        self._lock = threading.Lock()
        self.closed = False

    def beat(self) -> None:
        if self.closed:
            raise EmitterError(f"thread {self.thread_id} is not registered")
        with self._lock:
            self._count += 1

    def _take(self) -> int:
        with self._lock:
            n, self._count = self._count, 0
        return n


class EmitterSession:
    def __init__(self, config: EmitterConfig, trace_id: str, clock: Callable[[], float] = time.monotonic,
                 autoflush: bool = True):
        if not trace_id or any(ch.isspace() for ch in trace_id):
            raise ValueError(f"trace_id must be a non-empty token, got {trace_id!r}")
        self.config = config
        self.trace_id = trace_id
        self._clock = clock
        self._out, self._owned = _open_sink(config.sink)
        self._t0 = clock()
        self._handles: dict[int, ThreadHandle] = {}
        self._registry = threading.Lock()
        self._io = threading.Lock()
        self._stop = threading.Event()
        self._stopped = False
        self._last_ts = -1
        self.records: list[Record] = []
        self._write(f"{HEADER_PREFIX} trace={trace_id} interval_ms={config.flush_interval_ms}\n")
        self._flusher = None
        if autoflush:
            self._flusher = threading.Thread(target=self._run, name=f"hb-flush-{trace_id}", daemon=True)
            self._flusher.start()

    @property
    def live(self) -> bool:
        return not self._stopped

    def register_thread(self, thread_id: int) -> ThreadHandle:
        with self._registry:
            if self._stopped:
                raise EmitterError("session is stopped")
            if thread_id in self._handles:
                raise EmitterError(f"thread {thread_id} already registered")
            handle = ThreadHandle(self, int(thread_id))
            self._handles[handle.thread_id] = handle
            return handle

    def _elapsed_ms(self) -> int:
        ts = int(round((self._clock() - self._t0) * 1000.0))
        # Records of one thread must have strictly increasing timestamps.
        ts = max(ts, self._last_ts + 1)
        self._last_ts = ts
        return ts

    def flush(self) -> list[Record]:
        """Snapshot-and-reset every counter and write one record per thread."""
        with self._registry:
            return self._flush_locked()

    def _flush_locked(self) -> list[Record]:
        interval_s = self.config.flush_interval_ms / 1000.0
        ts = self._elapsed_ms()
        batch = []
        for h in sorted(self._handles.values(), key=lambda h: h.thread_id):
            n = h._take()
            batch.append(Record(self.trace_id, h.thread_id, ts, n, n / interval_s))
        self._write("".join(r.line() for r in batch))
        self.records.extend(batch)
        return batch

    def _write(self, text: str) -> None:
        if not text:
            return
        with self._io:
            try:
                self._out.write(text)
                self._out.flush()
            except OSError as exc:
                log.error("heartbeat sink write failed: %s", exc)

    def _run(self) -> None:
        interval = self.config.flush_interval_ms / 1000.0
        tick = 1
        while True:
            delay = self._t0 + tick * interval - self._clock()
            if self._stop.wait(max(delay, 0.0)):
                return
            self.flush()
            tick += 1
            # Skip ticks missed under heavy load rather than bursting.
            behind = int((self._clock() - self._t0) / interval)
            tick = max(tick, behind + 1)

    def stop(self) -> None:
        """Flush the final partial interval and close the sink; repeated calls are no-ops."""
        with self._registry:
            if self._stopped:
                return
            self._stopped = True
        self._stop.set()
        if self._flusher is not None:
            self._flusher.join()
        with self._registry:
            if self._handles:
                self._flush_locked()
            for h in self._handles.values():
                h.closed = True
        self._write(f"{END_PREFIX} {self.trace_id}\n")
        self._close_sink()

    def abort(self) -> None:
        """Simulate a crash: stop flushing and close the sink without a final
        flush or end marker. Pending beats are lost."""
        with self._registry:
            if self._stopped:
                return
            self._stopped = True
            for h in self._handles.values():
                h.closed = True
        self._stop.set()
        if self._flusher is not None:
            self._flusher.join()
        self._close_sink()

    def _close_sink(self) -> None:
        if self._owned:
            with self._io:
                self._out.close()

    @property
    def total_beats(self) -> int:
        return sum(r.beats for r in self.records)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()


def start(config: EmitterConfig, trace_id: str, clock: Callable[[], float] = time.monotonic,
          autoflush: bool = True) -> EmitterSession:
    return EmitterSession(config, trace_id, clock, autoflush)
