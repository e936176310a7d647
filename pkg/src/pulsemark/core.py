"""Heartbeat data model and the on-disk dataset layout.

A dataset directory holds two CSV files::

    traces.csv   trace_id,workload_id,thread_id,label
    samples.csv  trace_id,thread_id,timestamp_ms,heart_rate

plus an optional ``meta.json`` with generator metadata.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

TRACES_FILE = "traces.csv"
SAMPLES_FILE = "samples.csv"
META_FILE = "meta.json"

TRACES_HEADER = ["trace_id", "workload_id", "thread_id", "label"]
SAMPLES_HEADER = ["trace_id", "thread_id", "timestamp_ms", "heart_rate"]


class DatasetError(ValueError):
    """Raised for unreadable, malformed or inconsistent datasets."""


class AnomalyLabel(str, enum.Enum):
    NORMAL = "normal"
    MEMLEAK = "memleak"
    SHUTDOWN = "shutdown"

    @classmethod
    def parse(cls, text: str) -> "AnomalyLabel":
        try:
            return cls(text)
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise DatasetError(f"unknown label {text!r} (expected one of: {valid})") from None

    @property
    def short(self) -> str:
        return {"normal": "N", "memleak": "A", "shutdown": "S"}[self.value]

    def __str__(self) -> str:
        return self.value


LABELS: tuple[AnomalyLabel, ...] = tuple(AnomalyLabel)


def format_rate(rate: float) -> str:
    """Heart rates are written with 6 significant digits everywhere."""
    return f"{rate:.6g}"


@dataclass(frozen=True)
class HeartbeatSample:
    thread_id: int
    timestamp_ms: int
    heart_rate: float

    def __post_init__(self):
        if self.timestamp_ms < 0:
            raise ValueError(f"negative timestamp {self.timestamp_ms}")
        if not self.heart_rate >= 0:
            raise ValueError(f"invalid heart rate {self.heart_rate}")


@dataclass(frozen=True, eq=False)
class HeartbeatSequence:
    """Ordered (time in seconds, beats/sec) points of one thread."""

    trace_id: str
    thread_id: int
    times: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        rates = np.asarray(self.rates, dtype=float)
        if times.ndim != 1 or times.shape != rates.shape:
            raise ValueError("times and rates must be 1-d arrays of equal length")
        if times.size < 1:
            raise ValueError(f"sequence {self.trace_id!r} is empty")
        if np.any(np.diff(times) <= 0):
            raise ValueError(f"sequence {self.trace_id!r}: timestamps not strictly increasing")
        if np.any(rates < 0) or not np.all(np.isfinite(rates)):
            raise ValueError(f"sequence {self.trace_id!r}: rates must be finite and >= 0")
        times.setflags(write=False)
        rates.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "rates", rates)

    def __len__(self) -> int:
        return self.rates.size

    @classmethod
    def from_ms(cls, trace_id: str, thread_id: int, timestamps_ms, rates) -> "HeartbeatSequence":
        return cls(trace_id, thread_id, np.asarray(timestamps_ms, dtype=float) / 1000.0, rates)

    @property
    def timestamps_ms(self) -> np.ndarray:
        return np.rint(self.times * 1000.0).astype(np.int64)

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def replace(self, **changes) -> "HeartbeatSequence":
        fields = dict(trace_id=self.trace_id, thread_id=self.thread_id, times=self.times, rates=self.rates)
        fields.update(changes)
        return HeartbeatSequence(**fields)

    def same_as(self, other: "HeartbeatSequence", rate_rtol: float = 0.0) -> bool:
        if (self.trace_id, self.thread_id) != (other.trace_id, other.thread_id) or len(self) != len(other):
            return False
        if not np.array_equal(self.times, other.times):
            return False
        if rate_rtol == 0.0:
            return np.array_equal(self.rates, other.rates)
        return bool(np.allclose(self.rates, other.rates, rtol=rate_rtol, atol=0.0))


@dataclass(frozen=True, eq=False)
class LabeledTrace:
    sequence: HeartbeatSequence
    workload_id: str
    label: AnomalyLabel

    def __post_init__(self):
        if not self.workload_id:
            raise ValueError("workload_id must be non-empty")
        object.__setattr__(self, "label", AnomalyLabel(self.label))

    @property
    def trace_id(self) -> str:
        return self.sequence.trace_id


@dataclass(eq=False)
class Dataset:
    traces: list[LabeledTrace]
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.check_unique()

    def check_unique(self):
        seen = set()
        for tr in self.traces:
            if tr.trace_id in seen:
                raise DatasetError(f"duplicate trace_id {tr.trace_id!r}")
            seen.add(tr.trace_id)

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    @property
    def workloads(self) -> list[str]:
        return sorted({tr.workload_id for tr in self.traces})

    def by_id(self) -> dict[str, LabeledTrace]:
        return {tr.trace_id: tr for tr in self.traces}

    def subset(self, trace_ids: Iterable[str]) -> "Dataset":
        index = self.by_id()
        return Dataset([index[t] for t in trace_ids], dict(self.metadata))


@dataclass(frozen=True)
class WindowSpec:
    w: int = 5
    stride: int = 5

    def __post_init__(self):
        if self.w < 1 or self.stride < 1:
            raise ValueError(f"window size and stride must be >= 1, got w={self.w} stride={self.stride}")

    def count(self, length: int) -> int:
        """Number of windows over ``length`` samples."""
        if length < self.w:
            return 0
        return (length - self.w) // self.stride + 1

    def starts(self, length: int) -> range:
        return range(0, self.count(length) * self.stride, self.stride)


# --- persistence -----------------------------------------------------------


def save_dataset(ds: Dataset, path) -> None:
    ds.check_unique()
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    ordered = sorted(ds.traces, key=lambda tr: (tr.trace_id, tr.sequence.thread_id))
    with open(path / TRACES_FILE, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACES_HEADER)
        for tr in ordered:
            writer.writerow([tr.trace_id, tr.workload_id, tr.sequence.thread_id, tr.label.value])
    with open(path / SAMPLES_FILE, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SAMPLES_HEADER)
        for tr in ordered:
            seq = tr.sequence
            for ts, rate in zip(seq.timestamps_ms.tolist(), seq.rates.tolist()):
                writer.writerow([seq.trace_id, seq.thread_id, ts, format_rate(rate)])
    meta_path = path / META_FILE
    if ds.metadata:
        with open(meta_path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(ds.metadata, fh, indent=2, sort_keys=True)
            fh.write("\n")
    elif meta_path.exists():
        meta_path.unlink()


def _read_rows(path: Path, header: list[str]):
    if not path.is_file():
        raise DatasetError(f"missing file {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first != header:
            raise DatasetError(f"{path}:1: expected header {','.join(header)!r}, got {first!r}")
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError(f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, row


def load_dataset(path) -> Dataset:
    path = Path(path)
    traces_path, samples_path = path / TRACES_FILE, path / SAMPLES_FILE
    # Check both up front so a missing samples file is reported as such.
    for p in (traces_path, samples_path):
        if not p.is_file():
            raise DatasetError(f"missing file {p}")

    meta_rows: dict[str, tuple[str, int, AnomalyLabel]] = {}
    for line, (trace_id, workload_id, thread_id, label) in _read_rows(traces_path, TRACES_HEADER):
        where = f"{traces_path}:{line}"
        if trace_id in meta_rows:
            raise DatasetError(f"{where}: duplicate trace_id {trace_id!r}")
        if not workload_id:
            raise DatasetError(f"{where}: empty workload_id")
        try:
            tid = int(thread_id)
            lab = AnomalyLabel.parse(label)
        except (ValueError, DatasetError) as exc:
            raise DatasetError(f"{where}: {exc}") from None
        meta_rows[trace_id] = (workload_id, tid, lab)

    samples: dict[str, tuple[list[int], list[float]]] = {t: ([], []) for t in meta_rows}
    for line, (trace_id, thread_id, ts, rate) in _read_rows(samples_path, SAMPLES_HEADER):
        where = f"{samples_path}:{line}"
        if trace_id not in meta_rows:
            raise DatasetError(f"{where}: sample for unknown trace {trace_id!r}")
        try:
            tid, ts_ms, hr = int(thread_id), int(ts), float(rate)
        except ValueError:
            raise DatasetError(f"{where}: malformed sample row") from None
        if tid != meta_rows[trace_id][1]:
            raise DatasetError(f"{where}: thread_id {tid} does not match trace {trace_id!r}")
        if ts_ms < 0 or not (hr >= 0 and math.isfinite(hr)):
            raise DatasetError(f"{where}: timestamp and heart rate must be non-negative")
        stamps, rates = samples[trace_id]
        if stamps and ts_ms <= stamps[-1]:
            raise DatasetError(f"{where}: non-monotone timestamp {ts_ms} in trace {trace_id!r}")
        stamps.append(ts_ms)
        rates.append(hr)

    traces = []
    for trace_id, (workload_id, tid, lab) in meta_rows.items():
        stamps, rates = samples[trace_id]
        if not stamps:
            raise DatasetError(f"trace has no samples: {trace_id!r}")
        seq = HeartbeatSequence.from_ms(trace_id, tid, stamps, rates)
        traces.append(LabeledTrace(seq, workload_id, lab))
    traces.sort(key=lambda tr: tr.trace_id)

    metadata = {}
    if (path / META_FILE).is_file():
        with open(path / META_FILE, encoding="utf-8") as fh:
            metadata = json.load(fh)
    return Dataset(traces, metadata)


def resample_uniform(seq: HeartbeatSequence, delta: float) -> HeartbeatSequence:
    """Linearly interpolate ``seq`` onto the grid 0, delta, 2*delta, ...

    The grid stops at the last original timestamp; when that timestamp is not
    a grid point it is appended so the final rate is preserved.
    """
    if len(seq) < 2:
        raise ValueError("resampling needs at least two points")
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    end = seq.times[-1]
    steps = int(math.floor(end / delta + 1e-9))
    grid = np.arange(steps + 1) * delta
    if not math.isclose(grid[-1], end, rel_tol=1e-9, abs_tol=1e-12):
        grid = np.append(grid, end)
    else:
        grid[-1] = end
    # Rates before the first original sample hold the first rate.
    rates = np.interp(grid, seq.times, seq.rates)
    return seq.replace(times=grid, rates=rates)

