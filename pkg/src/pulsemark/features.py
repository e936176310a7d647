"""Sequence features of a candidate trace C against a reference trace Q."""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields
from typing import NamedTuple

import numpy as np

from . import similarity
from .core import HeartbeatSequence, WindowSpec

# Reference rate differences smaller than this are treated as zero.
RATE_EPS = 1e-9

FEATURE_NAMES = (
    "global_time_ratio",
    "local_time_ratio",
    "global_hb_ratio",
    "local_hb_ratio",
    "dtw_to_ref",
    "lb_to_ref",
    "length_ratio",
)


class FeatureError(ValueError):
    pass


class WindowedRatio(NamedTuple):
    value: float
    windows: int
    skipped: int

    @property
    def evaluated(self) -> int:
        return self.windows - self.skipped

    @property
    def degenerate(self) -> bool:
        return self.evaluated == 0


@dataclass(frozen=True)
class FeatureVector:
    global_time_ratio: float
    local_time_ratio: float
    global_hb_ratio: float
    local_hb_ratio: float
    dtw_to_ref: float
    lb_to_ref: float
    length_ratio: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    def __iter__(self):
        return iter(astuple(self))


assert tuple(f.name for f in fields(FeatureVector)) == FEATURE_NAMES


def global_time_ratio(c: HeartbeatSequence, q: HeartbeatSequence) -> float:
    if q.times[-1] <= 0:
        raise FeatureError("reference completion time is zero")
    return float(c.times[-1] / q.times[-1])


def global_hb_ratio(c: HeartbeatSequence, q: HeartbeatSequence) -> float:
    ref = q.rates.mean()
    if ref <= 0:
        raise FeatureError("reference mean heart rate is zero")
    return float(c.rates.mean() / ref)


def _windowed_ratio(num: np.ndarray, den: np.ndarray, spec: WindowSpec, eps: float) -> WindowedRatio:
    # Window i spans indices i .. i+w, so w+1 samples are needed.
    usable = min(num.size, den.size)
    if usable < spec.w + 1:
        raise FeatureError(f"need at least {spec.w + 1} aligned samples, have {usable}")
    starts = np.arange(0, usable - spec.w, spec.stride)
    dn = num[starts + spec.w] - num[starts]
    dd = den[starts + spec.w] - den[starts]
    keep = np.abs(dd) > eps if eps > 0 else dd != 0
    skipped = int(starts.size - keep.sum())
    if not keep.any():
        return WindowedRatio(1.0, int(starts.size), skipped)
    return WindowedRatio(float(np.mean(dn[keep] / dd[keep])), int(starts.size), skipped)


def local_time_ratio(c: HeartbeatSequence, q: HeartbeatSequence, spec: WindowSpec = WindowSpec()) -> WindowedRatio:
    return _windowed_ratio(c.times, q.times, spec, 0.0)


def local_hb_ratio(c: HeartbeatSequence, q: HeartbeatSequence, spec: WindowSpec = WindowSpec()) -> WindowedRatio:
    return _windowed_ratio(c.rates, q.rates, spec, RATE_EPS)


def extract(
    c: HeartbeatSequence,
    q: HeartbeatSequence,
    spec: WindowSpec = WindowSpec(),
    band: int | None = None,
    cost=similarity.DEFAULT_COST,
    boundary=similarity.DEFAULT_BOUNDARY,
) -> FeatureVector:
    """All seven features of ``c`` against reference ``q``.

    Local ratios use the first ``min(m, n)`` index-aligned samples. DTW and
    LB_Keogh compare C's rates resampled onto Q's length.
    """
    if band is None:
        band = similarity.default_band(len(q))
    aligned = similarity.stretch(c.rates, len(q))
    return FeatureVector(
        global_time_ratio=global_time_ratio(c, q),
        local_time_ratio=local_time_ratio(c, q, spec).value,
        global_hb_ratio=global_hb_ratio(c, q),
        local_hb_ratio=local_hb_ratio(c, q, spec).value,
        dtw_to_ref=similarity.dtw(q.rates, aligned, cost, band, boundary),
        lb_to_ref=similarity.lb_keogh(q.rates, aligned, band, cost, boundary),
        length_ratio=len(c) / len(q),
    )
