"""DTW distance, LB_Keogh lower bound and pruned nearest-neighbour search.

Two conventions are configurable and must match between DTW and its lower
bound:

* cost kind: absolute ``|q - c|`` or squared ``(q - c)**2`` per matched pair;
* boundary: ``"free"`` leaves the origin cell D(0, 0) at zero, ``"standard"``
  charges it like every other cell.

Because the free-origin boundary never charges the first pair, the matching
LB_Keogh omits the first index as well; otherwise it would not bound DTW.
"""

from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from .core import HeartbeatSequence, LabeledTrace


class CostKind(str, enum.Enum):
    ABSOLUTE = "abs"
    SQUARED = "sq"


class Boundary(str, enum.Enum):
    FREE = "free"
    STANDARD = "standard"


DEFAULT_COST = CostKind.SQUARED
DEFAULT_BOUNDARY = Boundary.FREE

# Pruning tolerance: a candidate is skipped only when its bound clears the
# current threshold by more than float summation-order noise.
_PRUNE_RTOL = 1e-9
_PRUNE_ATOL = 1e-12


def default_band(length: int) -> int:
    return max(5, math.ceil(0.1 * length))


@numba.njit(cache=True)
def _dtw_kernel(q, c, band, squared, free_origin):
    n = q.shape[0]
    m = c.shape[0]
    inf = np.inf
    prev = np.full(m, inf)
    cur = np.full(m, inf)
    for i in range(n):
        lo = max(0, i - band)
        hi = min(m - 1, i + band)
        for j in range(m):
            cur[j] = inf
        for j in range(lo, hi + 1):
            d = q[i] - c[j]
            if squared:
                d = d * d
            else:
                d = abs(d)
            if i == 0 and j == 0:
                cur[j] = 0.0 if free_origin else d
                continue
            best = inf
            if i > 0:
                best = prev[j]
                if j > 0 and prev[j - 1] < best:
                    best = prev[j - 1]
            if j > 0 and cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = d + best
        prev, cur = cur, prev
    return prev[m - 1]


def _as_series(x) -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("series must be non-empty and one-dimensional")
    return arr


def dtw(q, c, cost=DEFAULT_COST, band: int | None = None, boundary=DEFAULT_BOUNDARY) -> float:
    """Accumulated warping cost D(n-1, m-1) between two rate series.

    ``band=None`` means unconstrained; otherwise cells with ``|i - j| > band``
    are excluded (Sakoe-Chiba band).
    """
    q, c = _as_series(q), _as_series(c)
    cost, boundary = CostKind(cost), Boundary(boundary)
    n, m = q.size, c.size
    if band is None:
        band = max(n, m)
    elif band < 0:
        raise ValueError(f"band must be >= 0, got {band}")
    elif band < abs(n - m):
        raise ValueError(f"band {band} is narrower than the length difference {abs(n - m)}")
    return float(_dtw_kernel(q, c, int(band), cost is CostKind.SQUARED, boundary is Boundary.FREE))


@dataclass(frozen=True)
class Envelope:
    upper: np.ndarray
    lower: np.ndarray
    w: int


def envelope(q, w: int) -> Envelope:
    """Running max/min of ``q`` over ``[i - w, i + w]`` clamped to the series."""
    q = _as_series(q)
    if w < 0:
        raise ValueError(f"w must be >= 0, got {w}")
    if w == 0:
        return Envelope(q.copy(), q.copy(), 0)
    span = 2 * w + 1
    hi = np.pad(q, w, constant_values=-np.inf)
    lo = np.pad(q, w, constant_values=np.inf)
    upper = np.lib.stride_tricks.sliding_window_view(hi, span).max(axis=1)
    lower = np.lib.stride_tricks.sliding_window_view(lo, span).min(axis=1)
    return Envelope(upper, lower, w)


def lb_keogh_terms(env: Envelope, c, cost=DEFAULT_COST) -> np.ndarray:
    c = _as_series(c)
    if c.size != env.upper.size:
        raise ValueError(f"length mismatch: envelope {env.upper.size} vs candidate {c.size}")
    gap = np.where(c > env.upper, c - env.upper, np.where(c < env.lower, env.lower - c, 0.0))
    return gap * gap if CostKind(cost) is CostKind.SQUARED else gap


def lb_keogh(q, c, w: int, cost=DEFAULT_COST, boundary=DEFAULT_BOUNDARY, env: Envelope | None = None) -> float:
    """LB_Keogh of candidate ``c`` against the envelope of ``q``."""
    if env is None:
        env = envelope(q, w)
    terms = lb_keogh_terms(env, c, cost)
    if Boundary(boundary) is Boundary.FREE:
        terms = terms[1:]
    return float(terms.sum())


def stretch(rates, length: int) -> np.ndarray:
    """Linearly resample a rate series onto ``length`` evenly spaced points."""
    rates = _as_series(rates)
    if rates.size == length:
        return rates
    if rates.size == 1:
        return np.full(length, rates[0])
    pos = np.linspace(0.0, rates.size - 1, length)
    return np.interp(pos, np.arange(rates.size), rates)


@dataclass(frozen=True)
class Neighbor:
    trace: LabeledTrace
    distance: float

    @property
    def key(self):
        return (self.distance, self.trace.trace_id)


@dataclass(frozen=True)
class SearchResult:
    neighbors: list[Neighbor]
    pruned_count: int

    @property
    def best(self) -> LabeledTrace:
        return self.neighbors[0].trace

    @property
    def distance(self) -> float:
        return self.neighbors[0].distance


def knn_search(
    query,
    candidates: Sequence[LabeledTrace],
    k: int = 1,
    cost=DEFAULT_COST,
    band: int | None = None,
    boundary=DEFAULT_BOUNDARY,
    prune: bool = True,
) -> SearchResult:
    """The ``k`` candidates closest to ``query`` under banded DTW.

    Candidate rates are resampled onto the query length. Candidates are
    visited in ascending LB_Keogh order and skipped once their bound exceeds
    the current k-th best distance. Equal distances rank by trace_id.
    """
    if not candidates:
        raise ValueError("empty candidate list")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    q = _as_series(query.rates if isinstance(query, HeartbeatSequence) else query)
    if band is None:
        band = default_band(q.size)
    env = envelope(q, band)
    aligned = [stretch(cand.sequence.rates, q.size) for cand in candidates]

    if prune:
        bounds = [lb_keogh(q, a, band, cost, boundary, env=env) for a in aligned]
        order = sorted(range(len(candidates)), key=lambda i: (bounds[i], candidates[i].trace_id))
    else:
        order = list(range(len(candidates)))

    top: list[tuple[float, str, int]] = []
    evaluated = 0
    for idx in order:
        if prune and len(top) == k:
            threshold = top[-1][0]
            if bounds[idx] > threshold * (1 + _PRUNE_RTOL) + _PRUNE_ATOL:
                # Remaining candidates have bounds at least this large.
                break
        d = dtw(q, aligned[idx], cost, band, boundary)
        evaluated += 1
        entry = (d, candidates[idx].trace_id, idx)
        if len(top) < k or entry < top[-1]:
            bisect.insort(top, entry)
            del top[k:]
    neighbors = [Neighbor(candidates[i], d) for d, _, i in top]
    return SearchResult(neighbors, len(candidates) - evaluated)


def nn_search(query, candidates, cost=DEFAULT_COST, band=None, boundary=DEFAULT_BOUNDARY):
    """Nearest candidate as ``(trace, distance, pruned_count)``."""
    res = knn_search(query, candidates, 1, cost, band, boundary)
    return res.best, res.distance, res.pruned_count
