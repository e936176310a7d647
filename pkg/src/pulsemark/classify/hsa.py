"""Heartbeat sequence analysis: DTW k-nearest-neighbour over raw rate series."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .. import similarity
from ..core import AnomalyLabel, HeartbeatSequence, LabeledTrace
from ..similarity import Boundary, CostKind


class ModelError(ValueError):
    pass


@dataclass
class HsaModel:
    traces: list[LabeledTrace]
    prototypes: dict[str, HeartbeatSequence]
    cost: CostKind = similarity.DEFAULT_COST
    band: int | None = None
    k_neighbors: int = 1
    boundary: Boundary = similarity.DEFAULT_BOUNDARY

    def __post_init__(self):
        if self.k_neighbors < 1 or self.k_neighbors % 2 == 0:
            raise ModelError(f"k_neighbors must be odd and >= 1, got {self.k_neighbors}")
        missing = {t.workload_id for t in self.traces} - set(self.prototypes)
        if missing:
            raise ModelError(f"no healthy prototype for workload(s): {', '.join(sorted(missing))}")

    @property
    def expected_length(self) -> int:
        """Median length of the prototypes (length online windows are resampled to)."""
        return int(np.median([len(p) for p in self.prototypes.values()]))


def _pair_dtw(a: HeartbeatSequence, b: HeartbeatSequence, cost, band, boundary) -> float:
    other = similarity.stretch(b.rates, len(a))
    w = similarity.default_band(len(a)) if band is None else band
    return similarity.dtw(a.rates, other, cost, w, boundary)


def medoid(traces: list[LabeledTrace], cost=similarity.DEFAULT_COST, band=None,
           boundary=similarity.DEFAULT_BOUNDARY) -> LabeledTrace:
    """Trace with the smallest summed banded DTW to the others; ties by trace_id."""
    traces = sorted(traces, key=lambda t: t.trace_id)
    if len(traces) == 1:
        return traces[0]
    best, best_cost = None, np.inf
    for a in traces:
        total = sum(_pair_dtw(a.sequence, b.sequence, cost, band, boundary) for b in traces if b is not a)
        if total < best_cost:
            best, best_cost = a, total
    return best


def fit_hsa(train: list[LabeledTrace], cost=similarity.DEFAULT_COST, band: int | None = None, k: int = 1,
            boundary=similarity.DEFAULT_BOUNDARY) -> HsaModel:
    if not train:
        raise ModelError("empty training set")
    cost, boundary = CostKind(cost), Boundary(boundary)
    healthy = defaultdict(list)
    for tr in train:
        if tr.label is AnomalyLabel.NORMAL:
            healthy[tr.workload_id].append(tr)
    prototypes = {}
    for workload in sorted({tr.workload_id for tr in train}):
        if not healthy[workload]:
            raise ModelError(f"workload {workload!r} has no normal training traces")
        prototypes[workload] = medoid(healthy[workload], cost, band, boundary).sequence
    return HsaModel(list(train), prototypes, cost, band, k, boundary)


def vote(neighbors: list[similarity.Neighbor]) -> AnomalyLabel:
    """Majority label; ties by smallest mean distance, then label name."""
    groups = defaultdict(list)
    for nb in neighbors:
        groups[nb.trace.label].append(nb.distance)
    return min(groups, key=lambda lab: (-len(groups[lab]), float(np.mean(groups[lab])), lab.value))


def predict_hsa(model: HsaModel, query, prune: bool = True) -> tuple[AnomalyLabel, float]:
    res = similarity.knn_search(query, model.traces, model.k_neighbors, model.cost, model.band,
                                model.boundary, prune=prune)
    return vote(res.neighbors), res.distance
