"""Repeated stratified train/test evaluation of HSA and the baselines.

Seeds: repeat ``r`` of master seed ``s`` draws its split from
``SeedSequence([s, r, 0])`` and fits baseline ``j`` (position in
``BASELINE_ORDER``) with the first word of ``SeedSequence([s, r, 1, j])``.
"""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import features as feats
from .. import similarity
from ..core import LABELS, AnomalyLabel, Dataset, LabeledTrace, WindowSpec
from .baselines import BaselineKind, fit_baseline
from .hsa import HsaModel, fit_hsa, predict_hsa
from .metrics import ConfusionMatrix, EvalReport, average_reports, metrics

log = logging.getLogger(__name__)

HSA = "HSA"
BASELINE_ORDER = ("LR", "NB", "DT", "RF")
ALL_METHODS = BASELINE_ORDER + (HSA,)
MAX_REDRAWS = 10


def parse_methods(text: str) -> list[str]:
    methods = []
    for part in text.split(","):
        name = part.strip().upper()
        if not name:
            continue
        if name not in ALL_METHODS:
            raise ValueError(f"unknown method {part!r} (valid: {', '.join(ALL_METHODS)})")
        if name not in methods:
            methods.append(name)
    if not methods:
        raise ValueError("no methods selected")
    return methods


def _seed(*words: int) -> int:
    return int(np.random.SeedSequence(list(words)).generate_state(1, dtype=np.uint64)[0])


def stratified_split(traces: list[LabeledTrace], train_fraction: float, rng: np.random.Generator):
    """Split each (workload, label) stratum, keeping >= 1 trace on each side when possible."""
    if not 0 < train_fraction < 1:
        raise ValueError(f"train fraction must be in (0, 1), got {train_fraction}")
    strata = defaultdict(list)
    for tr in sorted(traces, key=lambda t: t.trace_id):
        strata[(tr.workload_id, tr.label.value)].append(tr)
    train, test = [], []
    for key in sorted(strata):
        group = strata[key]
        n_train = int(round(train_fraction * len(group)))
        n_train = min(max(n_train, 1), max(len(group) - 1, 1))
        picked = rng.permutation(len(group))
        train.extend(group[i] for i in sorted(picked[:n_train]))
        test.extend(group[i] for i in sorted(picked[n_train:]))
    return train, test


def _labels_present(traces) -> set:
    return {tr.label for tr in traces}


def feature_matrix(traces: list[LabeledTrace], prototypes, spec: WindowSpec, band, cost, boundary) -> np.ndarray:
    rows = []
    for tr in traces:
        if tr.workload_id not in prototypes:
            raise ValueError(f"no prototype for workload {tr.workload_id!r}")
        rows.append(feats.extract(tr.sequence, prototypes[tr.workload_id], spec, band, cost, boundary).as_array())
    return np.array(rows)


@dataclass
class MethodResult:
    overall: EvalReport
    per_workload: dict[str, EvalReport]


@dataclass
class Evaluation:
    methods: list[str]
    workloads: list[str]
    results: dict[str, MethodResult] = field(default_factory=dict)

    def reports(self) -> dict[str, EvalReport]:
        return {m: self.results[m].overall for m in self.methods}

    def dominance_exceptions(self) -> list[str]:
        """Baselines whose macro-F beats HSA on this run."""
        if HSA not in self.results:
            return []
        hsa = self.results[HSA].overall.macro_f
        return [m for m in self.methods if m != HSA and self.results[m].overall.macro_f > hsa]

    def header(self) -> list[str]:
        cols = ["method"]
        for wl in self.workloads:
            cols += [f"{wl}:{lab.short}" for lab in LABELS]
        cols += [lab.short for lab in LABELS]
        cols += ["macro_f", "weighted_macro_f", "accuracy", "anomaly_recall", "repeats", "flag"]
        return cols

    def rows(self) -> list[list[str]]:
        beaten = set(self.dominance_exceptions())
        out = []
        for m in self.methods:
            res = self.results[m]
            row = [m]
            for wl in self.workloads:
                row += [f"{res.per_workload[wl].f_score[lab]:.4f}" for lab in LABELS]
            rep = res.overall
            row += [f"{rep.f_score[lab]:.4f}" for lab in LABELS]
            row += [f"{rep.macro_f:.4f}", f"{rep.weighted_macro_f:.4f}", f"{rep.accuracy:.4f}",
                    f"{rep.anomaly_recall:.4f}", str(rep.repeats), "beats_hsa" if m in beaten else ""]
            out.append(row)
        return out

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header())
            writer.writerows(self.rows())


def evaluate(
    methods,
    dataset: Dataset,
    train_fraction: float = 0.30,
    repeats: int = 3,
    seed: int = 0,
    spec: WindowSpec = WindowSpec(),
    band: int | None = None,
    cost=similarity.DEFAULT_COST,
    boundary=similarity.DEFAULT_BOUNDARY,
    k: int = 1,
) -> Evaluation:
    """Fit every method on identical splits and average the test scores over repeats."""
    methods = parse_methods(",".join(methods)) if not isinstance(methods, str) else parse_methods(methods)
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    if _labels_present(dataset.traces) != set(LABELS):
        raise ValueError("dataset must contain at least one trace per class")
    workloads = dataset.workloads
    per_method = defaultdict(list)
    per_method_wl = defaultdict(lambda: defaultdict(list))

    for r in range(repeats):
        rng = np.random.default_rng(np.random.SeedSequence([seed, r, 0]))
        for _ in range(MAX_REDRAWS):
            train, test = stratified_split(dataset.traces, train_fraction, rng)
            if _labels_present(train) == set(LABELS) and _labels_present(test) == set(LABELS):
                break
        else:
            raise ValueError(f"could not draw a split with every class on both sides in {MAX_REDRAWS} tries")

        hsa = fit_hsa(train, cost, band, k, boundary)
        predictions: dict[str, list[AnomalyLabel]] = {}
        if HSA in methods:
            predictions[HSA] = [predict_hsa(hsa, tr.sequence)[0] for tr in test]
        baselines = [m for m in methods if m != HSA]
        if baselines:
            X_train = feature_matrix(train, hsa.prototypes, spec, band, cost, boundary)
            X_test = feature_matrix(test, hsa.prototypes, spec, band, cost, boundary)
            y_train = [tr.label for tr in train]
            for m in baselines:
                model = fit_baseline(m, X_train, y_train, seed=_seed(seed, r, 1, BASELINE_ORDER.index(m)))
                predictions[m] = model.predict(X_test)

        truth = [tr.label for tr in test]
        for m in methods:
            rep = metrics(ConfusionMatrix.from_predictions(truth, predictions[m]))
            per_method[m].append(rep)
            log.info("repeat %d %s macro-F %.4f", r, m, rep.macro_f)
            for wl in workloads:
                idx = [i for i, tr in enumerate(test) if tr.workload_id == wl]
                cm = ConfusionMatrix.from_predictions([truth[i] for i in idx], [predictions[m][i] for i in idx])
                per_method_wl[m][wl].append(metrics(cm))

    evaluation = Evaluation(methods, workloads)
    for m in methods:
        evaluation.results[m] = MethodResult(
            average_reports(per_method[m]),
            {wl: average_reports(per_method_wl[m][wl]) for wl in workloads},
        )
    return evaluation

