"""Model bundle directories.

Layout::

    manifest.json     format tag, version, methods and shared settings
    train/            HSA training traces (dataset layout)
    prototypes.csv    workload_id,trace_id
    <METHOD>.json     fitted baseline parameters, one file per baseline
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from .. import similarity
from ..core import Dataset, DatasetError, WindowSpec, load_dataset, save_dataset
from .baselines import BaselineModel, fit_baseline
from .hsa import HsaModel, fit_hsa
from .protocol import BASELINE_ORDER, HSA, _seed, feature_matrix, parse_methods

FORMAT = "pulsemark-model"
VERSION = 1


class BundleError(ValueError):
    pass


@dataclass
class ModelBundle:
    hsa: HsaModel
    baselines: dict[str, BaselineModel] = field(default_factory=dict)
    methods: list[str] = field(default_factory=lambda: [HSA])
    spec: WindowSpec = WindowSpec()
    seed: int = 0

    @property
    def expected_length(self) -> int:
        return self.hsa.expected_length


def train_bundle(dataset: Dataset, methods="HSA", seed: int = 0, spec: WindowSpec = WindowSpec(),
                 band: int | None = None, cost=similarity.DEFAULT_COST,
                 boundary=similarity.DEFAULT_BOUNDARY, k: int = 1) -> ModelBundle:
    methods = parse_methods(methods if isinstance(methods, str) else ",".join(methods))
    hsa = fit_hsa(dataset.traces, cost, band, k, boundary)
    baselines = {}
    wanted = [m for m in methods if m != HSA]
    if wanted:
        X = feature_matrix(dataset.traces, hsa.prototypes, spec, band, cost, boundary)
        y = [tr.label for tr in dataset.traces]
        for m in wanted:
            baselines[m] = fit_baseline(m, X, y, seed=_seed(seed, 0, 1, BASELINE_ORDER.index(m)))
    return ModelBundle(hsa, baselines, methods, spec, seed)


def save_bundle(bundle: ModelBundle, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    hsa = bundle.hsa
    save_dataset(Dataset(hsa.traces), path / "train")
    by_seq = {id(tr.sequence): tr.trace_id for tr in hsa.traces}
    with open(path / "prototypes.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["workload_id", "trace_id"])
        for wl in sorted(hsa.prototypes):
            writer.writerow([wl, by_seq[id(hsa.prototypes[wl])]])
    for name, model in bundle.baselines.items():
        with open(path / f"{name}.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(model.to_dict(), fh)
            fh.write("\n")
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "methods": bundle.methods,
        "seed": bundle.seed,
        "cost": hsa.cost.value,
        "boundary": hsa.boundary.value,
        "band": hsa.band,
        "k_neighbors": hsa.k_neighbors,
        "window": {"w": bundle.spec.w, "stride": bundle.spec.stride},
        "expected_length": hsa.expected_length,
    }
    with open(path / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def load_bundle(path) -> ModelBundle:
    path = Path(path)
    try:
        with open(path / "manifest.json", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise BundleError(f"{path} is not a model bundle (manifest.json missing)") from None
    if manifest.get("format") != FORMAT:
        raise BundleError(f"unexpected bundle format {manifest.get('format')!r}")
    if manifest.get("version") != VERSION:
        raise BundleError(f"unsupported bundle version {manifest.get('version')!r}")
    try:
        train = load_dataset(path / "train")
    except DatasetError as exc:
        raise BundleError(f"bad training traces: {exc}") from None
    index = train.by_id()
    prototypes = {}
    with open(path / "prototypes.csv", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            prototypes[row["workload_id"]] = index[row["trace_id"]].sequence
    hsa = HsaModel(train.traces, prototypes, similarity.CostKind(manifest["cost"]), manifest["band"],
                   manifest["k_neighbors"], similarity.Boundary(manifest["boundary"]))
    baselines = {}
    for m in manifest["methods"]:
        if m == HSA:
            continue
        with open(path / f"{m}.json", encoding="utf-8") as fh:
            baselines[m] = BaselineModel.from_dict(json.load(fh))
    spec = WindowSpec(**manifest["window"])
    return ModelBundle(hsa, baselines, manifest["methods"], spec, manifest["seed"])
