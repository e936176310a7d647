from .baselines import BaselineKind, BaselineModel, fit_baseline
from .bundle import BundleError, ModelBundle, load_bundle, save_bundle, train_bundle
from .hsa import HsaModel, ModelError, fit_hsa, medoid, predict_hsa
from .metrics import ConfusionMatrix, EvalReport, average_reports, macro_f, metrics
from .protocol import ALL_METHODS, HSA, Evaluation, evaluate, parse_methods, stratified_split

__all__ = [
    "ALL_METHODS", "HSA", "BaselineKind", "BaselineModel", "BundleError", "ConfusionMatrix", "EvalReport",
    "Evaluation", "HsaModel", "ModelBundle", "ModelError", "average_reports", "evaluate", "fit_baseline",
    "fit_hsa", "load_bundle", "macro_f", "medoid", "metrics", "parse_methods", "predict_hsa",
    "save_bundle", "stratified_split", "train_bundle",
]
