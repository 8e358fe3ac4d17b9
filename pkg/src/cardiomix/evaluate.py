"""Confusion-matrix metrics, AUROC, stratified k-fold CV and reports."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import UndefinedMetricError, UsageError
from .model import ModelSpec, TrainConfig, predict_proba, train_arrays
from .rng import derive_seed, make_rng

METRICS = ("acc", "prec", "npv", "sens", "spec", "f1", "auroc", "kappa")
# column headers of the printed table, in METRICS order
HEADERS = ("ACC", "Prec", "NPV", "Rec", "Spec", "F1", "AUROC", "Cohen")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise UsageError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class ScoredPrediction:
    id: str
    score: float
    predicted: int
    true: int


def confusion(preds, positive_class: int = 1) -> ConfusionMatrix:
    if not preds:
        raise UsageError("no predictions")
    tp = fp = tn = fn = 0
    for p in preds:
        pos_pred = p.predicted == positive_class
        pos_true = p.true == positive_class
        if pos_pred and pos_true:
            tp += 1
        elif pos_pred:
            fp += 1
        elif pos_true:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, tn, fn)


def _ratio(num, den):
    return Fraction(num, den) if den else None


def exact_metrics(cm: ConfusionMatrix) -> dict:
    """Metrics as Fractions; None where a denominator is zero."""
    if cm.total == 0:
        raise UndefinedMetricError("all-zero confusion matrix")
    tp, fp, tn, fn, n = cm.tp, cm.fp, cm.tn, cm.fn, cm.total
    p_o = Fraction(tp + tn, n)
    p_e = Fraction((tp + fp) * (tp + fn) + (tn + fn) * (tn + fp), n * n)
    return {
        "acc": p_o,
        "prec": _ratio(tp, tp + fp),
        "npv": _ratio(tn, tn + fn),
        "sens": _ratio(tp, tp + fn),
        "spec": _ratio(tn, tn + fp),
        "f1": _ratio(2 * tp, 2 * tp + fp + fn),
        "kappa": (p_o - p_e) / (1 - p_e) if p_e != 1 else None,
    }


def metrics(cm: ConfusionMatrix) -> dict:
    """Acc, Prec, NPV, Sens, Spec, F1 and Cohen's kappa; NaN when undefined."""
    return {k: (math.nan if v is None else float(v)) for k, v in exact_metrics(cm).items()}


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    ranks = np.empty(len(values))
    start = 0
    n = len(values)
    while start < n:
        stop = start + 1
        while stop < n and sorted_vals[stop] == sorted_vals[start]:
            stop += 1
        ranks[order[start:stop]] = 0.5 * (start + stop + 1)
        start = stop
    return ranks


def auroc(preds, positive_class: int = 1) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), from the rank-sum statistic."""
    scores = np.array([p.score for p in preds], dtype=np.float64)
    pos = np.array([p.true == positive_class for p in preds])
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs at least one positive and one negative")
    ranks = _midranks(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_points(preds, positive_class: int = 1):
    """(fpr, tpr) arrays of the ROC staircase, thresholds swept high to low."""
    scores = np.array([p.score for p in preds], dtype=np.float64)
    pos = np.array([p.true == positive_class for p in preds])
    order = np.argsort(-scores, kind="mergesort")
    scores, pos = scores[order], pos[order]
    cut = np.r_[np.flatnonzero(np.diff(scores)), len(scores) - 1]
    tps = np.cumsum(pos)[cut]
    fps = np.cumsum(~pos)[cut]
    tpr = np.r_[0.0, tps / max(pos.sum(), 1)]
    fpr = np.r_[0.0, fps / max((~pos).sum(), 1)]
    return fpr, tpr


# ------------------------------------------------------------- k-fold CV


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def stratified_kfold(classes, k: int, seed: int) -> FoldPlan:
    """Per-class seeded shuffle, then round-robin assignment to folds.

    ``classes`` is a Dataset or a sequence of integer class labels.
    """
    if hasattr(classes, "classes"):
        classes = classes.classes()
    classes = np.asarray(classes)
    if k < 2:
        raise UsageError("k must be >= 2")
    assignments = np.full(len(classes), -1, dtype=np.int64)
    for c in np.unique(classes):
        members = np.flatnonzero(classes == c)
        if len(members) < k:
            raise UsageError(f"class {c} has {len(members)} examples, fewer than k={k} folds")
        shuffled = make_rng(seed, "folds", int(c)).permutation(members)
        assignments[shuffled] = np.arange(len(shuffled)) % k
    return FoldPlan(k, assignments, seed)


@dataclass
class MetricsReport:
    folds: list
    name: str = "model"
    predictions: list = field(default_factory=list)

    def values(self, metric: str) -> np.ndarray:
        return np.array([f[metric] for f in self.folds], dtype=np.float64)

    def mean(self, metric: str) -> float:
        v = self.values(metric)
        v = v[~np.isnan(v)]
        return float(v.mean()) if len(v) else math.nan

    def std(self, metric: str) -> float:
        """Population standard deviation over folds where the metric is defined."""
        v = self.values(metric)
        v = v[~np.isnan(v)]
        return float(v.std()) if len(v) else math.nan

    def undefined(self) -> dict:
        return {m: int(np.isnan(self.values(m)).sum()) for m in METRICS if np.isnan(self.values(m)).any()}

    def cell(self, metric: str) -> str:
        mean, std = self.mean(metric), self.std(metric)
        if math.isnan(mean):
            return "n/a"
        return f"{100 * mean:.2f} ({100 * std:.2f})"

    def render_table(self) -> str:
        """Percent ``mean (std)`` cells in the column order of the result tables."""
        cells = [self.cell(m) for m in METRICS]
        width = max([len(self.name), len("Models")])
        colw = [max(len(h), len(c)) for h, c in zip(HEADERS, cells)]
        head = "  ".join(["Models".ljust(width)] + [h.ljust(w) for h, w in zip(HEADERS, colw)])
        row = "  ".join([self.name.ljust(width)] + [c.ljust(w) for c, w in zip(cells, colw)])
        lines = [head.rstrip(), row.rstrip()]
        undefined = self.undefined()
        if undefined:
            flags = ", ".join(f"{m} undefined in {n} fold(s)" for m, n in undefined.items())
            lines.append(f"note: {flags}; excluded from mean/std")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["fold," + ",".join(METRICS)]
        for i, f in enumerate(self.folds):
            lines.append(f"{i}," + ",".join(repr(float(f[m])) for m in METRICS))
        return "\n".join(lines) + "\n"

    def roc_csv(self) -> str:
        fpr, tpr = roc_points(self.predictions)
        return "fpr,tpr\n" + "".join(f"{a!r},{b!r}\n" for a, b in zip(fpr, tpr))


def score_predictions(probs: np.ndarray, ids, true, positive_class: int = 1) -> list:
    preds = []
    for pid, p, t in zip(ids, probs, true):
        preds.append(ScoredPrediction(pid, float(p[positive_class]), int(np.argmax(p)), int(t)))
    return preds


def fold_metrics(preds, positive_class: int = 1) -> dict:
    out = metrics(confusion(preds, positive_class))
    try:
        out["auroc"] = auroc(preds, positive_class)
    except UndefinedMetricError:
        out["auroc"] = math.nan
    return out


def run_cv(
    dataset,
    model_spec: ModelSpec,
    train_config: TrainConfig,
    k: int = 10,
    threads: int = 1,
    name: Optional[str] = None,
    positive_class: int = 1,
) -> MetricsReport:
    """Train on k-1 folds, score the held-out fold, for every fold."""
    plan = stratified_kfold(dataset, k, train_config.seed)
    X, Y = dataset.images(), dataset.labels()
    classes = dataset.classes()
    ids = [ex.id for ex in dataset.examples]

    def run_fold(f):
        tr, te = plan.train_indices(f), plan.test_indices(f)
        cfg = _with_seed(train_config, derive_seed(train_config.seed, "fold", f))
        params, _ = train_arrays(X[tr], Y[tr], model_spec, cfg)
        probs = predict_proba(params, X[te])
        preds = score_predictions(probs, [ids[i] for i in te], classes[te], positive_class)
        return fold_metrics(preds, positive_class), preds

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_fold, range(k)))
    else:
        results = [run_fold(f) for f in range(k)]
    preds = [p for _, fold_preds in results for p in fold_preds]
    return MetricsReport([m for m, _ in results], name or model_spec.arch, preds)


def _with_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    mix = cfg.mix
    if mix is not None:
        mix = replace(mix, seed=seed)
    return replace(cfg, seed=seed, mix=mix)
