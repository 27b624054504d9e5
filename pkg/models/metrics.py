"""
Fusion and Evaluation Metrics

Late fusion of the tabular and text probabilities, the classification metric
suite and F1-maximizing threshold selection. Thresholds and fusion weights are
always chosen on the validation split and reused unchanged on test.
"""
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from models.errors import ConfigError, EmptyInput, LengthMismatch, NonFinite, SingleClass

METRIC_COLUMNS = ('auc', 'brier', 'f1', 'f1_macro', 'recall', 'precision', 'balanced_accuracy', 'accuracy')


def _aligned(p, y) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(p, dtype=np.float64).ravel()
    labels = np.asarray(y).astype(bool).ravel()
    if scores.shape != labels.shape:
        raise LengthMismatch(f'{scores.size} scores but {labels.size} labels')
    if scores.size == 0:
        raise EmptyInput('no scores to evaluate')
    if not np.all(np.isfinite(scores)):
        raise NonFinite('scores contain NaN or infinite values')
    return scores, labels


def auc_roc(p, y) -> float:
    """Area under the ROC curve as the Mann-Whitney statistic, ties counting one half.

    Raises:
        SingleClass: y contains only one class
    """
    scores, labels = _aligned(p, y)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass('AUC needs both classes')
    ranks = rankdata(scores)  # average ranks for ties
    u_statistic = ranks[labels].sum() - n_pos * (n_pos + 1) / 2
    return float(u_statistic / (n_pos * n_neg))


def brier(p, y) -> float:
    """Mean squared difference between probabilities and outcomes."""
    scores, labels = _aligned(p, y)
    return float(np.mean((scores - labels) ** 2))


def fuse(p1, p2, w: float) -> np.ndarray:
    """Convex combination w * p1 + (1 - w) * p2.

    >>> fuse([0.5], [0.25], 0.6)
    array([0.4])
    """
    first = np.asarray(p1, dtype=np.float64)
    second = np.asarray(p2, dtype=np.float64)
    if first.shape != second.shape:
        raise LengthMismatch(f'fusion inputs of length {first.size} and {second.size}')
    if not 0 <= w <= 1:
        raise ConfigError(f'fusion weight {w} outside [0, 1]')
    if w == 1:
        return first.copy()
    if w == 0:
        return second.copy()
    return second + w * (first - second)


def weight_grid(grid_step: float) -> List[float]:
    """{0, step, 2*step, ...} up to 1, with 1 always included."""
    if not 0 < grid_step <= 0.5:
        raise ConfigError('grid_step must lie in (0, 0.5]')
    step = Fraction(str(grid_step))
    count = math.floor(1 / step)
    grid = [float(k * step) for k in range(count + 1)]
    if grid[-1] != 1.0:
        grid.append(1.0)
    return grid


@dataclass
class FusionWeight:
    w: float
    trace: List[Tuple[float, float]] = field(default_factory=list)
    fitted_on: str = ''

    def save(self, path) -> None:
        payload = {'w': self.w, 'fitted_on': self.fitted_on, 'trace': [list(item) for item in self.trace]}
        Path(path).write_text(json.dumps(payload, sort_keys=True) + '\n', encoding='utf-8')

    @classmethod
    def load(cls, path) -> 'FusionWeight':
        payload = json.loads(Path(path).read_text(encoding='utf-8'))
        return cls(w=payload['w'], trace=[tuple(item) for item in payload['trace']],
                   fitted_on=payload.get('fitted_on', ''))


def optimize_weight(p1_val, p2_val, y_val, grid_step: float = 0.001) -> FusionWeight:
    """Grid search of the fusion weight maximizing validation AUC; ties go to the smallest w."""
    first = np.asarray(p1_val, dtype=np.float64)
    second = np.asarray(p2_val, dtype=np.float64)
    if first.shape != second.shape:
        raise LengthMismatch(f'fusion inputs of length {first.size} and {second.size}')

    trace = []
    best_w, best_auc = None, -math.inf
    for w in weight_grid(grid_step):
        score = auc_roc(fuse(first, second, w), y_val)
        trace.append((w, score))
        if score > best_auc:
            best_w, best_auc = w, score
    return FusionWeight(w=best_w, trace=trace)


def select_threshold_max_f1(p_val, y_val) -> float:
    """Threshold among the distinct validation scores that maximizes F1 under p >= t.

    Ties go to the smallest threshold.

    Raises:
        SingleClass: y contains only one class
    """
    scores, labels = _aligned(p_val, y_val)
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise SingleClass('threshold selection needs both classes')

    order = np.argsort(-scores, kind='stable')
    descending = scores[order]
    cum_pos = np.cumsum(labels[order])
    candidates = np.unique(scores)
    # number of scores >= each candidate
    predicted = np.searchsorted(-descending, -candidates, side='right')
    tp = cum_pos[predicted - 1]
    fp = predicted - tp
    fn = n_pos - tp
    f1 = 2 * tp / (2 * tp + fp + fn)
    return float(candidates[int(np.argmax(f1))])


@dataclass(frozen=True)
class ConfusionMetrics:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    f1_macro: float
    balanced_accuracy: float
    accuracy: float


def _ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator else 0.0


def metrics_from_counts(tp: int, fp: int, fn: int, tn: int) -> ConfusionMetrics:
    """Threshold metrics from confusion counts; an undefined ratio is 0."""
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = _ratio(2 * precision * recall, precision + recall)
    neg_precision = _ratio(tn, tn + fn)
    specificity = _ratio(tn, tn + fp)
    neg_f1 = _ratio(2 * neg_precision * specificity, neg_precision + specificity)
    return ConfusionMetrics(
        tp=tp, fp=fp, fn=fn, tn=tn,
        precision=precision,
        recall=recall,
        f1=f1,
        f1_macro=(f1 + neg_f1) / 2,
        balanced_accuracy=(recall + specificity) / 2,
        accuracy=_ratio(tp + tn, tp + fp + fn + tn),
    )


def confusion_metrics(p, y, t: float) -> ConfusionMetrics:
    scores, labels = _aligned(p, y)
    if not math.isfinite(t):
        raise NonFinite('threshold must be finite')
    predicted = scores >= t
    tp = int(np.sum(predicted & labels))
    fp = int(np.sum(predicted & ~labels))
    fn = int(np.sum(~predicted & labels))
    tn = int(np.sum(~predicted & ~labels))
    return metrics_from_counts(tp, fp, fn, tn)


@dataclass(frozen=True)
class MetricsReport:
    """One row of the evaluation table."""
    variant: str
    split: str
    threshold: float
    auc: float
    brier: float
    f1: float
    f1_macro: float
    recall: float
    precision: float
    balanced_accuracy: float
    accuracy: float
    n: int = 0
    positives: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_predictions(p, y, threshold: float, variant: str, split: str) -> MetricsReport:
    """Full metric suite of one probability vector at a fixed threshold."""
    counts = confusion_metrics(p, y, threshold)
    labels = np.asarray(y).astype(bool)
    return MetricsReport(
        variant=variant, split=split, threshold=float(threshold),
        auc=auc_roc(p, y), brier=brier(p, y),
        f1=counts.f1, f1_macro=counts.f1_macro, recall=counts.recall, precision=counts.precision,
        balanced_accuracy=counts.balanced_accuracy, accuracy=counts.accuracy,
        n=int(labels.size), positives=int(labels.sum()),
    )


def write_metrics(reports: Sequence[MetricsReport], tsv_path, json_path: Optional[str] = None) -> None:
    """Write reports as a tab-separated table (and optionally JSON)."""
    header = ['variant', 'split', 'n', 'positives', 'threshold'] + list(METRIC_COLUMNS)
    lines = ['\t'.join(header)]
    for report in reports:
        values = report.to_dict()
        cells = [report.variant, report.split, str(report.n), str(report.positives)]
        cells.extend(f'{values[name]:.6f}' for name in header[4:])
        lines.append('\t'.join(cells))
    Path(tsv_path).write_text('\n'.join(lines) + '\n', encoding='utf-8')
    if json_path is not None:
        payload = [report.to_dict() for report in reports]
        Path(json_path).write_text(json.dumps(payload, indent=2, sort_keys=True) + '\n', encoding='utf-8')
