"""
Boosted trees

Gradient-boosted decision trees for binary classification, written out in numpy:
second-order logistic boosting with exact greedy split finding, learned default
directions for missing values, L1/L2 leaf regularization, class weighting and
seeded row/column subsampling. Also a seeded random search over the
hyperparameter space.
"""
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from models.errors import (ConfigError, CtdrError, DataError, DatasetIOError, DegenerateLabels,
                           DimensionMismatch, SchemaVersionMismatch)
from models.features import TabularMatrix
from models.metrics import auc_roc

logger = logging.getLogger(__name__)

MODEL_FORMAT = 'ctdr-boosted-trees'
MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    n_estimators: int = 100
    max_depth: int = 6
    learning_rate: float = 0.3
    subsample: float = 1.0
    colsample_bytree: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0
    max_delta_step: float = 0.0
    reg_alpha: float = 0.0
    reg_lambda: float = 1.0
    scale_pos_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 0 or self.max_depth < 0:
            raise ConfigError('n_estimators and max_depth must be non-negative')
        if not (0 < self.subsample <= 1 and 0 < self.colsample_bytree <= 1):
            raise ConfigError('subsample and colsample_bytree must lie in (0, 1]')
        if min(self.gamma, self.min_child_weight, self.max_delta_step, self.reg_alpha, self.reg_lambda) < 0:
            raise ConfigError('regularization parameters must be non-negative')
        if self.learning_rate <= 0 or self.scale_pos_weight <= 0:
            raise ConfigError('learning_rate and scale_pos_weight must be positive')

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Dict[str, float]) -> 'TrainConfig':
        names = {f.name for f in fields(cls)}
        return cls(**{key: value for key, value in values.items() if key in names})


@dataclass(frozen=True)
class Leaf:
    weight: float


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    default_left: bool
    left: 'Node'
    right: 'Node'


Node = Union[Leaf, Split]


def _node_to_dict(node: Node) -> dict:
    if isinstance(node, Leaf):
        return {'leaf': node.weight}
    return {
        'feature': node.feature,
        'threshold': node.threshold,
        'default': 'left' if node.default_left else 'right',
        'left': _node_to_dict(node.left),
        'right': _node_to_dict(node.right),
    }


def _node_from_dict(payload: dict) -> Node:
    if 'leaf' in payload:
        return Leaf(float(payload['leaf']))
    return Split(
        feature=int(payload['feature']),
        threshold=float(payload['threshold']),
        default_left=payload['default'] == 'left',
        left=_node_from_dict(payload['left']),
        right=_node_from_dict(payload['right']),
    )


def _route(node: Node, X: np.ndarray) -> np.ndarray:
    """Leaf weight reached by every row of X."""
    out = np.empty(X.shape[0])
    stack = [(node, np.arange(X.shape[0]))]
    while stack:
        current, rows = stack.pop()
        if isinstance(current, Leaf):
            out[rows] = current.weight
            continue
        values = X[rows, current.feature]
        go_left = np.where(np.isnan(values), current.default_left, values < current.threshold)
        stack.append((current.left, rows[go_left]))
        stack.append((current.right, rows[~go_left]))
    return out


@dataclass(frozen=True)
class Ensemble:
    """Trained boosted-tree model; leaf weights are scaled by learning_rate at prediction."""
    base_score: float
    learning_rate: float
    trees: Tuple[Node, ...] = ()
    feature_names: Tuple[str, ...] = ()
    config: Optional[TrainConfig] = None

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def to_json(self) -> str:
        payload = {
            'format': MODEL_FORMAT,
            'version': MODEL_VERSION,
            'base_score': self.base_score,
            'learning_rate': self.learning_rate,
            'feature_names': list(self.feature_names),
            'config': self.config.to_dict() if self.config else None,
            'trees': [_node_to_dict(tree) for tree in self.trees],
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> 'Ensemble':
        payload = json.loads(text)
        if payload.get('format') != MODEL_FORMAT or payload.get('version') != MODEL_VERSION:
            raise SchemaVersionMismatch('not a boosted-tree model file of the supported version')
        return cls(
            base_score=float(payload['base_score']),
            learning_rate=float(payload['learning_rate']),
            trees=tuple(_node_from_dict(tree) for tree in payload['trees']),
            feature_names=tuple(payload['feature_names']),
            config=TrainConfig.from_dict(payload['config']) if payload.get('config') else None,
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + '\n', encoding='utf-8')

    @classmethod
    def load(cls, path) -> 'Ensemble':
        try:
            return cls.from_json(Path(path).read_text(encoding='utf-8'))
        except (OSError, ValueError, KeyError) as exc:
            raise DatasetIOError(f'cannot read model {path}: {exc}') from None


def _sigmoid(margin: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * margin))


def _soft_threshold(G, alpha: float):
    if alpha == 0:
        return G
    return np.sign(G) * np.maximum(np.abs(G) - alpha, 0.0)


def _matrix(X) -> Tuple[np.ndarray, Tuple[str, ...]]:
    if isinstance(X, TabularMatrix):
        return np.asarray(X.values, dtype=np.float64), tuple(X.column_names)
    values = np.asarray(X, dtype=np.float64)
    if values.ndim != 2:
        raise DimensionMismatch('expected a two-dimensional feature matrix')
    return values, tuple(f'f{j:04d}' for j in range(values.shape[1]))


def _ranks(keys: Sequence[str]) -> np.ndarray:
    order = sorted(range(len(keys)), key=lambda i: keys[i])
    ranks = np.empty(len(keys), dtype=np.int64)
    ranks[order] = np.arange(len(keys))
    return ranks


def _sample(uniforms: np.ndarray, ranks: np.ndarray, rate: float) -> np.ndarray:
    """Indices whose rank-keyed uniform is among the ceil(rate * n) smallest."""
    n = len(ranks)
    if rate >= 1.0:
        return np.arange(n)
    keep = max(1, math.ceil(rate * n))
    keyed = uniforms[ranks]
    chosen = np.argsort(keyed, kind='stable')[:keep]
    return np.sort(chosen)


class _TreeGrower:
    """Exact greedy growth of one regression tree on gradients and hessians."""

    def __init__(self, X: np.ndarray, g: np.ndarray, h: np.ndarray, columns: np.ndarray, cfg: TrainConfig):
        self.X = X
        self.g = g
        self.h = h
        self.columns = columns  # candidate columns in tie-break order
        self.cfg = cfg

    def score(self, G, H):
        return _soft_threshold(G, self.cfg.reg_alpha) ** 2 / (H + self.cfg.reg_lambda)

    def leaf_weight(self, G: float, H: float) -> float:
        weight = -float(_soft_threshold(G, self.cfg.reg_alpha)) / (H + self.cfg.reg_lambda)
        if self.cfg.max_delta_step > 0:
            weight = float(np.clip(weight, -self.cfg.max_delta_step, self.cfg.max_delta_step))
        return weight

    def grow(self, rows: np.ndarray, depth: int = 0) -> Node:
        G, H = float(self.g[rows].sum()), float(self.h[rows].sum())
        if depth >= self.cfg.max_depth or len(rows) < 2:
            return Leaf(self.leaf_weight(G, H))

        best = self.best_split(rows, G, H)
        if best is None:
            return Leaf(self.leaf_weight(G, H))

        feature, threshold, default_left = best
        values = self.X[rows, feature]
        go_left = np.where(np.isnan(values), default_left, values < threshold)
        return Split(
            feature=int(feature),
            threshold=float(threshold),
            default_left=bool(default_left),
            left=self.grow(rows[go_left], depth + 1),
            right=self.grow(rows[~go_left], depth + 1),
        )

    def best_split(self, rows: np.ndarray, G: float, H: float) -> Optional[Tuple[int, float, bool]]:
        cfg = self.cfg
        parent = self.score(G, H)
        best_gain, best = 0.0, None

        for feature in self.columns:
            values = self.X[rows, feature]
            missing = np.isnan(values)
            g_miss, h_miss = self.g[rows][missing].sum(), self.h[rows][missing].sum()

            present = ~missing
            x = values[present]
            if len(x) < 2:
                continue
            order = np.argsort(x, kind='stable')
            xs = x[order]
            boundaries = np.flatnonzero(xs[:-1] < xs[1:])
            if boundaries.size == 0:
                continue

            cum_g = np.cumsum(self.g[rows][present][order])
            cum_h = np.cumsum(self.h[rows][present][order])
            GL, HL = cum_g[boundaries], cum_h[boundaries]
            GR, HR = cum_g[-1] - GL, cum_h[-1] - HL

            # column 0: missing rows go left, column 1: right
            gains = np.full((boundaries.size, 2), -np.inf)
            for side, (gl, hl, gr, hr) in enumerate((
                    (GL + g_miss, HL + h_miss, GR, HR),
                    (GL, HL, GR + g_miss, HR + h_miss))):
                valid = (hl >= cfg.min_child_weight) & (hr >= cfg.min_child_weight)
                gain = 0.5 * (self.score(gl, hl) + self.score(gr, hr) - parent) - cfg.gamma
                gains[:, side] = np.where(valid, gain, -np.inf)

            flat = int(np.argmax(gains))
            gain = gains.flat[flat]
            if gain > best_gain:
                position, side = divmod(flat, 2)
                lo, hi = xs[boundaries[position]], xs[boundaries[position] + 1]
                threshold = lo + (hi - lo) / 2
                if threshold <= lo:
                    threshold = hi
                best_gain, best = gain, (feature, threshold, side == 0)
        return best


def _check_labels(y, n_rows: int) -> np.ndarray:
    labels = np.asarray(y, dtype=np.float64).ravel()
    if labels.shape[0] != n_rows:
        raise DimensionMismatch(f'{n_rows} rows but {labels.shape[0]} labels')
    if labels.size == 0 or labels.min() == labels.max():
        raise DegenerateLabels('training labels contain a single class')
    return labels


def train(X, y, cfg: TrainConfig = TrainConfig(), row_ids: Optional[Sequence[str]] = None) -> Ensemble:
    """Fit a boosted-tree ensemble with the logistic loss.

    Args:
        X: TabularMatrix or 2-D array; NaN marks missing cells
        y: Binary labels aligned with the rows of X
        cfg: Hyperparameters
        row_ids: Stable row keys for subsampling (defaults to the matrix row
            ids, or row positions for a bare array)

    Returns:
        Ensemble: trained model

    Raises:
        DegenerateLabels: y holds a single class
        DimensionMismatch: X and y disagree in length
    """
    if row_ids is None and isinstance(X, TabularMatrix):
        row_ids = X.row_ids
    values, names = _matrix(X)
    labels = _check_labels(y, values.shape[0])
    n_rows, n_cols = values.shape
    row_keys = list(row_ids) if row_ids is not None else [f'{i:012d}' for i in range(n_rows)]
    row_ranks = _ranks(row_keys)
    col_ranks = _ranks(list(names))
    col_order = np.argsort(col_ranks)

    prevalence = labels.mean()
    base_score = float(math.log(prevalence / (1 - prevalence)))
    weights = np.where(labels == 1, cfg.scale_pos_weight, 1.0)
    margin = np.full(n_rows, base_score)

    trees = []
    for round_index in range(cfg.n_estimators):
        rng = np.random.default_rng([cfg.seed, round_index])
        row_uniforms = rng.random(n_rows)
        col_uniforms = rng.random(n_cols)

        p = _sigmoid(margin)
        g = (p - labels) * weights
        h = p * (1 - p) * weights

        rows = _sample(row_uniforms, row_ranks, cfg.subsample)
        chosen = set(_sample(col_uniforms, col_ranks, cfg.colsample_bytree).tolist())
        columns = np.array([j for j in col_order if j in chosen], dtype=np.int64)

        tree = _TreeGrower(values, g, h, columns, cfg).grow(rows)
        trees.append(tree)
        margin = margin + cfg.learning_rate * _route(tree, values)

    logger.debug("trained %d trees on %d rows x %d columns", len(trees), n_rows, n_cols)
    return Ensemble(base_score=base_score, learning_rate=cfg.learning_rate, trees=tuple(trees),
                    feature_names=names, config=cfg)


def _prediction_matrix(model: Ensemble, X) -> np.ndarray:
    values, names = _matrix(X)
    if values.shape[1] != model.n_features:
        raise DimensionMismatch(f'model expects {model.n_features} columns, got {values.shape[1]}')
    if isinstance(X, TabularMatrix) and names != model.feature_names:
        raise DimensionMismatch('column layout differs from the training layout')
    return values


def staged_margins(model: Ensemble, X) -> Iterator[np.ndarray]:
    """Raw margins after each boosting round, starting with the prior."""
    values = _prediction_matrix(model, X)
    margin = np.full(values.shape[0], model.base_score)
    yield margin.copy()
    for tree in model.trees:
        margin = margin + model.learning_rate * _route(tree, values)
        yield margin.copy()


def predict_proba(model: Ensemble, X) -> np.ndarray:
    """Positive-class probability of every row.

    Raises:
        DimensionMismatch: X does not have the training column layout
    """
    values = _prediction_matrix(model, X)
    margin = np.full(values.shape[0], model.base_score)
    for tree in model.trees:
        margin += model.learning_rate * _route(tree, values)
    return _sigmoid(margin)


@dataclass(frozen=True)
class ParamRange:
    low: float
    high: float
    log: bool = False
    integer: bool = False

    def draw(self, rng: np.random.Generator):
        if self.integer:
            value = int(rng.integers(int(self.low), int(self.high) + 1))
            return value
        if self.log:
            u = rng.uniform(math.log(self.low), math.log(self.high))
            return self.low if self.low == self.high else float(math.exp(u))
        u = rng.uniform(self.low, self.high)
        return self.low if self.low == self.high else float(u)


SEARCH_ORDER = ('n_estimators', 'max_depth', 'learning_rate', 'subsample', 'colsample_bytree', 'gamma',
                'min_child_weight', 'max_delta_step', 'reg_alpha', 'reg_lambda', 'scale_pos_weight')


@dataclass(frozen=True)
class SearchSpace:
    """Hyperparameter ranges; scale_pos_weight is relative to the class ratio w."""
    ranges: Dict[str, ParamRange] = field(default_factory=dict)

    @classmethod
    def from_settings(cls, settings, class_ratio: float) -> 'SearchSpace':
        """Build from the ``search.*`` settings and the training #neg/#pos ratio."""
        log_scaled = {'learning_rate', 'reg_alpha', 'reg_lambda'}
        integer = {'n_estimators', 'max_depth'}
        ranges = {}
        for name in SEARCH_ORDER[:-1]:
            ranges[name] = ParamRange(getattr(settings, f'{name}_min'), getattr(settings, f'{name}_max'),
                                      log=name in log_scaled, integer=name in integer)
        ranges['scale_pos_weight'] = ParamRange(settings.scale_pos_weight_low * class_ratio,
                                                settings.scale_pos_weight_high * class_ratio)
        return cls(ranges)

    def sample(self, rng: np.random.Generator, seed: int) -> TrainConfig:
        values = {name: self.ranges[name].draw(rng) for name in SEARCH_ORDER if name in self.ranges}
        return TrainConfig(seed=seed, **values)


def class_ratio(y) -> float:
    """#negatives / #positives of a label vector."""
    labels = np.asarray(y).astype(bool)
    positives = int(labels.sum())
    if positives == 0 or positives == labels.size:
        raise DegenerateLabels('class ratio needs both classes')
    return (labels.size - positives) / positives


@dataclass(frozen=True)
class TrialResult:
    index: int
    config: TrainConfig
    score: Optional[float] = None
    error: Optional[str] = None


def random_search(space: SearchSpace, trials: int, seed: int, X_train, y_train, X_val, y_val
                  ) -> Tuple[TrainConfig, List[TrialResult]]:
    """Seeded random search scored by validation AUC.

    Configurations are drawn from a PCG64 generator seeded with ``seed``; a
    trial whose training fails is kept in the trace with its error.

    Returns:
        (best TrainConfig, trace): the first configuration with the highest score
    """
    if trials < 1:
        raise ConfigError('random search needs at least one trial')
    rng = np.random.Generator(np.random.PCG64(seed))
    trace: List[TrialResult] = []
    best: Optional[TrialResult] = None

    for index in range(trials):
        cfg = space.sample(rng, seed)
        try:
            model = train(X_train, y_train, cfg)
            score = auc_roc(predict_proba(model, X_val), y_val)
        except CtdrError as exc:
            logger.warning("search trial %d failed: %s", index, exc)
            trace.append(TrialResult(index, cfg, error=str(exc)))
            continue
        result = TrialResult(index, cfg, score=score)
        trace.append(result)
        logger.info("search trial %d: validation AUC %.4f", index, score)
        if best is None or score > best.score:
            best = result

    if best is None:
        raise DataError(f'all {trials} search trials failed; last error: {trace[-1].error}')
    return best.config, trace


def save_trace(trace: Sequence[TrialResult], path) -> None:
    names = [f.name for f in fields(TrainConfig)]
    lines = ['\t'.join(['trial'] + names + ['val_auc', 'error'])]
    for result in trace:
        config = result.config.to_dict()
        cells = [str(result.index)] + [repr(config[name]) for name in names]
        cells.append('' if result.score is None else repr(result.score))
        cells.append(result.error or '')
        lines.append('\t'.join(cells))
    Path(path).write_text('\n'.join(lines) + '\n', encoding='utf-8')
