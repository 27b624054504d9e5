"""
Linear text model

L2-regularized, class-weighted logistic regression over hashed tf-idf rows,
fitted by full-batch L-BFGS-B. The intercept is not regularized.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.optimize import minimize
from scipy.special import expit

from models.errors import DatasetIOError, DegenerateLabels, DimensionMismatch, SchemaVersionMismatch
from models.features import TextMatrix

logger = logging.getLogger(__name__)

MODEL_FORMAT = 'ctdr-text-linear'
MODEL_VERSION = 1


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    intercept: float
    l2: float
    class_weight_pos: float
    loss_history: Tuple[float, ...] = field(default=(), compare=False)

    @property
    def d(self) -> int:
        return self.weights.shape[0]

    def to_json(self) -> str:
        nonzero = np.flatnonzero(self.weights)
        payload = {
            'format': MODEL_FORMAT,
            'version': MODEL_VERSION,
            'd': self.d,
            'intercept': self.intercept,
            'l2': self.l2,
            'class_weight_pos': self.class_weight_pos,
            'weights': [[int(i), float(self.weights[i])] for i in nonzero],
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> 'LinearModel':
        payload = json.loads(text)
        if payload.get('format') != MODEL_FORMAT or payload.get('version') != MODEL_VERSION:
            raise SchemaVersionMismatch('not a text model file of the supported version')
        weights = np.zeros(payload['d'])
        for index, value in payload['weights']:
            weights[index] = value
        return cls(weights=weights, intercept=float(payload['intercept']), l2=float(payload['l2']),
                   class_weight_pos=float(payload['class_weight_pos']))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + '\n', encoding='utf-8')

    @classmethod
    def load(cls, path) -> 'LinearModel':
        try:
            return cls.from_json(Path(path).read_text(encoding='utf-8'))
        except (OSError, ValueError, KeyError) as exc:
            raise DatasetIOError(f'cannot read text model {path}: {exc}') from None


def _as_sparse(X):
    if isinstance(X, TextMatrix):
        return X.matrix
    return sparse.csr_matrix(X)


def logistic_objective(params: np.ndarray, X, y: np.ndarray, sample_weight: np.ndarray,
                       l2: float) -> Tuple[float, np.ndarray]:
    """Mean weighted logistic loss plus (l2 / 2) * ||w||^2, and its gradient.

    ``params`` holds the weights followed by the intercept.
    """
    w, b = params[:-1], params[-1]
    n = X.shape[0]
    z = X @ w + b
    loss = float(np.sum(sample_weight * (np.logaddexp(0.0, z) - y * z)) / n + 0.5 * l2 * (w @ w))
    residual = sample_weight * (expit(z) - y) / n
    grad = np.empty_like(params)
    grad[:-1] = X.T @ residual + l2 * w
    grad[-1] = residual.sum()
    return loss, grad


def train_linear(X, y, l2: float = 1e-3, class_weight_pos: Optional[float] = None,
                 max_iters: int = 500, tol: float = 1e-6) -> LinearModel:
    """Fit the text model.

    Args:
        X: TextMatrix or sparse matrix of L2-normalized rows
        y: Binary labels
        l2: Weight of the (l2 / 2) * ||w||^2 penalty
        class_weight_pos: Weight of positive samples; #neg/#pos of y when None
        max_iters: Iteration limit
        tol: Gradient-norm tolerance

    Raises:
        DegenerateLabels: y holds a single class
        DimensionMismatch: X and y disagree in length
    """
    matrix = _as_sparse(X)
    labels = np.asarray(y, dtype=np.float64).ravel()
    if labels.shape[0] != matrix.shape[0]:
        raise DimensionMismatch(f'{matrix.shape[0]} rows but {labels.shape[0]} labels')
    positives = int(labels.sum())
    if positives == 0 or positives == labels.size:
        raise DegenerateLabels('training labels contain a single class')
    if class_weight_pos is None:
        class_weight_pos = (labels.size - positives) / positives
    sample_weight = np.where(labels == 1, class_weight_pos, 1.0)

    x0 = np.zeros(matrix.shape[1] + 1)
    history = [logistic_objective(x0, matrix, labels, sample_weight, l2)[0]]

    def record(params):
        history.append(logistic_objective(params, matrix, labels, sample_weight, l2)[0])

    result = minimize(logistic_objective, x0, args=(matrix, labels, sample_weight, l2), jac=True,
                      method='L-BFGS-B', callback=record, options={'maxiter': max_iters, 'gtol': tol})
    logger.info("text model: %d iterations, final loss %.6f (%s)", result.nit, result.fun, result.message)
    return LinearModel(weights=result.x[:-1].copy(), intercept=float(result.x[-1]), l2=l2,
                       class_weight_pos=float(class_weight_pos), loss_history=tuple(history))


def predict_proba(model: LinearModel, X) -> np.ndarray:
    """sigmoid(w . x + b) for every row.

    Raises:
        DimensionMismatch: X has another dimensionality than the model
    """
    matrix = _as_sparse(X)
    if matrix.shape[1] != model.d:
        raise DimensionMismatch(f'model has d={model.d}, matrix has {matrix.shape[1]} columns')
    return expit(matrix @ model.weights + model.intercept)
