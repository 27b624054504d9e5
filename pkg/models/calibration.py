"""
Probability calibration

Platt scaling (a two-parameter sigmoid on the logit of the raw probability) and
isotonic regression by pool-adjacent-violators. Calibrators are fitted on the
validation split and carry that split's fingerprint.
"""
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from scipy.special import expit, logit

from models.errors import (ConfigError, ConstraintViolation, DatasetIOError, DegenerateLabels, EmptyInput,
                           LengthMismatch, NonFinite, SchemaVersionMismatch)

logger = logging.getLogger(__name__)

CLAMP = 1e-12


@dataclass(frozen=True)
class PlattParams:
    """Calibrated p = 1 / (1 + exp(A * s + B)) on score s."""
    A: float = 0.0
    B: float = 0.0


def to_logit(raw_probs) -> np.ndarray:
    """logit of probabilities clamped to [1e-12, 1 - 1e-12]."""
    probs = np.clip(np.asarray(raw_probs, dtype=np.float64), CLAMP, 1 - CLAMP)
    return logit(probs)


def _platt_nll(scores: np.ndarray, targets: np.ndarray, A: float, B: float) -> float:
    f = A * scores + B
    # t * f + log(1 + exp(-f)) written to stay finite for either sign of f
    return float(np.sum(np.where(f >= 0,
                                 targets * f + np.log1p(np.exp(-np.abs(f))),
                                 (targets - 1) * f + np.log1p(np.exp(-np.abs(f))))))


def fit_platt(scores, labels, max_iters: int = 100, tol: float = 1e-10) -> PlattParams:
    """Maximum-likelihood sigmoid fit on smoothed targets by damped Newton steps.

    Args:
        scores: Uncalibrated scores (logits of the raw probabilities)
        labels: Binary outcomes
        max_iters: Newton iteration limit
        tol: Stop once both gradient components are below tol

    Raises:
        DegenerateLabels: labels hold a single class
        NonFinite: a score is NaN or infinite
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).astype(bool).ravel()
    if s.size != y.size:
        raise LengthMismatch('scores and labels differ in length')
    if not np.all(np.isfinite(s)):
        raise NonFinite('Platt scores contain NaN or infinite values')
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels('Platt scaling needs both classes')

    targets = np.where(y, (n_pos + 1) / (n_pos + 2), 1 / (n_neg + 2))
    A, B = 0.0, math.log((n_neg + 1) / (n_pos + 1))
    loss = _platt_nll(s, targets, A, B)
    sigma = 1e-12

    for _ in range(max_iters):
        p = expit(-(A * s + B))
        d1 = targets - p
        d2 = p * (1 - p)
        g = np.array([np.sum(s * d1), np.sum(d1)])
        if np.all(np.abs(g) < tol):
            break
        H = np.array([[np.sum(s * s * d2) + sigma, np.sum(s * d2)],
                      [np.sum(s * d2), np.sum(d2) + sigma]])
        step = -np.linalg.solve(H, g)
        slope = g @ step

        # backtrack until the Armijo condition holds
        t = 1.0
        while t >= 1e-10:
            new_A, new_B = A + t * step[0], B + t * step[1]
            new_loss = _platt_nll(s, targets, new_A, new_B)
            if new_loss < loss + 1e-4 * t * slope:
                break
            t /= 2
        else:
            logger.debug("Platt line search stalled at A=%.6f B=%.6f", A, B)
            break
        A, B, loss = new_A, new_B, new_loss

    return PlattParams(A=float(A), B=float(B))


def apply_platt(params: PlattParams, raw_probs) -> np.ndarray:
    return expit(-(params.A * to_logit(raw_probs) + params.B))


@dataclass(frozen=True)
class IsotonicMap:
    """Piecewise-constant monotone map: block i covers [lows[i], highs[i]]."""
    lows: Tuple[float, ...]
    highs: Tuple[float, ...]
    values: Tuple[float, ...]

    @property
    def fit_range(self) -> Tuple[float, float]:
        return self.lows[0], self.highs[-1]


def fit_isotonic(scores, targets, weights=None) -> IsotonicMap:
    """Weighted least-squares non-decreasing fit of targets ordered by score.

    Equal scores are pooled first into their weighted mean; adjacent blocks are
    then merged while they violate monotonicity.

    Raises:
        EmptyInput: no scores
    """
    x = np.asarray(scores, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptyInput('isotonic fit needs at least one score')
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=np.float64).ravel()
    if not (x.size == t.size == w.size):
        raise LengthMismatch('scores, targets and weights differ in length')
    if np.any(w <= 0):
        raise ConstraintViolation('isotonic weights must be positive')

    unique, inverse = np.unique(x, return_inverse=True)
    pooled_w = np.bincount(inverse, weights=w)
    pooled_t = np.bincount(inverse, weights=w * t) / pooled_w

    # blocks: [value, weight, low, high]
    blocks = []
    for value, weight, score in zip(pooled_t, pooled_w, unique):
        blocks.append([value, weight, score, score])
        while len(blocks) > 1 and blocks[-2][0] > blocks[-1][0]:
            right = blocks.pop()
            left = blocks[-1]
            total = left[1] + right[1]
            left[0] = (left[0] * left[1] + right[0] * right[1]) / total
            left[1] = total
            left[3] = right[3]

    return IsotonicMap(
        lows=tuple(float(block[2]) for block in blocks),
        highs=tuple(float(block[3]) for block in blocks),
        values=tuple(float(block[0]) for block in blocks),
    )


def apply_isotonic(iso_map: IsotonicMap, raw_probs) -> np.ndarray:
    """Value of the block starting at or below each score, clamped to the end blocks."""
    x = np.asarray(raw_probs, dtype=np.float64)
    index = np.searchsorted(np.asarray(iso_map.lows), x, side='right') - 1
    index = np.clip(index, 0, len(iso_map.values) - 1)
    return np.asarray(iso_map.values)[index]


@dataclass(frozen=True)
class Calibration:
    """A fitted calibrator and the fingerprint of the split it was fitted on."""
    method: str
    params: Union[PlattParams, IsotonicMap]
    fitted_on: str = ''

    def apply(self, raw_probs) -> np.ndarray:
        if self.method == 'platt':
            return apply_platt(self.params, raw_probs)
        return apply_isotonic(self.params, raw_probs)

    def to_dict(self) -> dict:
        if self.method == 'platt':
            params = {'A': self.params.A, 'B': self.params.B}
        else:
            params = {'lows': list(self.params.lows), 'highs': list(self.params.highs),
                      'values': list(self.params.values)}
        return {'method': self.method, 'params': params, 'fitted_on': self.fitted_on}

    @classmethod
    def from_dict(cls, payload: dict) -> 'Calibration':
        method = payload.get('method')
        if method == 'platt':
            params = PlattParams(**payload['params'])
        elif method == 'isotonic':
            params = IsotonicMap(**{key: tuple(value) for key, value in payload['params'].items()})
        else:
            raise SchemaVersionMismatch(f'unknown calibration method {method!r}')
        return cls(method=method, params=params, fitted_on=payload.get('fitted_on', ''))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + '\n', encoding='utf-8')

    @classmethod
    def load(cls, path) -> 'Calibration':
        try:
            payload = json.loads(Path(path).read_text(encoding='utf-8'))
        except (OSError, ValueError) as exc:
            raise DatasetIOError(f'cannot read calibration {path}: {exc}') from None
        return cls.from_dict(payload)


def fit_calibration(method: str, raw_probs, labels, fitted_on: str = '') -> Calibration:
    """Fit the named calibrator on raw probabilities of one split."""
    if method == 'platt':
        params = fit_platt(to_logit(raw_probs), labels)
    elif method == 'isotonic':
        params = fit_isotonic(raw_probs, np.asarray(labels, dtype=np.float64))
    else:
        raise ConfigError(f'unknown calibration method {method!r}')
    logger.info("fitted %s calibration on %d scores", method, np.asarray(raw_probs).size)
    return Calibration(method=method, params=params, fitted_on=fitted_on)
