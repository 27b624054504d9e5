"""
Temporal splitter

Chronological train/validation/test assignment. Trials are ordered by completion
date (or start date, for the biased initiation-date baseline) with nct_id as the
tie breaker and cut into contiguous blocks.
"""
import enum
import logging
import math
from dataclasses import dataclass
from datetime import date
from fractions import Fraction
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from scipy.stats import ks_2samp

from models.errors import (ConfigError, ConstraintViolation, DatasetIOError, EmptyDataset,
                           InsufficientSamples, MissingStartDate, SchemaVersionMismatch)
from models.records import NUMERIC_FIELDS, Dataset, FeatureRow

logger = logging.getLogger(__name__)

DEFAULT_FRACTIONS = (0.70, 0.15, 0.15)


class Partition(enum.Enum):
    TRAIN = "TRAIN"
    VAL = "VAL"
    TEST = "TEST"


@dataclass(frozen=True)
class SplitAssignment:
    """Partition of each trial, in ordering-key order."""
    assignments: Tuple[Tuple[str, Partition], ...]
    fractions: Tuple[float, float, float] = DEFAULT_FRACTIONS
    ordering_key: str = 'completion_date'

    def as_dict(self) -> Dict[str, Partition]:
        return dict(self.assignments)

    def ids(self, partition: Partition) -> List[str]:
        """nct_ids of one partition, sorted by nct_id."""
        return sorted(nct_id for nct_id, part in self.assignments if part is partition)

    def sizes(self) -> Tuple[int, int, int]:
        parts = [part for _, part in self.assignments]
        return tuple(parts.count(partition) for partition in Partition)

    def save(self, path: Union[str, Path]) -> None:
        lines = [
            '# fractions: ' + ','.join(str(f) for f in self.fractions),
            f'# ordering_key: {self.ordering_key}',
            'nct_id\tpartition',
        ]
        lines.extend(f'{nct_id}\t{part.value}' for nct_id, part in self.assignments)
        try:
            Path(path).write_text('\n'.join(lines) + '\n', encoding='utf-8')
        except OSError as exc:
            raise DatasetIOError(f'cannot write {path}: {exc}') from None

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'SplitAssignment':
        try:
            lines = Path(path).read_text(encoding='utf-8').splitlines()
        except OSError as exc:
            raise DatasetIOError(f'cannot read {path}: {exc}') from None
        if len(lines) < 3 or not lines[0].startswith('# fractions:') or not lines[1].startswith('# ordering_key:'):
            raise SchemaVersionMismatch(f'{path}: missing split header')
        fractions = tuple(float(part) for part in lines[0].split(':', 1)[1].split(','))
        ordering_key = lines[1].split(':', 1)[1].strip()
        assignments = []
        for line in lines[3:]:
            if line.strip():
                nct_id, part = line.split('\t')
                assignments.append((nct_id, Partition(part)))
        return cls(assignments=tuple(assignments), fractions=fractions, ordering_key=ordering_key)


def partition_sizes(n: int, fractions: Sequence[float]) -> Tuple[int, int, int]:
    """(floor, floor, remainder) sizes; fractions are taken at their decimal value.

    >>> partition_sizes(10, (0.7, 0.15, 0.15))
    (7, 1, 2)
    """
    n_train = math.floor(Fraction(str(fractions[0])) * n)
    n_val = math.floor(Fraction(str(fractions[1])) * n)
    return n_train, n_val, n - n_train - n_val


def _check_fractions(fractions: Sequence[float]) -> Tuple[float, float, float]:
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1) > 1e-9:
        raise ConfigError(f'split fractions {tuple(fractions)} must be three non-negative values summing to 1')
    return tuple(float(f) for f in fractions)


def _assign(keyed: List[Tuple[date, str]], fractions, ordering_key: str) -> SplitAssignment:
    if not keyed:
        raise EmptyDataset('cannot split an empty dataset')
    keyed.sort()
    n_train, n_val, _ = partition_sizes(len(keyed), fractions)

    assignments = []
    for position, (_, nct_id) in enumerate(keyed):
        if position < n_train:
            part = Partition.TRAIN
        elif position < n_train + n_val:
            part = Partition.VAL
        else:
            part = Partition.TEST
        assignments.append((nct_id, part))

    split = SplitAssignment(assignments=tuple(assignments), fractions=tuple(fractions), ordering_key=ordering_key)
    logger.info("split by %s: train=%d val=%d test=%d", ordering_key, *split.sizes())
    return split


def chronological_split(dataset: Dataset, fractions: Sequence[float] = DEFAULT_FRACTIONS) -> SplitAssignment:
    """Contiguous split ordered by (completion_date, nct_id).

    Raises:
        EmptyDataset: no trials to split
    """
    fractions = _check_fractions(fractions)
    keyed = []
    for entry in dataset.entries:
        completion = entry.record.completion_date
        if completion is None:
            raise ConstraintViolation(f'{entry.nct_id}: no completion date')
        keyed.append((completion, entry.nct_id))
    return _assign(keyed, fractions, 'completion_date')


def initiation_split(dataset: Dataset, fractions: Sequence[float] = DEFAULT_FRACTIONS) -> SplitAssignment:
    """Contiguous split ordered by (start_date, nct_id); the biased baseline.

    Raises:
        MissingStartDate: a trial has no start date
        EmptyDataset: no trials to split
    """
    fractions = _check_fractions(fractions)
    keyed = []
    for entry in dataset.entries:
        start = entry.record.start_date
        if start is None:
            raise MissingStartDate(f'{entry.nct_id}: no start date')
        keyed.append((start, entry.nct_id))
    return _assign(keyed, fractions, 'start_date')


_FEATURE_NAMES = {info.alias: name for name, info in FeatureRow.model_fields.items() if info.alias}


def _numeric_field(feature: str) -> str:
    name = _FEATURE_NAMES.get(feature, feature)
    if name not in NUMERIC_FIELDS:
        raise ConfigError(f'{feature} is not a numeric feature')
    return name


@dataclass(frozen=True)
class ShiftDiagnostic:
    """Two-sample KS statistics of one numeric feature between partitions."""
    feature: str
    ordering_key: str
    statistics: Dict[str, float]


def shift_diagnostic(split: SplitAssignment, dataset: Dataset, feature: str = 'enrollmentCount') -> ShiftDiagnostic:
    """KS statistic for each partition pair on the feature's non-missing values.

    Raises:
        InsufficientSamples: a partition holds fewer than two non-missing values
    """
    name = _numeric_field(feature)
    by_id = dataset.by_id()
    values: Dict[Partition, List[float]] = {partition: [] for partition in Partition}
    for nct_id, part in split.assignments:
        value = getattr(by_id[nct_id].features, name)
        if value is not None:
            values[part].append(float(value))

    for partition, sample in values.items():
        if len(sample) < 2:
            raise InsufficientSamples(f'{partition.value} has {len(sample)} non-missing {feature} values')

    statistics = {}
    for first, second in combinations(Partition, 2):
        result = ks_2samp(values[first], values[second])
        statistics[f'{first.value.lower()}_{second.value.lower()}'] = float(result.statistic)
    return ShiftDiagnostic(feature=feature, ordering_key=split.ordering_key, statistics=statistics)


def shift_report(dataset: Dataset, split: SplitAssignment,
                 baseline: Optional[SplitAssignment] = None) -> List[ShiftDiagnostic]:
    """Shift diagnostics of every numeric feature, skipping those with too few values."""
    diagnostics = []
    for assignment in (split, baseline):
        if assignment is None:
            continue
        for name in NUMERIC_FIELDS:
            feature = FeatureRow.model_fields[name].alias
            try:
                diagnostics.append(shift_diagnostic(assignment, dataset, feature))
            except InsufficientSamples as exc:
                logger.info("shift diagnostic skipped: %s", exc)
    return diagnostics
