"""
Risk stratification

Maps calibrated probabilities to four risk groups and tabulates trial counts,
event counts, event rates and relative risks, overall and within development
stage or enrollment-size subgroups.
"""
import bisect
import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from models.encodings import Phase
from models.errors import ConfigError, ConstraintViolation, EmptyInput, LengthMismatch

logger = logging.getLogger(__name__)

DEFAULT_BOUNDARIES = (0.02, 0.05, 0.10)


class RiskGroup(enum.IntEnum):
    LOW = 0
    MODERATE = 1
    HIGH = 2
    VERY_HIGH = 3

    @property
    def label(self) -> str:
        return self.name.replace('_', ' ').capitalize()


class StageCategory(enum.Enum):
    EARLY = "EARLY"
    MID = "MID"
    LATE = "LATE"
    UNSTAGED = "UNSTAGED"


class EnrollmentBin(enum.Enum):
    UP_TO_50 = "<=50"
    FROM_51_TO_200 = "51-200"
    FROM_201_TO_500 = "201-500"
    OVER_500 = ">500"


_STAGE_OF_PHASE = {
    Phase.EARLY_PHASE1: StageCategory.EARLY,
    Phase.PHASE1: StageCategory.EARLY,
    Phase.PHASE2: StageCategory.MID,
    Phase.PHASE3: StageCategory.LATE,
    Phase.PHASE4: StageCategory.LATE,
}
_PHASE_ORDER = list(Phase)


def assign_risk_group(p_hat: float, boundaries: Sequence[float] = DEFAULT_BOUNDARIES) -> RiskGroup:
    """Risk group of a calibrated probability; each boundary belongs to the group above it."""
    return RiskGroup(bisect.bisect_right(list(boundaries), p_hat))


def stage_of(phases: Optional[Iterable]) -> StageCategory:
    """Development stage from the highest reported phase; NA is ignored."""
    staged = [Phase(phase) for phase in (phases or ()) if Phase(phase) is not Phase.NA]
    if not staged:
        return StageCategory.UNSTAGED
    return _STAGE_OF_PHASE[max(staged, key=_PHASE_ORDER.index)]


def enrollment_bin(count: int) -> EnrollmentBin:
    if count < 0:
        raise ConstraintViolation('enrollment count must be non-negative')
    if count <= 50:
        return EnrollmentBin.UP_TO_50
    if count <= 200:
        return EnrollmentBin.FROM_51_TO_200
    if count <= 500:
        return EnrollmentBin.FROM_201_TO_500
    return EnrollmentBin.OVER_500


@dataclass(frozen=True)
class StratRow:
    group: RiskGroup
    n_trials: int
    n_events: int
    event_rate: float
    relative_risk: float
    subgroup: Optional[str] = None
    empty_group: bool = False
    zero_baseline: bool = False

    @property
    def flags(self) -> str:
        flags = [name for name, on in (('empty_group', self.empty_group), ('zero_baseline', self.zero_baseline)) if on]
        return ','.join(flags)


@dataclass
class StratificationTable:
    rows: List[StratRow]
    n_trials: int
    n_events: int
    subgroup: Optional[str] = None

    @property
    def baseline_rate(self) -> float:
        return self.n_events / self.n_trials if self.n_trials else 0.0

    def __iter__(self):
        return iter(self.rows)


def _aligned(p_hat, labels) -> Tuple[np.ndarray, np.ndarray]:
    probs = np.asarray(p_hat, dtype=np.float64).ravel()
    events = np.asarray(labels).astype(bool).ravel()
    if probs.shape != events.shape:
        raise LengthMismatch(f'{probs.size} probabilities but {events.size} labels')
    if probs.size == 0:
        raise EmptyInput('no trials to stratify')
    return probs, events


def stratification_table(p_hat, labels, boundaries: Sequence[float] = DEFAULT_BOUNDARIES,
                         subgroup: Optional[str] = None) -> StratificationTable:
    """One row per risk group with relative risk against the unrounded overall event rate.

    Raises:
        EmptyInput: no trials
    """
    probs, events = _aligned(p_hat, labels)
    groups = np.searchsorted(np.asarray(boundaries, dtype=np.float64), probs, side='right')
    n_total, events_total = probs.size, int(events.sum())
    baseline = events_total / n_total

    rows = []
    for group in RiskGroup:
        members = groups == group.value
        n_trials = int(members.sum())
        n_events = int(events[members].sum())
        rate = n_events / n_trials if n_trials else 0.0
        rows.append(StratRow(
            group=group,
            n_trials=n_trials,
            n_events=n_events,
            event_rate=rate,
            relative_risk=rate / baseline if baseline > 0 else 0.0,
            subgroup=subgroup,
            empty_group=n_trials == 0,
            zero_baseline=baseline == 0,
        ))
    return StratificationTable(rows=rows, n_trials=n_total, n_events=events_total, subgroup=subgroup)


SUBGROUP_ORDER = {
    'stage': [category.value for category in StageCategory if category is not StageCategory.UNSTAGED],
    'enrollment': [category.value for category in EnrollmentBin],
}


def subgroup_values(rows: Sequence, key: str) -> List[Optional[str]]:
    """Subgroup of each feature row; None where it cannot be determined."""
    values = []
    for row in rows:
        if key == 'stage':
            stage = stage_of(row.phases)
            values.append(None if stage is StageCategory.UNSTAGED else stage.value)
        elif key == 'enrollment':
            count = row.enrollment_count
            values.append(None if count is None else enrollment_bin(count).value)
        else:
            raise ConfigError(f'unknown subgroup key {key!r}')
    return values


@dataclass
class SubgroupTables:
    key: str
    tables: Dict[str, StratificationTable] = field(default_factory=dict)
    excluded: int = 0


def subgroup_tables(p_hat, labels, subgroups: Sequence[Optional[str]], key: str,
                    boundaries: Sequence[float] = DEFAULT_BOUNDARIES) -> SubgroupTables:
    """Stratification within each subgroup, each against its own event rate.

    Trials whose subgroup is None (unstaged, unknown enrollment) are left out
    and counted in ``excluded``.
    """
    probs, events = _aligned(p_hat, labels)
    if len(subgroups) != probs.size:
        raise LengthMismatch(f'{probs.size} probabilities but {len(subgroups)} subgroup values')
    values = np.array([value if value is not None else '' for value in subgroups], dtype=object)

    result = SubgroupTables(key=key, excluded=int(np.sum(values == '')))
    for subgroup in SUBGROUP_ORDER.get(key, sorted(set(values) - {''})):
        members = values == subgroup
        if members.any():
            result.tables[subgroup] = stratification_table(probs[members], events[members], boundaries, subgroup)
    if result.excluded:
        logger.info("%s tables: %d trials without a %s excluded", key, result.excluded, key)
    return result


TSV_HEADER = ('variant', 'subgroup', 'risk_group', 'n_trials', 'n_events', 'event_rate', 'relative_risk', 'flags')


def table_lines(table: StratificationTable, variant: str) -> List[str]:
    lines = []
    for row in table.rows:
        lines.append('\t'.join([
            variant, row.subgroup or 'all', row.group.name, str(row.n_trials), str(row.n_events),
            f'{row.event_rate:.6f}', f'{row.relative_risk:.6f}', row.flags,
        ]))
    return lines


def write_tables(tables: Sequence[Tuple[str, StratificationTable]], path, footer: str = '') -> None:
    """Tab-separated rows of (variant, table) pairs; the footer is written as a comment."""
    lines = ['\t'.join(TSV_HEADER)]
    for variant, table in tables:
        lines.extend(table_lines(table, variant))
    if footer:
        lines.append(f'# {footer}')
    Path(path).write_text('\n'.join(lines) + '\n', encoding='utf-8')


def render_table(table: StratificationTable, title: str) -> str:
    """Human-readable rendering: group, number of trials, events, event rate (%), relative risk."""
    header = f"{'Risk group':<12} {'CTs':>7} {'Events':>7} {'Rate (%)':>9} {'RR':>7}"
    lines = [title, header, '-' * len(header)]
    for row in table.rows:
        lines.append(f'{row.group.label:<12} {row.n_trials:>7} {row.n_events:>7} '
                     f'{100 * row.event_rate:>9.2f} {row.relative_risk:>7.3f}')
    lines.append(f"{'Overall':<12} {table.n_trials:>7} {table.n_events:>7} {100 * table.baseline_rate:>9.2f}")
    return '\n'.join(lines)
