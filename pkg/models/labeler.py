"""
Dosing-error labeler

Assigns each trial a binary label for an elevated dosing-error rate:

1. adverse-event terms are matched against a curated list of dosing-error
   concepts (normalized Levenshtein similarity),
2. matched affected counts and at-risk populations are aggregated from the arm
   level to the trial level,
3. the lower bound of the Wilson score interval of the trial's rate is compared
   with a small operational threshold.
"""
import csv
import logging
import math
import re
from collections import defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from rapidfuzz.distance import Levenshtein
from scipy.stats import norm

from models.errors import ConfigError, DatasetIOError, EmptyTermList, InvalidCounts, NoAtRiskPopulation
from models.records import Dataset, DatasetEntry, StudyRecord, TrialAggregates

logger = logging.getLogger(__name__)

COUNT_BASIS = 'num_affected'
_VERSION_PREFIX = '# dictionary_version:'
_NON_WORD = re.compile(r'[\W_]+')


def normalize_term(raw: str) -> str:
    """Case-fold, turn punctuation into spaces, collapse whitespace.

    >>> normalize_term('DRUG–dose omission')
    'drug dose omission'
    """
    if not raw:
        return ''
    return _NON_WORD.sub(' ', raw.casefold()).strip()


@dataclass(frozen=True)
class DosingConcept:
    canonical_id: str
    canonical_term: str
    synonyms: Tuple[str, ...] = ()

    def variants(self) -> Tuple[str, ...]:
        """Normalized canonical term followed by normalized synonyms, deduplicated."""
        seen = []
        for text in (self.canonical_term,) + self.synonyms:
            normalized = normalize_term(text)
            if normalized not in seen:
                seen.append(normalized)
        return tuple(seen)


@dataclass(frozen=True)
class DosingTermList:
    """Curated dosing-error concepts, ordered by canonical_id."""
    concepts: Tuple[DosingConcept, ...]
    version: str = 'unversioned'

    def __post_init__(self):
        ids = [concept.canonical_id for concept in self.concepts]
        if len(set(ids)) != len(ids):
            raise DatasetIOError('duplicate canonical_id in dosing term list')
        for concept in self.concepts:
            if not all(concept.variants()):
                raise DatasetIOError(f'{concept.canonical_id}: empty term after normalization')
        object.__setattr__(self, 'concepts', tuple(sorted(self.concepts, key=lambda c: c.canonical_id)))

    def __len__(self):
        return len(self.concepts)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> 'DosingTermList':
        """Load a term list from tab-separated (canonical_id, canonical_term, synonym) rows.

        An optional first line ``# dictionary_version: <text>`` names the source
        dictionary. An empty synonym cell contributes only the canonical term.
        """
        try:
            lines = Path(path).read_text(encoding='utf-8').splitlines()
        except (OSError, UnicodeDecodeError) as exc:
            raise DatasetIOError(f'cannot read term list {path}: {exc}') from None

        version = 'unversioned'
        if lines and lines[0].startswith(_VERSION_PREFIX):
            version = lines.pop(0)[len(_VERSION_PREFIX):].strip()

        terms: Dict[str, str] = {}
        synonyms: Dict[str, List[str]] = defaultdict(list)
        for row in csv.DictReader(lines, delimiter='\t'):
            canonical_id = (row.get('canonical_id') or '').strip()
            if not canonical_id:
                continue
            canonical_term = (row.get('canonical_term') or '').strip()
            if terms.setdefault(canonical_id, canonical_term) != canonical_term:
                raise DatasetIOError(f'{path}: {canonical_id} has conflicting canonical terms')
            synonym = (row.get('synonym') or '').strip()
            if synonym:
                synonyms[canonical_id].append(synonym)

        concepts = tuple(DosingConcept(cid, term, tuple(synonyms[cid])) for cid, term in terms.items())
        return cls(concepts=concepts, version=version)


@dataclass(frozen=True)
class WilsonParams:
    confidence: float = 0.95
    threshold: float = 0.0001

    def __post_init__(self):
        if not 0 < self.confidence < 1:
            raise ConfigError('confidence must lie in (0, 1)')
        if not 0 < self.threshold < 1:
            raise ConfigError('threshold must lie in (0, 1)')

    @property
    def z(self) -> float:
        """Two-sided standard normal quantile of the confidence level."""
        return float(norm.ppf(1 - (1 - self.confidence) / 2))


@lru_cache(maxsize=65536)
def _best_match(normalized: str, term_list: DosingTermList, min_similarity: float) -> Optional[str]:
    best_id, best_score = None, -1.0
    for concept in term_list.concepts:
        score = max(Levenshtein.normalized_similarity(normalized, variant) for variant in concept.variants())
        # concepts are in id order, so strict > keeps the lowest id on ties
        if score > best_score:
            best_id, best_score = concept.canonical_id, score
    return best_id if best_score >= min_similarity else None


def match_term(ae_term: str, term_list: DosingTermList, min_similarity: float = 0.90) -> Optional[str]:
    """Return the canonical_id of the best-matching concept, or None below min_similarity.

    Raises:
        EmptyTermList: the list holds no concepts
    """
    if not term_list.concepts:
        raise EmptyTermList('dosing term list is empty')
    if not 0 < min_similarity <= 1:
        raise ConfigError('min_similarity must lie in (0, 1]')
    return _best_match(normalize_term(ae_term), term_list, min_similarity)


def wilson_lower_bound(k: int, n: int, z: float) -> float:
    """Lower end of the Wilson score interval for k successes out of n.

    Raises:
        InvalidCounts: unless 0 <= k <= n and n >= 1
    """
    if n < 1 or k < 0 or k > n:
        raise InvalidCounts(f'invalid binomial counts k={k}, n={n}')
    if z <= 0:
        raise ConfigError('z must be positive')
    if k == 0:
        return 0.0

    p_hat = k / n
    z2 = z * z
    centre = p_hat + z2 / (2 * n)
    margin = z * math.sqrt(p_hat * (1 - p_hat) / n + z2 / (4 * n * n))
    lower = (centre - margin) / (1 + z2 / n)
    return min(max(lower, 0.0), p_hat)


def assign_label(agg: TrialAggregates, params: WilsonParams) -> bool:
    return agg.wilson_lower > params.threshold


@dataclass(frozen=True)
class _TrialCounts:
    at_risk_n: int
    error_k: int
    concept_counts: Dict[str, int]


def _arm_at_risk(record: StudyRecord) -> Dict[str, int]:
    # One denominator per arm: the largest at-risk figure the registry reports for it
    at_risk: Dict[str, int] = {}
    for group in record.event_groups:
        values = [value for value in (group.serious_num_at_risk, group.other_num_at_risk) if value is not None]
        at_risk[group.group_id] = max(values, default=0)
    for entry in record.adverse_events:
        at_risk[entry.arm_group_id] = max(at_risk.get(entry.arm_group_id, 0), entry.num_at_risk)
    return at_risk


def _count_trial(record: StudyRecord, term_list: DosingTermList, min_similarity: float) -> _TrialCounts:
    at_risk = _arm_at_risk(record)
    matched: Dict[str, int] = defaultdict(int)
    concept_counts: Dict[str, int] = defaultdict(int)

    for entry in record.adverse_events:
        concept_id = match_term(entry.event_term, term_list, min_similarity)
        if concept_id is None or entry.num_affected == 0:
            continue
        matched[entry.arm_group_id] += entry.num_affected
        concept_counts[concept_id] += entry.num_affected

    error_k = 0
    for arm, affected in matched.items():
        if affected > at_risk[arm]:
            logger.debug("%s: %d matched events in arm %s capped at %d at risk",
                         record.nct_id, affected, arm, at_risk[arm])
        error_k += min(affected, at_risk[arm])

    return _TrialCounts(at_risk_n=sum(at_risk.values()), error_k=error_k, concept_counts=dict(concept_counts))


def aggregate_trial(record: StudyRecord, term_list: DosingTermList, min_similarity: float = 0.90,
                    params: Optional[WilsonParams] = None) -> TrialAggregates:
    """Trial-level dosing-error counts, rate, Wilson lower bound and label.

    Affected counts of matched terms are summed per arm and capped at the arm's
    at-risk population; every arm's denominator is counted once.

    Raises:
        NoAtRiskPopulation: no participant is at risk in any arm
    """
    params = params or WilsonParams()
    counts = _count_trial(record, term_list, min_similarity)
    return _aggregates(record.nct_id, counts, params)


def _aggregates(nct_id: str, counts: _TrialCounts, params: WilsonParams) -> TrialAggregates:
    if counts.at_risk_n == 0:
        raise NoAtRiskPopulation(nct_id)
    lower = wilson_lower_bound(counts.error_k, counts.at_risk_n, params.z)
    return TrialAggregates(
        nct_id=nct_id,
        at_risk_n=counts.at_risk_n,
        error_k=counts.error_k,
        rate=counts.error_k / counts.at_risk_n,
        wilson_lower=lower,
        label=lower > params.threshold,
    )


@dataclass
class LabelReport:
    """Outcome of labeling a dataset."""
    positives: int
    total: int
    concept_counts: Dict[str, int] = field(default_factory=dict)
    exclusions: List[str] = field(default_factory=list)
    dictionary_version: str = ''
    min_similarity: float = 0.90
    confidence: float = 0.95
    threshold: float = 0.0001
    count_basis: str = COUNT_BASIS

    @property
    def prevalence(self) -> float:
        return self.positives / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {
            'header': {
                'count_basis': self.count_basis,
                'dictionary_version': self.dictionary_version,
                'min_similarity': self.min_similarity,
                'wilson_confidence': self.confidence,
                'wilson_threshold': self.threshold,
            },
            'positives': self.positives,
            'total': self.total,
            'prevalence': self.prevalence,
            'concept_counts': dict(sorted(self.concept_counts.items())),
            'exclusions': sorted(self.exclusions),
        }


def label_dataset(dataset: Dataset, term_list: DosingTermList, params: Optional[WilsonParams] = None,
                  min_similarity: float = 0.90) -> Tuple[Dataset, LabelReport]:
    """Label every trial of a dataset.

    Trials without an at-risk population stay in the dataset unlabeled and are
    listed as exclusions; they never enter supervised splits.

    Returns:
        (Dataset, LabelReport): labeled dataset in nct_id order and its report
    """
    if not term_list.concepts:
        raise EmptyTermList('dosing term list is empty')
    params = params or WilsonParams()

    entries: List[DatasetEntry] = []
    exclusions: List[str] = []
    concept_totals: Dict[str, int] = defaultdict(int)
    positives = 0

    for entry in dataset.entries:
        counts = _count_trial(entry.record, term_list, min_similarity)
        try:
            agg = _aggregates(entry.nct_id, counts, params)
        except NoAtRiskPopulation as exc:
            logger.info("%s", exc)
            exclusions.append(entry.nct_id)
            entries.append(entry.model_copy(update={'aggregates': None}))
            continue

        positives += agg.label
        for concept_id, count in counts.concept_counts.items():
            concept_totals[concept_id] += count
        auxiliary = entry.auxiliary.model_copy(update={
            'concept_counts': {concept.canonical_id: counts.concept_counts.get(concept.canonical_id, 0)
                               for concept in term_list.concepts},
            'wilson_lower_bound': agg.wilson_lower,
            'ct_level_ade_population': agg.at_risk_n,
            'sum_dosing_errors': agg.error_k,
            'dosing_error_rate': agg.rate,
        })
        entries.append(entry.model_copy(update={'auxiliary': auxiliary, 'aggregates': agg}))

    report = LabelReport(
        positives=positives,
        total=len(entries) - len(exclusions),
        concept_counts=dict(concept_totals),
        exclusions=exclusions,
        dictionary_version=term_list.version,
        min_similarity=min_similarity,
        confidence=params.confidence,
        threshold=params.threshold,
    )
    logger.info("labels: %d of %d trials positive (prevalence %.4f), %d excluded",
                report.positives, report.total, report.prevalence, len(exclusions))

    meta = dict(dataset.meta)
    meta.update({key: str(value) for key, value in report.to_dict()['header'].items()})
    return Dataset(entries=tuple(entries), rejections=dataset.rejections, meta=meta), report
