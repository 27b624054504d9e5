"""
Synthetic registry corpus

Builds registry-shaped study documents and a seeded corpus with planted signal:
four binary risk factors (no masking, a phase 1 drug trial, and the phrases
"weight based dosing" and "infusion pump" in the text) raise the chance that a
trial reports dosing-error adverse events. Two factors are visible only to the
tabular features and two only to the text, so each unimodal model sees half of
the signal.
"""
import json
import logging
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from utils.date_utils import format_date

logger = logging.getLogger(__name__)

# P(trial reports dosing errors | number of risk factors present)
RISK_BY_FACTORS = (0.01, 0.75, 0.98, 1.0, 1.0)
FACTOR_RATE = 0.15
SIGNAL_PHRASES = ('weight based dosing', 'infusion pump')

DOSING_TERMS = ('Accidental overdose', 'Medication error', 'Wrong dose administered', 'Drug dose omission',
                'Incorrect dose administered', 'Underdose', 'Medication eror', 'Infusion rate too fast')
OTHER_TERMS = ('Headache', 'Nausea', 'Fatigue', 'Dizziness', 'Rash', 'Diarrhoea', 'Insomnia', 'Back pain')
CONDITIONS = ('Hypertension', 'Type 2 Diabetes', 'Asthma', 'Breast Cancer', 'Major Depressive Disorder',
              'Rheumatoid Arthritis', 'Chronic Kidney Disease', 'Migraine', 'Sickle Cell Disease', 'Psoriasis')
DRUG_NAMES = ('Amlodipine', 'Metformin', 'Budesonide', 'Tamoxifen', 'Sertraline', 'Methotrexate',
              'Losartan', 'Sumatriptan', 'Hydroxyurea', 'Adalimumab', 'Placebo')
FILLER = (
    'participants will be followed for safety and tolerability',
    'the primary endpoint is change from baseline at week twelve',
    'eligible patients are randomized after a screening visit',
    'study visits occur every four weeks at outpatient clinics',
    'efficacy is assessed with a validated questionnaire',
    'blood samples are collected for pharmacokinetic analysis',
    'the trial is conducted at academic and community sites',
    'adverse events are recorded at each visit',
)
COUNTRIES = ('United States', 'Germany', 'France', 'Canada', 'Japan', 'Brazil', 'Spain', 'Italy')


def make_document(nct_id: str, *, start: Optional[date] = date(2015, 1, 1),
                  completion: Optional[date] = date(2017, 1, 1), first_submit: Optional[date] = None,
                  status: str = 'COMPLETED', study_type: str = 'INTERVENTIONAL', has_results: bool = True,
                  phases: Optional[Sequence[str]] = ('PHASE2',), masking: Optional[str] = 'DOUBLE',
                  primary_purpose: Optional[str] = 'TREATMENT', sex: Optional[str] = 'ALL',
                  enrollment: Optional[int] = 100, arms: Optional[List[Dict]] = None,
                  interventions: Optional[List[Dict]] = None, brief_summary: Optional[str] = None,
                  detailed_description: Optional[str] = None, conditions: Sequence[str] = ('Hypertension',),
                  keywords: Sequence[str] = (), event_groups: Optional[List[Tuple[str, int]]] = None,
                  adverse_events: Sequence[Tuple[str, str, int, bool]] = (),
                  healthy_volunteers: Optional[bool] = False, has_dmc: Optional[bool] = True,
                  locations: Optional[List[Dict]] = None, sponsor: Tuple[str, str] = ('Acme Pharma', 'INDUSTRY'),
                  large_docs: Optional[List[Dict]] = None) -> dict:
    """A registry study document in the public v2 structure.

    Args:
        event_groups: (group id, participants at risk) pairs; one group per arm
            when None
        adverse_events: (term, group id, participants affected, serious) rows
    """
    if arms is None:
        arms = [{'label': 'Treatment', 'type': 'EXPERIMENTAL', 'description': 'Active drug'},
                {'label': 'Control', 'type': 'PLACEBO_COMPARATOR', 'description': 'Matching placebo'}]
    if interventions is None:
        interventions = [{'type': 'DRUG', 'name': 'Study drug', 'description': 'Oral tablet once daily'}]
    if event_groups is None:
        per_arm = (enrollment or 0) // max(len(arms), 1)
        event_groups = [(f'EG{index:03d}', per_arm) for index in range(len(arms))]
    first_submit = first_submit or (start - timedelta(days=30) if start else date(2014, 12, 1))

    status_module = {'overallStatus': status, 'studyFirstSubmitDate': format_date(first_submit)}
    if start is not None:
        status_module['startDateStruct'] = {'date': format_date(start)}
    if completion is not None:
        status_module['completionDateStruct'] = {'date': format_date(completion)}
        status_module['primaryCompletionDateStruct'] = {'date': format_date(completion)}

    design = {'studyType': study_type, 'designInfo': {'allocation': 'RANDOMIZED',
                                                      'interventionModel': 'PARALLEL'}}
    if phases is not None:
        design['phases'] = list(phases)
    if primary_purpose is not None:
        design['designInfo']['primaryPurpose'] = primary_purpose
    if masking is not None:
        design['designInfo']['maskingInfo'] = {'masking': masking}
    if enrollment is not None:
        design['enrollmentInfo'] = {'count': enrollment, 'type': 'ACTUAL'}

    events: Dict[bool, Dict[str, List[dict]]] = {True: {}, False: {}}
    for term, group_id, affected, serious in adverse_events:
        events[serious].setdefault(term, []).append({'groupId': group_id, 'numAffected': affected})

    document = {
        'protocolSection': {
            'identificationModule': {'nctId': nct_id, 'briefTitle': f'Study {nct_id}'},
            'statusModule': status_module,
            'sponsorCollaboratorsModule': {'leadSponsor': {'name': sponsor[0], 'class': sponsor[1]}},
            'oversightModule': {'oversightHasDmc': has_dmc},
            'descriptionModule': {'briefSummary': brief_summary, 'detailedDescription': detailed_description},
            'conditionsModule': {'conditions': list(conditions), 'keywords': list(keywords)},
            'designModule': design,
            'armsInterventionsModule': {'armGroups': arms, 'interventions': interventions},
            'eligibilityModule': {'sex': sex, 'healthyVolunteers': healthy_volunteers},
            'contactsLocationsModule': {'locations': locations or []},
        },
        'hasResults': has_results,
    }
    if has_results:
        document['resultsSection'] = {'adverseEventsModule': {
            'eventGroups': [{'id': group_id, 'title': group_id, 'seriousNumAtRisk': at_risk,
                             'otherNumAtRisk': at_risk} for group_id, at_risk in event_groups],
            'seriousEvents': [{'term': term, 'stats': stats} for term, stats in events[True].items()],
            'otherEvents': [{'term': term, 'stats': stats} for term, stats in events[False].items()],
        }}
    if large_docs:
        document['documentSection'] = {'largeDocumentModule': {'largeDocs': large_docs}}
    return document


@dataclass(frozen=True)
class SyntheticTrial:
    nct_id: str
    factors: Tuple[bool, bool, bool, bool]
    risky: bool

    @property
    def n_factors(self) -> int:
        return sum(self.factors)


def _random_date(rng: np.random.Generator, first: date, last: date) -> date:
    return first + timedelta(days=int(rng.integers(0, (last - first).days + 1)))


def _sentences(rng: np.random.Generator, count: int) -> List[str]:
    return [FILLER[int(i)] for i in rng.choice(len(FILLER), size=count, replace=False)]


def _trial_document(rng: np.random.Generator, nct_id: str) -> Tuple[dict, SyntheticTrial]:
    factors = tuple(bool(flag) for flag in rng.random(4) < FACTOR_RATE)
    no_masking, phase1_drug, weight_based, pump = factors
    risky = bool(rng.random() < RISK_BY_FACTORS[sum(factors)])

    start = _random_date(rng, date(2005, 1, 1), date(2021, 12, 31))
    completion = min(start + timedelta(days=int(rng.integers(120, 2200))), date(2025, 6, 30))
    enrollment = int(np.clip(rng.lognormal(4.8, 1.0), 8, 4000))
    n_arms = int(rng.integers(1, 4))

    masking = 'NONE' if no_masking else str(rng.choice(['SINGLE', 'DOUBLE', 'TRIPLE', 'QUADRUPLE']))
    if phase1_drug:
        phases = ['PHASE1'] if rng.random() < 0.7 else ['PHASE1', 'PHASE2']
        intervention_type = 'DRUG'
    else:
        phases = [str(rng.choice(['PHASE2', 'PHASE3', 'PHASE4', 'NA', 'EARLY_PHASE1']))]
        intervention_type = str(rng.choice(['DRUG', 'BIOLOGICAL', 'DEVICE', 'BEHAVIORAL']))
        if phases == ['EARLY_PHASE1'] and intervention_type == 'DRUG':
            intervention_type = 'BIOLOGICAL'

    drug = str(rng.choice(DRUG_NAMES[:-1]))
    condition = str(rng.choice(CONDITIONS))
    description = _sentences(rng, 3)
    if weight_based:
        description.insert(int(rng.integers(0, 4)), f'{drug} is given with weight based dosing')
    intervention_description = f'{drug} administered as directed'
    if pump:
        intervention_description = f'{drug} delivered by infusion pump over two hours'

    arm_types = ['EXPERIMENTAL', 'ACTIVE_COMPARATOR', 'PLACEBO_COMPARATOR']
    arms = [{'label': f'Arm {index + 1}', 'type': arm_types[index], 'description': f'Arm {index + 1} of {drug}'}
            for index in range(n_arms)]
    interventions = [{'type': intervention_type, 'name': drug, 'description': intervention_description}]
    if n_arms > 2:
        interventions.append({'type': 'DRUG', 'name': 'Placebo', 'description': 'Matching placebo'})

    # cap the population so a single dosing error clears the labeling threshold
    per_arm = max(1, min(enrollment // n_arms, 800 // n_arms))
    groups = [(f'EG{index:03d}', per_arm) for index in range(n_arms)]
    events = []
    for term in rng.choice(OTHER_TERMS, size=int(rng.integers(1, 4)), replace=False):
        events.append((str(term), groups[0][0], int(rng.integers(1, per_arm + 1)), False))
    if risky:
        group_id, at_risk = groups[int(rng.integers(0, n_arms))]
        affected = int(min(rng.integers(1, 6), at_risk))
        events.append((str(rng.choice(DOSING_TERMS)), group_id, affected, bool(rng.random() < 0.3)))

    document = make_document(
        nct_id, start=start, completion=completion, phases=phases, masking=masking,
        primary_purpose=str(rng.choice(['TREATMENT', 'PREVENTION', 'SUPPORTIVE_CARE', 'BASIC_SCIENCE'])),
        sex=str(rng.choice(['ALL', 'ALL', 'FEMALE', 'MALE'])), enrollment=enrollment, arms=arms,
        interventions=interventions,
        brief_summary=f'A study of {drug} in {condition.lower()}.',
        detailed_description=' . '.join(description) + ' .',
        conditions=(condition,), keywords=(condition.split()[-1].lower(),),
        event_groups=groups, adverse_events=events,
        healthy_volunteers=bool(rng.random() < 0.1), has_dmc=bool(rng.random() < 0.5),
        locations=[{'facility': f'Site {index + 1}', 'city': 'Springfield', 'country': str(rng.choice(COUNTRIES))}
                   for index in range(int(rng.integers(1, 6)))],
        sponsor=('Synthetic Sponsor', str(rng.choice(['INDUSTRY', 'OTHER', 'NIH']))),
    )
    return document, SyntheticTrial(nct_id, factors, risky)


def _excluded_document(rng: np.random.Generator, nct_id: str, kind: int) -> dict:
    if kind == 0:
        return make_document(nct_id, status='RECRUITING', completion=None)
    if kind == 1:
        return make_document(nct_id, study_type='OBSERVATIONAL')
    if kind == 2:
        return make_document(nct_id, has_results=False)
    return make_document(nct_id, start=date(2025, 10, 1), completion=date(2026, 1, 1),
                         first_submit=date(2025, 9, 15))


MALFORMED_LINES = (
    '{"protocolSection": ',
    '{"hasResults": true}',
    json.dumps(make_document('NCT09999990', phases=['PHASE9'])),
    json.dumps(make_document('NCT09999991', start=date(2018, 1, 1), completion=date(2016, 1, 1))),
)


@dataclass(frozen=True)
class SyntheticCorpus:
    path: Path
    trials: Tuple[SyntheticTrial, ...]
    excluded: int
    malformed: int

    @property
    def prevalence(self) -> float:
        return sum(trial.risky for trial in self.trials) / len(self.trials)


def write_corpus(out_dir, n_trials: int = 2000, seed: int = 0, n_excluded: int = 40,
                 n_no_population: int = 10) -> SyntheticCorpus:
    """Write ``studies.jsonl`` (one document per line) and ``truth.tsv`` into out_dir.

    Besides the n_trials signal trials the corpus holds n_excluded documents
    that fail the selection filter, n_no_population trials without participants
    at risk, and the malformed lines of MALFORMED_LINES.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)

    lines, trials = [], []
    for index in range(n_trials):
        document, trial = _trial_document(rng, f'NCT{index + 1:08d}')
        lines.append(json.dumps(document, sort_keys=True))
        trials.append(trial)
    for index in range(n_no_population):
        nct_id = f'NCT{n_trials + index + 1:08d}'
        lines.append(json.dumps(make_document(nct_id, event_groups=[]), sort_keys=True))
    offset = n_trials + n_no_population
    for index in range(n_excluded):
        lines.append(json.dumps(_excluded_document(rng, f'NCT{offset + index + 1:08d}', index % 4), sort_keys=True))
    lines.extend(MALFORMED_LINES)

    path = directory / 'studies.jsonl'
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    truth = ['nct_id\tn_factors\trisky']
    truth.extend(f'{trial.nct_id}\t{trial.n_factors}\t{int(trial.risky)}' for trial in trials)
    (directory / 'truth.tsv').write_text('\n'.join(truth) + '\n', encoding='utf-8')

    corpus = SyntheticCorpus(path, tuple(trials), n_excluded, len(MALFORMED_LINES))
    logger.info("synthetic corpus: %d trials (prevalence %.3f), %d excluded, %d malformed",
                n_trials, corpus.prevalence, n_excluded, corpus.malformed)
    return corpus
