import unittest
from decimal import Decimal, localcontext

import pytest

from conftest import make_entry
from models.errors import ConfigError, EmptyTermList, InvalidCounts, NoAtRiskPopulation
from models.labeler import (DosingConcept, DosingTermList, WilsonParams, aggregate_trial, assign_label,
                            label_dataset, match_term, normalize_term, wilson_lower_bound)
from models.records import Dataset, TrialAggregates
from models.registry import parse_study
from models.synthetic import make_document

Z95 = 1.959964


def _wilson_oracle(k, n, z=Z95):
    """Wilson lower bound evaluated in 50-digit decimal arithmetic."""
    with localcontext() as ctx:
        ctx.prec = 50
        k, n, z = Decimal(k), Decimal(n), Decimal(str(z))
        p = k / n
        z2 = z * z
        centre = p + z2 / (2 * n)
        margin = z * (p * (1 - p) / n + z2 / (4 * n * n)).sqrt()
        return float((centre - margin) / (1 + z2 / n))


class TestWilsonLowerBound(unittest.TestCase):

    def test_zero_events_is_exactly_zero(self):
        """Test with no events."""
        self.assertEqual(wilson_lower_bound(0, 100, Z95), 0.0)

    def test_all_events(self):
        """Test with every subject affected."""
        self.assertAlmostEqual(wilson_lower_bound(100, 100, Z95), 100 / (100 + Z95 ** 2), places=9)
        self.assertAlmostEqual(wilson_lower_bound(100, 100, Z95), 0.963001, places=6)

    def test_small_rate_below_point_estimate(self):
        """Test that the bound sits under the observed rate."""
        lower = wilson_lower_bound(3, 150, Z95)
        self.assertTrue(0 < lower < 0.02)
        self.assertAlmostEqual(lower, _wilson_oracle(3, 150), places=12)

    def test_matches_high_precision_oracle(self):
        """Test against a decimal computation over a grid of counts."""
        for n in range(1, 201):
            for k in range(0, n + 1, max(1, n // 13)):
                lower = wilson_lower_bound(k, n, Z95)
                expected = 0.0 if k == 0 else max(_wilson_oracle(k, n), 0.0)
                self.assertAlmostEqual(lower, expected, places=12, msg=f'k={k}, n={n}')
                self.assertTrue(0 <= lower <= k / n)

    def test_monotone_in_k(self):
        """More events never lower the bound."""
        values = [wilson_lower_bound(k, 80, Z95) for k in range(81)]
        self.assertEqual(values, sorted(values))

    def test_invalid_counts(self):
        """Test impossible counts and a non-positive quantile."""
        for k, n in ((1, 0), (-1, 10), (11, 10)):
            with self.assertRaises(InvalidCounts):
                wilson_lower_bound(k, n, Z95)
        with self.assertRaises(ConfigError):
            wilson_lower_bound(1, 10, 0.0)

    def test_default_confidence_quantile(self):
        """Test the 95% quantile."""
        self.assertAlmostEqual(WilsonParams().z, Z95, places=5)


def parse_study_of(**kwargs):
    return parse_study(make_document('NCT00000099', **kwargs))


def _aggregates(lower):
    return TrialAggregates(nct_id='NCT00000001', at_risk_n=100, error_k=1 if lower else 0,
                           rate=0.01 if lower else 0.0, wilson_lower=lower, label=False)


@pytest.mark.parametrize('lower, expected', [(0.0, False), (0.0002, True), (0.0001, False)])
def test_assign_label_strict_exceedance(lower, expected):
    """A bound equal to the threshold is negative."""
    assert assign_label(_aggregates(lower), WilsonParams(threshold=0.0001)) is expected


@pytest.mark.parametrize('raw, expected', [
    ('Accidental  Overdose.', 'accidental overdose'),
    ('', ''),
    ('DRUG–dose omission', 'drug dose omission'),
])
def test_normalize_term(raw, expected):
    """Test case, whitespace and punctuation folding."""
    assert normalize_term(raw) == expected


def test_match_term(term_list):
    """Test exact, synonym and fuzzy matches."""
    assert match_term('Accidental overdose', term_list) == 'DE001'
    assert match_term('headache', term_list) is None
    # one deletion in a 19 character term: similarity 18/19
    assert match_term('acidental overdose', term_list) == 'DE001'
    assert match_term('Missed dose', term_list) == 'DE005'


def test_match_term_respects_min_similarity(term_list):
    """Test that a stricter similarity drops the fuzzy match."""
    assert match_term('acidental overdose', term_list, min_similarity=0.95) is None


@pytest.mark.parametrize('similarity', [0.0, 1.5])
def test_match_term_rejects_bad_similarity(term_list, similarity):
    """Test similarity cutoffs outside (0, 1]."""
    with pytest.raises(ConfigError):
        match_term('overdose', term_list, min_similarity=similarity)


@pytest.mark.parametrize('settings', [{'confidence': 1.0}, {'confidence': 0.0}, {'threshold': 0.0}, {'threshold': 1.0}])
def test_wilson_params_out_of_range(settings):
    """Labeling settings outside the open unit interval are configuration errors."""
    with pytest.raises(ConfigError):
        WilsonParams(**settings)


def test_empty_term_list_is_rejected():
    """Test matching against an empty dictionary."""
    with pytest.raises(EmptyTermList):
        match_term('overdose', DosingTermList(concepts=()))


def test_term_list_version_and_order(term_list):
    """Test the bundled dictionary."""
    assert term_list.version.startswith('ctdr-sample-1.0')
    ids = [concept.canonical_id for concept in term_list.concepts]
    assert ids == sorted(ids)


def test_aggregate_trial_sums_arms(term_list):
    """Test that matched events add up across arms."""
    record = parse_study_of(event_groups=[('EG000', 100), ('EG001', 50)],
                            adverse_events=[('Overdose', 'EG000', 2, True), ('Accidental overdose', 'EG001', 1, False),
                                            ('Headache', 'EG000', 9, False)])
    agg = aggregate_trial(record, term_list)
    assert (agg.at_risk_n, agg.error_k) == (150, 3)
    assert agg.rate == pytest.approx(0.02)
    assert agg.wilson_lower == pytest.approx(wilson_lower_bound(3, 150, WilsonParams().z))
    assert agg.label is True


def test_aggregate_trial_without_matches(term_list):
    """Test a trial whose events never match."""
    record = parse_study_of(adverse_events=[('Headache', 'EG000', 4, False)])
    agg = aggregate_trial(record, term_list)
    assert (agg.error_k, agg.rate, agg.wilson_lower, agg.label) == (0, 0.0, 0.0, False)


def test_aggregate_trial_caps_affected_per_arm(term_list):
    """Affected counts never exceed the arm size."""
    record = parse_study_of(event_groups=[('EG000', 3)],
                            adverse_events=[('Overdose', 'EG000', 2, True), ('Underdose', 'EG000', 2, False)])
    assert aggregate_trial(record, term_list).error_k == 3


def test_aggregate_trial_without_population(term_list):
    """Test a trial with nobody at risk."""
    record = parse_study_of(event_groups=[('EG000', 0)])
    with pytest.raises(NoAtRiskPopulation):
        aggregate_trial(record, term_list)


def test_label_dataset_report(term_list):
    """Test the label counts and exclusions in the report."""
    dataset = Dataset(entries=[
        make_entry('NCT00000001', event_groups=[('EG000', 500)], adverse_events=[('Overdose', 'EG000', 1, True)]),
        make_entry('NCT00000002', event_groups=[('EG000', 500)]),
        make_entry('NCT00000003', event_groups=[('EG000', 0)]),
    ])
    labeled, report = label_dataset(dataset, term_list)

    assert report.total == 2
    assert report.positives == 1
    assert report.prevalence == pytest.approx(0.5)
    assert report.exclusions == ['NCT00000003']
    assert report.concept_counts == {'DE002': 1}

    first = labeled.entries[0]
    assert first.aggregates.label is True
    assert first.auxiliary.sum_dosing_errors == 1
    assert first.auxiliary.concept_counts['DE002'] == 1
    assert first.auxiliary.count_columns()['count_DE002'] == 1
    assert labeled.entries[2].aggregates is None


def test_label_dataset_all_zero_events(term_list):
    """Test a dataset with no dosing errors."""
    dataset = Dataset(entries=[make_entry(f'NCT0000001{i}') for i in range(4)])
    _, report = label_dataset(dataset, term_list)
    assert report.prevalence == 0.0


def test_custom_term_list():
    """Concepts are kept sorted by id."""
    terms = DosingTermList(concepts=(DosingConcept('X2', 'pump programming error'),
                                     DosingConcept('X1', 'wrong dose', ('incorrect dose',))))
    assert [concept.canonical_id for concept in terms.concepts] == ['X1', 'X2']
    assert match_term('Incorrect dose', terms) == 'X1'


if __name__ == '__main__':
    unittest.main()
