import numpy as np
import pytest

from conftest import make_entry
from models.encodings import Phase
from models.errors import ConfigError, ConstraintViolation, EmptyInput, LengthMismatch
from models.stratify import (EnrollmentBin, RiskGroup, StageCategory, assign_risk_group, enrollment_bin,
                             render_table, stage_of, stratification_table, subgroup_tables, subgroup_values,
                             write_tables)

# one representative probability per risk group
GROUP_PROBS = (0.01, 0.03, 0.07, 0.30)


def _cohort(counts):
    """Probabilities and labels reproducing (n_trials, n_events) per risk group."""
    p, y = [], []
    for prob, (n_trials, n_events) in zip(GROUP_PROBS, counts):
        p.extend([prob] * n_trials)
        y.extend([1] * n_events + [0] * (n_trials - n_events))
    return np.array(p), np.array(y)


@pytest.mark.parametrize('p_hat, group', [
    (0.01, RiskGroup.LOW),
    (0.02, RiskGroup.MODERATE),
    (0.05, RiskGroup.HIGH),
    (0.0999, RiskGroup.HIGH),
    (0.10, RiskGroup.VERY_HIGH),
    (0.50, RiskGroup.VERY_HIGH),
])
def test_assign_risk_group(p_hat, group):
    """Test the group boundaries."""
    assert assign_risk_group(p_hat) is group


def test_overall_table_counts():
    """Test counts, rates and relative risks on a known cohort."""
    p, y = _cohort([(3547, 22), (948, 26), (738, 58), (1085, 204)])
    table = stratification_table(p, y)

    assert [(row.n_trials, row.n_events) for row in table] == [(3547, 22), (948, 26), (738, 58), (1085, 204)]
    rates = [100 * row.event_rate for row in table]
    assert rates == pytest.approx([0.62, 2.74, 7.86, 18.80], abs=0.01)
    assert [row.relative_risk for row in table] == pytest.approx([0.126, 0.559, 1.602, 3.832], abs=0.001)
    assert table.n_trials == 6318 and table.n_events == 310


def test_group_assignment_agrees_with_table():
    """Test that the table counts match per-trial groups."""
    rng = np.random.default_rng(2)
    p = rng.random(500) * 0.2
    y = rng.integers(0, 2, size=500)
    table = stratification_table(p, y)
    for row in table:
        assert row.n_trials == sum(assign_risk_group(value) is row.group for value in p)
    assert sum(row.n_trials for row in table) == 500
    assert sum(row.n_events for row in table) == int(y.sum())


def test_all_negative_labels_flag_zero_baseline():
    """Test a cohort with no events."""
    table = stratification_table([0.01, 0.2, 0.07], [0, 0, 0])
    assert all(row.relative_risk == 0 and row.zero_baseline for row in table)
    assert table.rows[1].empty_group and table.rows[1].flags == 'empty_group,zero_baseline'


def test_single_group_has_unit_relative_risk():
    """Test a cohort that falls in one group."""
    table = stratification_table([0.3, 0.4, 0.5], [1, 0, 0])
    assert table.rows[RiskGroup.VERY_HIGH].relative_risk == 1.0
    assert table.rows[RiskGroup.LOW].empty_group


def test_table_input_checks():
    """Test mismatched and empty input."""
    with pytest.raises(LengthMismatch):
        stratification_table([0.1], [1, 0])
    with pytest.raises(EmptyInput):
        stratification_table([], [])


def test_event_rate_rises_with_risk_on_bernoulli_draws():
    """Test event rates on labels drawn from the scores."""
    rng = np.random.default_rng(17)
    p = rng.beta(0.6, 8, size=20000)
    y = rng.random(20000) < p
    rates = [row.event_rate for row in stratification_table(p, y)]
    assert rates == sorted(rates)


@pytest.mark.parametrize('phases, stage', [
    ([Phase.PHASE1], StageCategory.EARLY),
    (['EARLY_PHASE1'], StageCategory.EARLY),
    (['PHASE1', 'PHASE2'], StageCategory.MID),
    (['PHASE4'], StageCategory.LATE),
    (['NA'], StageCategory.UNSTAGED),
    (None, StageCategory.UNSTAGED),
])
def test_stage_of(phases, stage):
    """Test the development stage of each phase set."""
    assert stage_of(phases) is stage


@pytest.mark.parametrize('count, expected', [
    (0, EnrollmentBin.UP_TO_50),
    (50, EnrollmentBin.UP_TO_50),
    (51, EnrollmentBin.FROM_51_TO_200),
    (200, EnrollmentBin.FROM_51_TO_200),
    (500, EnrollmentBin.FROM_201_TO_500),
    (501, EnrollmentBin.OVER_500),
])
def test_enrollment_bin(count, expected):
    """Test the enrollment bin edges."""
    assert enrollment_bin(count) is expected


def test_enrollment_bin_rejects_negative():
    """A negative enrollment is a broken record, not a bin."""
    with pytest.raises(ConstraintViolation):
        enrollment_bin(-1)


def test_unknown_subgroup_key():
    """Test a subgroup that does not exist."""
    with pytest.raises(ConfigError):
        subgroup_values([make_entry('NCT00000001').features], 'sponsor')


def test_stage_tables():
    """Test per-stage tables on known cohorts."""
    early_p, early_y = _cohort([(642, 3), (75, 1), (50, 5), (39, 7)])
    late_p, late_y = _cohort([(100, 1), (0, 0), (0, 0), (20, 2)])
    p = np.concatenate([early_p, late_p, [0.5]])
    y = np.concatenate([early_y, late_y, [1]])
    subgroups = ['EARLY'] * early_p.size + ['LATE'] * late_p.size + [None]

    result = subgroup_tables(p, y, subgroups, 'stage')

    assert list(result.tables) == ['EARLY', 'LATE']
    assert result.excluded == 1
    early = result.tables['EARLY']
    assert [row.relative_risk for row in early] == pytest.approx([0.235, 0.672, 5.038, 9.042], abs=0.01)
    assert all(row.subgroup == 'EARLY' for row in early)


def test_enrollment_tables():
    """Test one enrollment bin on a known cohort."""
    p, y = _cohort([(8, 0), (50, 0), (69, 5), (409, 96)])
    result = subgroup_tables(p, y, ['>500'] * p.size, 'enrollment')
    rates = [100 * row.event_rate for row in result.tables['>500']]
    assert rates == pytest.approx([0.0, 0.0, 7.25, 23.47], abs=0.01)


def test_one_trial_per_subgroup():
    """Test subgroups of a single trial."""
    result = subgroup_tables([0.01, 0.5], [1, 1], ['<=50', '>500'], 'enrollment')
    for table in result.tables.values():
        populated = [row for row in table if row.n_trials]
        assert [row.relative_risk for row in populated] == [1.0]


def test_subgroup_values_from_feature_rows():
    """Test subgroup keys read from feature rows."""
    rows = [make_entry('NCT00000001', phases=['PHASE3'], enrollment=700).features,
            make_entry('NCT00000002', phases=None, enrollment=None).features]
    assert subgroup_values(rows, 'stage') == ['LATE', None]
    assert subgroup_values(rows, 'enrollment') == ['>500', None]


def test_write_and_render(tmp_path):
    """Test the table file and its footer."""
    table = stratification_table(*_cohort([(10, 0), (10, 1), (10, 2), (10, 5)]))
    write_tables([('fusion_calibrated', table)], tmp_path / 'strat.tsv', footer='2 trials excluded')

    lines = (tmp_path / 'strat.tsv').read_text().splitlines()
    assert lines[0].split('\t')[:3] == ['variant', 'subgroup', 'risk_group']
    assert lines[1].startswith('fusion_calibrated\tall\tLOW\t10\t0\t0.000000\t0.000000')
    assert lines[-1] == '# 2 trials excluded'

    text = render_table(table, 'Test split')
    assert 'Very high' in text
    assert text.splitlines()[-1].startswith('Overall')
