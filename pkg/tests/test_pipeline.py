import json
import shutil

import pytest

from models.database import StageStatus
from models.errors import ConfigError, EmptyDataset, FingerprintMismatch, MissingUpstreamArtifact
from models.pipeline import (CAL_TABULAR, LABEL_REPORT, LABELED, METRICS_JSON, REJECTIONS, SPLIT, STAGE_NAMES,
                             STAGES, STRAT, STRAT_STAGE, SUMMARY, PipelineRunner, fitted_fingerprints)
from models.records import Dataset
from models.registry import load_dataset, save_dataset
from models.splitter import Partition, SplitAssignment, partition_sizes
from utils.config import OutputSettings


def _copy(runner, tmp_path, **sections):
    """A runner over a private copy of a finished run."""
    target = tmp_path / 'copy'
    shutil.copytree(runner.out_dir, target)
    update = {'output': OutputSettings(dir=str(target))}
    update.update(sections)
    return PipelineRunner(runner.config.model_copy(update=update))


def _metric(rows, variant, split):
    return next(row for row in rows if row['variant'] == variant and row['split'] == split)


def _strat_rows(path, variant):
    lines = [line.split('\t') for line in path.read_text().splitlines() if line and not line.startswith('#')]
    header, body = lines[0], lines[1:]
    return [dict(zip(header, line)) for line in body if line[0] == variant]


def test_full_run_writes_every_artifact(synthetic_run):
    """Test that every stage completes and writes its files."""
    runner, _, outcomes = synthetic_run
    assert [outcome.stage for outcome in outcomes] == list(STAGE_NAMES)
    assert all(outcome.status is StageStatus.completed for outcome in outcomes)
    for stage in STAGES:
        for name in stage.produces:
            assert runner.path(name).is_file(), name


def test_labels_recover_planted_risk(synthetic_run):
    """Test labels against the planted risky trials."""
    runner, corpus, _ = synthetic_run
    report = json.loads(runner.path(LABEL_REPORT).read_text())
    assert report['total'] == len(corpus.trials)
    assert report['positives'] == sum(trial.risky for trial in corpus.trials)
    assert len(report['exclusions']) == 10
    assert report['header']['count_basis'] == 'num_affected'

    truth = {trial.nct_id: trial.risky for trial in corpus.trials}
    labeled = load_dataset(runner.path(LABELED)).labeled()
    assert all(entry.label == truth[entry.nct_id] for entry in labeled)

    rejected = runner.path(REJECTIONS).read_text().splitlines()
    assert len(rejected) == 1 + corpus.malformed


def test_split_sizes_follow_fractions(synthetic_run):
    """Test the partition sizes."""
    runner, corpus, _ = synthetic_run
    split = SplitAssignment.load(runner.path(SPLIT))
    assert split.sizes() == partition_sizes(len(corpus.trials), (0.70, 0.15, 0.15))


def test_fusion_is_at_least_as_good_on_validation(synthetic_run):
    """Test validation AUC of the fusion and test AUC after calibration."""
    runner, _, _ = synthetic_run
    rows = json.loads(runner.path(METRICS_JSON).read_text())
    assert len(rows) == 12
    fused = _metric(rows, 'fusion', 'val')['auc']
    assert fused >= max(_metric(rows, 'tabular', 'val')['auc'], _metric(rows, 'text', 'val')['auc']) - 1e-12
    assert _metric(rows, 'fusion_calibrated', 'test')['auc'] >= 0.85


def test_event_rate_rises_with_risk_group(synthetic_run):
    """Event rates never fall from one populated group to the next."""
    runner, _, _ = synthetic_run
    rows = {row['risk_group']: row for row in _strat_rows(runner.path(STRAT), 'fusion_calibrated')}
    assert sum(int(row['n_trials']) for row in rows.values()) == 300
    rates = [float(rows[group]['event_rate']) for group in ('LOW', 'MODERATE', 'HIGH', 'VERY_HIGH')
             if 'empty_group' not in rows[group]['flags']]
    assert all(lower <= higher for lower, higher in zip(rates, rates[1:]))
    assert float(rows['VERY_HIGH']['event_rate']) > float(rows['LOW']['event_rate'])
    assert float(rows['VERY_HIGH']['relative_risk']) > 1.0

    stage_rows = _strat_rows(runner.path(STRAT_STAGE), 'fusion_calibrated')
    assert {row['subgroup'] for row in stage_rows} <= {'EARLY', 'MID', 'LATE'}


def test_summary(synthetic_run):
    """Test the summary header and sections."""
    runner, corpus, _ = synthetic_run
    summary = runner.path(SUMMARY).read_text()
    assert summary.startswith('ctdr run summary')
    assert f'labeled trials: {len(corpus.trials)}' in summary
    assert 'Risk stratification, calibrated fusion, test set' in summary


def test_second_run_skips_every_stage(synthetic_run):
    """Test that an unchanged rerun does nothing."""
    runner, _, _ = synthetic_run
    outcomes = runner.run_all()
    assert all(outcome.status is StageStatus.skipped for outcome in outcomes)
    assert runner.ledger.last_completed('evaluate') is not None


def test_same_config_reproduces_every_artifact(synthetic_run, tmp_path):
    """A fresh run with the same seed and settings writes the same bytes and ledger fingerprints."""
    runner, _, _ = synthetic_run
    again = PipelineRunner(runner.config.model_copy(update={'output': OutputSettings(dir=str(tmp_path / 'again'))}))
    outcomes = again.run_all()
    assert all(outcome.status is StageStatus.completed for outcome in outcomes)

    for stage in STAGES:
        for name in stage.produces:
            assert again.path(name).read_bytes() == runner.path(name).read_bytes(), name
        first, second = runner.ledger.last_completed(stage.name), again.ledger.last_completed(stage.name)
        assert second.input_fingerprint == first.input_fingerprint, stage.name
        assert second.get_outputs() == first.get_outputs(), stage.name


def test_changed_threshold_reruns_label_and_downstream(synthetic_run, tmp_path):
    """Test that a labeling change reruns everything after ingest."""
    runner, _, _ = synthetic_run
    wilson = runner.config.wilson.model_copy(update={'threshold': 0.01})
    copy = _copy(runner, tmp_path, wilson=wilson)
    statuses = {outcome.stage: outcome.status for outcome in copy.run_all()}
    assert statuses['ingest'] is StageStatus.skipped
    assert all(statuses[name] is StageStatus.completed for name in STAGE_NAMES[1:])


def test_test_labels_never_reach_fitted_artifacts(synthetic_run, tmp_path):
    """Flipping test labels leaves every fitted artifact unchanged."""
    runner, _, _ = synthetic_run
    copy = _copy(runner, tmp_path)
    before = fitted_fingerprints(copy.out_dir)

    dataset = load_dataset(copy.path(LABELED))
    test_ids = set(SplitAssignment.load(copy.path(SPLIT)).ids(Partition.TEST))
    entries = []
    for entry in dataset.entries:
        if entry.nct_id in test_ids and entry.aggregates is not None:
            flipped = entry.aggregates.model_copy(update={'label': not entry.aggregates.label})
            entry = entry.model_copy(update={'aggregates': flipped})
        entries.append(entry)
    save_dataset(Dataset(entries=tuple(entries), rejections=dataset.rejections, meta=dataset.meta),
                 copy.path(LABELED))

    for name in ('split', 'features', 'train-tabular', 'train-text', 'calibrate', 'fuse'):
        copy.run_stage(name)
    assert fitted_fingerprints(copy.out_dir) == before
    assert set(SplitAssignment.load(copy.path(SPLIT)).ids(Partition.TEST)) == test_ids


def test_tampered_calibration_is_refused(synthetic_run, tmp_path):
    """Test a calibration fitted on another split."""
    runner, _, _ = synthetic_run
    copy = _copy(runner, tmp_path)
    payload = json.loads(copy.path(CAL_TABULAR).read_text())
    payload['fitted_on'] = '0' * 64
    copy.path(CAL_TABULAR).write_text(json.dumps(payload), encoding='utf-8')

    with pytest.raises(FingerprintMismatch) as excinfo:
        copy.run_stage('evaluate')
    assert excinfo.value.stage == 'evaluate'
    assert copy.ledger.history('evaluate')[-1].status is StageStatus.failed


def test_stage_before_its_inputs(run_config, tmp_path):
    """Test running a stage with nothing upstream."""
    runner = PipelineRunner(run_config(tmp_path / 'nowhere'))
    with pytest.raises(MissingUpstreamArtifact) as excinfo:
        runner.run_stage('evaluate')
    assert excinfo.value.stage == 'evaluate'


def test_empty_input_directory(run_config, tmp_path):
    """Test ingesting an empty directory."""
    empty = tmp_path / 'empty'
    empty.mkdir()
    runner = PipelineRunner(run_config(empty))
    with pytest.raises(EmptyDataset):
        runner.run_stage('ingest')
    assert runner.ledger.history('ingest')[-1].status is StageStatus.failed


def test_configuration_errors(run_config, tmp_path):
    """Test an empty input list and an unknown stage."""
    runner = PipelineRunner(run_config(tmp_path, **{'ingest.input_paths': ''}))
    with pytest.raises(ConfigError):
        runner.run_stage('ingest')
    with pytest.raises(ConfigError):
        runner.run_stage('deploy')
