from models.database import LEDGER_NAME, Ledger, StageStatus


def test_start_and_finish(tmp_path):
    """Test recording one stage run."""
    ledger = Ledger(tmp_path)
    run_id = ledger.start('ingest', 'abc')
    assert ledger.last_completed('ingest') is None
    assert ledger.history('ingest')[0].status is StageStatus.running

    ledger.finish(run_id, StageStatus.completed, outputs={'dataset.jsonl': 'f00'})
    last = ledger.last_completed('ingest')
    assert last.input_fingerprint == 'abc'
    assert last.get_outputs() == {'dataset.jsonl': 'f00'}
    assert last.finished_at is not None
    assert (tmp_path / LEDGER_NAME).is_file()


def test_last_completed_ignores_failed_and_skipped_runs(tmp_path):
    """Test that only completed runs count as up to date."""
    ledger = Ledger(tmp_path)
    ledger.finish(ledger.start('label', 'one'), StageStatus.completed, outputs={})
    ledger.finish(ledger.start('label', 'two'), StageStatus.failed, message='no trial could be labeled')
    ledger.finish(ledger.start('label', 'one'), StageStatus.skipped)

    assert ledger.last_completed('label').input_fingerprint == 'one'
    statuses = [run.status for run in ledger.history('label')]
    assert statuses == [StageStatus.completed, StageStatus.failed, StageStatus.skipped]
    assert ledger.history('label')[1].message == 'no trial could be labeled'


def test_history_survives_reopening(tmp_path):
    """Test that the ledger persists across connections."""
    ledger = Ledger(tmp_path)
    ledger.finish(ledger.start('split', 'x'), StageStatus.completed, outputs={'split.tsv': 'aa'})
    ledger.finish(ledger.start('features', 'y'), StageStatus.completed, outputs={})
    ledger.dispose()

    reopened = Ledger(tmp_path)
    assert [run.stage for run in reopened.history()] == ['split', 'features']
    assert reopened.last_completed('split').get_outputs() == {'split.tsv': 'aa'}
    assert reopened.last_completed('evaluate') is None
