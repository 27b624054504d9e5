from click.testing import CliRunner

import pytest

from app import create_cli
from models.pipeline import DATASET, LABELED


@pytest.fixture()
def cli():
    return create_cli()


@pytest.fixture()
def invoke(cli):
    runner = CliRunner(mix_stderr=False)

    def run(*args):
        return runner.invoke(cli, list(args), env={'CTDR_OUTPUT__DIR': None, 'CTDR_MODEL__SEED': None})
    return run


def _config_file(tmp_path, input_dir, out_dir):
    path = tmp_path / 'run.cfg'
    path.write_text(f'ingest.input_paths={input_dir}\noutput.dir={out_dir}\n', encoding='utf-8')
    return path


def test_show_defaults(invoke):
    """Test that every default is printed as key=value."""
    result = invoke('config', 'show-defaults')
    assert result.exit_code == 0
    assert 'wilson.threshold=0.0001' in result.output.splitlines()
    assert 'split.train_fraction=0.7' in result.output.splitlines()


def test_show_with_missing_file(invoke, tmp_path):
    """Test that a missing config file exits with 1."""
    result = invoke('config', 'show', '--config', str(tmp_path / 'absent.cfg'))
    assert result.exit_code == 1
    assert 'error' in result.stderr


def test_unknown_command_is_a_usage_error(invoke):
    """Test an unknown command."""
    assert invoke('deploy').exit_code == 1


def test_synth_writes_corpus(invoke, tmp_path):
    """Test generating a small corpus."""
    result = invoke('synth', str(tmp_path / 'corpus'), '--trials', '25', '--seed', '3')
    assert result.exit_code == 0
    assert '25 trials' in result.output
    assert (tmp_path / 'corpus' / 'studies.jsonl').is_file()
    assert (tmp_path / 'corpus' / 'truth.tsv').read_text().count('\n') == 26


def test_stages_run_then_skip(invoke, tmp_path):
    """Test that a repeated stage is skipped."""
    invoke('synth', str(tmp_path / 'corpus'), '--trials', '40')
    config = _config_file(tmp_path, tmp_path / 'corpus', tmp_path / 'run')

    first = invoke('ingest', '--config', str(config))
    assert first.exit_code == 0
    assert first.output.strip() == 'ingest: completed'
    assert invoke('label', '--config', str(config)).output.strip() == 'label: completed'
    assert (tmp_path / 'run' / DATASET).is_file()
    assert (tmp_path / 'run' / LABELED).is_file()

    assert invoke('ingest', '--config', str(config)).output.strip() == 'ingest: skipped'
    assert invoke('ingest', '--config', str(config), '--force').output.strip() == 'ingest: completed'


def test_out_option_overrides_config(invoke, tmp_path):
    """Test that --out wins over output.dir."""
    invoke('synth', str(tmp_path / 'corpus'), '--trials', '10')
    config = _config_file(tmp_path, tmp_path / 'corpus', tmp_path / 'run')
    result = invoke('ingest', '--config', str(config), '--out', str(tmp_path / 'elsewhere'))
    assert result.exit_code == 0
    assert (tmp_path / 'elsewhere' / DATASET).is_file()
    assert not (tmp_path / 'run' / DATASET).exists()


def test_data_errors_exit_with_two(invoke, tmp_path):
    """Test that an empty corpus is a data error."""
    empty = tmp_path / 'empty'
    empty.mkdir()
    config = _config_file(tmp_path, empty, tmp_path / 'run')
    result = invoke('ingest', '--config', str(config))
    assert result.exit_code == 2
    assert 'in stage ingest' in result.stderr

    missing = invoke('split', '--config', str(config))
    assert missing.exit_code == 2
    assert 'run the stage that produces it first' in missing.stderr


def test_config_errors_exit_with_one(invoke, tmp_path):
    """Test that bad settings are configuration errors."""
    bad = tmp_path / 'bad.cfg'
    bad.write_text('wilson.threshold=0\n', encoding='utf-8')
    assert invoke('ingest', '--config', str(bad)).exit_code == 1
    assert invoke('ingest', '--config', str(tmp_path / 'absent.cfg')).exit_code == 1
