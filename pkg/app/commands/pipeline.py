"""
Pipeline commands: one per stage, plus ``all``.
"""
import logging
import sys

import click

from app import configure_logging
from models.errors import CtdrError
from models.pipeline import STAGE_NAMES, PipelineRunner
from utils.config import load_config

logger = logging.getLogger(__name__)

STAGE_HELP = {
    'ingest': 'Parse and filter registry documents into dataset.jsonl.',
    'label': 'Label trials by the Wilson lower bound of their dosing-error rate.',
    'split': 'Chronological train/validation/test split and shift diagnostics.',
    'features': 'Build the tabular matrix and hashed tf-idf text matrix.',
    'train-tabular': 'Random search and training of the boosted-tree model.',
    'train-text': 'Train the linear text model.',
    'calibrate': 'Predict with both models and fit their calibrators on validation.',
    'fuse': 'Fit the fusion weight, fusion calibrator and thresholds on validation.',
    'evaluate': 'Metrics of all model variants on validation and test.',
    'stratify': 'Risk stratification tables and the run summary.',
}


def pipeline_options(command):
    """Options shared by every pipeline command."""
    options = [
        click.option('--config', 'config_path', type=click.Path(dir_okay=False),
                     help='Config file of section.name=value lines.'),
        click.option('--out', help='Output directory (overrides output.dir).'),
        click.option('--seed', type=int, help='Random seed (overrides model.seed).'),
        click.option('--force', is_flag=True, help='Run even when artifacts are up to date.'),
        click.option('--verbose', '-v', is_flag=True, help='Debug logging.'),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def execute(action, config_path=None, out=None, seed=None, verbose=False):
    """Load the config, run ``action(runner)`` and map errors to exit codes."""
    configure_logging(verbose)
    overrides = {}
    if out:
        overrides['output.dir'] = out
    if seed is not None:
        overrides['model.seed'] = str(seed)

    try:
        runner = PipelineRunner(load_config(config_path, overrides=overrides))
        outcomes = action(runner)
    except CtdrError as exc:
        where = f' in stage {exc.stage}' if exc.stage else ''
        click.echo(f'error{where}: {exc}', err=True)
        sys.exit(exc.exit_code)
    except Exception as exc:
        logger.exception("unexpected failure")
        click.echo(f'internal error: {exc}', err=True)
        sys.exit(3)

    for outcome in outcomes:
        click.echo(f'{outcome.stage}: {outcome.status.value}')


def _stage_command(name):
    @click.command(name=name, help=STAGE_HELP[name])
    @pipeline_options
    def command(config_path, out, seed, force, verbose):
        execute(lambda runner: [runner.run_stage(name, force=force)], config_path, out, seed, verbose)
    return command


@click.command(name='all', help='Run every stage in order, skipping stages whose artifacts are current.')
@pipeline_options
def run_all(config_path, out, seed, force, verbose):
    execute(lambda runner: runner.run_all(force=force), config_path, out, seed, verbose)


def stage_commands():
    return [_stage_command(name) for name in STAGE_NAMES] + [run_all]
