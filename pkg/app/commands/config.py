"""
Config commands.
"""
import sys

import click

from models.errors import ConfigError
from utils.config import PipelineConfig, flatten_config, load_config


@click.group(help='Inspect pipeline configuration.')
def config():
    pass


@config.command('show-defaults', help='Print every default as a section.name=value line.')
def show_defaults():
    for key, value in flatten_config(PipelineConfig()).items():
        click.echo(f'{key}={value}')


@config.command('show', help='Print the effective configuration after file and environment overrides.')
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='Config file.')
def show(config_path):
    try:
        effective = load_config(config_path)
    except ConfigError as exc:
        click.echo(f'error: {exc}', err=True)
        sys.exit(exc.exit_code)
    for key, value in flatten_config(effective).items():
        click.echo(f'{key}={value}')
