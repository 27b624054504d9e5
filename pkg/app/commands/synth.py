"""
Synthetic corpus command.
"""
import click

from app import configure_logging
from models.synthetic import write_corpus


@click.command(help='Write a synthetic registry corpus with planted dosing-error signal.')
@click.argument('out_dir', type=click.Path(file_okay=False))
@click.option('--trials', default=2000, show_default=True, type=click.IntRange(min=10), help='Signal trials.')
@click.option('--seed', default=0, show_default=True, type=int)
@click.option('--verbose', '-v', is_flag=True)
def synth(out_dir, trials, seed, verbose):
    configure_logging(verbose)
    corpus = write_corpus(out_dir, n_trials=trials, seed=seed)
    click.echo(f'{corpus.path}: {len(corpus.trials)} trials, prevalence {corpus.prevalence:.3f}, '
               f'{corpus.excluded} excluded, {corpus.malformed} malformed')
