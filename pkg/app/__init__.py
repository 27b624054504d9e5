import logging
import sys

import click

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


def configure_logging(verbose=False):
    """Log to stderr, at DEBUG with --verbose and INFO otherwise."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT,
                        stream=sys.stderr, force=True)


class CtdrGroup(click.Group):
    """Command group whose usage errors exit with status 1."""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        if not standalone_mode:
            return super().main(args, prog_name, complete_var, standalone_mode, **extra)
        try:
            result = super().main(args, prog_name, complete_var, standalone_mode=False, **extra)
        except click.UsageError as exc:
            exc.show()
            sys.exit(1)
        except click.ClickException as exc:
            exc.show()
            sys.exit(exc.exit_code)
        except click.Abort:
            click.echo('Aborted!', err=True)
            sys.exit(1)
        sys.exit(result if isinstance(result, int) else 0)


def create_cli():
    """Create the ctdr command-line interface."""

    @click.group(cls=CtdrGroup, help='Clinical-trial dosing-error risk pipeline.')
    def cli():
        pass

    from app.commands.pipeline import stage_commands
    from app.commands.config import config
    from app.commands.synth import synth

    for command in stage_commands():
        cli.add_command(command)
    cli.add_command(config)
    cli.add_command(synth)

    return cli
