"""
Command-line verbs for the SimDiff forecaster.
"""
import logging
from functools import wraps
from typing import Optional

import click
from tabulate import tabulate

from config import load_run_config
from services.command_handlers import CommandHandlers
from utils.exceptions import SimDiffError

logger = logging.getLogger(__name__)


class SimDiffGroup(click.Group):
    """Click group that turns forecaster errors into their exit codes."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except SimDiffError as e:
            click.echo(f"Error: {e}", err=True)
            ctx.exit(e.exit_code)


def run_options(checkpoint: bool = False, verbose: bool = True):
    """Shared --config/--out/--seed (and optionally --checkpoint/--verbose) options."""
    def decorator(f):
        if verbose:
            f = click.option('--verbose', '-v', is_flag=True, help='Progress bars and debug logging.')(f)
        if checkpoint:
            f = click.option('--checkpoint', type=click.Path(dir_okay=False), default=None,
                             help='Checkpoint file (default: <out>/model.ckpt).')(f)
        f = click.option('--seed', type=int, default=None, help='Run seed (overrides file and environment).')(f)
        f = click.option('--out', 'out_dir', type=click.Path(file_okay=False), default=None,
                         help='Output directory.')(f)
        f = click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
                         help='YAML run configuration.')(f)

        @wraps(f)
        def wrapper(config_path: Optional[str], out_dir: Optional[str], seed: Optional[int], **kwargs):
            run_config = load_run_config(config_path, output_dir=out_dir, seed=seed)
            if kwargs.get('verbose'):
                logging.getLogger().setLevel(logging.DEBUG)
            return f(run_config, **kwargs)
        return wrapper
    return decorator


def create_cli(handlers: CommandHandlers) -> click.Group:
    """Create and configure the command group."""

    @click.group(cls=SimDiffGroup)
    def cli():
        """Single-stage diffusion forecaster: train, sample, evaluate and ablate."""

    @cli.command('synth')
    @run_options(verbose=False)
    def synth(run_config):
        """Generate the synthetic drift series."""
        paths = handlers.synth(run_config)
        click.echo(f"Wrote {paths['data']}")

    @cli.command('train')
    @run_options()
    def train(run_config, verbose):
        """Train a forecaster and write model.ckpt and history.csv."""
        result = handlers.train(run_config, verbose=verbose)
        click.echo(f"Best epoch {result['best_epoch']} (val MSE {result['best_val_mse']:.6g}); "
                   f"checkpoint {result['checkpoint']}")

    @cli.command('forecast')
    @run_options(checkpoint=True)
    def forecast(run_config, checkpoint, verbose):
        """Sample the horizon after the series end; write samples.csv and point.csv."""
        paths = handlers.forecast(run_config, checkpoint, verbose=verbose)
        click.echo(f"Wrote {paths['samples']} and {paths['point']}")

    @cli.command('evaluate')
    @run_options(checkpoint=True)
    def evaluate(run_config, checkpoint, verbose):
        """Score the test split; write report.csv and report_windows.csv."""
        report = handlers.evaluate(run_config, checkpoint, verbose=verbose)
        click.echo(report.summary())

    @cli.command('ablate-ni')
    @run_options()
    def ablate_ni(run_config, verbose):
        """Train twins with and without normalization independence."""
        frame = handlers.ablate_ni(run_config, verbose=verbose)
        click.echo(tabulate(frame, headers='keys', showindex=False, floatfmt='.6g'))

    @cli.command('bench')
    @run_options(checkpoint=True)
    def bench(run_config, checkpoint, verbose):
        """Time a single draw across horizons; write bench.csv."""
        frame = handlers.bench(run_config, checkpoint, verbose=verbose)
        click.echo(tabulate(frame, headers='keys', showindex=False, floatfmt='.4g'))

    @cli.command('schedule')
    @run_options(verbose=False)
    def schedule(run_config):
        """Dump the noise schedule to schedule.csv."""
        click.echo(f"Wrote {handlers.schedule(run_config)}")

    @cli.command('sensitivity')
    @run_options(checkpoint=True)
    def sensitivity(run_config, checkpoint, verbose):
        """Sweep retained sampling steps and skip types; write sensitivity.csv."""
        frame = handlers.sensitivity(run_config, checkpoint, verbose=verbose)
        click.echo(tabulate(frame, headers='keys', showindex=False, floatfmt='.6g'))

    return cli
