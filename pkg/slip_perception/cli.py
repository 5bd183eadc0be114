from slip_perception import env  # noqa: F401 to make sure certain environment variables are set
import functools
import os
import sys

import click

from slip_perception.errors import SlipPerceptionError
from slip_perception.utils.string_tools import print_colored
from slip_perception.utils.timer import Timer


def exception_interceptor(func):
    """Known errors end the process with their exit code; anything else propagates."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except SlipPerceptionError as e:
            print_colored(f'{type(e).__name__}', str(e), 'red', err=True)
            sys.exit(e.exit_code)
    return wrapper


def config_param(func):
    @click.option('--config', 'config_path', default=None, type=click.Path(dir_okay=False),
                  help='YAML pipeline config (defaults apply to missing keys).')
    @click.option('--seed', default=None, type=click.IntRange(0, 2 ** 64 - 1), help='Overrides the global seed.')
    @click.option('--verbose', default=False, is_flag=True, help='Verbose mode.')
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        from slip_perception.config import load_config
        os.environ['VERBOSE'] = str(kwargs.pop('verbose'))
        kwargs['config'] = load_config(kwargs.pop('config_path'), kwargs.pop('seed'))
        return func(*args, **kwargs)
    return wrapper


def mask_param(func):
    @click.option('--mask', default=None, help='Comma-separated modalities to keep (rgb, depth, mic, ft) or "all".')
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        from slip_perception.config import parse_mask
        mask = kwargs['mask']
        kwargs['mask'] = None if mask is None else parse_mask(mask)
        return func(*args, **kwargs)
    return wrapper


def path_option(name, help_text, **kwargs):
    return click.option(name, required=True, type=click.Path(), help=help_text, **kwargs)


@click.group(invoke_without_command=True)
@click.pass_context
def main(ctx):
    Timer()  # start timer
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())


@main.command()
@exception_interceptor
@path_option('--out', 'Directory receiving the episodes and manifest.tsv.')
@click.option('--n-per-cell', default=None, type=int, help='Episodes per condition, object and pattern.')
@config_param
def generate(out, n_per_cell, config):
    from slip_perception.options.generate import DatasetGenerator
    if n_per_cell is not None:
        from slip_perception.config import config_from_dict, config_to_dict
        values = config_to_dict(config)
        values['dataset']['n_per_cell'] = n_per_cell
        config = config_from_dict(values)
    DatasetGenerator(config, out).generate()


@main.command()
@exception_interceptor
@path_option('--manifest', 'Dataset manifest with train and val splits.')
@path_option('--out', 'Directory receiving bundle.npz and the training logs.')
@mask_param
@config_param
def train(manifest, out, mask, config):
    from slip_perception.options.train import Trainer
    Trainer(config, manifest, out, mask).train()


@main.command(name='eval')
@exception_interceptor
@path_option('--bundle', 'Model bundle written by train.')
@path_option('--manifest', 'Dataset manifest with an eval split.')
@path_option('--out', 'Directory receiving the reports.')
@mask_param
@config_param
def evaluate(bundle, manifest, out, mask, config):
    from slip_perception.options.evaluate import Evaluator
    Evaluator(config, bundle, manifest, out, mask).evaluate()


@main.command(name='score-stream')
@exception_interceptor
@path_option('--bundle', 'Model bundle written by train.')
@click.option('--input', 'input_file', default='-', type=click.File('r'), help='NDJSON frames (default stdin).')
@click.option('--output', 'output_file', default='-', type=click.File('w', lazy=False), help='NDJSON scores (default stdout).')
@mask_param
@config_param
def score_stream(bundle, input_file, output_file, mask, config):
    from slip_perception.options.stream import StreamScorer
    scorer = StreamScorer(
        bundle, mask, report_latency=config.stream.report_latency, max_skipped_lines=config.stream.max_skipped_lines,
    )
    scorer.score(input_file, output_file)


@main.command()
@exception_interceptor
@path_option('--manifest', 'Dataset manifest with train, val and eval splits.')
@path_option('--out', 'Directory receiving one bundle and report per modality set plus the table.')
@config_param
def ablate(manifest, out, config):
    from slip_perception.options.evaluate import Ablation
    Ablation(config, manifest, out).run()


@main.command()
@exception_interceptor
@path_option('--out', 'Path of the config document to write.')
@click.option('--force', default=False, is_flag=True, help='Overwrite an existing file.')
def configure(out, force):
    from slip_perception.options.configure import write_default_config
    write_default_config(out, overwrite=force)


@main.command(name='export-ndjson')
@exception_interceptor
@path_option('--episode', 'Episode directory written by generate.')
@click.option('--output', 'output_file', default='-', type=click.File('w', lazy=False), help='NDJSON frames (default stdout).')
def export_ndjson(episode, output_file):
    from slip_perception.options import resolve_path
    from slip_perception.pipeline.episode_io import episode_to_ndjson, read_episode
    streams, _ = read_episode(resolve_path(episode))
    for line in episode_to_ndjson(streams):
        output_file.write(line + '\n')


if __name__ == '__main__':
    main()
