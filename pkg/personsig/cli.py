"""
Command line interface.

    gps gen        generate a synthetic dataset directory
    gps graph      build and export the correlation graph of a dataset
    gps gradcheck  check analytic gradients against finite differences
    gps train      train a model
    gps eval       evaluate a trained model on the held-out split
    gps export     write the query/gallery signatures of a trained model

Exit codes: 0 success, 1 check failure, 2 usage or configuration error,
3 input/output error.
"""
import os
import sys
import logging
from functools import wraps

import click

from .common import AnnotationError
from .common import ConfigError
from .common import SchemaError
from .config import check_params
from .config import load_params
from .config import synth_config
from .corrgraph import block_norms
from .corrgraph import build_graph
from .corrgraph import graph_to_dict
from .data import load_dataset
from .gradcheck import gradient_check
from .interface import evaluate as evaluate_run
from .interface import export as export_run
from .interface import train as train_run
from .ontology import compute_stats
from .ontology import load_annotations
from .ontology import load_schema
from .retrieval import write_report
from .synthgen import generate
from .synthgen import write_dataset
from .utils import mkdir_path
from .utils import write_json

logger = logging.getLogger(__name__)

EXIT_FAILURE = 1
EXIT_IO = 3


class IOFailure(click.ClickException):
    exit_code = EXIT_IO


def handle_errors(func):
    """translate domain errors into click errors with the right exit code"""
    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ConfigError as ex:
            raise click.UsageError(str(ex))
        except (IOError, OSError, AnnotationError, SchemaError) as ex:
            raise IOFailure(str(ex))
        except (click.ClickException, click.exceptions.Exit):
            raise
        except Exception as ex:
            failure = click.ClickException(str(ex))
            failure.exit_code = EXIT_FAILURE
            raise failure
    return wrapper


def resolve_params(config, seed, **overrides):
    params = load_params(config) if config else {}
    if seed is not None:
        params['seed'] = seed
    for section, values in overrides.items():
        values = {k: v for k, v in values.items() if v is not None}
        if values:
            params.setdefault(section, {}).update(values)
    return check_params(params)


def check_output(path, force):
    if os.path.exists(path) and not force:
        raise IOError('{} already exists, use --force to overwrite'.format(path))


config_option = click.option('--config', type=click.Path(dir_okay=False), default=None,
                             help='json file of run parameters')
seed_option = click.option('--seed', type=click.IntRange(min=0), default=None,
                           help='overrides the seed of the configuration')
force_option = click.option('--force', is_flag=True, default=False, help='overwrite existing outputs')
feature_option = click.option('--feature', type=click.Choice(['concat', 'bnn']), default=None,
                              help='retrieval feature (default from the configuration)')
data_option = click.option('--data', type=click.Path(file_okay=False, exists=True), default=None,
                           help='dataset directory to evaluate on instead of the dataset of the run, '
                                'its schema must be the one the run was trained with')


@click.group()
@click.option('--log-level', type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR']), default='INFO')
def cli(log_level):
    logging.getLogger().setLevel(log_level)


@cli.command()
@config_option
@seed_option
@click.option('--out', required=True, type=click.Path(file_okay=False))
@force_option
@handle_errors
def gen(config, seed, out, force):
    """generate a synthetic dataset into OUT"""
    params = resolve_params(config, seed)
    check_output(out, force)
    dataset = generate(synth_config(params))
    files = write_dataset(dataset, out)
    click.echo('wrote {} files and manifest.json into {}'.format(len(files), out))


@cli.command()
@click.argument('data', type=click.Path(file_okay=False))
@click.option('--schema', type=click.Path(dir_okay=False), default=None,
              help='schema json (default DATA/schema.json)')
@click.option('--degree', type=click.Choice(['row', 'col', 'sym']), default='row')
@click.option('--out', type=click.Path(dir_okay=False), default=None,
              help='graph json (default DATA/graph.json)')
@force_option
@handle_errors
def graph(data, schema, degree, out, force):
    """build the correlation graph of the annotations of DATA"""
    schema = schema or os.path.join(data, 'schema.json')
    out = out or os.path.join(data, 'graph.json')
    check_output(out, force)
    attrs, _, attachment = load_schema(schema)
    annotations = load_annotations(os.path.join(data, 'annotations.csv'), attrs)
    stats = compute_stats(annotations)
    for name, count in zip(attrs.names, stats.occurrence):
        if count == 0:
            click.echo('warning: attribute "{}" never occurs, its correlation row is zero'.format(name))
    g = build_graph(stats, attachment, degree)
    click.echo('N_G = {}'.format(len(g.M)))
    for block, norm in block_norms(g).items():
        click.echo('|{}| = {:.6f}'.format(block, norm))
    write_json(graph_to_dict(g), out)
    click.echo('wrote {}'.format(out))


@cli.command()
@config_option
@seed_option
@click.option('--tolerance', type=float, default=None, help='maximum relative error')
@click.option('--corrupt', type=str, default=None, help='tensor whose gradient is corrupted (debug)')
@click.pass_context
@handle_errors
def gradcheck(ctx, config, seed, tolerance, corrupt):
    """check analytic gradients against central finite differences"""
    params = resolve_params(config, seed, gradcheck={'tolerance': tolerance, 'corrupt': corrupt})
    report = gradient_check(params)
    for name, error in report.errors.items():
        click.echo('{:<32} {:.3e} {}'.format(name, error, 'FAIL' if name in report.failed else 'ok'))
    if not report.passed:
        click.echo('gradient check failed at tolerance {} for : {}'.format(
            report.tolerance, ', '.join(report.failed)))
        ctx.exit(EXIT_FAILURE)
    click.echo('gradient check passed at tolerance {}'.format(report.tolerance))


@cli.command()
@config_option
@seed_option
@click.option('--out', required=True, type=click.Path(file_okay=False))
@force_option
@handle_errors
def train(config, seed, out, force):
    """train a model, write checkpoint, losses and config into OUT"""
    params = resolve_params(config, seed)
    check_output(out, force)
    train_run(params, out)
    click.echo('wrote checkpoint into {}'.format(out))


@cli.command(name='eval')
@click.option('--run', 'run_dir', required=True, type=click.Path(file_okay=False, exists=True))
@feature_option
@data_option
@click.option('--distance', type=click.Choice(['euclidean', 'cosine']), default=None)
@click.option('--out', type=click.Path(file_okay=False), default=None, help='default: the run folder')
@force_option
@handle_errors
def evaluate(run_dir, feature, data, distance, out, force):
    """evaluate the trained model of RUN on the held-out split of its dataset or of DATA"""
    out = out or run_dir
    dataset = load_dataset(data) if data else None
    report = evaluate_run(run_dir, dataset=dataset, feature=feature, distance=distance)
    check_output(os.path.join(out, 'report_{}.json'.format(report['feature'])), force)
    mkdir_path(out)
    filenames = write_report(report, out)
    click.echo('feature={feature} distance={distance} mAP={mAP:.4f} R1={R1:.4f} R5={R5:.4f} '
               'R10={R10:.4f} attribute_accuracy={attribute_accuracy:.4f}'.format(**report))
    click.echo('wrote {}'.format(', '.join(filenames)))


@cli.command()
@click.option('--run', 'run_dir', required=True, type=click.Path(file_okay=False, exists=True))
@feature_option
@data_option
@click.option('--out', required=True, type=click.Path(file_okay=False))
@force_option
@handle_errors
def export(run_dir, feature, data, out, force):
    """write query.gpss and gallery.gpss signatures of RUN into OUT"""
    check_output(os.path.join(out, 'query.gpss'), force)
    dataset = load_dataset(data) if data else None
    filenames = export_run(run_dir, out, dataset=dataset, feature=feature)
    click.echo('wrote {}'.format(', '.join(filenames)))


def main():
    cli(prog_name='gps')


if __name__ == '__main__':
    sys.exit(main())
