import json
import logging
import re
from datetime import datetime
from pathlib import Path
from typing import List, Optional

import click
from more_itertools import flatten

from tcpsim.metrics import (
    MetricsError, TraceLog, cwnd_trace, summaries_to_text, summarize, throughput_series, write_series_csv,
)
from tcpsim.plotting import PLOT_KINDS, PlotError, load_series, plot_series
from tcpsim.resources import DEFAULT_LOSS_RATES, DEFAULT_SWEEP_SEEDS, DEFAULT_THROUGHPUT_WINDOW_S, FTP_FLOW_ID, VERSION
from tcpsim.scenario import (
    SWEEP_COLUMNS, ConfigurationError, RunFault, ScenarioConfig, SweepError, compare_variants,
    dumbbell_config_document, run_scenario, run_sweep,
)
from tcpsim.tcp import TcpVariant

__all__ = ['cli']

logger = logging.getLogger(__name__)


class InputError(click.UsageError):
    exit_code = 1


class RunFailure(click.ClickException):
    exit_code = 2


class TcpsimCommand(click.Command):
    def make_context(self, *args, **kwargs):
        try:
            return super().make_context(*args, **kwargs)
        except click.UsageError as e:
            e.exit_code = 1
            raise


class TcpsimGroup(click.Group):
    command_class = TcpsimCommand


def banner() -> str:
    return f'tcpsim {VERSION} {datetime.now().isoformat(timespec="seconds")}'


def parse_float_list(ctx, param, value: Optional[str]) -> Optional[List[float]]:
    if value is None:
        return None
    try:
        values = [float(item) for item in value.split(',') if item.strip()]
    except ValueError:
        raise InputError(f'{param.name}: expected a comma separated list of numbers, got "{value}"', ctx)
    if not values:
        raise InputError(f'{param.name}: the list is empty', ctx)
    return values


def parse_int_list(ctx, param, value: Optional[str]) -> Optional[List[int]]:
    """Accepts ``1,2,5`` as well as ranges such as ``1-20``."""
    if value is None:
        return None

    def expand(item: str) -> List[int]:
        span = re.fullmatch(r'(\d+)-(\d+)', item)
        if span:
            return list(range(int(span.group(1)), int(span.group(2)) + 1))
        return [int(item)]

    try:
        values = list(flatten(expand(item) for item in filter(None, (i.strip() for i in value.split(',')))))
    except ValueError:
        raise InputError(f'{param.name}: expected a comma separated list of integers, got "{value}"', ctx)
    if not values:
        raise InputError(f'{param.name}: the list is empty', ctx)
    return values


def parse_variants(ctx, param, value: Optional[str]) -> Optional[List[TcpVariant]]:
    if value is None:
        return None
    try:
        variants = [TcpVariant.parse(item.strip()) for item in value.split(',') if item.strip()]
    except ValueError as e:
        raise InputError(f'{param.name}: {e}', ctx)
    if not variants:
        raise InputError(f'{param.name}: the list is empty', ctx)
    return variants


def load_config(path: str) -> ScenarioConfig:
    if not Path(path).is_file():
        raise InputError(f'Configuration file "{path}" does not exist.')
    try:
        return ScenarioConfig.from_path(path)
    except ConfigurationError as e:
        raise InputError(f'Invalid configuration "{path}": {e}')


@click.group(cls=TcpsimGroup)
@click.option('-v', '--verbose', count=True, help='Log progress (-v) or every loss reaction (-vv).')
def cli(verbose: int):
    """Discrete-event simulator of TCP Tahoe and Reno over a lossy dumbbell network."""
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbose, logging.DEBUG)
    logging.basicConfig(format='%(asctime)s [%(levelname)s] %(name)s: %(message)s', level=level)


@cli.command()
@click.argument('config_path', type=click.Path())
@click.argument('out_dir', type=click.Path())
@click.option('-s', '--seed', type=int, default=None, help='Overrides the seed of the configuration.')
@click.option('--no-banner', is_flag=True, help='Omit the version and timestamp header of trace.log.')
def simulate(config_path: str, out_dir: str, seed: Optional[int], no_banner: bool):
    """Run one scenario and write trace.log, summary.txt and config.echo into OUT_DIR."""
    cfg = load_config(config_path)
    if seed is not None:
        cfg = cfg._replace(seed=seed)
        try:
            cfg.validate()
        except ConfigurationError as e:
            raise InputError(str(e))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = None if no_banner else banner()
    try:
        result = run_scenario(cfg)
    except RunFault as e:
        e.trace.write(out_dir / 'trace.log', banner=header)
        raise RunFailure(f'The run aborted, the partial trace is in {out_dir / "trace.log"}: {e}')
    result.trace.write(out_dir / 'trace.log', banner=header)
    (out_dir / 'summary.txt').write_text(summaries_to_text(result.summary))
    (out_dir / 'config.echo').write_text(result.config_echo.to_json())
    logger.info(f'Wrote the results of {len(result.trace)} trace records to {out_dir}')


@cli.command()
@click.argument('config_path', type=click.Path())
@click.argument('out_dir', type=click.Path())
@click.option('-l', '--loss', 'loss_rates', callback=parse_float_list,
              default=','.join(str(r) for r in DEFAULT_LOSS_RATES), show_default=True)
@click.option('--variants', callback=parse_variants, default='tahoe,reno', show_default=True)
@click.option('--seeds', callback=parse_int_list,
              default=f'{DEFAULT_SWEEP_SEEDS[0]}-{DEFAULT_SWEEP_SEEDS[-1]}', show_default=True)
@click.option('-w', '--workers', type=int, default=1, show_default=True)
@click.option('-q', '--quiet', is_flag=True, help='Hide the progress bar.')
def sweep(
        config_path: str,
        out_dir: str,
        loss_rates: List[float],
        variants: List[TcpVariant],
        seeds: List[int],
        workers: int,
        quiet: bool
):
    """
    Run the loss rate x variant x seed matrix and write sweep.csv and sweep_summary.csv into OUT_DIR.
    Packet counts of the runs appear only in the aggregated sweep_summary.csv.
    """
    cfg = load_config(config_path)
    try:
        result = run_sweep(cfg, loss_rates, variants, seeds, workers=workers, progress=not quiet)
    except ConfigurationError as e:
        raise InputError(str(e))
    except SweepError as e:
        raise RunFailure(str(e))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result.rows[SWEEP_COLUMNS].to_csv(out_dir / 'sweep.csv', index=False)
    result.summary.to_csv(out_dir / 'sweep_summary.csv', index=False)
    logger.info(f'Wrote {len(result.rows)} sweep rows to {out_dir}')


@cli.command()
@click.argument('trace_path', type=click.Path())
@click.option('-f', '--flow', 'flow_id', type=int, default=FTP_FLOW_ID, show_default=True)
@click.option('-w', '--window', 'window_s', type=float, default=DEFAULT_THROUGHPUT_WINDOW_S, show_default=True)
@click.option('-o', '--out-dir', type=click.Path(), default=None,
              help='Write throughput.csv, goodput.csv, cwnd.csv and summary.txt here instead of printing.')
def analyze(trace_path: str, flow_id: int, window_s: float, out_dir: Optional[str]):
    """Recompute the measurements of a saved trace."""
    if not Path(trace_path).is_file():
        raise InputError(f'Trace file "{trace_path}" does not exist.')
    try:
        trace = TraceLog.from_path(trace_path)
        summaries = summarize(trace)
        throughput = throughput_series(trace, flow_id, window_s)
        goodput = throughput_series(trace, flow_id, window_s, goodput=True)
        cwnd = cwnd_trace(trace, flow_id)
    except (MetricsError, UnicodeDecodeError) as e:
        raise InputError(f'Cannot analyze "{trace_path}": {e}')
    if out_dir is None:
        click.echo(summaries[flow_id].to_text(), nl=False)
        return
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_series_csv(throughput, out_dir / 'throughput.csv', ('window_start_s', 'throughput_bps'))
    write_series_csv(goodput, out_dir / 'goodput.csv', ('window_start_s', 'goodput_bps'))
    write_series_csv(cwnd, out_dir / 'cwnd.csv', ('t_s', 'cwnd_mss'))
    (out_dir / 'summary.txt').write_text(summaries_to_text(summaries))


@cli.command()
@click.argument('input_path', type=click.Path())
@click.argument('second_input', type=click.Path(), required=False)
@click.option('-k', '--kind', type=click.Choice(PLOT_KINDS), required=True)
@click.option('-o', '--out', 'out_path', type=click.Path(), required=True)
@click.option('-f', '--flow', 'flow_id', type=int, default=FTP_FLOW_ID, show_default=True)
@click.option('-w', '--window', 'window_s', type=float, default=DEFAULT_THROUGHPUT_WINDOW_S, show_default=True)
@click.option('--labels', default=None, help='Comma separated legend labels (default: the file names).')
def plot(
        input_path: str,
        second_input: Optional[str],
        kind: str,
        out_path: str,
        flow_id: int,
        window_s: float,
        labels: Optional[str]
):
    """Plot a throughput or cwnd series (trace file or CSV) as SVG; compare overlays two inputs."""
    paths = [input_path] if second_input is None else [input_path, second_input]
    if kind == 'compare' and len(paths) != 2:
        raise InputError('--kind compare needs two inputs.')
    names = labels.split(',') if labels else [Path(p).stem for p in paths]
    if len(names) < len(paths):
        raise InputError(f'Expected {len(paths)} labels, got {len(names)}.')
    requested = 'cwnd' if kind == 'cwnd' else 'throughput'
    try:
        loaded = [load_series(p, requested, flow_id, window_s) for p in paths]
        quantity = loaded[0][0]
        plot_series([(name, series) for name, (_, series) in zip(names, loaded)], out_path, quantity=quantity)
    except PlotError as e:
        raise InputError(str(e))


@cli.command('compare-variants')
@click.argument('config_path', type=click.Path())
@click.option('-s', '--seed', type=int, default=None)
def compare_variants_cmd(config_path: str, seed: Optional[int]):
    """Completion time of the bounded TCP flow under Tahoe and Reno, and Tahoe's relative time saving."""
    cfg = load_config(config_path)
    if seed is not None:
        cfg = cfg._replace(seed=seed)
    try:
        comparison = compare_variants(cfg)
    except ConfigurationError as e:
        raise InputError(str(e))
    except RunFault as e:
        raise RunFailure(str(e))
    click.echo(comparison.to_text(), nl=False)


@cli.command('init-config')
@click.argument('out_path', type=click.Path())
@click.option('-l', '--loss', 'loss_rate', type=float, default=0.0, show_default=True)
@click.option('--variant', type=click.Choice([v.value for v in TcpVariant]), default='reno', show_default=True)
@click.option('--total-bytes', type=int, default=None, help='Bound the FTP transfer (unbounded by default).')
def init_config(out_path: str, loss_rate: float, variant: str, total_bytes: Optional[int]):
    """Write the six-node dumbbell configuration as a starting point."""
    doc = dumbbell_config_document(loss_rate, variant, total_bytes)
    try:
        ScenarioConfig.from_dict(doc)
    except ConfigurationError as e:
        raise InputError(str(e))
    Path(out_path).write_text(json.dumps(doc, indent=2) + '\n')
