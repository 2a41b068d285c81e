"""
Self-contained SVG figures of throughput and congestion window series.
The output is byte-stable: fixed hash salt, no date metadata, text kept as ``<text>`` elements.
Every plotted series is wrapped in an SVG group with the id ``series-<label>``.
"""
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt

from tcpsim.metrics import MetricsError, TraceLog, cwnd_trace, read_series_csv, throughput_series

__all__ = ['PlotError', 'PLOT_KINDS', 'load_series', 'plot_series']

logger = logging.getLogger(__name__)

PLOT_KINDS = ('throughput', 'cwnd', 'compare')

Y_LABELS = {
    'throughput': 'throughput (bps)',
    'goodput': 'goodput (bps)',
    'cwnd': 'cwnd (MSS)',
}

Series = List[Tuple[float, float]]


class PlotError(ValueError):
    pass


def load_series(
        path: Union[str, Path],
        quantity: str = 'throughput',
        flow_id: int = 1,
        window_s: float = 1.0,
) -> Tuple[str, Series]:
    """
    Reads a CSV written by ``tcpsim analyze`` or computes the series from a trace file.
    Returns the quantity actually read (a CSV decides it through its header) and the points.
    """
    path = Path(path)
    if not path.is_file():
        raise PlotError(f'No such file: {path}')
    try:
        if path.suffix == '.csv':
            (_, y_column), series = read_series_csv(path)
            quantity = 'cwnd' if y_column.startswith('cwnd') else y_column.split('_')[0]
        else:
            trace = TraceLog.from_path(path)
            if quantity == 'cwnd':
                series = cwnd_trace(trace, flow_id)
            else:
                series = throughput_series(trace, flow_id, window_s, goodput=quantity == 'goodput')
    except (MetricsError, UnicodeDecodeError) as e:
        raise PlotError(f'Cannot read "{path}": {e}')
    return quantity, series


def plot_series(
        series: Sequence[Tuple[str, Series]],
        out_path: Union[str, Path],
        quantity: str = 'throughput',
        title: Optional[str] = None,
):
    if not series:
        raise PlotError('Nothing to plot')
    for label, points in series:
        if not points:
            raise PlotError(f'The series "{label}" is empty')

    with plt.rc_context({'svg.hashsalt': 'tcpsim', 'svg.fonttype': 'none'}):
        fig, ax = plt.subplots(figsize=(8, 4.5))
        try:
            for label, points in series:
                xs, ys = zip(*points)
                drawstyle = 'steps-post' if quantity == 'cwnd' else 'default'
                line, = ax.plot(xs, ys, label=label, drawstyle=drawstyle, linewidth=1.2)
                line.set_gid(f'series-{label}')
            ax.set_xlabel('time (s)')
            ax.set_ylabel(Y_LABELS.get(quantity, quantity))
            if title:
                ax.set_title(title)
            ax.grid(True, alpha=0.3)
            if len(series) > 1:
                ax.legend()
            fig.tight_layout()
            fig.savefig(out_path, format='svg', metadata={'Date': None})
        finally:
            plt.close(fig)
    logger.info(f'Wrote {out_path}')
