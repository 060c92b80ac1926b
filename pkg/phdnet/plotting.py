"""Figures from an aggregate.csv file

Every figure is written as SVG together with a CSV of exactly the plotted
series. SVG output is byte-stable for identical input.
"""
from dataclasses import dataclass
import logging
import os
import numpy as np
import pandas as pd
from typing import List

logger = logging.getLogger(__name__)

PLOT_KINDS = ('ospa-vs-bound', 'estimated-count', 'ospa-zoom')

FILTER_LABELS = {
    'ms': 'MS-PPHDF',
    'dpphdf': 'D-PPHDF',
    'local': 'local PPHDF',
}


class PlotError(ValueError):
    """The input table cannot produce the requested figure"""
    pass


@dataclass(frozen=True)
class PlotSpec(object):
    kind: str
    input: str
    output: str

    @property
    def data_output(self) -> str:
        return os.path.splitext(self.output)[0] + '.csv'


def _filters(aggregate: pd.DataFrame, prefix: str) -> List[str]:
    return [c[len(prefix):] for c in aggregate.columns if c.startswith(prefix) and not c.endswith('_sem')]


def _require(aggregate: pd.DataFrame, columns: List[str], filename: str):
    missing = [c for c in columns if c not in aggregate.columns]
    if missing:
        raise PlotError(f"{filename}: missing columns {missing}")


def plot_data(kind: str, aggregate: pd.DataFrame, filename: str='aggregate') -> pd.DataFrame:
    """Select the series plotted by a figure kind

    Raises:
        PlotError: for an unknown kind, an empty table or missing columns
    """
    if kind not in PLOT_KINDS:
        raise PlotError(f"Unknown plot kind '{kind}', expected one of {PLOT_KINDS}")
    if len(aggregate) == 0:
        raise PlotError(f"{filename}: no rows to plot")
    _require(aggregate, ['step', 'true_count'], filename)

    if kind == 'estimated-count':
        filters = _filters(aggregate, 'est_count_')
        if len(filters) == 0:
            raise PlotError(f"{filename}: no estimated count columns")
        columns = ['step', 'true_count'] + [f'est_count_{f}' for f in filters]
    else:
        filters = _filters(aggregate, 'ospa_')
        if len(filters) == 0:
            raise PlotError(f"{filename}: no OSPA columns")
        _require(aggregate, ['dpcrlb', 'sigma_r2'], filename)
        columns = ['step', 'sigma_r2', 'dpcrlb'] + [f'ospa_{f}' for f in filters]
    data = aggregate[columns]
    if kind == 'ospa-zoom':
        data = data[data['step'] >= 3]
    return data.reset_index(drop=True)


def _render(kind: str, data: pd.DataFrame, output: str):
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    matplotlib.rcParams['svg.hashsalt'] = 'phdnet'
    matplotlib.rcParams['svg.fonttype'] = 'none'
    fig, ax = plt.subplots(figsize=(7, 4))
    steps = data['step'].to_numpy()
    if kind == 'estimated-count':
        ax.step(steps, data['true_count'], where='mid', color='black', label='true number')
        for col in data.columns[2:]:
            f = col[len('est_count_'):]
            ax.plot(steps, data[col], marker='.', label=FILTER_LABELS.get(f, f))
        ax.set_ylabel('number of targets')
    else:
        for col in data.columns[3:]:
            f = col[len('ospa_'):]
            ax.plot(steps, data[col], marker='.', label=FILTER_LABELS.get(f, f))
        ax.plot(steps, data['dpcrlb'], color='black', linestyle='--', label='DPCRLB')
        sigma = float(data['sigma_r2'].iloc[0])
        ax.axhline(sigma, color='gray', linestyle=':', label='$\\sigma_r^2$')
        ax.set_ylabel('scaled squared OSPA')
        if kind == 'ospa-zoom':
            top = np.nanmax([data['dpcrlb'].max(), sigma])
            if np.isfinite(top):
                ax.set_ylim(0, 3 * top)
    ax.set_xlabel('time step')
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(output, format='svg', metadata={'Date': None})
    plt.close(fig)


def plot_figure(spec: PlotSpec) -> pd.DataFrame:
    """Render a figure from an aggregate table and write its backing CSV

    Returns:
        The plotted data
    """
    try:
        aggregate = pd.read_csv(spec.input)
    except pd.errors.EmptyDataError:
        raise PlotError(f"{spec.input}: empty file")
    data = plot_data(spec.kind, aggregate, spec.input)
    _render(spec.kind, data, spec.output)
    data.to_csv(spec.data_output, index=False)
    logger.info("wrote %s and %s", spec.output, spec.data_output)
    return data
