import numpy as np
import pandas as pd
import pytest

from phdnet.plotting import PLOT_KINDS, PlotError, PlotSpec, plot_data, plot_figure


def aggregate(steps=31):
    step = np.arange(steps)
    true_count = 1 + (step >= 9) + (step >= 14)
    ospa = np.where(step == 0, np.nan, 0.3 + 0.5 * np.exp(-step / 3.0))
    return pd.DataFrame({
        'step': step,
        'true_count': true_count,
        'sigma_r2': 0.1,
        'est_count_ms': np.where(step == 0, np.nan, true_count),
        'ospa_ms': ospa,
        'ospa_ms_sem': 0.01,
        'est_count_dpphdf': np.where(step == 0, np.nan, true_count),
        'ospa_dpphdf': ospa + 0.05,
        'dpcrlb': 0.05,
    })


@pytest.fixture
def aggregate_csv(tmp_path):
    path = tmp_path / 'aggregate.csv'
    aggregate().to_csv(path, index=False)
    return str(path)


def test_plot_data_columns():
    agg = aggregate()
    assert list(plot_data('estimated-count', agg).columns) == [
        'step', 'true_count', 'est_count_ms', 'est_count_dpphdf']
    assert list(plot_data('ospa-vs-bound', agg).columns) == ['step', 'sigma_r2', 'dpcrlb', 'ospa_ms', 'ospa_dpphdf']
    zoom = plot_data('ospa-zoom', agg)
    assert zoom['step'].min() == 3
    assert len(zoom) == 28


@pytest.mark.parametrize('kind', PLOT_KINDS)
def test_plot_figure(tmp_path, aggregate_csv, kind):
    spec = PlotSpec(kind, aggregate_csv, str(tmp_path / f'{kind}.svg'))
    data = plot_figure(spec)
    svg = open(spec.output).read()
    assert svg.startswith('<?xml')
    assert spec.data_output == str(tmp_path / f'{kind}.csv')
    written = pd.read_csv(spec.data_output)
    assert list(written.columns) == list(data.columns)
    assert len(written) == len(data)
    if kind == 'estimated-count':
        assert 'true number' in svg
    else:
        assert 'DPCRLB' in svg


def test_plot_is_deterministic(tmp_path, aggregate_csv):
    a = PlotSpec('ospa-vs-bound', aggregate_csv, str(tmp_path / 'a.svg'))
    b = PlotSpec('ospa-vs-bound', aggregate_csv, str(tmp_path / 'b.svg'))
    plot_figure(a)
    plot_figure(b)
    assert open(a.output, 'rb').read() == open(b.output, 'rb').read()


def test_plot_errors(tmp_path):
    empty = tmp_path / 'empty.csv'
    empty.write_text('')
    with pytest.raises(PlotError):
        plot_figure(PlotSpec('ospa-vs-bound', str(empty), str(tmp_path / 'out.svg')))

    header = tmp_path / 'header.csv'
    header.write_text('step,true_count,ospa_ms\n')
    with pytest.raises(PlotError):
        plot_figure(PlotSpec('ospa-vs-bound', str(header), str(tmp_path / 'out.svg')))

    with pytest.raises(PlotError):
        plot_data('ospa-vs-bound', aggregate().drop(columns='dpcrlb'))
    with pytest.raises(PlotError):
        plot_data('estimated-count', aggregate().drop(columns=['est_count_ms', 'est_count_dpphdf']))
    with pytest.raises(PlotError):
        plot_data('histogram', aggregate())
    assert not (tmp_path / 'out.svg').exists()
