import json
import numpy as np
import pandas as pd
import pytest

from phdnet.config import ConfigError, ScenarioConfig
from phdnet.harness import (RunsFormatError, Scenario, aggregate_runs, constant_count_steps, evaluate_runs,
                            filters_in, first_detection, load_runs, load_scenario, run_columns, run_monte_carlo,
                            run_scenario)
from phdnet.io import load_layout, measurement_frame, reference_layout_path
from phdnet.types import Track

SMALL = ScenarioConfig(n_p=100, steps=6, runs=2)


def test_scenario():
    scenario = load_scenario(SMALL)
    assert len(scenario.topology) == 30
    assert [t.target_id for t in scenario.tracks] == [1, 2, 3]
    assert list(scenario.dpcrlb.index) == list(range(7))
    assert load_scenario(SMALL) is scenario


def test_scenario_node_count_mismatch():
    with pytest.raises(ConfigError) as e:
        Scenario(ScenarioConfig(n_nodes=29))
    assert e.value.field == 'n_nodes'


def test_layout_radii_are_kept(tmp_path):
    data = load_layout(reference_layout_path()).to_dict()
    for entry in data['nodes']:
        entry['r_sen'] = 7.0 if entry['id'] % 2 else 6.5
        entry['r_com'] = 14.0
    layout = tmp_path / 'layout.json'
    layout.write_text(json.dumps(data))
    expected = [7.0 if k % 2 else 6.5 for k in range(1, 31)]

    scenario = Scenario(SMALL.replace(layout=str(layout)))
    assert [n.r_sen for n in scenario.topology.nodes] == expected
    assert all(n.r_com == 14.0 for n in scenario.topology.nodes)

    # an explicit radius replaces only that radius
    override = Scenario(SMALL.replace(layout=str(layout), r_com=12.0))
    assert [n.r_sen for n in override.topology.nodes] == expected
    assert all(n.r_com == 12.0 for n in override.topology.nodes)


def test_run_scenario():
    record = run_scenario(SMALL, 0)
    frame = record.frame
    assert list(frame.columns) == run_columns(SMALL.filters)
    assert list(frame['step']) == list(range(7))
    assert (frame['true_count'] == 1).all()
    assert (frame['sigma_r2'] == 0.1).all()
    # the first step only spawns newborn particles
    for f in SMALL.filters:
        assert np.isnan(frame.loc[0, f'est_count_{f}'])
        assert np.isnan(frame.loc[0, f'ospa_{f}'])
        assert frame.loc[1:, f'ospa_{f}'].notna().all()
        assert frame[f'ospa_{f}'].max() <= SMALL.ospa_c**2
    assert (frame['particle_scalars_ms'] == 0).all()
    assert (frame['particle_scalars_local'] == 0).all()
    assert (frame['meas_scalars_local'] == 0).all()
    assert (frame['meas_scalars_dpphdf'] > 0).any()
    assert frame['dpcrlb'].notna().all()
    assert record.trace is None
    assert record.measurements == []
    assert record.estimates == {}


def test_run_scenario_keeps_estimates():
    record = run_scenario(SMALL, 0, keep_estimates=True)
    assert set(record.estimates) == set(SMALL.filters)
    for f, per_step in record.estimates.items():
        assert len(per_step) == 7
        assert per_step[0] is None
        assert [len(e) for e in per_step[1:]] == list(record.frame.loc[1:, f'est_count_{f}'].astype(int))


def test_first_detection():
    track = Track(1, 2, np.array([[0.0, 0.0, 1.0, 0.0], [1.0, 0.0, 1.0, 0.0], [2.0, 0.0, 1.0, 0.0]]))
    estimates = [
        None,
        np.array([[0.0, 0.0, 0.0, 0.0]]),
        np.zeros((0, 4)),
        np.array([[5.0, 5.0, 0.0, 0.0]]),
        np.array([[5.0, 5.0, 0.0, 0.0], [2.5, 0.0, 1.0, 0.0]]),
    ]
    # estimates before the entry step do not count
    assert first_detection(estimates, track, 1.0) == 4
    assert first_detection(estimates, track, 0.1) is None
    assert first_detection(estimates[:4], track, 1.0) is None


def test_run_scenario_is_deterministic():
    a = run_scenario(SMALL, 1)
    b = run_scenario(SMALL, 1)
    pd.testing.assert_frame_equal(a.frame, b.frame)
    c = run_scenario(SMALL, 0)
    assert not a.frame.equals(c.frame)


def test_filter_subset():
    config = SMALL.replace(filters='local')
    frame = run_scenario(config, 0).frame
    assert 'ospa_local' in frame.columns
    assert 'ospa_ms' not in frame.columns
    # other filters do not consume the local filter's random streams
    pd.testing.assert_series_equal(frame['ospa_local'], run_scenario(SMALL, 0).frame['ospa_local'])


def test_ms_measurement_scalars_count_measurements():
    record = run_scenario(SMALL, 0, keep_measurements=True)
    assert len(record.measurements) == 7
    assert list(record.frame['meas_scalars_ms']) == [2 * len(m) for m in record.measurements]


def test_monte_carlo_is_independent_of_workers():
    serial = run_monte_carlo(SMALL)
    parallel = run_monte_carlo(SMALL.replace(workers=2))
    pd.testing.assert_frame_equal(serial.runs, parallel.runs)
    pd.testing.assert_frame_equal(serial.aggregate, parallel.aggregate)
    assert list(serial.runs['run'].unique()) == [0, 1]


def test_single_run_aggregate_equals_run():
    result = run_monte_carlo(SMALL.replace(runs=1))
    record = result.records[0].frame
    for f in SMALL.filters:
        np.testing.assert_array_equal(result.aggregate[f'ospa_{f}'].to_numpy(), record[f'ospa_{f}'].to_numpy())
        assert result.aggregate[f'ospa_{f}_sem'].isna().all()


def test_write_results(tmp_path):
    out = tmp_path / 'results'
    result = run_monte_carlo(SMALL, out_dir=str(out), trace=True, log_measurements=True)
    for name in ('runs.csv', 'aggregate.csv', 'bounds.csv', 'config.json', 'trace.jsonl', 'measurements.csv'):
        assert (out / name).exists()

    runs = load_runs(str(out / 'runs.csv'))
    pd.testing.assert_frame_equal(aggregate_runs(runs), result.aggregate, check_dtype=False)

    config = json.loads((out / 'config.json').read_text())
    assert ScenarioConfig.from_dict(config) == SMALL

    events = [json.loads(line) for line in (out / 'trace.jsonl').read_text().splitlines()]
    assert {e['run'] for e in events} == {0, 1}
    assert {e['filter'] for e in events} == {'ms', 'dpphdf', 'local'}

    measurements = pd.read_csv(out / 'measurements.csv')
    assert list(measurements.columns) == ['run', 'step', 'node', 'x', 'y', 'tag']
    assert len(measurements) == sum(len(m) for r in result.records for m in r.measurements)
    expected = pd.concat([measurement_frame(r.measurements, run=r.run) for r in result.records], ignore_index=True)
    pd.testing.assert_frame_equal(measurements[['run', 'step', 'node']], expected[['run', 'step', 'node']],
                                  check_dtype=False)
    assert not list(out.glob('.measurements.*'))


def test_aggregate_runs():
    runs = pd.DataFrame({
        'run': [0, 0, 1, 1],
        'step': [0, 1, 0, 1],
        'ospa_ms': [np.nan, 1.0, np.nan, 3.0],
        'est_count_ms': [np.nan, 1.0, np.nan, 1.0],
    })
    agg = aggregate_runs(runs)
    assert list(agg['step']) == [0, 1]
    assert np.isnan(agg.loc[0, 'ospa_ms'])
    assert agg.loc[1, 'ospa_ms'] == 2.0
    assert agg.loc[1, 'ospa_ms_sem'] == pytest.approx(1.0)
    assert 'run' not in agg.columns
    with pytest.raises(RunsFormatError):
        aggregate_runs(runs.drop(columns='step'))


def test_load_runs_errors(tmp_path):
    empty = tmp_path / 'empty.csv'
    empty.write_text('')
    header = tmp_path / 'header.csv'
    header.write_text('run,step,true_count\n')
    columns = tmp_path / 'columns.csv'
    columns.write_text('run,ospa_ms\n0,1.0\n')
    for path in (empty, header, columns):
        with pytest.raises(RunsFormatError):
            load_runs(str(path))
    with pytest.raises(FileNotFoundError):
        load_runs(str(tmp_path / 'missing.csv'))


def synthetic_runs(n_runs=2, steps=30):
    rows = []
    for run in range(n_runs):
        for step in range(steps + 1):
            true_count = 1 + (step >= 9) + (step >= 14)
            rows.append({
                'run': run, 'step': step, 'true_count': true_count, 'sigma_r2': 0.1,
                'est_count_ms': true_count, 'ospa_ms': 0.2,
                'est_count_dpphdf': true_count, 'ospa_dpphdf': 0.3,
                'est_count_local': true_count, 'ospa_local': 0.5,
                'dpcrlb': 0.05, 'dpcrlb_per_target': 0.05,
            })
    return pd.DataFrame(rows)


def test_constant_count_steps():
    agg = aggregate_runs(synthetic_runs())
    mask = constant_count_steps(agg)
    assert not mask[0]
    assert not mask[9]
    assert not mask[14]
    assert mask[1:9].all()
    assert mask[15:].all()


def test_evaluate_runs():
    runs = synthetic_runs()
    assert filters_in(runs) == ['ms', 'dpphdf', 'local']
    table, checks = evaluate_runs(runs)
    assert list(zip(table['start'], table['end'])) == [(1, 2), (3, 8), (10, 13), (15, 18), (20, 24), (24, 30)]
    assert list(table['true_count']) == [1, 1, 2, 3, 3, 3]
    assert table['ospa_ms'].tolist() == pytest.approx([0.2] * 6)
    assert all(c['passed'] for c in checks.values())
    assert set(checks) == {
        'bound_below_variance', 'bound_below_ospa_ms', 'bound_below_ospa_dpphdf', 'bound_below_ospa_local',
        'dpphdf_not_worse_than_local',
    }
    assert checks['bound_below_variance']['max_ratio'] == pytest.approx(0.05 / 0.105)


def test_evaluate_flags_violations():
    runs = synthetic_runs()
    runs.loc[runs['step'] == 12, 'dpcrlb_per_target'] = 0.2
    runs['ospa_dpphdf'] = 0.6
    runs['ospa_ms'] = 0.01
    _, checks = evaluate_runs(runs)
    assert not checks['bound_below_variance']['passed']
    assert checks['bound_below_variance']['max_ratio'] == pytest.approx(0.2 / 0.105)
    assert not checks['dpphdf_not_worse_than_local']['passed']
    assert not checks['bound_below_ospa_ms']['passed']
    assert checks['bound_below_ospa_local']['passed']


def test_evaluate_short_runs():
    table, _ = evaluate_runs(synthetic_runs(steps=10), intervals=[(3, 8), (10, 13), (20, 24)])
    assert list(zip(table['start'], table['end'])) == [(3, 8), (10, 10)]
