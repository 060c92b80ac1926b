import pandas as pd
import pytest

from phdnet.bench import bench_complexity, check_slopes


def test_bench_table():
    table = bench_complexity(n_particles=(100, 200), n_measurements=(0, 5, 10), neighborhood_sizes=(1, 2), repeats=1)
    assert list(table.columns) == ['phase', 'variable', 'value', 'seconds']
    assert len(table) == 10
    assert (table['seconds'] >= 0).all()
    assert set(zip(table['phase'], table['variable'])) == {
        ('weight', 'n_particles'), ('weight', 'n_measurements'), ('weight', 'neighborhood'),
        ('precluster', 'n_measurements'),
    }


def test_bench_repeats():
    with pytest.raises(ValueError):
        bench_complexity(repeats=0)


def table(rows):
    return pd.DataFrame(rows, columns=['phase', 'variable', 'value', 'seconds'])


def test_check_slopes_pass():
    checks = check_slopes(table([
        ('weight', 'n_particles', 1000, 1.0),
        ('weight', 'n_particles', 2000, 2.1),
        ('weight', 'n_particles', 4000, 4.0),
        ('weight', 'n_measurements', 0, 0.1),
        ('weight', 'n_measurements', 200, 2.0),
        ('precluster', 'n_measurements', 50, 1.0),
        ('precluster', 'n_measurements', 100, 3.5),
        ('precluster', 'n_measurements', 200, 5.0),
    ]))
    assert checks['weight_particles']['from'] == 2000
    assert checks['weight_particles']['ratio'] == pytest.approx(4.0 / 2.1)
    assert checks['precluster_measurements']['from'] == 50
    assert checks['precluster_measurements']['ratio'] == pytest.approx(3.5)
    assert checks['weight_zero_measurements']['ratio'] == pytest.approx(0.05)
    assert all(c['passed'] for c in checks.values())


def test_check_slopes_fail():
    checks = check_slopes(table([
        ('weight', 'n_particles', 1000, 1.0),
        ('weight', 'n_particles', 2000, 4.0),
        ('weight', 'n_measurements', 0, 1.0),
        ('weight', 'n_measurements', 100, 1.5),
        ('precluster', 'n_measurements', 25, 1.0),
        ('precluster', 'n_measurements', 50, 2.0),
    ]))
    assert not checks['weight_particles']['passed']
    assert not checks['weight_zero_measurements']['passed']
    # without a 50 to 100 pair the largest doubling is used
    assert checks['precluster_measurements']['from'] == 25
    assert not checks['precluster_measurements']['passed']


def test_check_slopes_missing_series():
    assert check_slopes(table([])) == {}
