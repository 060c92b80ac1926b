"""Timing benchmark of the per-node update and the measurement pre-clustering

The particle weighting is expected to scale linearly with the number of
particles and with the number of measurements, and the pre-clustering
super-linearly with the number of measurements.
"""
import logging
import time
import numpy as np
import pandas as pd
from typing import Callable, Dict, Sequence

from .clustering import precluster_measurements
from .phd import weight_update
from .types import STATE_DIM, ParticleKind, ParticleSet

logger = logging.getLogger(__name__)

AREA = 50.0
SIGMA_R2 = 0.1
P_D = 0.95
LAMBDA_FA = 0.1
CLUTTER_DENSITY = LAMBDA_FA / (np.pi * 6.0**2)

WEIGHT_PARTICLES_RATIO = (1.6, 2.6)
PRECLUSTER_RATIO = 3.0
PRECLUSTER_FROM = 50
ZERO_MEASUREMENT_RATIO = 0.25


def _particles(n: int, rng: np.random.Generator) -> ParticleSet:
    states = np.zeros((n, STATE_DIM))
    states[:, 0:2] = rng.uniform(-AREA / 2, AREA / 2, size=(n, 2))
    states[:, 2:4] = rng.normal(0.0, 1.0, size=(n, 2))
    return ParticleSet(states, np.full(n, 1.0 / n), ParticleKind.TOTAL)


def _measurements(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-AREA / 2, AREA / 2, size=(n, 2))


def _best_time(fn: Callable[[], object], repeats: int) -> float:
    best = float('inf')
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_complexity(
        n_particles: Sequence[int]=(1000, 2000, 4000, 8000),
        n_measurements: Sequence[int]=(0, 25, 50, 100, 200),
        neighborhood_sizes: Sequence[int]=(1, 2, 4, 8),
        repeats: int=5,
        seed: int=0) -> pd.DataFrame:
    """Time the weighting and pre-clustering phases

    Returns:
        One row per measurement with columns phase, variable, value and
        seconds (best of `repeats`)
    """
    if repeats < 1:
        raise ValueError(f"repeats must be at least 1, got {repeats}")
    rng = np.random.default_rng(seed)
    rows = []

    def weigh(particles, blocks):
        p = particles
        for z in blocks:
            p, _ = weight_update(p, z, P_D, LAMBDA_FA, CLUTTER_DENSITY, SIGMA_R2)

    z = _measurements(50, rng)
    for n in n_particles:
        particles = _particles(n, rng)
        t = _best_time(lambda: weigh(particles, [z]), repeats)
        rows.append({'phase': 'weight', 'variable': 'n_particles', 'value': n, 'seconds': t})

    particles = _particles(2000, rng)
    for m in n_measurements:
        z = _measurements(m, rng)
        t = _best_time(lambda: weigh(particles, [z]), repeats)
        rows.append({'phase': 'weight', 'variable': 'n_measurements', 'value': m, 'seconds': t})

    for size in neighborhood_sizes:
        blocks = [_measurements(10, rng) for _ in range(size)]
        t = _best_time(lambda: weigh(particles, blocks), repeats)
        rows.append({'phase': 'weight', 'variable': 'neighborhood', 'value': size, 'seconds': t})

    for m in n_measurements:
        z = _measurements(m, rng)
        t = _best_time(lambda: precluster_measurements(z, 6 * np.sqrt(SIGMA_R2)), repeats)
        rows.append({'phase': 'precluster', 'variable': 'n_measurements', 'value': m, 'seconds': t})

    table = pd.DataFrame(rows, columns=['phase', 'variable', 'value', 'seconds'])
    logger.debug("benchmark:\n%s", table)
    return table


def _seconds(table: pd.DataFrame, phase: str, variable: str) -> pd.Series:
    sel = table[(table['phase'] == phase) & (table['variable'] == variable)]
    return sel.set_index('value')['seconds'].sort_index()


def _largest_doubling(series: pd.Series):
    values = [v for v in series.index if v > 0 and 2 * v in series.index]
    if len(values) == 0:
        return None
    v = max(values)
    return v, float(series[2 * v] / series[v])


def check_slopes(table: pd.DataFrame) -> Dict[str, Dict]:
    """Compare measured growth against the expected complexity

    Each check compares the time ratio across one doubling of the swept
    variable: the largest one for the particle count, 50 to 100 measurements
    for the pre-clustering when available.
    """
    checks = {}
    weight_np = _seconds(table, 'weight', 'n_particles')
    pair = _largest_doubling(weight_np)
    if pair is not None:
        low, high = WEIGHT_PARTICLES_RATIO
        checks['weight_particles'] = {'from': pair[0], 'ratio': pair[1], 'passed': low <= pair[1] <= high}

    weight_nm = _seconds(table, 'weight', 'n_measurements')
    if 0 in weight_nm.index and len(weight_nm) > 1:
        ratio = float(weight_nm[0] / weight_nm.iloc[-1])
        checks['weight_zero_measurements'] = {'ratio': ratio, 'passed': ratio <= ZERO_MEASUREMENT_RATIO}

    pre = _seconds(table, 'precluster', 'n_measurements')
    if PRECLUSTER_FROM in pre.index and 2 * PRECLUSTER_FROM in pre.index:
        pair = (PRECLUSTER_FROM, float(pre[2 * PRECLUSTER_FROM] / pre[PRECLUSTER_FROM]))
    else:
        pair = _largest_doubling(pre)
    if pair is not None:
        checks['precluster_measurements'] = {'from': pair[0], 'ratio': pair[1], 'passed': pair[1] >= PRECLUSTER_RATIO}
    return checks
