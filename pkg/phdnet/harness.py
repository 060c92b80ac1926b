"""Seeded Monte Carlo engine: runs the scenario, scores every filter and
aggregates the results

Random streams are keyed by (master seed, run, stream tag, step, node) (see
:py:mod:`phdnet.streams`), so every run can be executed on its own and the
results do not depend on the number of worker processes.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import functools
import itertools
import logging
import os
import numpy as np
import pandas as pd
from typing import Dict, List, Optional, Sequence, Tuple

from . import streams
from .config import ConfigError, ScenarioConfig
from .crlb import DistributedBound
from .dynamics import build_model, scenario_tracks
from .filters import (CentralFilterState, StepReport, StepTrace, d_pphdf_step, initial_node_states,
                      local_pphdf_step, ms_pphdf_step)
from .io import load_layout, measurement_frame, reference_layout_path, save_json
from .metrics import OspaParams, scaled_squared_ospa
from .network import Topology
from .sensing import sense_network
from .types import MeasurementSet, ModelMatrices, Track, active_targets

logger = logging.getLogger(__name__)

# Step intervals reported by evaluate: after each birth and while the count is constant
DEFAULT_INTERVALS = ((1, 2), (3, 8), (10, 13), (15, 18), (20, 24), (24, 30))

BOUND_SLACK = 0.05
ORDERING_SLACK = 0.10


class RunsFormatError(ValueError):
    """A runs or aggregate table is missing required columns"""
    pass


def run_columns(filters: Sequence[str]) -> List[str]:
    cols = ['run', 'step', 'true_count', 'sigma_r2']
    for f in filters:
        cols += [f'est_count_{f}', f'ospa_{f}', f'meas_scalars_{f}', f'particle_scalars_{f}']
    return cols + ['dpcrlb', 'dpcrlb_per_target']


class Scenario(object):
    """Everything a run needs besides randomness: topology, truth, model and bounds
    """
    def __init__(self, config: ScenarioConfig):
        path = config.layout if config.layout is not None else reference_layout_path()
        topology = load_layout(path)
        if config.r_sen is not None or config.r_com is not None:
            logger.debug("overriding layout radii: r_sen=%s r_com=%s", config.r_sen, config.r_com)
            topology = topology.with_radii(r_sen=config.r_sen, r_com=config.r_com)
        if len(topology) != config.n_nodes:
            raise ConfigError('n_nodes', f"layout {path} has {len(topology)} nodes", config.n_nodes)
        self.config = config
        self.topology: Topology = topology
        self.model: ModelMatrices = build_model(config.dt, config.sigma_q2)
        self.tracks: List[Track] = scenario_tracks(config, topology)
        self.bounds: pd.DataFrame = DistributedBound(
            topology, self.tracks, self.model, config.sigma_r2, config.p_d, config.birth_sigma_v,
            sigma_pos2=config.birth_spread**2, scale=config.bound_scale,
        ).run(config.steps)
        per_step = self.bounds.drop_duplicates('step').set_index('step')
        # the plotted bound sums over in-scope targets unless the per-target mean is requested
        self.dpcrlb = per_step['dpcrlb_per_target' if config.bound_per_target else 'dpcrlb']
        self.dpcrlb_per_target = per_step['dpcrlb_per_target']


@functools.lru_cache(maxsize=4)
def load_scenario(config: ScenarioConfig) -> Scenario:
    return Scenario(config)


@dataclass
class RunRecord(object):
    """Per-step results of one Monte Carlo run"""
    run: int
    frame: pd.DataFrame
    trace: Optional[StepTrace] = None
    measurements: List[MeasurementSet] = field(default_factory=list)
    # per filter, the estimates of every step (None before the filter provides any)
    estimates: Dict[str, List[Optional[np.ndarray]]] = field(default_factory=dict)


def _score(report: StepReport, truth: np.ndarray, params: OspaParams) -> Tuple[float, float]:
    if not report.provides_estimates:
        return np.nan, np.nan
    if len(truth) == 0 and report.count == 0:
        return np.nan, np.nan
    return float(report.count), scaled_squared_ospa(truth, report.estimates, params)


def run_scenario(
        config: ScenarioConfig,
        run: int,
        scenario: Optional[Scenario]=None,
        trace: bool=False,
        keep_measurements: bool=False,
        keep_estimates: bool=False) -> RunRecord:
    """Simulate one Monte Carlo run of all selected filters

    Args:
        config: The scenario configuration
        run: Run index; selects the run's random streams
        scenario: Preloaded scenario (loaded from `config` if None)
        trace: Record a phase trace of every filter step
        keep_measurements: Keep the generated measurement sets in the record
        keep_estimates: Keep every filter's estimates in the record
    """
    if scenario is None:
        scenario = load_scenario(config)
    topology = scenario.topology
    params = OspaParams(config.ospa_c, config.ospa_p)
    step_trace = StepTrace() if trace else None

    central = CentralFilterState()
    node_states = {f: initial_node_states(topology) for f in ('dpphdf', 'local')}
    rows = []
    kept = []
    estimates = {f: [] for f in config.filters} if keep_estimates else {}
    for step in range(config.steps + 1):
        targets = active_targets(scenario.tracks, step)
        truth = np.array([s.position for _, s in targets]).reshape(-1, 2)
        mset = sense_network(topology, targets, config.sigma_r2, config.p_d, config.lambda_fa,
                             config.seed, run, step)
        if keep_measurements:
            kept.append(mset)

        row = {'run': run, 'step': step, 'true_count': len(targets), 'sigma_r2': config.sigma_r2}
        for f in config.filters:
            tag = streams.FILTER_TAGS[f]
            if f == 'ms':
                rng = streams.generator(config.seed, run, tag, step)
                report = ms_pphdf_step(central, topology, mset, scenario.model, config, rng, step_trace)
            else:
                def node_rng(k, tag=tag, step=step):
                    return streams.generator(config.seed, run, tag, step, k)
                step_fn = d_pphdf_step if f == 'dpphdf' else local_pphdf_step
                report = step_fn(node_states[f], topology, mset, scenario.model, config, node_rng, step_trace)
            if keep_estimates:
                estimates[f].append(report.estimates.copy() if report.provides_estimates else None)
            count, ospa = _score(report, truth, params)
            row[f'est_count_{f}'] = count
            row[f'ospa_{f}'] = ospa
            row[f'meas_scalars_{f}'] = report.measurement_scalars
            row[f'particle_scalars_{f}'] = report.particle_scalars
        row['dpcrlb'] = scenario.dpcrlb.get(step, np.nan)
        row['dpcrlb_per_target'] = scenario.dpcrlb_per_target.get(step, np.nan)
        rows.append(row)

    logger.info("run %d finished", run)
    frame = pd.DataFrame(rows, columns=run_columns(config.filters))
    return RunRecord(run, frame, step_trace, kept, estimates)


def _run_worker(config: ScenarioConfig, run: int, trace: bool, keep_measurements: bool,
                keep_estimates: bool) -> RunRecord:
    return run_scenario(config, run, trace=trace, keep_measurements=keep_measurements, keep_estimates=keep_estimates)


def aggregate_runs(runs: pd.DataFrame) -> pd.DataFrame:
    """Per-step mean and standard error of every value column

    Missing values are skipped, so means run over the runs where a value is
    defined. Standard errors are NaN for a single run.
    """
    if 'step' not in runs.columns:
        raise RunsFormatError("runs table has no 'step' column")
    values = runs.drop(columns=[c for c in ('run',) if c in runs.columns])
    grouped = values.groupby('step', sort=True)
    mean = grouped.mean()
    sem = grouped.sem().add_suffix('_sem')
    return pd.concat([mean, sem], axis=1).reset_index()


@dataclass
class MonteCarloResult(object):
    runs: pd.DataFrame
    aggregate: pd.DataFrame
    bounds: pd.DataFrame
    records: List[RunRecord]


def run_monte_carlo(
        config: ScenarioConfig,
        out_dir: Optional[str]=None,
        trace: bool=False,
        log_measurements: bool=False,
        keep_estimates: bool=False) -> MonteCarloResult:
    """Run `config.runs` runs and aggregate them

    Runs execute in a pool of `config.workers` processes. Results are
    collected in run order, so the output does not depend on the pool width.

    If `out_dir` is given, writes runs.csv, aggregate.csv, bounds.csv and
    config.json there, plus trace.jsonl and measurements.csv on request.
    With `keep_estimates` the records hold the estimates of every step.
    """
    scenario = load_scenario(config)
    runs = range(config.runs)
    if config.workers == 1:
        records = [run_scenario(config, r, scenario, trace, log_measurements, keep_estimates) for r in runs]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(
                _run_worker,
                itertools.repeat(config), runs, itertools.repeat(trace), itertools.repeat(log_measurements),
                itertools.repeat(keep_estimates)))

    frame = pd.concat([r.frame for r in records], ignore_index=True)
    aggregate = aggregate_runs(frame)
    result = MonteCarloResult(frame, aggregate, scenario.bounds, records)
    if out_dir is not None:
        write_results(result, config, out_dir, trace, log_measurements)
    return result


def write_results(result: MonteCarloResult, config: ScenarioConfig, out_dir: str,
                  trace: bool=False, log_measurements: bool=False):
    os.makedirs(out_dir, exist_ok=True)
    result.runs.to_csv(os.path.join(out_dir, 'runs.csv'), index=False)
    result.aggregate.to_csv(os.path.join(out_dir, 'aggregate.csv'), index=False)
    result.bounds.to_csv(os.path.join(out_dir, 'bounds.csv'), index=False)
    save_json(config.to_dict(), os.path.join(out_dir, 'config.json'))
    if trace:
        path = os.path.join(out_dir, 'trace.jsonl')
        open(path, 'w').close()
        for r in result.records:
            if r.trace is not None:
                r.trace.write_jsonl(path, mode='a', run=r.run)
    if log_measurements:
        path = os.path.join(out_dir, 'measurements.csv')
        frames = [measurement_frame(r.measurements, run=r.run) for r in result.records]
        pd.concat(frames, ignore_index=True).to_csv(path, index=False)
    logger.info("wrote results to %s", out_dir)


def load_runs(filename: str) -> pd.DataFrame:
    """Read a runs.csv file

    Raises:
        RunsFormatError: if the file is empty or lacks required columns
    """
    try:
        runs = pd.read_csv(filename, float_precision='round_trip')
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise RunsFormatError(f"{filename}: {e}")
    missing = [c for c in ('run', 'step', 'true_count') if c not in runs.columns]
    if missing:
        raise RunsFormatError(f"{filename}: missing columns {missing}")
    if len(runs) == 0:
        raise RunsFormatError(f"{filename}: no rows")
    return runs


def filters_in(table: pd.DataFrame) -> List[str]:
    """Filter names with an OSPA column in a runs or aggregate table"""
    return [c[len('ospa_'):] for c in table.columns if c.startswith('ospa_') and not c.endswith('_sem')]


def constant_count_steps(aggregate: pd.DataFrame) -> pd.Series:
    """Mask of steps (from 1 on) whose true count equals the previous step's"""
    counts = aggregate['true_count']
    return (aggregate['step'] >= 1) & (counts == counts.shift(1))


def first_detection(estimates: Sequence[Optional[np.ndarray]], track: Track, radius: float) -> Optional[int]:
    """First step from the track's entry on with an estimate within `radius` of it

    `estimates` holds one entry per step as kept by :py:func:`run_scenario`.
    Returns None if the track is never detected.
    """
    last = min(track.exit_step, len(estimates) - 1)
    for step in range(track.entry_step, last + 1):
        est = estimates[step]
        if est is None or len(est) == 0:
            continue
        position = track.position_at(step)
        if np.min(np.linalg.norm(est[:, 0:2] - position, axis=1)) <= radius:
            return step
    return None


def evaluate_runs(
        runs: pd.DataFrame,
        intervals: Sequence[Tuple[int, int]]=DEFAULT_INTERVALS) -> Tuple[pd.DataFrame, Dict[str, Dict]]:
    """Summarize runs per step interval and check the bound relations

    Returns:
        (interval table, checks). The table has one row per interval with the
        mean true count, and per filter the mean estimated count and mean
        scaled squared OSPA, and the mean DPCRLB. Each check holds the
        compared values and a `passed` flag.
    """
    aggregate = aggregate_runs(runs)
    filters = filters_in(runs)
    last = int(aggregate['step'].max())

    rows = []
    for start, end in intervals:
        if start > last:
            continue
        sel = aggregate[(aggregate['step'] >= start) & (aggregate['step'] <= end)]
        row = {'start': start, 'end': min(end, last), 'true_count': sel['true_count'].mean()}
        for f in filters:
            row[f'est_count_{f}'] = sel[f'est_count_{f}'].mean()
            row[f'ospa_{f}'] = sel[f'ospa_{f}'].mean()
        if 'dpcrlb' in sel.columns:
            row['dpcrlb'] = sel['dpcrlb'].mean()
        rows.append(row)
    table = pd.DataFrame(rows)

    checks = {}
    if 'dpcrlb_per_target' in aggregate.columns and 'sigma_r2' in aggregate.columns:
        bound = aggregate['dpcrlb_per_target']
        limit = aggregate['sigma_r2'] * (1 + BOUND_SLACK)
        defined = bound.notna()
        worst = float((bound[defined] / limit[defined]).max()) if defined.any() else float('nan')
        checks['bound_below_variance'] = {
            'max_ratio': worst,
            'passed': bool((bound[defined] <= limit[defined]).all()),
        }

    constant = constant_count_steps(aggregate)
    if 'dpcrlb' in aggregate.columns:
        bound_mean = float(aggregate.loc[constant, 'dpcrlb'].mean())
        for f in filters:
            ospa_mean = float(aggregate.loc[constant, f'ospa_{f}'].mean())
            checks[f'bound_below_ospa_{f}'] = {
                'bound': bound_mean,
                'ospa': ospa_mean,
                'passed': bool(bound_mean <= ospa_mean * (1 + ORDERING_SLACK)),
            }
    if 'dpphdf' in filters and 'local' in filters:
        d = float(aggregate.loc[constant, 'ospa_dpphdf'].mean())
        l = float(aggregate.loc[constant, 'ospa_local'].mean())
        checks['dpphdf_not_worse_than_local'] = {
            'dpphdf': d,
            'local': l,
            'passed': bool(d <= l * (1 + ORDERING_SLACK)),
        }
    return table, checks
