import click
import json
import logging
import os
import sys

from phdnet.bench import bench_complexity, check_slopes
from phdnet.config import ConfigError, ScenarioConfig
from phdnet.harness import RunsFormatError, evaluate_runs, load_runs, run_monte_carlo
from phdnet.io import LayoutError, PrettyJSONEncoder, WaypointError, load_config, save_json, save_layout
from phdnet.network import TopologyBuilder, reference_builder
from phdnet.plotting import PLOT_KINDS, PlotError, PlotSpec, plot_figure

logger = logging.getLogger('phdnet')

# Exit status for usage and configuration errors, and for failures while running
USAGE_ERROR = 2
RUNTIME_ERROR = 3


def fail(message: str, code: int):
    click.echo(f"Error: {message}", err=True)
    sys.exit(code)


@click.group()
@click.option('--verbose', '-v', is_flag=True, help="Print more verbose diagnostic information")
def main(verbose):
    """Multi-target tracking in sensor networks with particle PHD filters
    """
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format='%(levelname)s %(name)s: %(message)s',
    )


@main.command()
@click.option('--config', '-c', 'config_path', type=click.Path(exists=True, dir_okay=False),
              help="YAML scenario file; the reference scenario is used if omitted")
@click.option('--filters', help="Comma separated filters to run, out of ms, dpphdf and local")
@click.option('--sigma-r2', type=float, help="Measurement noise variance per coordinate [m^2]")
@click.option('--runs', type=int, help="Number of Monte Carlo runs")
@click.option('--steps', type=int, help="Last simulated time step (steps 0 to STEPS are simulated)")
@click.option('--seed', type=int, help="Master seed of all random streams")
@click.option('--workers', type=int, help="Number of worker processes")
@click.option('--layout', type=click.Path(dir_okay=False), help="Node layout JSON file")
@click.option('--waypoints', type=click.Path(dir_okay=False), help="Target waypoint JSON file")
@click.option('--out', '-o', default='results', show_default=True, help="Output directory")
@click.option('--trace', is_flag=True, help="Also write a per-phase event log to trace.jsonl")
@click.option('--log-measurements', is_flag=True, help="Also write every generated measurement to measurements.csv")
def simulate(config_path, filters, sigma_r2, runs, steps, seed, workers, layout, waypoints, out, trace,
             log_measurements):
    """Run the Monte Carlo simulation

    Writes runs.csv, aggregate.csv, bounds.csv and config.json to the output
    directory. Command line values override the configuration file.
    """
    try:
        config = load_config(config_path) if config_path is not None else ScenarioConfig()
        config = config.replace(
            filters=filters, sigma_r2=sigma_r2, runs=runs, steps=steps, seed=seed, workers=workers,
            layout=layout, waypoints=waypoints)
    except ConfigError as e:
        fail(str(e), USAGE_ERROR)

    for path in (config.layout, config.waypoints):
        if path is not None and not os.path.isfile(path):
            fail(f"No such file: {path}", USAGE_ERROR)

    try:
        result = run_monte_carlo(config, out, trace=trace, log_measurements=log_measurements)
    except (ConfigError, LayoutError, WaypointError) as e:
        fail(str(e), USAGE_ERROR)
    except Exception as e:
        logger.debug("simulation failed", exc_info=True)
        fail(f"simulation failed: {e}", RUNTIME_ERROR)

    click.echo(f"Wrote {config.runs} run(s) of {len(result.aggregate)} steps for {','.join(config.filters)} to {out}")


@main.command()
@click.argument('runs_csv', type=click.Path(exists=True, dir_okay=False))
@click.option('--out', '-o', help="Write the summary as JSON to this file")
def evaluate(runs_csv, out):
    """Summarize RUNS_CSV per step interval and check the bound relations

    Prints the mean true and estimated counts, the mean scaled squared OSPA and
    the mean DPCRLB per interval, followed by the result of each check.
    """
    try:
        runs = load_runs(runs_csv)
        table, checks = evaluate_runs(runs)
    except RunsFormatError as e:
        fail(str(e), USAGE_ERROR)
    except KeyError as e:
        fail(f"{runs_csv}: missing column {e}", USAGE_ERROR)

    click.echo(table.to_string(index=False))
    for name, check in checks.items():
        status = 'ok' if check['passed'] else 'VIOLATED'
        values = ', '.join(f"{k}={v:.4g}" for k, v in check.items() if k != 'passed')
        click.echo(f"{name}: {status} ({values})")

    if out is not None:
        save_json({'intervals': table.to_dict(orient='records'), 'checks': checks}, out)


@main.command()
@click.option('--kind', '-k', type=click.Choice(PLOT_KINDS), required=True, help="Which figure to draw")
@click.option('--input', '-i', 'input_path', type=click.Path(exists=True, dir_okay=False), required=True,
              help="aggregate.csv written by simulate")
@click.option('--out', '-o', required=True, help="Output SVG file; the plotted data is written next to it as CSV")
def plot(kind, input_path, out):
    """Draw a figure from an aggregate table
    """
    try:
        plot_figure(PlotSpec(kind, input_path, out))
    except PlotError as e:
        fail(str(e), USAGE_ERROR)
    except Exception as e:
        logger.debug("plotting failed", exc_info=True)
        fail(f"plotting failed: {e}", RUNTIME_ERROR)


@main.command()
@click.option('--out', '-o', help="Write the timing table to this CSV file")
@click.option('--repeats', type=int, default=5, show_default=True, help="Timed repetitions per point; the best is kept")
@click.option('--seed', type=int, default=0, show_default=True, help="Seed of the synthetic particles and measurements")
@click.option('--check', is_flag=True, help="Exit with status 3 if a slope check fails")
def bench(out, repeats, seed, check):
    """Time the weighting and pre-clustering phases against their inputs
    """
    try:
        table = bench_complexity(repeats=repeats, seed=seed)
    except ValueError as e:
        fail(str(e), USAGE_ERROR)
    checks = check_slopes(table)

    click.echo(table.to_string(index=False))
    for name, c in checks.items():
        click.echo(f"{name}: ratio {c['ratio']:.2f} {'ok' if c['passed'] else 'FAILED'}")
    if out is not None:
        table.to_csv(out, index=False)
    if check and not all(c['passed'] for c in checks.values()):
        sys.exit(RUNTIME_ERROR)


@main.command()
@click.option('--out', '-o', help="Write the layout to this file instead of stdout")
@click.option('--r-sen', type=float, default=6.0, show_default=True, help="Sensing radius of every node [m]")
@click.option('--r-com', type=float, default=12.0, show_default=True, help="Communication radius of every node [m]")
@click.option('--ascii', 'ascii_path', type=click.Path(exists=True, dir_okay=False),
              help="Place nodes from an ASCII diagram instead of the reference grid")
@click.option('--origin', type=(float, float), default=(-22.0, 16.0), show_default=True,
              help="Position of the first character of the ASCII diagram [m]")
@click.option('--pitch', type=(float, float), default=(8.8, 8.0), show_default=True,
              help="Spacing of the ASCII diagram columns and rows [m]")
@click.option('--roi-margin', type=float, default=4.0, show_default=True,
              help="Margin between the node bounding box and the region of interest [m]")
@click.option('--resolution', type=float, default=0.5, show_default=True,
              help="Grid resolution of the coverage estimate [m]")
def layout(out, r_sen, r_com, ascii_path, origin, pitch, roi_margin, resolution):
    """Build a node layout file and report its coverage

    Without --ascii the reference 30-node grid is produced. In a diagram, every
    character other than a space or underscore places a node.
    """
    try:
        if ascii_path is not None:
            builder = TopologyBuilder(r_sen, r_com)
            with open(ascii_path, 'r') as f:
                builder.fill_ascii(f.read(), origin, pitch)
        else:
            builder = reference_builder(r_sen, r_com)
        topology = builder.build(roi_margin=roi_margin)
    except ValueError as e:
        fail(str(e), USAGE_ERROR)

    smallest = min(len(h) for h in topology.neighborhoods().values())
    click.echo(
        f"{len(topology)} nodes, coverage {topology.coverage_ratio(resolution):.3f}, "
        f"smallest neighborhood {smallest}",
        err=True)
    if out is not None:
        save_layout(topology, out)
    else:
        click.echo(json.dumps(topology.to_dict(), cls=PrettyJSONEncoder))


if __name__ == '__main__':
    main()
