"""File formats: node layouts, waypoint files, scenario configs, measurement logs
"""
import json
import logging
import math
import os
import numpy as np
import pandas as pd
import yaml
from shapely.geometry import Polygon
from typing import Any, Dict, Iterable, List, Optional

from .config import ConfigError, ScenarioConfig
from .dynamics import propagate_states
from .network import Topology
from .types import CLUTTER, MeasurementSet, ModelMatrices, Node, Track

logger = logging.getLogger(__name__)

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'data')


class LayoutError(ValueError):
    """Malformed layout file"""
    pass


class WaypointError(ValueError):
    """Malformed waypoint file"""
    pass


def reference_layout_path() -> str:
    return os.path.join(DATA_DIR, 'reference_layout.json')


def reference_tracks_path() -> str:
    return os.path.join(DATA_DIR, 'reference_tracks.json')


def _read_json(filename: str, error_cls) -> Any:
    with open(filename, 'r') as f:
        try:
            return json.loads(f.read())
        except json.JSONDecodeError as e:
            raise error_cls(f"{filename}: invalid JSON: {e}")


def _finite_vector(value, length: int, what: str, error_cls) -> List[float]:
    try:
        v = [float(x) for x in value]
    except (TypeError, ValueError):
        raise error_cls(f"{what} must be a list of {length} numbers, not '{value}'")
    if len(v) != length or not all(math.isfinite(x) for x in v):
        raise error_cls(f"{what} must be a list of {length} finite numbers, not '{value}'")
    return v


def load_layout(filename: str) -> Topology:
    """Read a node layout from a JSON file

    The file holds a list of nodes, each with `id`, `x`, `y` and optionally
    `r_sen` and `r_com` (falling back to top-level `r_sen` and `r_com`). The
    ROI is either an explicit polygon (`roi`, a list of [x, y] vertices) or
    the node bounding box inflated by `roi_margin`.

    Args:
        filename (str): The path to the layout file

    Raises:
        LayoutError: for missing keys or invalid values
    """
    data = _read_json(filename, LayoutError)
    if not isinstance(data, dict) or 'nodes' not in data:
        raise LayoutError(f"{filename}: layout must be an object with a 'nodes' list")
    nodes = []
    for i, entry in enumerate(data['nodes']):
        try:
            x, y = _finite_vector([entry['x'], entry['y']], 2, f"node {i} position", LayoutError)
            nodes.append(Node(
                int(entry['id']),
                (x, y),
                float(entry.get('r_sen', data.get('r_sen', 0.0))),
                float(entry.get('r_com', data.get('r_com', 0.0))),
            ))
        except KeyError as e:
            raise LayoutError(f"{filename}: node {i} is missing key {e}")
        except (TypeError, ValueError) as e:
            raise LayoutError(f"{filename}: node {i}: {e}")

    roi = None
    if 'roi' in data:
        vertices = [_finite_vector(v, 2, "roi vertex", LayoutError) for v in data['roi']]
        roi = Polygon(vertices)
        if not roi.is_valid or roi.area <= 0:
            raise LayoutError(f"{filename}: roi is not a valid polygon")
    try:
        return Topology(nodes, roi=roi, roi_margin=data.get('roi_margin'))
    except ValueError as e:
        raise LayoutError(f"{filename}: {e}")


def load_tracks(filename: str, model: ModelMatrices, n_steps: int) -> List[Track]:
    """Read target tracks from a waypoint file

    Each target has an `id`, an `entry_step`, an optional `exit_step` and
    either `states` (one [x, y, vx, vy] per step from entry) or `initial`
    (a single state expanded with the noiseless model until the exit step,
    or until step `n_steps` when the target never exits).

    Raises:
        WaypointError: for missing keys or invalid values
    """
    data = _read_json(filename, WaypointError)
    if not isinstance(data, dict) or 'targets' not in data:
        raise WaypointError(f"{filename}: waypoint file must be an object with a 'targets' list")
    tracks = []
    seen = set()
    for i, entry in enumerate(data['targets']):
        try:
            target_id = int(entry['id'])
            entry_step = int(entry['entry_step'])
            exit_step = entry.get('exit_step')
            exit_step = None if exit_step is None else int(exit_step)
            if target_id in seen:
                raise WaypointError(f"{filename}: duplicate target id {target_id}")
            seen.add(target_id)
            if 'states' in entry:
                states = np.array([_finite_vector(s, 4, f"target {target_id} state", WaypointError)
                                   for s in entry['states']])
            elif 'initial' in entry:
                initial = _finite_vector(entry['initial'], 4, f"target {target_id} initial state", WaypointError)
                last = n_steps if exit_step is None else exit_step
                states = propagate_states(initial, model, max(last - entry_step + 1, 1))
            else:
                raise WaypointError(f"{filename}: target {target_id} needs 'states' or 'initial'")
            tracks.append(Track(target_id, entry_step, states, exit_step))
        except KeyError as e:
            raise WaypointError(f"{filename}: target {i} is missing key {e}")
        except WaypointError:
            raise
        except (TypeError, ValueError) as e:
            raise WaypointError(f"{filename}: target {i}: {e}")
    return tracks


def load_config(filename: str) -> ScenarioConfig:
    """Read a scenario configuration from a YAML file

    Relative `layout` and `waypoints` paths are resolved against the
    directory of the configuration file.

    Raises:
        ConfigError: for unknown keys or invalid values
    """
    with open(filename, 'r') as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError('config', f"invalid YAML in {filename}: {e}")
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError('config', f"{filename} must contain a mapping", type(data).__name__)
    base = os.path.dirname(os.path.abspath(filename))
    for key in ('layout', 'waypoints'):
        if data.get(key) is not None and not os.path.isabs(data[key]):
            data[key] = os.path.join(base, data[key])
    return ScenarioConfig.from_dict(data)


class PrettyJSONEncoder(json.JSONEncoder):
    """Custom JSON encoder which keeps short lists of numbers on one line

    :meta private:
    """
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.indentation_level = 0

    def encode(self, o):
        """Encode JSON object *o* with respect to single line lists."""
        if isinstance(o, np.ndarray):
            o = o.tolist()
        elif isinstance(o, np.generic):
            o = o.item()

        if isinstance(o, (list, tuple)):
            if self._is_single_line_list(o):
                return "[" + ", ".join(json.dumps(el) for el in o) + "]"
            else:
                self.indentation_level += 1
                output = [self.indent_str + self.encode(el) for el in o]
                self.indentation_level -= 1
                return "[\n" + ",\n".join(output) + "\n" + self.indent_str + "]"

        elif isinstance(o, dict):
            if len(o) == 0:
                return "{}"
            self.indentation_level += 1
            output = [self.indent_str + f"{json.dumps(k)}: {self.encode(v)}" for k, v in o.items()]
            self.indentation_level -= 1
            return "{\n" + ",\n".join(output) + "\n" + self.indent_str + "}"

        else:
            return json.dumps(o)

    def _is_single_line_list(self, o):
        return not any(isinstance(el, (list, tuple, dict)) for el in o) and len(str(o)) - 2 <= 60

    @property
    def indent_str(self) -> str:
        return "  " * self.indentation_level


def save_json(data: Dict, filename: str):
    """Save a dict to a JSON file with the pretty encoder
    """
    with open(filename, 'w') as f:
        f.write(json.dumps(data, cls=PrettyJSONEncoder))
        f.write("\n")


def save_layout(topology: Topology, filename: str):
    save_json(topology.to_dict(), filename)


def measurement_frame(measurement_sets: Iterable[MeasurementSet], run: Optional[int]=None) -> pd.DataFrame:
    """Measurements as a table with columns (run,) step, node, x, y, tag

    The tag is the generating target id, or 'clutter'.
    """
    rows = []
    for mset in measurement_sets:
        for m in mset.all():
            row = {} if run is None else {'run': run}
            row.update({
                'step': m.step,
                'node': m.node,
                'x': m.z[0],
                'y': m.z[1],
                'tag': 'clutter' if m.tag == CLUTTER else str(m.tag),
            })
            rows.append(row)
    columns = ([] if run is None else ['run']) + ['step', 'node', 'x', 'y', 'tag']
    return pd.DataFrame(rows, columns=columns)
