"""This module defines datatypes shared by the simulator, the filters and the
bound engine
"""
from dataclasses import dataclass, field
from enum import Enum
import numpy as np
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

STATE_DIM = 4

# Truth tag for measurements which do not originate from a target
CLUTTER = -1


@dataclass(frozen=True)
class TargetState(object):
    """Kinematic state of a single target, stored in the order [x, y, vx, vy]
    """
    x: float
    y: float
    vx: float
    vy: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.x, self.y, self.vx, self.vy])):
            raise ValueError(f"Target state must be finite, not {self.to_list()}")

    @classmethod
    def from_array(cls, values: Sequence[float]) -> 'TargetState':
        if len(values) != STATE_DIM:
            raise ValueError(f"Target state needs {STATE_DIM} components, got {len(values)}")
        return cls(*(float(v) for v in values))

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.vx, self.vy])

    def to_list(self) -> List[float]:
        return [self.x, self.y, self.vx, self.vy]

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True, eq=False)
class ModelMatrices(object):
    """Matrices of the linear constant-velocity model

    See :py:func:`phdnet.dynamics.build_model` for construction.
    """
    F: np.ndarray
    G: np.ndarray
    Q: np.ndarray
    H: np.ndarray
    dt: float

    @property
    def process_covariance(self) -> np.ndarray:
        """G Q G^T, the process noise covariance in state space"""
        return self.G @ self.Q @ self.G.T


class Track(object):
    """Ground truth of one target: states for every step it is present

    Args:
        target_id: Positive integer identifying the target
        entry_step: First step at which the target is present
        states: Array of states, one row per step starting at `entry_step`
        exit_step: Last step at which the target is present. If None, the
            target is present for as many steps as there are states.
    """
    def __init__(self, target_id: int, entry_step: int, states: np.ndarray, exit_step: Optional[int]=None):
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if states.shape[1] != STATE_DIM:
            raise ValueError(f"Track states must have {STATE_DIM} columns, got shape {states.shape}")
        if not np.all(np.isfinite(states)):
            raise ValueError(f"Track {target_id} contains non-finite states")
        if entry_step < 0:
            raise ValueError(f"Entry step must be non-negative, got {entry_step}")
        if exit_step is None:
            exit_step = entry_step + len(states) - 1
        if exit_step < entry_step:
            raise ValueError(f"Track {target_id} exits ({exit_step}) before it enters ({entry_step})")
        if len(states) < exit_step - entry_step + 1:
            raise ValueError(
                f"Track {target_id} has {len(states)} states but is present for steps {entry_step}..{exit_step}")
        self.target_id = target_id
        self.entry_step = entry_step
        self.exit_step = exit_step
        self._states = states[:exit_step - entry_step + 1].copy()
        self._states.flags.writeable = False

    @property
    def states(self) -> np.ndarray:
        return self._states

    def is_active(self, step: int) -> bool:
        return self.entry_step <= step <= self.exit_step

    def state_at(self, step: int) -> TargetState:
        if not self.is_active(step):
            raise IndexError(f"Target {self.target_id} is not present at step {step}")
        return TargetState.from_array(self._states[step - self.entry_step])

    def position_at(self, step: int) -> np.ndarray:
        return self.state_at(step).position

    def __repr__(self):
        return f"Track(id={self.target_id}, steps={self.entry_step}..{self.exit_step})"


def active_targets(tracks: Iterable[Track], step: int) -> List[Tuple[int, TargetState]]:
    """Return (target id, state) for every track present at `step`, ordered by id
    """
    return [(t.target_id, t.state_at(step)) for t in sorted(tracks, key=lambda t: t.target_id) if t.is_active(step)]


@dataclass(frozen=True)
class Node(object):
    """A static sensor node
    """
    id: int
    position: Tuple[float, float]
    r_sen: float
    r_com: float

    def __post_init__(self):
        if len(self.position) != 2:
            raise ValueError(f"Node position must be a 2-tuple, not '{self.position}'")
        if not self.r_sen > 0:
            raise ValueError(f"Node {self.id}: sensing radius must be positive, got {self.r_sen}")
        if not self.r_com > 0:
            raise ValueError(f"Node {self.id}: communication radius must be positive, got {self.r_com}")

    def to_dict(self) -> Dict:
        return {
            'id': self.id,
            'x': float(self.position[0]),
            'y': float(self.position[1]),
            'r_sen': self.r_sen,
            'r_com': self.r_com,
        }


@dataclass(frozen=True)
class Measurement(object):
    """A 2D position measurement

    `tag` is the id of the generating target, or CLUTTER. It is kept for
    evaluation and logging only; filters never read it.
    """
    z: Tuple[float, float]
    node: int
    step: int
    tag: int = CLUTTER


class MeasurementSet(object):
    """Measurements of all nodes for a single step

    Args:
        step: The time step index
        by_node: Mapping of node id to that node's list of measurements
    """
    def __init__(self, step: int, by_node: Dict[int, List[Measurement]]):
        self.step = step
        self._by_node = {k: list(v) for k, v in sorted(by_node.items())}
        self._arrays = {
            k: np.array([m.z for m in v], dtype=float).reshape(-1, 2)
            for k, v in self._by_node.items()
        }

    @property
    def nodes(self) -> List[int]:
        return list(self._by_node.keys())

    def measurements(self, node: int) -> List[Measurement]:
        return self._by_node.get(node, [])

    def for_node(self, node: int) -> np.ndarray:
        """Return an (m, 2) array with the measurements of `node`
        """
        if node not in self._arrays:
            return np.zeros((0, 2))
        return self._arrays[node]

    def count(self, node: int) -> int:
        return len(self._by_node.get(node, []))

    def positions(self, nodes: Optional[Iterable[int]]=None) -> np.ndarray:
        """Stack measurements of `nodes` (all nodes if None) in ascending node order
        """
        if nodes is None:
            nodes = self.nodes
        arrays = [self.for_node(k) for k in sorted(nodes)]
        if len(arrays) == 0:
            return np.zeros((0, 2))
        return np.concatenate(arrays, axis=0)

    def all(self) -> List[Measurement]:
        return [m for k in self.nodes for m in self._by_node[k]]

    def __len__(self):
        return sum(len(v) for v in self._by_node.values())


class ParticleKind(Enum):
    PERSISTENT = 'persistent'
    NEWBORN = 'newborn'
    TOTAL = 'total'
    COLLECTIVE = 'collective'


class ParticleSet(object):
    """A weighted particle approximation of a PHD

    The integral of the PHD (the particle mass) is the expected number of
    targets.

    Args:
        states: (n, 4) array of particle states
        weights: (n,) array of non-negative weights
        kind: Role of the set in the filter recursion
    """
    def __init__(self, states: np.ndarray, weights: np.ndarray, kind: ParticleKind=ParticleKind.TOTAL):
        states = np.asarray(states, dtype=float).reshape(-1, STATE_DIM)
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if len(states) != len(weights):
            raise ValueError(f"Got {len(states)} states but {len(weights)} weights")
        if np.any(weights < 0):
            raise ValueError("Particle weights must be non-negative")
        self.states = states
        self.weights = weights
        self.kind = kind

    @classmethod
    def empty(cls, kind: ParticleKind=ParticleKind.TOTAL) -> 'ParticleSet':
        return cls(np.zeros((0, STATE_DIM)), np.zeros(0), kind)

    def __len__(self):
        return len(self.weights)

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, 0:2]

    def with_weights(self, weights: np.ndarray) -> 'ParticleSet':
        return ParticleSet(self.states, weights, self.kind)

    def with_kind(self, kind: ParticleKind) -> 'ParticleSet':
        return ParticleSet(self.states, self.weights, kind)

    def copy(self) -> 'ParticleSet':
        return ParticleSet(self.states.copy(), self.weights.copy(), self.kind)

    def __repr__(self):
        return f"ParticleSet({self.kind.value}, n={len(self)}, mass={self.mass:.4f})"


@dataclass
class ClusterResult(object):
    """Result of a clustering

    Attributes:
        assignments: Cluster index for every input point
        centroids: One row per cluster, weighted mean of the members
        sizes: Number of points in each cluster
        masses: Sum of member weights for each cluster
        history: Objective value after each iteration (k-means only)
    """
    assignments: np.ndarray
    centroids: np.ndarray
    sizes: np.ndarray
    masses: np.ndarray
    history: List[float] = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return len(self.sizes)

    @classmethod
    def empty(cls, dim: int=2) -> 'ClusterResult':
        return cls(
            assignments=np.zeros(0, dtype=int),
            centroids=np.zeros((0, dim)),
            sizes=np.zeros(0, dtype=int),
            masses=np.zeros(0),
        )
