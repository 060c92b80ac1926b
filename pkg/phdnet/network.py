"""Static sensor network topology: neighborhoods, sensing membership and
coverage of the region of interest
"""
import itertools
import logging
import numpy as np
import shapely
from scipy.spatial.distance import cdist
from shapely.geometry import Point, box
from shapely.geometry.base import BaseGeometry
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from .types import Node

logger = logging.getLogger(__name__)


class Topology(object):
    """A static network of sensor nodes and the region of interest (ROI) it watches

    Two nodes are neighbors when their distance is within the communication
    radius of both. Every node is its own neighbor. Neighborhood tables are
    computed once at construction.

    Args:
        nodes: Nodes with ids 1..N (in any order)
        roi: Region of interest. Defaults to the bounding box of the node
            positions inflated by `roi_margin`.
        roi_margin: Inflation of the default ROI. Defaults to the largest
            sensing radius.

    Raises:
        ValueError: if the node ids are not unique and contiguous from 1
    """
    def __init__(self, nodes: Sequence[Node], roi: Optional[BaseGeometry]=None, roi_margin: Optional[float]=None):
        nodes = sorted(nodes, key=lambda n: n.id)
        ids = [n.id for n in nodes]
        if len(nodes) == 0:
            raise ValueError("A topology needs at least one node")
        if ids != list(range(1, len(nodes) + 1)):
            raise ValueError(f"Node ids must be unique and contiguous from 1, got {ids}")
        self.nodes = nodes
        self.positions = np.array([n.position for n in nodes], dtype=float)
        self.r_sen = np.array([n.r_sen for n in nodes], dtype=float)
        self.r_com = np.array([n.r_com for n in nodes], dtype=float)

        if roi is None:
            if roi_margin is None:
                roi_margin = float(np.max(self.r_sen))
            lo = self.positions.min(axis=0) - roi_margin
            hi = self.positions.max(axis=0) + roi_margin
            roi = box(lo[0], lo[1], hi[0], hi[1])
        self.roi = roi
        self.roi_margin = roi_margin

        self._distances = cdist(self.positions, self.positions)
        link_radius = np.minimum(self.r_com[:, None], self.r_com[None, :])
        self._adjacency = self._distances <= link_radius
        self._neighborhoods = {
            k: frozenset((np.flatnonzero(self._adjacency[k - 1]) + 1).tolist())
            for k in ids
        }
        self._two_hop = {
            k: frozenset(itertools.chain.from_iterable(self._neighborhoods[l] for l in self._neighborhoods[k]))
            for k in ids
        }

    def __len__(self):
        return len(self.nodes)

    @property
    def ids(self) -> List[int]:
        return [n.id for n in self.nodes]

    def node(self, k: int) -> Node:
        if k < 1 or k > len(self.nodes):
            raise IndexError(f"No node with id {k}")
        return self.nodes[k - 1]

    def neighborhood(self, k: int) -> FrozenSet[int]:
        """Ids of all nodes within communication range of `k`, including `k`
        """
        self.node(k)
        return self._neighborhoods[k]

    def two_hop(self, k: int) -> FrozenSet[int]:
        """Union of the neighborhoods of all neighbors of `k`
        """
        self.node(k)
        return self._two_hop[k]

    def neighborhoods(self) -> Dict[int, FrozenSet[int]]:
        return dict(self._neighborhoods)

    def sensing_matrix(self, points: np.ndarray) -> np.ndarray:
        """Return an (n, N) boolean matrix: point i is within the sensing radius of node j+1
        """
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        return cdist(points, self.positions) <= self.r_sen[None, :]

    def nodes_in_sensing_range(self, position: Sequence[float]) -> FrozenSet[int]:
        mask = self.sensing_matrix(np.asarray(position, dtype=float).reshape(1, 2))[0]
        return frozenset((np.flatnonzero(mask) + 1).tolist())

    def covered(self, points: np.ndarray) -> np.ndarray:
        return np.any(self.sensing_matrix(points), axis=1)

    def roi_grid(self, resolution: float) -> np.ndarray:
        """Grid points with spacing `resolution` which lie in the ROI (boundary included)
        """
        if not resolution > 0:
            raise ValueError(f"Grid resolution must be positive, got {resolution}")
        minx, miny, maxx, maxy = self.roi.bounds
        xs = np.arange(minx, maxx + resolution / 2, resolution)
        ys = np.arange(miny, maxy + resolution / 2, resolution)
        gx, gy = np.meshgrid(xs, ys)
        gx = gx.ravel()
        gy = gy.ravel()
        inside = shapely.intersects_xy(self.roi, gx, gy)
        return np.column_stack([gx[inside], gy[inside]])

    def coverage_ratio(self, resolution: float) -> float:
        """Fraction of ROI grid points within the sensing radius of at least one node
        """
        grid = self.roi_grid(resolution)
        if len(grid) == 0:
            return 0.0
        return float(np.mean(self.covered(grid)))

    def sample_roi(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw `n` points uniformly from the ROI by rejection from its bounding box
        """
        minx, miny, maxx, maxy = self.roi.bounds
        out = np.zeros((0, 2))
        while len(out) < n:
            p = rng.uniform((minx, miny), (maxx, maxy), size=(2 * n, 2))
            p = p[shapely.intersects_xy(self.roi, p[:, 0], p[:, 1])]
            out = np.concatenate([out, p])
        return out[:n]

    def border_band(self) -> BaseGeometry:
        """The part of the ROI within two sensing radii of its boundary
        """
        width = 2 * float(np.max(self.r_sen))
        return self.roi.difference(self.roi.buffer(-width))

    def on_border(self, position: Sequence[float]) -> bool:
        return bool(self.border_band().intersects(Point(position[0], position[1])))

    @property
    def diameter(self) -> float:
        """Largest distance between two nodes"""
        return float(self._distances.max())

    def with_radii(self, r_sen: Optional[float]=None, r_com: Optional[float]=None) -> 'Topology':
        """Return a copy with every node's radii replaced, keeping the ROI
        """
        nodes = [
            Node(n.id, n.position,
                 n.r_sen if r_sen is None else r_sen,
                 n.r_com if r_com is None else r_com)
            for n in self.nodes
        ]
        return Topology(nodes, roi=self.roi, roi_margin=self.roi_margin)

    def to_dict(self) -> Dict:
        ret = {'nodes': [n.to_dict() for n in self.nodes]}
        if self.roi_margin is not None:
            ret['roi_margin'] = self.roi_margin
        else:
            ret['roi'] = [list(c) for c in self.roi.exterior.coords]
        return ret


class TopologyBuilder(object):
    """Class to add nodes to a layout

    All nodes of a topology should be added via the same builder, as it keeps
    track of node ids. Adding a node at an occupied position is a no-op.

    Args:
        r_sen: Sensing radius given to every node
        r_com: Communication radius given to every node
    """
    def __init__(self, r_sen: float, r_com: float):
        self.r_sen = r_sen
        self.r_com = r_com
        self.next_id = 1
        self.nodes: List[Node] = []
        self._occupied: Dict[Tuple[float, float], Node] = {}

    def get_id(self) -> int:
        """Allocate and return a new node id

        :meta private:
        """
        id = self.next_id
        self.next_id += 1
        return id

    def add_node(self, position: Tuple[float, float]) -> Node:
        """Add a node at `position`, or return the node already there
        """
        pos = (round(float(position[0]), 9), round(float(position[1]), 9))
        if pos in self._occupied:
            return self._occupied[pos]
        node = Node(self.get_id(), pos, self.r_sen, self.r_com)
        self.nodes.append(node)
        self._occupied[pos] = node
        return node

    def fill_grid(self, origin: Tuple[float, float], pitch: Tuple[float, float], size: Tuple[int, int]):
        """Fill a rectangular grid of nodes

        Nodes are added row by row from north to south, each row from west to
        east.

        Args:
            origin: Position of the north-west node
            pitch: (x, y) spacing between nodes
            size: (columns, rows)
        """
        if size[0] < 1 or size[1] < 1:
            raise ValueError(f"Grid size must be at least (1, 1), got {size}")
        for row, col in itertools.product(range(size[1]), range(size[0])):
            self.add_node((origin[0] + col * pitch[0], origin[1] - row * pitch[1]))

    def fill_ascii(self, diagram: str, origin: Tuple[float, float], pitch: Tuple[float, float]):
        """Place nodes based on ASCII art

        Each line of the diagram is a row of the layout, the first line being
        the northernmost; any character except spaces or underscores places a
        node. Leading blank lines are ignored. Use a line with an underscore
        to leave an empty row at the top.

        Args:
            diagram: The ascii art string describing node positions
            origin: Position of the character in the first column of the first row
            pitch: (x, y) spacing between characters
        """
        lines = []
        found_non_blank = False
        for line in diagram.splitlines():
            if not found_non_blank and (len(line) == 0 or line.isspace()):
                continue
            found_non_blank = True
            lines.append(line)
        for row, line in enumerate(lines):
            for col, ch in enumerate(line):
                if ch != '_' and ch != ' ':
                    self.add_node((origin[0] + col * pitch[0], origin[1] - row * pitch[1]))

    def build(self, roi: Optional[BaseGeometry]=None, roi_margin: Optional[float]=None) -> Topology:
        return Topology(self.nodes, roi=roi, roi_margin=roi_margin)


def reference_builder(r_sen: float=6.0, r_com: float=12.0) -> TopologyBuilder:
    """Builder holding the 30-node reference grid centered at the origin
    """
    builder = TopologyBuilder(r_sen, r_com)
    builder.fill_grid(origin=(-22.0, 16.0), pitch=(8.8, 8.0), size=(6, 5))
    return builder
