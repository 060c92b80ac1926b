"""Measurement generation: detections with additive Gaussian noise plus
Poisson clutter over each node's sensing disk
"""
import logging
import numpy as np
from typing import List, Sequence, Tuple

from . import streams
from .network import Topology
from .types import CLUTTER, Measurement, MeasurementSet, Node, TargetState

logger = logging.getLogger(__name__)


def clutter_density(node: Node) -> float:
    """Spatial density of clutter over the node's sensing disk: 1 / (pi R_sen²)
    """
    return 1.0 / (np.pi * node.r_sen**2)


def sense(
        node: Node,
        targets: Sequence[Tuple[int, TargetState]],
        sigma_r2: float,
        p_d: float,
        lambda_fa: float,
        rng: np.random.Generator,
        step: int=0) -> List[Measurement]:
    """Generate the measurements of one node for one step

    Each target within the sensing radius is detected with probability `p_d`;
    a detection is the target position plus N(0, sigma_r2 I) noise. A
    Poisson(lambda_fa) number of clutter points is drawn uniformly over the
    sensing disk.

    Args:
        node: The sensing node
        targets: (target id, state) pairs of all present targets
        sigma_r2: Measurement noise variance per component
        p_d: Probability of detection
        lambda_fa: Mean number of clutter points per step
        rng: Random generator for this node and step
        step: Step index stored in the measurements
    """
    if not sigma_r2 > 0:
        raise ValueError(f"Measurement noise variance must be positive, got {sigma_r2}")
    if not 0 <= p_d <= 1:
        raise ValueError(f"Probability of detection must be in [0, 1], got {p_d}")
    if lambda_fa < 0:
        raise ValueError(f"Clutter rate must be non-negative, got {lambda_fa}")

    center = np.asarray(node.position, dtype=float)
    sigma_r = np.sqrt(sigma_r2)
    out = []
    for target_id, state in targets:
        pos = state.position
        if np.linalg.norm(pos - center) > node.r_sen:
            continue
        if rng.random() < p_d:
            z = pos + rng.normal(0.0, sigma_r, size=2)
            out.append(Measurement((float(z[0]), float(z[1])), node.id, step, target_id))

    n_clutter = rng.poisson(lambda_fa)
    if n_clutter > 0:
        radius = node.r_sen * np.sqrt(rng.random(n_clutter))
        angle = 2 * np.pi * rng.random(n_clutter)
        xs = center[0] + radius * np.cos(angle)
        ys = center[1] + radius * np.sin(angle)
        for x, y in zip(xs, ys):
            out.append(Measurement((float(x), float(y)), node.id, step, CLUTTER))
    return out


def sense_network(
        topology: Topology,
        targets: Sequence[Tuple[int, TargetState]],
        sigma_r2: float,
        p_d: float,
        lambda_fa: float,
        seed: int,
        run: int=0,
        step: int=0) -> MeasurementSet:
    """Generate the measurements of every node for one step

    Each node draws from its own stream keyed by (run, step, node), so the
    result does not depend on the order in which nodes are visited.
    """
    by_node = {}
    for node in topology.nodes:
        rng = streams.generator(seed, run, streams.SENSING, step, node.id)
        by_node[node.id] = sense(node, targets, sigma_r2, p_d, lambda_fa, rng, step)
    mset = MeasurementSet(step, by_node)
    logger.debug("step %d: %d measurements from %d nodes", step, len(mset), len(topology))
    return mset
