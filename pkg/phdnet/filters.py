"""Step orchestration of the particle PHD filters

Three filters share the building blocks in :py:mod:`phdnet.phd`:

- the centralized multi-sensor filter (:py:func:`ms_pphdf_step`), which
  processes the measurements of the whole network at a fusion center,
- the diffusion filter (:py:func:`d_pphdf_step`), where every node runs its
  own PHD filter and exchanges measurements and resampled particles with its
  neighbors in two synchronous broadcast rounds,
- a local-only baseline (:py:func:`local_pphdf_step`), the diffusion filter
  with every neighborhood reduced to the node itself.

Filter states are updated in place; each step returns a :py:class:`StepReport`.
"""
from dataclasses import dataclass, field
import json
import logging
import numpy as np
from scipy.spatial.distance import cdist
from typing import Callable, Dict, FrozenSet, List, Mapping, Optional, Tuple

from .clustering import kmeans, precluster_measurements, single_linkage
from .config import ScenarioConfig
from .network import Topology
from .phd import (adaptive_birth, candidate_measurements, estimate_target_count, merge, predict, resample,
                  roughen, weight_update)
from .sensing import clutter_density
from .types import STATE_DIM, MeasurementSet, ModelMatrices, ParticleKind, ParticleSet

logger = logging.getLogger(__name__)

# Scalars per broadcast item
MEASUREMENT_SCALARS = 2
PARTICLE_SCALARS = 5

NodeRng = Callable[[int], np.random.Generator]


class StepTrace(object):
    """Collects one event per filter phase

    Events hold the filter name, step, phase, node (None for the fusion
    center), particle mass and count, and broadcast scalars where relevant.
    """
    def __init__(self):
        self.events: List[Dict] = []

    def record(self, filter: str, step: int, phase: str, node: Optional[int]=None,
               particles: Optional[ParticleSet]=None, scalars: Optional[int]=None, **extra):
        event = {'filter': filter, 'step': step, 'phase': phase, 'node': node}
        if particles is not None:
            event['mass'] = particles.mass
            event['count'] = len(particles)
        if scalars is not None:
            event['scalars'] = scalars
        event.update(extra)
        self.events.append(event)

    def phases(self, filter: Optional[str]=None, node: Optional[int]=None, step: Optional[int]=None) -> List[str]:
        return [
            e['phase'] for e in self.events
            if (filter is None or e['filter'] == filter)
            and (node is None or e['node'] == node)
            and (step is None or e['step'] == step)
        ]

    def write_jsonl(self, filename: str, mode: str='w', **extra):
        with open(filename, mode) as f:
            for e in self.events:
                f.write(json.dumps({**extra, **e}) + "\n")


class CentralFilterState(object):
    """State of the centralized filter between steps"""
    def __init__(self):
        self.persistent = ParticleSet.empty(ParticleKind.PERSISTENT)
        self.newborn = ParticleSet.empty(ParticleKind.NEWBORN)
        self.estimates = np.zeros((0, STATE_DIM))
        self.count = 0
        self.steps = 0


class NodeFilterState(object):
    """State of one node of the diffusion filter between steps

    The newborn set is kept apart from the collective set; it joins the
    persistent population at the next step.
    """
    def __init__(self, node_id: int):
        self.node_id = node_id
        self.collective = ParticleSet.empty(ParticleKind.COLLECTIVE)
        self.newborn = ParticleSet.empty(ParticleKind.NEWBORN)
        self.estimates = np.zeros((0, STATE_DIM))
        self.count = 0
        self.steps = 0


def initial_node_states(topology: Topology) -> Dict[int, NodeFilterState]:
    return {k: NodeFilterState(k) for k in topology.ids}


@dataclass
class StepReport(object):
    """Outcome of one filter step

    Attributes:
        estimates: The joint estimate set of the network, one state per row
        node_estimates: Per-node estimates (distributed filters only)
        node_counts: Per-node target count estimates (distributed filters only)
        node_masses: Mass behind each per-node estimate (distributed filters only)
        measurement_scalars: Scalars sent in the measurement broadcast
        particle_scalars: Scalars sent in the particle broadcast
        provides_estimates: False on the first step, which only spawns
            newborn particles
    """
    step: int
    filter: str
    estimates: np.ndarray
    measurement_scalars: int = 0
    particle_scalars: int = 0
    provides_estimates: bool = True
    node_estimates: Dict[int, np.ndarray] = field(default_factory=dict)
    node_counts: Dict[int, int] = field(default_factory=dict)
    node_masses: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def count(self) -> int:
        return len(self.estimates)


def _clutter_densities(topology: Topology, measurements: MeasurementSet, nodes) -> np.ndarray:
    return np.concatenate([
        np.full(measurements.count(k), clutter_density(topology.node(k))) for k in sorted(nodes)
    ] + [np.zeros(0)])


def ms_pphdf_step(
        state: CentralFilterState,
        topology: Topology,
        measurements: MeasurementSet,
        model: ModelMatrices,
        config: ScenarioConfig,
        rng: np.random.Generator,
        trace: Optional[StepTrace]=None) -> StepReport:
    """One step of the centralized multi-sensor particle PHD filter

    All network measurements are pre-clustered; each measurement's update is
    divided by the size of its cluster so that a target seen by several
    sensors still contributes unit mass.
    """
    step = measurements.step
    name = 'ms'

    def log(phase, particles=None, **extra):
        if trace is not None:
            trace.record(name, step, phase, None, particles, **extra)

    total = merge(state.persistent, state.newborn)
    log('merge', total)
    total = predict(total, model, config.p_s)
    log('predict', total)

    z = measurements.positions()
    labels = precluster_measurements(z, config.gate_distance)
    log('precluster', clusters=int(len(np.unique(labels))) if len(labels) > 0 else 0)

    c_fa = _clutter_densities(topology, measurements, measurements.nodes)
    total, update = weight_update(total, z, config.p_d, config.lambda_fa, c_fa, config.sigma_r2, labels)
    log('weight', total)

    candidates = candidate_measurements(z, update, config.candidate_floor)
    log('candidates', candidates=len(candidates))

    n_hat = estimate_target_count(total)
    log('count', estimate=n_hat)

    persistent = resample(total, n_hat, config.n_p, rng, config.resampling)
    log('resample', persistent)

    if n_hat > 0:
        clusters = kmeans(persistent.positions, n_hat, int(rng.integers(2**32)), values=persistent.states,
                          n_init=config.kmeans_restarts, init=config.kmeans_init)
        estimates = clusters.centroids
    else:
        estimates = np.zeros((0, STATE_DIM))
    log('extract', estimates=len(estimates))

    persistent = roughen(persistent, config.k_rough, config.e_c, rng)
    log('roughen', persistent)

    newborn = adaptive_birth(
        candidates, config.n_p, config.p_b, config.birth_spread, config.birth_sigma_v, rng,
        config.per_candidate_birth)
    log('birth', newborn)

    provides = state.steps > 0
    state.persistent = persistent
    state.newborn = newborn
    state.estimates = estimates
    state.count = n_hat
    state.steps += 1
    logger.debug("ms step %d: %d measurements, count %d", step, len(z), n_hat)
    return StepReport(
        step=step,
        filter=name,
        estimates=estimates if provides else np.zeros((0, STATE_DIM)),
        measurement_scalars=MEASUREMENT_SCALARS * len(z),
        particle_scalars=0,
        provides_estimates=provides,
    )


def _neighborhood_update(
        total: ParticleSet,
        k: int,
        hood: List[int],
        topology: Topology,
        measurements: MeasurementSet,
        config: ScenarioConfig):
    """Iteratively weight `total` with the measurements of every node in `hood`

    The detection probability for neighbor l is p_D inside l's sensing disk
    and 0 outside, so a neighbor never penalizes particles it cannot see.
    Particles that an earlier neighbor detected (one of its measurements lies
    within the pre-clustering gate) carry no missed-detection factor for a
    later neighbor without a measurement near them, which makes the result
    independent of the neighbor order.

    Returns:
        (updated set, stacked measurements, stacked update matrix, mask of
        the columns holding node k's own measurements)
    """
    blocks = []
    updates = []
    own = []
    supported = np.zeros(len(total), dtype=bool)
    for l in hood:
        node = topology.node(l)
        z = measurements.for_node(l)
        positions = total.positions
        in_fov = np.linalg.norm(positions - np.asarray(node.position), axis=1) <= node.r_sen
        if len(z) > 0 and len(total) > 0:
            near = in_fov & (cdist(positions, z).min(axis=1) <= config.gate_distance)
        else:
            near = np.zeros(len(total), dtype=bool)
        p_d = config.p_d * in_fov
        total, u = weight_update(total, z, p_d, config.lambda_fa, clutter_density(node), config.sigma_r2,
                                 p_miss=np.where(supported & ~near, 0.0, p_d))
        supported |= near
        blocks.append(z)
        updates.append(u)
        own.append(np.full(len(z), l == k))

    if config.unobserved_penalty and len(total) > 0:
        seen = topology.sensing_matrix(total.positions)[:, [l - 1 for l in hood]].any(axis=1)
        total = total.with_weights(np.where(seen, total.weights, (1 - config.p_d) * total.weights))

    return total, np.concatenate(blocks), np.hstack(updates), np.concatenate(own)


def extract_node_estimates(
        collective: ParticleSet,
        sources: np.ndarray,
        max_clusters: int,
        config: ScenarioConfig) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """State extraction from a node's collective set

    The particles are split into clouds by single linkage cut at
    `config.cloud_gap_distance`. A cloud is kept when a single neighbor
    contributes at least `config.min_cluster_mass` to it; stray particles and
    modes that no neighbor holds on its own are dropped. The centroids of the
    kept clouds are merged by single linkage at `config.cut_distance`,
    weighted by that largest contribution, into at most `max_clusters`
    estimates.

    Each neighbor sends its own estimate of a target's PHD, so the summed set
    counts a target once per neighbor that sees it. The returned weights scale
    every kept cloud back to its largest single-neighbor mass; other clouds
    keep theirs.

    Args:
        collective: Union of the neighborhood's persistent particles
        sources: Id of the node each particle came from
        max_clusters: Cap on the number of estimates
        config: Clustering settings

    Returns:
        (estimates, mass behind each estimate, rescaled particle weights)
    """
    weights = collective.weights
    clouds = single_linkage(
        collective.positions,
        weights if config.weighted_centroids else None,
        cut_distance=config.cloud_gap_distance,
        values=collective.states)
    _, source_index = np.unique(sources, return_inverse=True)
    source_index = source_index.reshape(-1)
    n_sources = int(source_index.max()) + 1
    per_source = np.bincount(
        clouds.assignments * n_sources + source_index, weights=weights,
        minlength=clouds.n_clusters * n_sources).reshape(clouds.n_clusters, n_sources)
    support = per_source.max(axis=1)
    keep = support >= config.min_cluster_mass

    scale = np.ones(clouds.n_clusters)
    scale[keep] = support[keep] / per_source[keep].sum(axis=1)
    rescaled = weights * scale[clouds.assignments]
    if not keep.any():
        return np.zeros((0, STATE_DIM)), np.zeros(0), rescaled

    merged = single_linkage(
        clouds.centroids[keep, 0:2],
        support[keep],
        max_clusters=max(max_clusters, 1),
        cut_distance=config.cut_distance,
        values=clouds.centroids[keep])
    return merged.centroids, merged.masses, rescaled


def d_pphdf_step(
        states: Dict[int, NodeFilterState],
        topology: Topology,
        measurements: MeasurementSet,
        model: ModelMatrices,
        config: ScenarioConfig,
        node_rng: NodeRng,
        trace: Optional[StepTrace]=None,
        neighborhoods: Optional[Mapping[int, FrozenSet[int]]]=None,
        name: str='dpphdf') -> StepReport:
    """One step of the diffusion particle PHD filter at every node

    Phases run for all nodes before the next phase starts, so both broadcast
    rounds see a consistent snapshot. A node takes part in the weighting
    round when its total set is non-empty or some node of its neighborhood
    has measurements; every node forms a collective set from the particles
    it receives.

    Args:
        states: Per-node filter states, updated in place
        node_rng: Returns the random generator of a node for this step
        neighborhoods: Override the topology's neighborhoods
        name: Filter name used in reports and traces
    """
    step = measurements.step
    if neighborhoods is None:
        neighborhoods = topology.neighborhoods()
    ids = topology.ids
    hoods = {k: sorted(neighborhoods[k]) for k in ids}
    rngs = {k: node_rng(k) for k in ids}
    first = all(states[k].steps == 0 for k in ids)

    def log(phase, node, particles=None, **extra):
        if trace is not None:
            trace.record(name, step, phase, node, particles, **extra)

    totals = {}
    for k in ids:
        totals[k] = merge(states[k].collective, states[k].newborn)
        log('merge', k, totals[k])
        totals[k] = predict(totals[k], model, config.p_s)
        log('predict', k, totals[k])

    has_measurements = {k: measurements.count(k) > 0 for k in ids}
    active = [k for k in ids if len(totals[k]) > 0 or any(has_measurements[l] for l in hoods[k])]

    # broadcast 1: measurements to all neighbors
    measurement_scalars = sum(MEASUREMENT_SCALARS * measurements.count(k) * (len(hoods[k]) - 1) for k in ids)
    for k in active:
        log('broadcast_measurements', k, scalars=MEASUREMENT_SCALARS * measurements.count(k) * (len(hoods[k]) - 1))

    persistent = {k: ParticleSet.empty(ParticleKind.PERSISTENT) for k in ids}
    counts = {k: 0 for k in ids}
    candidates = {k: np.zeros((0, 2)) for k in ids}
    for k in active:
        total, z, update, own = _neighborhood_update(totals[k], k, hoods[k], topology, measurements, config)
        log('weight', k, total)
        candidates[k] = candidate_measurements(z, update, config.candidate_floor, own=own)
        log('candidates', k, candidates=len(candidates[k]))
        counts[k] = estimate_target_count(total)
        log('count', k, estimate=counts[k])
        persistent[k] = resample(total, counts[k], config.n_p, rngs[k], config.resampling)
        log('resample', k, persistent[k])

    # broadcast 2: resampled persistent particles to all neighbors
    particle_scalars = sum(PARTICLE_SCALARS * len(persistent[k]) * (len(hoods[k]) - 1) for k in ids)
    for k in active:
        log('broadcast_particles', k, scalars=PARTICLE_SCALARS * len(persistent[k]) * (len(hoods[k]) - 1))

    node_estimates = {}
    node_masses = {}
    for k in ids:
        collective = ParticleSet.empty(ParticleKind.COLLECTIVE)
        for l in hoods[k]:
            collective = merge(collective, persistent[l], ParticleKind.COLLECTIVE)
        sources = np.concatenate([np.full(len(persistent[l]), l) for l in hoods[k]])
        if len(collective) > 0:
            log('collective', k, collective)
            estimates, masses, weights = extract_node_estimates(
                collective, sources, sum(counts[l] for l in hoods[k]), config)
            collective = collective.with_weights(weights)
            log('extract', k, estimates=len(estimates))
            collective = roughen(collective, config.k_rough, config.e_c, rngs[k])
            log('roughen', k, collective)
        else:
            estimates, masses = np.zeros((0, STATE_DIM)), np.zeros(0)

        newborn = adaptive_birth(
            candidates[k], config.n_p, config.p_b, config.birth_spread, config.birth_sigma_v, rngs[k],
            config.per_candidate_birth)
        if len(newborn) > 0:
            log('birth', k, newborn)

        state = states[k]
        state.collective = collective
        state.newborn = newborn
        state.estimates = estimates
        state.count = counts[k]
        state.steps += 1
        if len(estimates) > 0:
            node_estimates[k] = estimates
            node_masses[k] = masses

    fused = fuse_network_estimates(node_estimates, config.fusion_cut, node_masses)
    logger.debug("%s step %d: %d active nodes, %d fused estimates", name, step, len(active), len(fused))
    return StepReport(
        step=step,
        filter=name,
        estimates=fused if not first else np.zeros((0, STATE_DIM)),
        measurement_scalars=measurement_scalars,
        particle_scalars=particle_scalars,
        provides_estimates=not first,
        node_estimates=node_estimates,
        node_counts={k: counts[k] for k in active},
        node_masses=node_masses,
    )


def local_pphdf_step(
        states: Dict[int, NodeFilterState],
        topology: Topology,
        measurements: MeasurementSet,
        model: ModelMatrices,
        config: ScenarioConfig,
        node_rng: NodeRng,
        trace: Optional[StepTrace]=None) -> StepReport:
    """One step of the local-only baseline: every node filters its own measurements
    """
    isolated = {k: frozenset([k]) for k in topology.ids}
    return d_pphdf_step(states, topology, measurements, model, config, node_rng, trace,
                        neighborhoods=isolated, name='local')


def fuse_network_estimates(
        node_estimates: Mapping[int, np.ndarray],
        cut_distance: float,
        node_masses: Optional[Mapping[int, np.ndarray]]=None) -> np.ndarray:
    """Cluster the estimates of all nodes into the network's joint estimate set

    Estimates are clustered by position with single linkage; each cluster
    contributes the mean of its members, weighted by `node_masses` if given.
    """
    arrays = [np.asarray(node_estimates[k]).reshape(-1, STATE_DIM) for k in sorted(node_estimates)]
    if len(arrays) == 0:
        return np.zeros((0, STATE_DIM))
    stacked = np.concatenate(arrays)
    if len(stacked) == 0:
        return np.zeros((0, STATE_DIM))
    weights = None
    if node_masses is not None:
        weights = np.concatenate([
            np.asarray(node_masses[k], dtype=float).reshape(-1) for k in sorted(node_estimates)])
    result = single_linkage(stacked[:, 0:2], weights, cut_distance=cut_distance, values=stacked)
    return result.centroids
