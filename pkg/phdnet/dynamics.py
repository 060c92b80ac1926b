"""Linear target model and ground truth track generation
"""
import logging
import numpy as np
from typing import List, Optional, Sequence, Union

from .types import ModelMatrices, TargetState, Track

logger = logging.getLogger(__name__)


def build_model(dt: float, sigma_q2: float) -> ModelMatrices:
    """Build the constant-velocity model matrices

    Args:
        dt: Time step in seconds
        sigma_q2: Variance of each process noise component (m²)

    Raises:
        ValueError: if dt is not positive or sigma_q2 is negative
    """
    if not dt > 0:
        raise ValueError(f"Time step must be positive, got {dt}")
    if sigma_q2 < 0:
        raise ValueError(f"Process noise variance must be non-negative, got {sigma_q2}")
    I2 = np.eye(2)
    Z2 = np.zeros((2, 2))
    F = np.block([[I2, dt * I2], [Z2, I2]])
    G = np.vstack([dt**2 / 2 * I2, dt * I2])
    Q = sigma_q2 * I2
    H = np.hstack([I2, Z2])
    for m in (F, G, Q, H):
        m.flags.writeable = False
    return ModelMatrices(F=F, G=G, Q=Q, H=H, dt=dt)


def propagate(
        state: Union[TargetState, np.ndarray],
        model: ModelMatrices,
        noise: Optional[Sequence[float]]=None) -> TargetState:
    """Advance a state by one step: F s + G n
    """
    if isinstance(state, TargetState):
        s = state.to_array()
    else:
        s = np.asarray(state, dtype=float)
    if noise is None:
        noise = np.zeros(2)
    return TargetState.from_array(model.F @ s + model.G @ np.asarray(noise, dtype=float))


def propagate_states(initial: Sequence[float], model: ModelMatrices, n_steps: int) -> np.ndarray:
    """Return `n_steps` noiseless states starting with `initial`
    """
    states = np.zeros((n_steps, 4))
    s = TargetState.from_array(initial)
    for i in range(n_steps):
        states[i] = s.to_array()
        s = propagate(s, model)
    return states


def scenario_tracks(scenario, topology=None) -> List[Track]:
    """Load the deterministic ground truth tracks of a scenario

    Tracks come from the scenario's waypoint file, or from the shipped
    reference tracks when the scenario names none. Waypoint entries given by
    an initial state are expanded with the noiseless model up to the last
    simulated step.

    Args:
        scenario: A :py:class:`phdnet.config.ScenarioConfig`
        topology: If given, warn about tracks which do not enter on the
            border of its region of interest

    Raises:
        phdnet.io.WaypointError: for malformed waypoint files
    """
    from .io import load_tracks, reference_tracks_path

    path = scenario.waypoints if scenario.waypoints is not None else reference_tracks_path()
    model = build_model(scenario.dt, scenario.sigma_q2)
    tracks = load_tracks(path, model, scenario.steps)
    if topology is not None:
        for t in tracks:
            if not topology.on_border(t.states[0][0:2]):
                logger.warning("Target %d does not enter on the border of the region of interest", t.target_id)
    return tracks
