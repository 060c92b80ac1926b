"""Sequential Monte Carlo building blocks of the particle PHD filters

A PHD is represented by a :py:class:`phdnet.types.ParticleSet`. Its mass (sum
of weights) is the expected number of targets. The functions here never
modify their inputs.
"""
import logging
import numpy as np
from scipy.spatial.distance import cdist
from typing import Optional, Tuple, Union

from .types import STATE_DIM, ModelMatrices, ParticleKind, ParticleSet

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


class DegenerateFilterError(RuntimeError):
    """Raised when resampling is asked for targets but the particles carry no mass"""
    pass


def merge(a: ParticleSet, b: ParticleSet, kind: ParticleKind=ParticleKind.TOTAL) -> ParticleSet:
    """Concatenate two particle sets; the PHDs they represent are summed
    """
    return ParticleSet(
        np.concatenate([a.states, b.states], axis=0),
        np.concatenate([a.weights, b.weights]),
        kind)


def predict(particles: ParticleSet, model: ModelMatrices, p_s: float) -> ParticleSet:
    """Propagate states through the transition matrix and scale weights by `p_s`

    No process noise is added; the spread of the particle cloud accounts for it.
    """
    if not 0 <= p_s <= 1:
        raise ValueError(f"Probability of survival must be in [0, 1], got {p_s}")
    return ParticleSet(particles.states @ model.F.T, particles.weights * p_s, particles.kind)


def gaussian_likelihood(measurements: np.ndarray, positions: np.ndarray, sigma_r2: float) -> np.ndarray:
    """Return the (n_particles, n_measurements) matrix of N(z; position, sigma_r2 I)
    """
    d2 = cdist(positions.reshape(-1, 2), measurements.reshape(-1, 2), 'sqeuclidean')
    return np.exp(-0.5 * d2 / sigma_r2) / (2 * np.pi * sigma_r2)


def weight_update(
        particles: ParticleSet,
        measurements: np.ndarray,
        p_d: ArrayLike,
        lambda_fa: float,
        c_fa: ArrayLike,
        sigma_r2: float,
        labels: Optional[np.ndarray]=None,
        p_miss: Optional[ArrayLike]=None) -> Tuple[ParticleSet, np.ndarray]:
    """PHD measurement update of the particle weights

    Every weight is multiplied by ``1 - p_miss + sum_j u[p, j]`` where

    .. code-block:: text

        u[p, j] = p_d f(z_j | p) / ((lambda_fa c_fa + L(z_j)) C(z_j))
        L(z_j)  = sum_q p_d f(z_j | q) w_q

    Args:
        particles: Predicted particle set
        measurements: (m, 2) array of measurements
        p_d: Probability of detection, scalar or one value per particle
        lambda_fa: Clutter rate
        c_fa: Clutter density, scalar or one value per measurement
        sigma_r2: Measurement noise variance per component
        labels: Cardinality label C(z) of each measurement (default all 1)
        p_miss: Detection probability in the missed-detection term, scalar
            or one value per particle (default `p_d`)

    Returns:
        The updated set and the (n, m) matrix u used for candidate selection
    """
    measurements = np.asarray(measurements, dtype=float).reshape(-1, 2)
    n = len(particles)
    m = len(measurements)
    p_d = np.broadcast_to(np.asarray(p_d, dtype=float), (n,))
    p_miss = p_d if p_miss is None else np.broadcast_to(np.asarray(p_miss, dtype=float), (n,))
    if labels is None:
        labels = np.ones(m)
    labels = np.asarray(labels, dtype=float)
    if np.any(labels < 1):
        raise ValueError("Cardinality labels must be at least 1")

    if n == 0 or m == 0:
        update = np.zeros((n, m))
    else:
        pf = p_d[:, None] * gaussian_likelihood(measurements, particles.positions, sigma_r2)
        L = pf.T @ particles.weights
        denom = (lambda_fa * np.broadcast_to(np.asarray(c_fa, dtype=float), (m,)) + L) * labels
        update = np.divide(pf, denom[None, :], out=np.zeros_like(pf), where=denom[None, :] > 0)
    weights = (1.0 - p_miss + update.sum(axis=1)) * particles.weights
    return particles.with_weights(weights), update


def candidate_measurements(
        measurements: np.ndarray,
        update: np.ndarray,
        floor: float=0.0,
        own: Optional[np.ndarray]=None) -> np.ndarray:
    """Select measurements for adaptive target birth

    A measurement is claimed when it gives the largest update weight of some
    particle (first index on ties). Particles whose largest update weight is
    not above `floor` claim nothing. Unclaimed measurements are candidates.

    Args:
        measurements: (m, 2) array, the columns of `update`
        update: (n, m) update matrix from :py:func:`weight_update`
        floor: Minimum update weight for a particle to claim a measurement
        own: Optional boolean mask or index array restricting which
            measurements may become candidates

    Returns:
        (k, 2) array of candidate measurements, in input order
    """
    measurements = np.asarray(measurements, dtype=float).reshape(-1, 2)
    m = len(measurements)
    claimed = np.zeros(m, dtype=bool)
    if update.shape[0] > 0 and m > 0:
        best = np.argmax(update, axis=1)
        strong = update[np.arange(update.shape[0]), best] > floor
        claimed[best[strong]] = True
    eligible = np.ones(m, dtype=bool)
    if own is not None:
        own = np.asarray(own)
        eligible = np.zeros(m, dtype=bool)
        eligible[own] = True
    return measurements[eligible & ~claimed]


def estimate_target_count(particles: ParticleSet) -> int:
    """Round the particle mass to the nearest integer, halves away from zero
    """
    return int(np.floor(particles.mass + 0.5))


def resample(
        particles: ParticleSet,
        n_hat: int,
        n_p: int,
        rng: np.random.Generator,
        method: str='multinomial') -> ParticleSet:
    """Draw `n_hat` * `n_p` particles with probability proportional to weight

    Every output particle gets weight 1 / n_p, so the output mass is `n_hat`.

    Args:
        method: 'multinomial' (independent draws) or 'systematic'

    Raises:
        DegenerateFilterError: if `n_hat` > 0 but the input has no mass
    """
    if n_hat < 0:
        raise ValueError(f"Target count must be non-negative, got {n_hat}")
    if n_hat == 0:
        return ParticleSet.empty(ParticleKind.PERSISTENT)
    total = particles.mass
    if len(particles) == 0 or not total > 0:
        raise DegenerateFilterError(f"Cannot resample {n_hat} targets from a set with mass {total}")

    n_out = n_hat * n_p
    if method == 'multinomial':
        u = rng.random(n_out)
    elif method == 'systematic':
        u = (rng.random() + np.arange(n_out)) / n_out
    else:
        raise ValueError(f"Unknown resampling method '{method}'")
    cdf = np.cumsum(particles.weights) / total
    idx = np.searchsorted(cdf, u, side='right')
    idx = np.minimum(idx, len(particles) - 1)
    return ParticleSet(particles.states[idx], np.full(n_out, n_hat / n_out), ParticleKind.PERSISTENT)


def roughening_sigma(K: float, E_c: float, n: int, d: int=STATE_DIM) -> float:
    return K * E_c * n**(-1.0 / d)


def roughen(
        particles: ParticleSet,
        K: float,
        E_c: float,
        rng: np.random.Generator,
        d: int=STATE_DIM) -> ParticleSet:
    """Jitter every state component with N(0, sigma²), sigma = K E_c N^(-1/d)

    Weights are not touched.
    """
    if K < 0:
        raise ValueError(f"Roughening constant must be non-negative, got {K}")
    if not E_c > 0:
        raise ValueError(f"Sample interval length must be positive, got {E_c}")
    n = len(particles)
    if n == 0 or K == 0:
        return particles.copy()
    sigma = roughening_sigma(K, E_c, n, d)
    states = particles.states + rng.normal(0.0, sigma, size=particles.states.shape)
    return ParticleSet(states, particles.weights.copy(), particles.kind)


def adaptive_birth(
        candidates: np.ndarray,
        n_p: int,
        p_b: float,
        sigma_pos: float,
        sigma_v: float,
        rng: np.random.Generator,
        per_candidate: bool=False) -> ParticleSet:
    """Place `n_p` newborn particles around each candidate measurement

    Positions are drawn from N(z, sigma_pos² I) and velocities from
    N(0, sigma_v² I). The newborn set carries total mass `p_b`, or `p_b` per
    candidate when `per_candidate` is set.
    """
    if not 0 <= p_b <= 1:
        raise ValueError(f"Probability of birth must be in [0, 1], got {p_b}")
    candidates = np.asarray(candidates, dtype=float).reshape(-1, 2)
    if len(candidates) == 0:
        return ParticleSet.empty(ParticleKind.NEWBORN)
    n_new = n_p * len(candidates)
    centers = np.repeat(candidates, n_p, axis=0)
    positions = centers + rng.normal(0.0, sigma_pos, size=(n_new, 2))
    velocities = rng.normal(0.0, sigma_v, size=(n_new, 2))
    if per_candidate:
        w = p_b / n_p
    else:
        w = p_b / n_new
    return ParticleSet(np.hstack([positions, velocities]), np.full(n_new, w), ParticleKind.NEWBORN)
