import functools
import numpy as np
import pytest
from scipy import stats

from phdnet.dynamics import build_model
from phdnet.phd import (DegenerateFilterError, adaptive_birth, candidate_measurements, estimate_target_count, merge,
                        predict, resample, roughen, roughening_sigma, weight_update)
from phdnet.types import ParticleKind, ParticleSet


def cloud(rng, n, center=(0.0, 0.0), spread=1.0):
    states = np.zeros((n, 4))
    states[:, 0:2] = np.asarray(center) + rng.normal(0.0, spread, size=(n, 2))
    states[:, 2:4] = rng.normal(0.0, 1.0, size=(n, 2))
    return ParticleSet(states, np.full(n, 1.0 / n))


def test_merge_sums_mass():
    rng = np.random.default_rng(0)
    a = cloud(rng, 10)
    b = cloud(rng, 5).with_weights(np.full(5, 0.2))
    m = merge(a, b)
    assert len(m) == 15
    assert m.mass == pytest.approx(2.0)
    assert m.kind == ParticleKind.TOTAL
    assert merge(ParticleSet.empty(), ParticleSet.empty()).mass == 0.0


def test_predict():
    model = build_model(1.0, 0.01)
    p = ParticleSet(np.array([[0.0, 0.0, 1.0, 2.0]]), [0.5])
    out = predict(p, model, 0.98)
    assert np.array_equal(out.states, [[1.0, 2.0, 1.0, 2.0]])
    assert out.mass == pytest.approx(0.49)
    assert p.mass == 0.5
    with pytest.raises(ValueError):
        predict(p, model, 1.1)


def test_weight_update_single_particle():
    p = ParticleSet(np.array([[3.0, 4.0, 0.0, 0.0]]), [1.0])
    out, update = weight_update(p, np.array([[3.0, 4.0]]), 1.0, 0.0, 0.01, 0.1)
    assert out.weights[0] == 1.0
    assert update.shape == (1, 1)


def test_weight_update_without_measurements():
    rng = np.random.default_rng(1)
    p = cloud(rng, 20)
    out, update = weight_update(p, np.zeros((0, 2)), 0.9, 0.1, 0.01, 0.1)
    assert update.shape == (20, 0)
    np.testing.assert_allclose(out.weights, 0.1 * p.weights)


def test_weight_update_mass_equals_measurement_count():
    rng = np.random.default_rng(2)
    for _ in range(100):
        n_meas = rng.integers(1, 6)
        z = rng.uniform(-10, 10, size=(n_meas, 2))
        p = functools.reduce(merge, [cloud(rng, 50, center=zj, spread=0.5) for zj in z])
        p = p.with_weights(rng.uniform(0.1, 1.0, size=len(p)))
        out, _ = weight_update(p, z, 1.0, 0.0, 0.01, 0.1)
        assert out.mass == pytest.approx(n_meas, rel=1e-9)


def test_weight_update_cardinality_labels():
    rng = np.random.default_rng(3)
    p = cloud(rng, 200, spread=0.3)
    z = np.array([[0.1, 0.0], [-0.1, 0.05]])
    out, _ = weight_update(p, z, 1.0, 0.0, 0.01, 0.1, labels=np.array([2, 2]))
    assert out.mass == pytest.approx(1.0, rel=1e-9)
    with pytest.raises(ValueError):
        weight_update(p, z, 1.0, 0.0, 0.01, 0.1, labels=np.array([0, 1]))


def test_weight_update_per_particle_detection():
    p = ParticleSet(np.array([[0.0, 0.0, 0, 0], [50.0, 0.0, 0, 0]]), [1.0, 1.0])
    out, _ = weight_update(p, np.array([[0.0, 0.0]]), np.array([1.0, 0.0]), 0.0, 0.01, 0.1)
    # the second particle cannot be observed and keeps its weight
    assert out.weights[1] == 1.0
    assert out.weights[0] == pytest.approx(1.0)


def test_weight_update_missed_detection_term():
    p = ParticleSet(np.array([[0.0, 0.0, 0, 0], [50.0, 0.0, 0, 0]]), [1.0, 1.0])
    out, _ = weight_update(p, np.zeros((0, 2)), 0.9, 0.0, 0.01, 0.1, p_miss=np.array([0.9, 0.0]))
    np.testing.assert_allclose(out.weights, [0.1, 1.0])
    # detections still use p_d
    out, _ = weight_update(p, np.array([[0.0, 0.0]]), 0.9, 0.0, 0.01, 0.1, p_miss=0.0)
    np.testing.assert_allclose(out.weights, [2.0, 1.0])


def test_candidate_far_measurement():
    p = ParticleSet(np.array([[0.0, 0.0, 0, 0]]), [1.0])
    z = np.array([[0.1, 0.0], [3.0, 0.0]])
    _, update = weight_update(p, z, 0.95, 0.1, 0.01, 0.1)
    candidates = candidate_measurements(z, update)
    assert np.array_equal(candidates, [[3.0, 0.0]])


def test_candidates_without_particles():
    z = np.array([[0.0, 0.0], [1.0, 1.0]])
    assert np.array_equal(candidate_measurements(z, np.zeros((0, 2))), z)
    assert np.array_equal(candidate_measurements(z, np.zeros((0, 2)), own=np.array([False, True])), [[1.0, 1.0]])


def test_candidate_floor():
    # the particle is far from every measurement; all its likelihoods underflow
    p = ParticleSet(np.array([[1000.0, 0.0, 0, 0]]), [1.0])
    z = np.array([[0.0, 0.0]])
    _, update = weight_update(p, z, 0.95, 0.1, 0.01, 0.1)
    assert update[0, 0] == 0.0
    assert np.array_equal(candidate_measurements(z, update), z)


def test_estimate_target_count():
    def with_mass(m):
        return ParticleSet(np.zeros((1, 4)), [m])
    assert estimate_target_count(with_mass(2.5)) == 3
    assert estimate_target_count(with_mass(2.49)) == 2
    assert estimate_target_count(with_mass(0.5)) == 1
    assert estimate_target_count(with_mass(0.49)) == 0
    assert estimate_target_count(ParticleSet.empty()) == 0


@pytest.mark.parametrize('method', ['multinomial', 'systematic'])
def test_resample_mass(method):
    rng = np.random.default_rng(4)
    p = cloud(rng, 100).with_weights(rng.uniform(size=100))
    out = resample(p, 3, 50, rng, method)
    assert len(out) == 150
    assert out.kind == ParticleKind.PERSISTENT
    assert out.mass == pytest.approx(3.0, rel=1e-12)
    assert np.all(out.weights == out.weights[0])
    assert len(resample(p, 0, 50, rng, method)) == 0


def test_resample_draw_probabilities():
    rng = np.random.default_rng(5)
    states = np.array([[0.0, 0, 0, 0], [1.0, 0, 0, 0], [2.0, 0, 0, 0]])
    p = ParticleSet(states, [0.2, 0.3, 0.5])
    out = resample(p, 1, 6000, rng)
    counts = np.bincount(out.states[:, 0].astype(int), minlength=3)
    assert stats.chisquare(counts, 6000 * np.array([0.2, 0.3, 0.5])).pvalue > 0.001


def test_resample_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(DegenerateFilterError):
        resample(ParticleSet.empty(), 1, 10, rng)
    with pytest.raises(DegenerateFilterError):
        resample(ParticleSet(np.zeros((2, 4)), [0.0, 0.0]), 1, 10, rng)
    with pytest.raises(ValueError):
        resample(ParticleSet(np.zeros((1, 4)), [1.0]), 1, 10, rng, 'stratified')


def test_roughening():
    assert roughening_sigma(0.2, 6.0, 10000) == pytest.approx(0.12)
    rng = np.random.default_rng(6)
    p = ParticleSet(np.zeros((10000, 4)), np.full(10000, 1e-4))
    out = roughen(p, 0.2, 6.0, rng)
    assert np.array_equal(out.weights, p.weights)
    assert np.all(p.states == 0)
    np.testing.assert_allclose(out.states.std(axis=0), 0.12, rtol=0.05)
    assert len(roughen(ParticleSet.empty(), 0.2, 6.0, rng)) == 0


def test_adaptive_birth():
    rng = np.random.default_rng(7)
    z = np.array([[0.0, 0.0], [10.0, 10.0]])
    born = adaptive_birth(z, 100, 0.8, 0.3, 1.0, rng)
    assert len(born) == 200
    assert born.kind == ParticleKind.NEWBORN
    assert born.mass == pytest.approx(0.8)
    np.testing.assert_allclose(born.positions[:100].mean(axis=0), [0, 0], atol=0.15)
    np.testing.assert_allclose(born.positions[100:].mean(axis=0), [10, 10], atol=0.15)

    per_candidate = adaptive_birth(z, 100, 0.8, 0.3, 1.0, rng, per_candidate=True)
    assert per_candidate.mass == pytest.approx(1.6)
    assert len(adaptive_birth(np.zeros((0, 2)), 100, 0.8, 0.3, 1.0, rng)) == 0
