import numpy as np
import pytest

from phdnet.types import (CLUTTER, Measurement, MeasurementSet, Node, ParticleKind, ParticleSet, TargetState,
                          Track, active_targets)


def test_target_state():
    s = TargetState.from_array([1, 2, 3, 4])
    assert s.to_list() == [1.0, 2.0, 3.0, 4.0]
    assert np.array_equal(s.position, [1, 2])
    with pytest.raises(ValueError):
        TargetState(0, np.inf, 0, 0)
    with pytest.raises(ValueError):
        TargetState.from_array([1, 2, 3])


def test_track_schedule():
    states = np.arange(20, dtype=float).reshape(5, 4)
    t = Track(7, 3, states)
    assert t.exit_step == 7
    assert not t.is_active(2)
    assert t.is_active(3) and t.is_active(7)
    assert not t.is_active(8)
    assert t.state_at(4).to_list() == [4, 5, 6, 7]
    with pytest.raises(IndexError):
        t.state_at(8)
    with pytest.raises(ValueError):
        t.states[0, 0] = 1.0


def test_track_exit_step():
    states = np.zeros((10, 4))
    t = Track(1, 0, states, exit_step=4)
    assert len(t.states) == 5
    with pytest.raises(ValueError):
        Track(1, 5, states, exit_step=2)
    with pytest.raises(ValueError):
        Track(1, 0, np.zeros((2, 4)), exit_step=5)


def test_active_targets_ordered_by_id():
    tracks = [Track(2, 0, np.ones((3, 4))), Track(1, 1, np.zeros((3, 4)))]
    assert [id for id, _ in active_targets(tracks, 0)] == [2]
    assert [id for id, _ in active_targets(tracks, 1)] == [1, 2]


def test_node_validation():
    Node(1, (0.0, 0.0), 6.0, 12.0)
    with pytest.raises(ValueError):
        Node(1, (0.0, 0.0), 0.0, 12.0)
    with pytest.raises(ValueError):
        Node(1, (0.0, 0.0, 0.0), 6.0, 12.0)


def test_measurement_set():
    mset = MeasurementSet(3, {
        2: [Measurement((1.0, 1.0), 2, 3, 1)],
        1: [Measurement((0.0, 0.0), 1, 3, CLUTTER), Measurement((5.0, 5.0), 1, 3, 2)],
    })
    assert mset.nodes == [1, 2]
    assert len(mset) == 3
    assert mset.count(1) == 2
    assert mset.count(9) == 0
    assert mset.for_node(9).shape == (0, 2)
    assert np.array_equal(mset.positions(), [[0, 0], [5, 5], [1, 1]])
    assert np.array_equal(mset.positions([2]), [[1, 1]])
    assert mset.positions([]).shape == (0, 2)


def test_particle_set():
    p = ParticleSet(np.zeros((3, 4)), [0.5, 0.25, 0.25], ParticleKind.PERSISTENT)
    assert p.mass == 1.0
    assert p.positions.shape == (3, 2)
    assert p.with_kind(ParticleKind.TOTAL).kind == ParticleKind.TOTAL
    assert len(ParticleSet.empty()) == 0
    with pytest.raises(ValueError):
        ParticleSet(np.zeros((2, 4)), [1.0])
    with pytest.raises(ValueError):
        ParticleSet(np.zeros((1, 4)), [-1.0])
