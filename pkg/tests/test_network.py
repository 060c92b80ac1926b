import numpy as np
import pytest
from shapely.geometry import box

from phdnet.io import load_layout, reference_layout_path
from phdnet.network import Topology, TopologyBuilder, reference_builder
from phdnet.types import Node


def reference():
    return load_layout(reference_layout_path())


def test_reference_layout():
    topology = reference()
    assert len(topology) == 30
    assert topology.ids == list(range(1, 31))
    assert topology.roi.bounds == (-26.0, -20.0, 26.0, 20.0)


def test_neighborhoods_match_brute_force():
    topology = reference()
    for k in topology.ids:
        pk = np.array(topology.node(k).position)
        expected = {
            l for l in topology.ids
            if np.linalg.norm(np.array(topology.node(l).position) - pk) <= 12.0
        }
        assert topology.neighborhood(k) == expected
        assert k in topology.neighborhood(k)
        assert len(topology.neighborhood(k)) >= 2
        for l in topology.neighborhood(k):
            assert k in topology.neighborhood(l)
        assert topology.neighborhood(k) <= topology.two_hop(k)


def test_two_hop():
    topology = reference()
    # corner node 1 at (-22, 16) reaches the diagonal at one hop and two columns out at two hops
    assert topology.neighborhood(1) == {1, 2, 7, 8}
    assert topology.two_hop(1) == {1, 2, 3, 7, 8, 9, 13, 14, 15}


def test_unknown_node():
    topology = reference()
    with pytest.raises(IndexError):
        topology.node(31)
    with pytest.raises(IndexError):
        topology.neighborhood(0)


def test_link_uses_smaller_radius():
    nodes = [Node(1, (0.0, 0.0), 6.0, 12.0), Node(2, (10.0, 0.0), 6.0, 8.0)]
    topology = Topology(nodes)
    assert topology.neighborhood(1) == {1}
    assert topology.with_radii(r_com=12.0).neighborhood(1) == {1, 2}


def test_with_radii_keeps_roi():
    topology = reference()
    narrow = topology.with_radii(r_sen=3.0, r_com=8.5)
    assert narrow.roi.equals(topology.roi)
    # vertical spacing is 8 m, horizontal 8.8 m
    assert narrow.neighborhood(8) == {2, 8, 14}
    assert narrow.coverage_ratio(0.5) < topology.coverage_ratio(0.5)


def test_coverage():
    topology = reference()
    assert topology.coverage_ratio(0.5) >= 0.95
    rng = np.random.default_rng(5)
    points = topology.sample_roi(10000, rng)
    assert len(points) == 10000
    assert np.mean(topology.covered(points)) >= 0.99


def test_sensing_membership():
    topology = reference()
    assert topology.nodes_in_sensing_range((-22.0, 16.0)) == {1}
    assert topology.nodes_in_sensing_range((100.0, 100.0)) == frozenset()
    m = topology.sensing_matrix(np.array([[-22.0, 16.0], [-17.6, 16.0]]))
    assert m.shape == (2, 30)
    assert m[1, 0] and m[1, 1]


def test_border_band():
    topology = reference()
    assert topology.on_border((25.0, 0.0))
    assert topology.on_border((0.0, -19.0))
    assert not topology.on_border((0.0, 0.0))


def test_explicit_roi():
    topology = Topology([Node(1, (0.0, 0.0), 6.0, 12.0)], roi=box(-1, -1, 1, 1))
    assert topology.coverage_ratio(0.1) == 1.0
    grid = topology.roi_grid(0.5)
    assert len(grid) == 25


def test_topology_rejects_bad_ids():
    with pytest.raises(ValueError):
        Topology([])
    with pytest.raises(ValueError):
        Topology([Node(2, (0.0, 0.0), 6.0, 12.0)])


def test_builder_grid_matches_reference():
    built = reference_builder().build(roi_margin=4.0)
    loaded = reference()
    assert np.allclose(built.positions, loaded.positions)
    assert built.neighborhoods() == loaded.neighborhoods()


def test_builder_dedupes_positions():
    builder = TopologyBuilder(6.0, 12.0)
    a = builder.add_node((1.0, 2.0))
    b = builder.add_node((1.0, 2.0))
    c = builder.add_node((3.0, 2.0))
    assert a is b
    assert [n.id for n in builder.nodes] == [1, 2]
    assert c.id == 2


def test_builder_ascii():
    builder = TopologyBuilder(6.0, 12.0)
    builder.fill_ascii("""
X_X
_X
""", origin=(0.0, 10.0), pitch=(5.0, 5.0))
    topology = builder.build()
    assert np.array_equal(topology.positions, [[0, 10], [10, 10], [5, 5]])
