import numpy as np
import pytest

from frndp import FrDesign, RoadNetwork, four_node_network

# the four entry-path choices of the 4-node fixture, keyed by the node order
# of the reserved path (exit first), with their reference total times
N4_DESIGNS = {
    "3-0": FrDesign((0,), ((2,),)),
    "3-1-0": FrDesign((0,), ((0, 4),)),
    "3-2-0": FrDesign((0,), ((1, 5),)),
    "3-2-1-0": FrDesign((0,), ((0, 3, 5),)),
}
N4_TOTALS = {"3-0": 507.56, "3-1-0": 243.43, "3-2-0": 379.01, "3-2-1-0": 1099.58}

# balance matrix of the fixture (rows = nodes 0, 1, 2) and its four unit-path
# solutions in arc order ((0,1),(0,2),(0,3),(1,2),(1,3),(2,3))
N4_BALANCE = np.array([
    [1, 1, 1, 0, 0, 0],
    [-1, 0, 0, 1, 1, 0],
    [0, -1, 0, -1, 0, 1],
])
N4_FEASIBLE = [
    (1, 0, 0, 1, 0, 1),
    (1, 0, 0, 0, 1, 0),
    (0, 1, 0, 0, 0, 1),
    (0, 0, 1, 0, 0, 0),
]
N4_KERNEL = {
    (0, 0, 0, 1, -1, 1),
    (1, -1, 0, 1, 0, 0),
    (1, 0, -1, 1, 0, 1),
    (1, -1, 0, 0, 1, -1),
    (1, 0, -1, 0, 1, 0),
    (0, 1, -1, 0, 0, 1),
}


@pytest.fixture
def n4() -> RoadNetwork:
    return four_node_network()


def two_route_network(d: int = 60) -> RoadNetwork:
    """Two disjoint single-arc routes to separate exits: the textbook
    two-parallel-arc assignment problem."""
    return RoadNetwork(
        nodes=(0, 1, 2),
        arcs=((0, 1), (0, 2)),
        capacity=np.array([30.0, 20.0]),
        free_flow=np.array([1.0, 1.3]),
        lanes=np.ones(2, dtype=int),
        demand={0: d, 1: 0, 2: 0},
        fr_nodes=(0,),
        exit_nodes=(1, 2),
    )
