"""Road-network data model, instance file I/O, lane reservation, random instances.

A network is a directed graph with per-arc capacity, free-flow travel time and
lane count, per-node evacuation demand, a set of exit nodes (which double as
entry points for first responders) and a set of nodes that must be reachable
by a reserved-lane path.  Reserving a lane on an arc removes one lane from
public use in both directions: c <- (l-1)/l * c, which closes single-lane
arcs entirely.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

Arc = tuple[int, int]


class InstanceFormatError(ValueError):
    """Instance file violates the schema; message names field and location."""


class GenerationError(RuntimeError):
    """Random generator could not produce a feasible instance."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RoadNetwork:
    """Immutable directed road network.

    Arc data is stored positionally in the order of ``arcs``; node data is
    keyed by node id.  Safe to share across threads after construction.
    """

    nodes: tuple[int, ...]
    arcs: tuple[Arc, ...]
    capacity: np.ndarray      # vehicles / unit time, > 0
    free_flow: np.ndarray     # time units, > 0
    lanes: np.ndarray         # integer >= 1
    demand: dict[int, int]    # vehicles >= 0, zero on exits
    fr_nodes: tuple[int, ...]
    exit_nodes: tuple[int, ...]
    coords: dict[int, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes)))
        object.__setattr__(self, "arcs", tuple((int(i), int(j)) for i, j in self.arcs))
        object.__setattr__(self, "capacity", _readonly(np.asarray(self.capacity, dtype=float)))
        object.__setattr__(self, "free_flow", _readonly(np.asarray(self.free_flow, dtype=float)))
        object.__setattr__(self, "lanes", _readonly(np.asarray(self.lanes, dtype=int)))
        object.__setattr__(self, "fr_nodes", tuple(sorted(self.fr_nodes)))
        object.__setattr__(self, "exit_nodes", tuple(sorted(self.exit_nodes)))
        self._validate()
        index = {a: i for i, a in enumerate(self.arcs)}
        out_arcs: dict[int, list[int]] = {v: [] for v in self.nodes}
        in_arcs: dict[int, list[int]] = {v: [] for v in self.nodes}
        for idx, (i, j) in enumerate(self.arcs):
            out_arcs[i].append(idx)
            in_arcs[j].append(idx)
        object.__setattr__(self, "_arc_index", index)
        object.__setattr__(self, "_out_arcs", {v: tuple(s) for v, s in out_arcs.items()})
        object.__setattr__(self, "_in_arcs", {v: tuple(s) for v, s in in_arcs.items()})

    def _validate(self):
        node_set = set(self.nodes)
        n_arcs = len(self.arcs)
        if len(set(self.arcs)) != n_arcs:
            raise ValueError("duplicate (i, j) arc")
        for i, j in self.arcs:
            if i not in node_set or j not in node_set:
                raise ValueError(f"arc ({i}, {j}) references unknown node")
        for name, arr in (("capacity", self.capacity), ("free_flow", self.free_flow)):
            if arr.shape != (n_arcs,):
                raise ValueError(f"{name} must have one entry per arc")
            if not np.all(arr > 0):
                raise ValueError(f"{name} must be strictly positive")
        if self.lanes.shape != (n_arcs,) or not np.all(self.lanes >= 1):
            raise ValueError("lanes must be >= 1 on every arc")
        if set(self.fr_nodes) & set(self.exit_nodes):
            raise ValueError("fr_nodes and exit_nodes must be disjoint")
        for v, d in self.demand.items():
            if v not in node_set:
                raise ValueError(f"demand references unknown node {v}")
            if d < 0:
                raise ValueError(f"demand at node {v} must be >= 0")
        for e in self.exit_nodes:
            if self.demand.get(e, 0) != 0:
                raise ValueError(f"exit node {e} must have zero demand")

    # --- derived views -------------------------------------------------

    @property
    def n_arcs(self) -> int:
        return len(self.arcs)

    @property
    def source_nodes(self) -> tuple[int, ...]:
        return tuple(v for v in self.nodes if self.demand.get(v, 0) > 0)

    def arc_index(self, i: int, j: int) -> int:
        return self._arc_index[(i, j)]

    def has_arc(self, i: int, j: int) -> bool:
        return (i, j) in self._arc_index

    def out_arcs(self, v: int) -> tuple[int, ...]:
        return self._out_arcs[v]

    def in_arcs(self, v: int) -> tuple[int, ...]:
        return self._in_arcs[v]

    def __eq__(self, other):
        if not isinstance(other, RoadNetwork):
            return NotImplemented
        return (
            self.nodes == other.nodes
            and self.arcs == other.arcs
            and np.array_equal(self.capacity, other.capacity)
            and np.array_equal(self.free_flow, other.free_flow)
            and np.array_equal(self.lanes, other.lanes)
            and self.demand == other.demand
            and self.fr_nodes == other.fr_nodes
            and self.exit_nodes == other.exit_nodes
            and self.coords == other.coords
        )


def flow_balance_matrix(net: RoadNetwork) -> tuple[np.ndarray, tuple[int, ...]]:
    """Node-arc balance matrix over non-exit rows: (out - in) per node.

    Row order is the sorted non-exit node ids; a unit path from node k to an
    exit satisfies A @ y = e_k in this row space.
    """
    rows = tuple(v for v in net.nodes if v not in net.exit_nodes)
    a = np.zeros((len(rows), net.n_arcs), dtype=int)
    pos = {v: r for r, v in enumerate(rows)}
    for idx, (i, j) in enumerate(net.arcs):
        if i in pos:
            a[pos[i], idx] += 1
        if j in pos:
            a[pos[j], idx] -= 1
    return a, rows


def balance_rhs(net: RoadNetwork, k: int) -> np.ndarray:
    """Unit right-hand side e_k in the row space of flow_balance_matrix."""
    _, rows = flow_balance_matrix(net)
    b = np.zeros(len(rows), dtype=int)
    b[rows.index(k)] = 1
    return b


@dataclass(frozen=True)
class FrDesign:
    """Binary lane-reservation decision.

    ``arcs_by_target[t]`` holds the arc indices selected for target
    ``targets[t]`` (a unit path toward the exits in arc orientation);
    ``reserved`` is the union of those, plus any arcs forced reserved by a
    search procedure.
    """

    targets: tuple[int, ...]
    arcs_by_target: tuple[tuple[int, ...], ...]
    reserved: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "arcs_by_target",
                           tuple(tuple(sorted(s)) for s in self.arcs_by_target))
        union = set().union(*map(set, self.arcs_by_target)) if self.arcs_by_target else set()
        reserved = set(self.reserved) | union
        object.__setattr__(self, "reserved", tuple(sorted(reserved)))

    @classmethod
    def from_paths(cls, paths: dict[int, tuple[int, ...]]) -> "FrDesign":
        targets = tuple(sorted(paths))
        return cls(targets, tuple(tuple(paths[k]) for k in targets))

    def arcs_for(self, k: int) -> tuple[int, ...]:
        return self.arcs_by_target[self.targets.index(k)]

    def target_vector(self, net: RoadNetwork, k: int) -> np.ndarray:
        y = np.zeros(net.n_arcs, dtype=int)
        y[list(self.arcs_for(k))] = 1
        return y

    def is_feasible(self, net: RoadNetwork) -> bool:
        """Per-target flow balance A @ y_k = e_k, checked in integer arithmetic."""
        a, rows = flow_balance_matrix(net)
        for k in self.targets:
            b = np.zeros(len(rows), dtype=int)
            b[rows.index(k)] = 1
            if not np.array_equal(a @ self.target_vector(net, k), b):
                return False
        return True


@dataclass(frozen=True, eq=False)
class EffectiveNetwork:
    """Network seen by evacuees after a reservation: reduced capacities.

    ``closed`` marks arcs whose residual capacity is zero (single-lane arcs
    with a reserved lane); these are removed from the evacuee graph.
    """

    base: RoadNetwork
    capacity: np.ndarray
    closed: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "capacity", _readonly(np.asarray(self.capacity, dtype=float)))
        object.__setattr__(self, "closed", _readonly(np.asarray(self.closed, dtype=bool)))
        out_open: dict[int, list[int]] = {v: [] for v in self.base.nodes}
        for idx, (i, _) in enumerate(self.base.arcs):
            if not self.closed[idx]:
                out_open[i].append(idx)
        object.__setattr__(self, "_out_open", {v: tuple(s) for v, s in out_open.items()})

    @property
    def arcs(self) -> tuple[Arc, ...]:
        return self.base.arcs

    @property
    def n_arcs(self) -> int:
        return self.base.n_arcs

    @property
    def free_flow(self) -> np.ndarray:
        return self.base.free_flow

    def open_out_arcs(self, v: int) -> tuple[int, ...]:
        return self._out_open[v]

    def open_arcs(self) -> np.ndarray:
        return np.flatnonzero(~self.closed)


def apply_reservation(net: RoadNetwork, design: FrDesign) -> EffectiveNetwork:
    """Reduce capacities for a reservation: c <- (l-1)/l * c in both directions.

    Reserving (i, j) also takes one lane from (j, i) when that arc exists.
    Idempotent for a fixed design; unreserved arcs keep their capacity.
    """
    edges = set()
    for idx in design.reserved:
        i, j = net.arcs[idx]
        edges.add(frozenset((i, j)))
    cap = np.array(net.capacity)
    for idx, (i, j) in enumerate(net.arcs):
        if frozenset((i, j)) in edges:
            l = net.lanes[idx]
            cap[idx] = net.capacity[idx] * (l - 1) / l
    return EffectiveNetwork(base=net, capacity=cap, closed=cap == 0.0)


def empty_design(net: RoadNetwork) -> FrDesign:
    """All-zero reservation (every target list empty); evacuee graph unchanged."""
    return FrDesign(targets=(), arcs_by_target=())


# --- reachability helpers ----------------------------------------------


def reaches_exits(net: RoadNetwork, banned_arcs: frozenset[int] = frozenset()) -> set[int]:
    """Set of nodes with a directed path to some exit, avoiding banned arcs."""
    reached = set(net.exit_nodes)
    stack = list(net.exit_nodes)
    # walk arcs backwards from the exits
    while stack:
        v = stack.pop()
        for idx in net.in_arcs(v):
            if idx in banned_arcs:
                continue
            u = net.arcs[idx][0]
            if u not in reached:
                reached.add(u)
                stack.append(u)
    return reached


# --- canonical 4-node fixture -------------------------------------------


def four_node_network() -> RoadNetwork:
    """Single-commodity 4-node instance used throughout the test suite.

    One lane per arc, unit free-flow times, 100 vehicles at node 0,
    exit/entry at node 3.
    """
    return RoadNetwork(
        nodes=(0, 1, 2, 3),
        arcs=((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)),
        capacity=np.array([25.0, 30.0, 35.0, 35.0, 15.0, 45.0]),
        free_flow=np.ones(6),
        lanes=np.ones(6, dtype=int),
        demand={0: 100, 1: 0, 2: 0, 3: 0},
        fr_nodes=(0,),
        exit_nodes=(3,),
        coords={0: (0.25, 0.375), 1: (0.5, 0.625), 2: (0.5, 0.125), 3: (1.0, 0.375)},
    )


# --- random instance generation ------------------------------------------


def generate_random_instance(
    n: int,
    p: float,
    rng_seed: int,
    *,
    n_fr: int | None = None,
    distance_decay: float = 0.5,
    max_attempts: int = 200,
) -> RoadNetwork:
    """Random planar-ish instance: n interior nodes in the unit square.

    ceil(n/10) exit nodes sit on the square's boundary.  Each node pair gets
    an edge (both directions) with probability p * exp(-dist/distance_decay).
    Capacities are Normal(50, 20) per edge, floored at 1; every direction has
    2 lanes; interior demands are Normal(100, 10) rounded to integers and
    floored at 1.  Free-flow times equal Euclidean length.  Regenerates until
    all fr_nodes and all demand nodes can reach an exit.

    ``n_fr`` selects that many interior nodes as FR-demand nodes; the default
    marks every interior node.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if not 0 < p <= 1:
        raise ValueError("p must be in (0, 1]")
    rng = np.random.default_rng(rng_seed)
    n_exit = math.ceil(n / 10)
    for _ in range(max_attempts):
        coords: dict[int, tuple[float, float]] = {}
        for v in range(n):
            coords[v] = (float(rng.uniform()), float(rng.uniform()))
        for e in range(n, n + n_exit):
            side = int(rng.integers(4))
            t = float(rng.uniform())
            coords[e] = [(t, 0.0), (1.0, t), (t, 1.0), (0.0, t)][side]
        all_nodes = tuple(range(n + n_exit))
        arcs: list[Arc] = []
        caps: list[float] = []
        times: list[float] = []
        for i in all_nodes:
            for j in all_nodes:
                if j <= i:
                    continue
                dx = coords[i][0] - coords[j][0]
                dy = coords[i][1] - coords[j][1]
                dist = math.hypot(dx, dy)
                if rng.uniform() < p * math.exp(-dist / distance_decay):
                    c = max(1.0, float(rng.normal(50.0, 20.0)))
                    arcs.extend([(i, j), (j, i)])
                    caps.extend([c, c])
                    times.extend([dist, dist])
        demand = {v: max(1, int(round(rng.normal(100.0, 10.0)))) for v in range(n)}
        demand.update({e: 0 for e in range(n, n + n_exit)})
        interior = tuple(range(n))
        if n_fr is None:
            fr = interior
        else:
            fr = tuple(sorted(int(v) for v in rng.choice(n, size=n_fr, replace=False)))
        if not arcs:
            continue
        net = RoadNetwork(
            nodes=all_nodes,
            arcs=tuple(arcs),
            capacity=np.array(caps),
            free_flow=np.array(times),
            lanes=np.full(len(arcs), 2, dtype=int),
            demand=demand,
            fr_nodes=fr,
            exit_nodes=tuple(range(n, n + n_exit)),
            coords=coords,
        )
        reached = reaches_exits(net)
        needed = set(fr) | {v for v in interior if demand[v] > 0}
        if needed <= reached:
            return net
    raise GenerationError(
        f"no feasible instance after {max_attempts} attempts (n={n}, p={p}): "
        "infeasible parameter regime"
    )


# --- instance files -------------------------------------------------------

_ROLES = ("interior", "exit")


def save_instance(net: RoadNetwork, path) -> None:
    """Write the instance schema: nodes, arcs (one entry per direction), fr_nodes."""
    doc = {
        "nodes": [
            {
                "id": v,
                "x": net.coords.get(v, (0.0, 0.0))[0],
                "y": net.coords.get(v, (0.0, 0.0))[1],
                "demand": int(net.demand.get(v, 0)),
                "role": "exit" if v in net.exit_nodes else "interior",
            }
            for v in net.nodes
        ],
        "arcs": [
            {
                "from": i,
                "to": j,
                "capacity": float(net.capacity[idx]),
                "free_flow_time": float(net.free_flow[idx]),
                "lanes": int(net.lanes[idx]),
            }
            for idx, (i, j) in enumerate(net.arcs)
        ],
        "fr_nodes": list(net.fr_nodes),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _field(obj: dict, where: str, key: str, kinds, check=None, why: str = ""):
    if key not in obj:
        raise InstanceFormatError(f"{where}.{key}: missing")
    val = obj[key]
    if not isinstance(val, kinds) or isinstance(val, bool):
        raise InstanceFormatError(f"{where}.{key}: wrong type {type(val).__name__}")
    if check is not None and not check(val):
        raise InstanceFormatError(f"{where}.{key}: {why}")
    return val


def load_instance(path) -> RoadNetwork:
    """Read an instance file; schema violations name the offending field."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InstanceFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise InstanceFormatError("top level: expected an object")
    nodes_raw = _field(doc, "top level", "nodes", list)
    arcs_raw = _field(doc, "top level", "arcs", list)
    fr_raw = _field(doc, "top level", "fr_nodes", list)

    ids, coords, demand, exits = [], {}, {}, []
    for pos, nd in enumerate(nodes_raw):
        where = f"nodes[{pos}]"
        if not isinstance(nd, dict):
            raise InstanceFormatError(f"{where}: expected an object")
        v = _field(nd, where, "id", int)
        x = _field(nd, where, "x", (int, float))
        y = _field(nd, where, "y", (int, float))
        d = _field(nd, where, "demand", int, lambda q: q >= 0, "must be >= 0")
        role = _field(nd, where, "role", str, lambda r: r in _ROLES,
                      f"must be one of {_ROLES}")
        if v in ids:
            raise InstanceFormatError(f"{where}.id: duplicate node id {v}")
        ids.append(v)
        coords[v] = (float(x), float(y))
        demand[v] = d
        if role == "exit":
            exits.append(v)

    arcs, caps, times, lanes = [], [], [], []
    for pos, ad in enumerate(arcs_raw):
        where = f"arcs[{pos}]"
        if not isinstance(ad, dict):
            raise InstanceFormatError(f"{where}: expected an object")
        i = _field(ad, where, "from", int, lambda q: q in demand, "unknown node")
        j = _field(ad, where, "to", int, lambda q: q in demand, "unknown node")
        c = _field(ad, where, "capacity", (int, float), lambda q: q > 0, "must be > 0")
        t = _field(ad, where, "free_flow_time", (int, float), lambda q: q > 0, "must be > 0")
        l = _field(ad, where, "lanes", int, lambda q: q >= 1, "must be >= 1")
        if (i, j) in arcs:
            raise InstanceFormatError(f"{where}: duplicate arc ({i}, {j})")
        arcs.append((i, j))
        caps.append(float(c))
        times.append(float(t))
        lanes.append(l)
    if not arcs:
        raise InstanceFormatError("arcs: must be non-empty")

    for pos, k in enumerate(fr_raw):
        if not isinstance(k, int) or k not in demand:
            raise InstanceFormatError(f"fr_nodes[{pos}]: unknown node {k!r}")
        if k in exits:
            raise InstanceFormatError(f"fr_nodes[{pos}]: node {k} is an exit")
    if not exits:
        raise InstanceFormatError("nodes: at least one exit role required")
    for e in exits:
        if demand[e] != 0:
            raise InstanceFormatError(f"nodes: exit node {e} must have demand 0")

    return RoadNetwork(
        nodes=tuple(ids),
        arcs=tuple(arcs),
        capacity=np.array(caps),
        free_flow=np.array(times),
        lanes=np.array(lanes, dtype=int),
        demand=demand,
        fr_nodes=tuple(fr_raw),
        exit_nodes=tuple(exits),
        coords=coords,
    )
