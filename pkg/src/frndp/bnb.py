"""Branch-and-bound baseline: link fixing with a shortest-path primal heuristic.

Each node of the search tree carries a set of arcs forced into the
reservation and a set forced out.  The primal heuristic reserves, per
FR-demand node, the shortest entry path consistent with those fixings
(forced arcs count as free so they are preferred) and prices the result with
a warm-started equilibrium solve.  Branching picks the first unfixed arc of
the current target's reserved path, counted from the exit end, cycling
through the targets in instance order; exploration is breadth-first under a
wall-clock limit.  An optional system-optimal dual bound can fathom
subtrees, but is off by default since it rarely helps.
"""

from __future__ import annotations

import heapq
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .equilibrium import (
    DisconnectedSourceError,
    FlowAssignment,
    UeResult,
    solve_so,
    solve_ue,
)
from .network import FrDesign, RoadNetwork, apply_reservation


@dataclass(frozen=True)
class BnbNode:
    fixed_on: frozenset[int] = frozenset()
    fixed_off: frozenset[int] = frozenset()
    parent_flows: FlowAssignment | None = None
    depth: int = 0
    branch_target: int = -1   # position in fr-node order whose path spawned this node

    def __post_init__(self):
        if self.fixed_on & self.fixed_off:
            raise ValueError("an arc cannot be fixed both on and off")


@dataclass
class BnbResult:
    incumbent: FrDesign | None
    objective: float
    nodes_explored: int
    proven_optimal: bool
    exhausted: bool
    wall_time: float
    trace: tuple[tuple[float, float, int], ...] = ()   # (wall s, objective, nodes)


def _shortest_fr_path(net: RoadNetwork, k: int, fixed_on, fixed_off):
    """Dijkstra from k to the nearest exit; forced-off arcs are removed and
    forced-on arcs have zero length.  Ties resolve by smallest node id."""
    exits = set(net.exit_nodes)
    dist = {k: 0.0}
    pred: dict[int, int] = {}
    heap = [(0.0, k)]
    seen: set[int] = set()
    while heap:
        d, v = heapq.heappop(heap)
        if v in seen:
            continue
        seen.add(v)
        if v in exits:
            path = []
            while v != k:
                idx = pred[v]
                path.append(idx)
                v = net.arcs[idx][0]
            return tuple(reversed(path))
        for idx in net.out_arcs(v):
            if idx in fixed_off:
                continue
            u = net.arcs[idx][1]
            w = 0.0 if idx in fixed_on else float(net.free_flow[idx])
            nd = d + w
            if nd < dist.get(u, np.inf):
                dist[u] = nd
                pred[u] = idx
                heapq.heappush(heap, (nd, u))
    return None


def primal_heuristic(net: RoadNetwork, node: BnbNode,
                     rel_tol: float = 1e-3) -> tuple[FrDesign, UeResult] | None:
    """Feasible design for a node, or None when the node fathoms.

    Reserves the shortest fixing-consistent entry path per FR-demand node
    (plus every forced-on arc) and evaluates it with the equilibrium solver,
    warm-started from the parent's flows.
    """
    paths = {}
    for k in net.fr_nodes:
        p = _shortest_fr_path(net, k, node.fixed_on, node.fixed_off)
        if p is None:
            return None
        paths[k] = p
    design = FrDesign.from_paths(paths)
    if node.fixed_on:
        design = FrDesign(design.targets, design.arcs_by_target,
                          reserved=tuple(set(design.reserved) | node.fixed_on))
    assert node.fixed_on <= set(design.reserved)
    assert not (node.fixed_off & set(design.reserved))
    eff = apply_reservation(net, design)
    try:
        ue = solve_ue(eff, rel_tol=rel_tol, warm_start=node.parent_flows)
    except DisconnectedSourceError:
        return None
    return design, ue


def _path_in_order(net: RoadNetwork, design: FrDesign, k: int) -> list[int]:
    # reconstruct the arc sequence of k's unit path from the sorted arc set
    by_tail = {}
    for idx in design.arcs_for(k):
        by_tail.setdefault(net.arcs[idx][0], idx)
    order = []
    v = k
    exits = set(net.exit_nodes)
    while v not in exits and v in by_tail:
        idx = by_tail.pop(v)
        order.append(idx)
        v = net.arcs[idx][1]
    return order


def select_branch_link(net: RoadNetwork, node: BnbNode,
                       design: FrDesign) -> tuple[int, int] | None:
    """First unfixed arc on the next target's reserved path, counted from the
    exit end; None when every path arc of every target is fixed (leaf).

    Returns (arc index, target position) so the child knows which target to
    advance from.
    """
    order = net.fr_nodes
    if not order:
        return None
    fixed = node.fixed_on | node.fixed_off
    for step in range(1, len(order) + 1):
        pos = (node.branch_target + step) % len(order)
        k = order[pos]
        for idx in reversed(_path_in_order(net, design, k)):
            if idx not in fixed:
                return idx, pos
    return None


def so_dual_bound(net: RoadNetwork, node: BnbNode, rel_tol: float = 1e-3) -> float:
    """System-optimal total time with only the forced-on arcs reserved.

    Every descendant reserves at least these arcs, so its equilibrium time is
    bounded below by this value.  Infeasible evacuation counts as +inf.
    """
    relaxed = FrDesign(targets=(), arcs_by_target=(),
                       reserved=tuple(sorted(node.fixed_on)))
    eff = apply_reservation(net, relaxed)
    try:
        return solve_so(eff, rel_tol=rel_tol).total_time
    except DisconnectedSourceError:
        return np.inf


def bnb_solve(net: RoadNetwork, time_limit: float = 600.0,
              use_bounds: bool = False, rel_tol: float = 1e-3) -> BnbResult:
    """Breadth-first search over link fixings.

    The incumbent never worsens; the run stops when the FIFO queue empties
    (exhausted) or the wall clock passes ``time_limit`` after at least the
    root has been processed.  ``proven_optimal`` requires exhaustion with
    bounds enabled.
    """
    t_start = time.perf_counter()
    queue: deque[BnbNode] = deque([BnbNode()])
    incumbent: FrDesign | None = None
    best = np.inf
    nodes = 0
    trace: list[tuple[float, float, int]] = []
    while queue:
        if nodes >= 1 and time.perf_counter() - t_start >= time_limit:
            break
        node = queue.popleft()
        nodes += 1
        primal = primal_heuristic(net, node, rel_tol=rel_tol)
        if primal is None:
            continue
        design, ue = primal
        if ue.total_time < best:
            best = ue.total_time
            incumbent = design
            trace.append((time.perf_counter() - t_start, best, nodes))
        if use_bounds and np.isfinite(best):
            if so_dual_bound(net, node, rel_tol=rel_tol) >= best - 1e-9:
                continue
        sel = select_branch_link(net, node, design)
        if sel is None:
            continue
        arc, pos = sel
        queue.append(BnbNode(node.fixed_on | {arc}, node.fixed_off,
                             ue.flows, node.depth + 1, pos))
        queue.append(BnbNode(node.fixed_on, node.fixed_off | {arc},
                             ue.flows, node.depth + 1, pos))
    exhausted = not queue
    return BnbResult(
        incumbent=incumbent,
        objective=best,
        nodes_explored=nodes,
        proven_optimal=exhausted and use_bounds,
        exhausted=exhausted,
        wall_time=time.perf_counter() - t_start,
        trace=tuple(trace),
    )
