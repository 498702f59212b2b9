"""BPR link costs, Beckmann objective, and Frank-Wolfe equilibrium solvers.

The user-equilibrium solver follows the classic gradient-descent scheme:
all-or-nothing assignment on current-cost shortest paths, then a halving
line search on the Beckmann objective (start at 1, halve until the objective
improves, give up at 2**-20).  The system-optimal variant runs the same loop
on marginal costs and minimizes total travel time directly; it supplies dual
bounds for branch-and-bound.

Flows are tracked per source node so that warm starts can re-route only the
sources stranded on newly closed arcs and so that converged flows decompose
into per-source paths for Wardrop diagnostics.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .network import EffectiveNetwork, RoadNetwork, apply_reservation, empty_design

BPR_ALPHA = 0.15
BPR_BETA = 4

GAMMA_FLOOR = 2.0 ** -20


class DisconnectedSourceError(RuntimeError):
    """A positive-demand node has no open route to any exit."""


def bpr_time(flow: float, free_flow: float, capacity: float) -> float:
    """Travel time T * (1 + 0.15 (f/c)^4); strictly increasing and convex in f."""
    if capacity <= 0:
        raise ValueError("closed arc: capacity is zero, caller must route around it")
    if flow < 0:
        raise ValueError("flow must be >= 0")
    return free_flow * (1.0 + BPR_ALPHA * (flow / capacity) ** BPR_BETA)


def link_times(net: EffectiveNetwork, x: np.ndarray) -> np.ndarray:
    """Vector of BPR times on open arcs; closed arcs get free-flow placeholders
    (they carry no flow and are excluded from the routing graph)."""
    cap = np.where(net.closed, 1.0, net.capacity)
    return net.free_flow * (1.0 + BPR_ALPHA * (x / cap) ** BPR_BETA)


def beckmann_objective(x: np.ndarray, net: EffectiveNetwork) -> float:
    """Sum of integrals of the BPR time over each open arc, in closed form:
    T x + (alpha / (beta+1)) T x^(beta+1) / c^beta."""
    open_ = ~net.closed
    t, c, f = net.free_flow[open_], net.capacity[open_], x[open_]
    return float(np.sum(t * f + (BPR_ALPHA / (BPR_BETA + 1)) * t * f ** 5 / c ** 4))


def total_evac_time(x: np.ndarray, net: EffectiveNetwork) -> float:
    """Total travel time sum_a x_a * t_a(x_a) over open arcs."""
    open_ = ~net.closed
    times = link_times(net, x)
    return float(np.sum(x[open_] * times[open_]))


def _marginal_times(net: EffectiveNetwork, x: np.ndarray) -> np.ndarray:
    # d/dx [x t(x)] = T (1 + alpha (beta+1) (x/c)^beta)
    cap = np.where(net.closed, 1.0, net.capacity)
    return net.free_flow * (1.0 + BPR_ALPHA * (BPR_BETA + 1) * (x / cap) ** BPR_BETA)


@dataclass
class FlowAssignment:
    """Per-arc evacuee flow, with the per-source breakdown that produced it."""

    arc_flow: np.ndarray
    by_source: dict[int, np.ndarray]

    def conservation_residuals(self, net: EffectiveNetwork) -> dict[int, float]:
        """out - in - demand at every non-exit node (0 at equilibrium)."""
        base = net.base
        res = {}
        for v in base.nodes:
            if v in base.exit_nodes:
                continue
            out_f = sum(self.arc_flow[i] for i in base.out_arcs(v))
            in_f = sum(self.arc_flow[i] for i in base.in_arcs(v))
            res[v] = out_f - in_f - base.demand.get(v, 0)
        return res


@dataclass
class UeResult:
    flows: FlowAssignment
    total_time: float
    beckmann_value: float
    iterations: int
    converged: bool
    objective_trace: tuple[float, ...]


def shortest_to_exits(net: EffectiveNetwork, times: np.ndarray):
    """Reverse Dijkstra from the exit set over open arcs.

    Returns (dist, succ) keyed by node: dist is the time to the nearest exit,
    succ the first arc of that path.  Ties resolve toward the smallest node
    id because the heap pops (dist, node) pairs and relaxations are strict.
    """
    base = net.base
    dist = {v: np.inf for v in base.nodes}
    succ: dict[int, int | None] = {v: None for v in base.nodes}
    heap = [(0.0, e) for e in base.exit_nodes]
    for e in base.exit_nodes:
        dist[e] = 0.0
    heapq.heapify(heap)
    while heap:
        d, v = heapq.heappop(heap)
        if d > dist[v]:
            continue
        for idx in base.in_arcs(v):
            if net.closed[idx]:
                continue
            u = base.arcs[idx][0]
            nd = d + times[idx]
            if nd < dist[u]:
                dist[u] = nd
                succ[u] = idx
                heapq.heappush(heap, (nd, u))
    return dist, succ


def _all_or_nothing(net: EffectiveNetwork, times: np.ndarray,
                    demands: dict[int, int]) -> dict[int, np.ndarray]:
    dist, succ = shortest_to_exits(net, times)
    flows = {}
    for s in sorted(demands):
        if not np.isfinite(dist[s]):
            raise DisconnectedSourceError(f"source {s} cannot reach any exit")
        f = np.zeros(net.n_arcs)
        v = s
        while succ[v] is not None:
            idx = succ[v]
            f[idx] += demands[s]
            v = net.base.arcs[idx][1]
        flows[s] = f
    return flows


def _project_warm_start(net: EffectiveNetwork, warm: FlowAssignment,
                        demands: dict[int, int]) -> dict[int, np.ndarray]:
    """Keep per-source flows that avoid closed arcs; re-route the rest with
    one all-or-nothing step at the costs implied by the kept flows."""
    kept: dict[int, np.ndarray] = {}
    stranded = []
    for s in sorted(demands):
        f = warm.by_source.get(s)
        ok = (
            f is not None
            and not np.any(f[net.closed] > 0)
            and abs(float(np.sum(f[list(net.base.out_arcs(s))])) - demands[s]) < 1e-9
        )
        if ok:
            kept[s] = np.array(f)
        else:
            stranded.append(s)
    if stranded:
        x_kept = sum(kept.values(), np.zeros(net.n_arcs))
        times = link_times(net, x_kept)
        kept.update(_all_or_nothing(net, times, {s: demands[s] for s in stranded}))
    return kept


class _Router:
    """Per-solve scratch state: position-indexed reverse adjacency over the
    open arcs, for shortest-path trees toward the exits."""

    def __init__(self, net: EffectiveNetwork):
        base = net.base
        self.pos = {v: i for i, v in enumerate(base.nodes)}
        self.n_nodes = len(base.nodes)
        self.head_pos = [self.pos[j] for (_, j) in base.arcs]
        self.radj = [[] for _ in range(self.n_nodes)]
        for idx, (i, j) in enumerate(base.arcs):
            if not net.closed[idx]:
                self.radj[self.pos[j]].append((self.pos[i], idx))
        self.exit_pos = [self.pos[e] for e in base.exit_nodes]

    def tree(self, times):
        """(dist, succ arc) per node position; smallest-position tie-break."""
        dist = [np.inf] * self.n_nodes
        succ = [-1] * self.n_nodes
        heap = []
        for e in self.exit_pos:
            dist[e] = 0.0
            heap.append((0.0, e))
        heapq.heapify(heap)
        push, pop = heapq.heappush, heapq.heappop
        while heap:
            d, v = pop(heap)
            if d > dist[v]:
                continue
            for u, idx in self.radj[v]:
                nd = d + times[idx]
                if nd < dist[u]:
                    dist[u] = nd
                    succ[u] = idx
                    push(heap, (nd, u))
        return dist, succ

    def path_from(self, source, succ):
        arcs = []
        v = self.pos[source]
        while succ[v] >= 0:
            idx = succ[v]
            arcs.append(idx)
            v = self.head_pos[idx]
        return arcs


_BINOM5 = (1.0, 5.0, 10.0, 10.0, 5.0, 1.0)


def _objective_coeffs(t_lin, k_pow, x, d):
    """Coefficients of gamma -> sum t_lin (x+gamma d) + sum k_pow (x+gamma d)^5."""
    coeffs = [0.0] * 6
    coeffs[0] = float(t_lin @ x)
    coeffs[1] = float(t_lin @ d)
    xp = np.ones_like(x)
    x_powers = [None] * 6          # x^(5-j) built from the top down
    for j in range(5, -1, -1):
        x_powers[j] = xp
        xp = xp * x
    dp = np.ones_like(d)
    for j in range(6):
        if j:
            dp = dp * d
        coeffs[j] += _BINOM5[j] * float(k_pow @ (x_powers[j] * dp))
    return coeffs


def _poly_eval(coeffs, g):
    val = 0.0
    for c in reversed(coeffs):
        val = val * g + c
    return val


def _frank_wolfe(net, demands, marginal, so_objective, rel_tol, warm_start, max_iter):
    if not demands:
        flows = FlowAssignment(np.zeros(net.n_arcs), {})
        return UeResult(flows, 0.0, 0.0, 0, True, (0.0,))
    router = _Router(net)
    sources = sorted(demands)
    d_vals = np.array([float(demands[s]) for s in sources])
    n = net.n_arcs
    if warm_start is not None:
        start = _project_warm_start(net, warm_start, demands)
        flow_rows = np.stack([start[s] for s in sources]).astype(float)
    else:
        dist, succ = router.tree(link_times(net, np.zeros(n)))
        flow_rows = np.zeros((len(sources), n))
        for si, s in enumerate(sources):
            if not np.isfinite(dist[router.pos[s]]):
                raise DisconnectedSourceError(f"source {s} cannot reach any exit")
            flow_rows[si, router.path_from(s, succ)] = d_vals[si]
    x = flow_rows.sum(axis=0)

    open_ = ~net.closed
    t_lin = np.where(open_, net.free_flow, 0.0)
    cap = np.where(net.closed, 1.0, net.capacity)
    # so_objective swaps the line-search target from the Beckmann integral
    # (alpha/(beta+1) coefficient) to total time (alpha coefficient)
    k_pow = np.where(open_, (BPR_ALPHA if so_objective else BPR_ALPHA / (BPR_BETA + 1))
                     * net.free_flow / cap ** 4, 0.0)

    def objective(v):
        return float(t_lin @ v + k_pow @ v ** 5)

    cost_fn = _marginal_times if marginal else link_times
    obj = objective(x)
    trace = [obj]
    converged = False
    iterations = 0
    for _ in range(max_iter):
        times = cost_fn(net, x)
        dist, succ = router.tree(times)
        y = np.zeros(n)
        paths = []
        for si, s in enumerate(sources):
            if not np.isfinite(dist[router.pos[s]]):
                raise DisconnectedSourceError(f"source {s} cannot reach any exit")
            p = router.path_from(s, succ)
            paths.append(p)
            y[p] += d_vals[si]
        direction = y - x
        if not np.any(np.abs(direction) > 1e-12):
            converged = True
            break
        coeffs = _objective_coeffs(t_lin, k_pow, x, direction)
        gamma = 1.0
        new_obj = None
        while gamma >= GAMMA_FLOOR:
            cand = _poly_eval(coeffs, gamma)
            if cand < obj:
                new_obj = cand
                break
            gamma *= 0.5
        if new_obj is None:
            # no improving step along this direction at any admissible size
            converged = True
            break
        flow_rows *= 1.0 - gamma
        for si, p in enumerate(paths):
            flow_rows[si, p] += gamma * d_vals[si]
        x = (1.0 - gamma) * x + gamma * y
        iterations += 1
        rel = (obj - new_obj) / obj
        obj = new_obj
        trace.append(obj)
        if rel < rel_tol:
            converged = True
            break
    flows = FlowAssignment(x, {s: flow_rows[si] for si, s in enumerate(sources)})
    return UeResult(
        flows=flows,
        total_time=total_evac_time(x, net),
        beckmann_value=beckmann_objective(x, net),
        iterations=iterations,
        converged=converged,
        objective_trace=tuple(trace),
    )


def solve_ue(net: EffectiveNetwork, rel_tol: float = 1e-3,
             warm_start: FlowAssignment | None = None,
             max_iter: int = 1000) -> UeResult:
    """User equilibrium: minimize the Beckmann objective over feasible flows.

    Stops when the relative Beckmann improvement of an iteration drops below
    ``rel_tol``; the objective trace is non-increasing by construction.
    Raises DisconnectedSourceError when a demand node has no open route.
    """
    demands = {v: d for v, d in net.base.demand.items() if d > 0}
    return _frank_wolfe(net, demands, marginal=False, so_objective=False,
                        rel_tol=rel_tol, warm_start=warm_start, max_iter=max_iter)


def solve_so(net: EffectiveNetwork, rel_tol: float = 1e-3,
             warm_start: FlowAssignment | None = None,
             max_iter: int = 1000) -> UeResult:
    """System optimum: same loop on marginal costs, minimizing total time.

    The result's total_time lower-bounds the user-equilibrium total time on
    the same network (up to solver tolerance)."""
    demands = {v: d for v, d in net.base.demand.items() if d > 0}
    return _frank_wolfe(net, demands, marginal=True, so_objective=True,
                        rel_tol=rel_tol, warm_start=warm_start, max_iter=max_iter)


def solve_ue_for_design(net: RoadNetwork, design=None, rel_tol: float = 1e-3,
                        warm_start: FlowAssignment | None = None) -> UeResult:
    """Convenience wrapper: apply a reservation (none = empty) and solve UE."""
    eff = apply_reservation(net, design if design is not None else empty_design(net))
    return solve_ue(eff, rel_tol=rel_tol, warm_start=warm_start)


# --- path decomposition and Wardrop diagnostics ---------------------------


def decompose_paths(net: EffectiveNetwork, flows: FlowAssignment,
                    tol: float = 1e-9) -> dict[int, list[tuple[tuple[int, ...], float]]]:
    """Peel each source's arc flows into simple paths (largest-flow-first walk).

    Cycle flow, if any shows up numerically, is cancelled and dropped.
    Returns, per source, a list of (arc index path, amount).
    """
    base = net.base
    exits = set(base.exit_nodes)
    out = {}
    for s, f0 in sorted(flows.by_source.items()):
        f = np.array(f0)
        paths = []
        while True:
            start = [i for i in base.out_arcs(s) if not net.closed[i] and f[i] > tol]
            if not start:
                break
            v, path, seen = s, [], {s: 0}
            while v not in exits:
                cands = [i for i in base.out_arcs(v) if not net.closed[i] and f[i] > tol]
                if not cands:
                    path = None
                    break
                nxt = max(cands, key=lambda i: (f[i], -i))
                path.append(nxt)
                v = base.arcs[nxt][1]
                if v in seen:
                    cyc = path[seen[v]:]
                    f[cyc] -= min(f[i] for i in cyc)
                    path = path[:seen[v]]
                    v = base.arcs[path[-1]][1] if path else s
                    seen = {base.arcs[i][0]: p for p, i in enumerate(path)}
                    seen[v] = len(path)
                    continue
                seen[v] = len(path)
            if not path:
                break
            amount = float(min(f[i] for i in path))
            f[list(path)] -= amount
            paths.append((tuple(path), amount))
        out[s] = paths
    return out


def wardrop_gaps(net: EffectiveNetwork, result: UeResult,
                 min_share: float = 1e-3) -> dict[int, float]:
    """Largest relative excess of a used path's time over the source's
    shortest-path time at the converged flows (0 = perfect equilibrium).

    A path counts as used when it carries at least ``min_share`` of its
    source's demand; the iteration leaves sub-permille residue on stale
    paths that never fully drains."""
    times = link_times(net, result.flows.arc_flow)
    dist, _ = shortest_to_exits(net, times)
    gaps = {}
    for s, paths in decompose_paths(net, result.flows).items():
        d_s = net.base.demand.get(s, 0)
        best = dist[s]
        worst = 0.0
        for arcs, amount in paths:
            if amount < min_share * max(d_s, 1):
                continue
            pt = float(sum(times[i] for i in arcs))
            if best > 0:
                worst = max(worst, (pt - best) / best)
        gaps[s] = worst
    return gaps
