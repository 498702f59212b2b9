"""Feasible-path sampling: penalty QUBO + simulated annealing, and Yen's method.

A unit path from node k to the exit set is a 0/1 solution of the flow-balance
system A y = e_k.  Encoding ||A y - b||^2 as an unconstrained binary quadratic
gives integer energies with minimum 0 exactly on the feasible set, so a
sampler only has to be filtered for exact zeros.  An optional row per node
caps the out-degree at one (with one auxiliary binary per node), which stops
samplers from attaching stray cycles to the path.

Paths are kept in arc orientation (k toward the exits); first-responder use
traverses the same arcs from the entry side.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass

import numpy as np

from .network import RoadNetwork, flow_balance_matrix


class NoFeasibleSampleError(RuntimeError):
    """Annealer produced no zero-energy assignment; caller may fall back to Yen's."""


class NoPathError(RuntimeError):
    """Requested node has no directed route to the exit set."""


class PathCountExceeded(RuntimeError):
    """Exhaustive path enumeration passed its cap."""


@dataclass(frozen=True, eq=False)
class QuboProblem:
    """Symmetric coefficient matrix Q plus offset with
    energy(X) = X^T Q X + offset = ||A X - b||^2 for binary X.

    Variables 0..n_arcs-1 are the arc selectors; any further variables are
    the per-node out-degree auxiliaries listed in ``aux_nodes``.
    """

    q: np.ndarray
    offset: int
    a: np.ndarray
    b: np.ndarray
    target: int
    n_arc_vars: int
    aux_nodes: tuple[int, ...]

    @property
    def n_vars(self) -> int:
        return self.q.shape[0]

    def energy(self, assignment) -> int:
        """Exact integer energy ||A x - b||^2."""
        x = np.asarray(assignment, dtype=int)
        r = self.a @ x - self.b
        return int(r @ r)

    def energy_quadratic(self, assignment) -> float:
        """Energy through the quadratic form (equals ``energy`` on binaries)."""
        x = np.asarray(assignment, dtype=float)
        return float(x @ self.q @ x) + self.offset


@dataclass(frozen=True)
class PathSample:
    """Distinct simple paths from ``source`` to the exit set, as arc-index lists."""

    source: int
    paths: tuple[tuple[int, ...], ...]


def build_path_qubo(net: RoadNetwork, k: int, forbid_cycles: bool = True) -> QuboProblem:
    """Penalty QUBO for the unit-path system of target k (k must not be an exit).

    All variables are binary, so the integer-encoding step is the identity and
    the quadratic matrix is A^T A with the -2 b^T A linear term folded onto the
    diagonal.  Penalty weight 1 suffices: residuals are integers, so any
    infeasible assignment already has energy >= 1.
    """
    if k in net.exit_nodes:
        raise ValueError(f"target {k} is an exit node")
    bal, rows = flow_balance_matrix(net)
    rhs = np.zeros(len(rows), dtype=int)
    rhs[rows.index(k)] = 1
    if forbid_cycles:
        aux_nodes = rows
        deg = np.zeros((len(rows), bal.shape[1] + len(rows)), dtype=int)
        for r, v in enumerate(rows):
            for idx in net.out_arcs(v):
                deg[r, idx] = 1
            deg[r, bal.shape[1] + r] = 1
        a = np.vstack([np.hstack([bal, np.zeros((len(rows), len(rows)), dtype=int)]), deg])
        b = np.concatenate([rhs, np.ones(len(rows), dtype=int)])
    else:
        aux_nodes = ()
        a, b = bal, rhs
    q = a.T @ a - 2 * np.diag(b @ a)
    return QuboProblem(
        q=q,
        offset=int(b @ b),
        a=a,
        b=b,
        target=k,
        n_arc_vars=net.n_arcs,
        aux_nodes=tuple(aux_nodes),
    )


# --- simulated annealing ---------------------------------------------------


def anneal_qubo(qubo: QuboProblem, n_samples: int, rng: np.random.Generator,
                sweeps: int = 400, initial_acceptance: float = 0.9,
                t_floor: float = 0.05) -> np.ndarray:
    """Metropolis single-flip annealing, run for all samples in lockstep.

    Geometric cooling; the starting temperature is set from the mean uphill
    move on the random initial states so that roughly ``initial_acceptance``
    of them would be accepted.  Returns the final (n_samples, n_vars) binary
    states; callers filter for exact feasibility.
    """
    n = qubo.n_vars
    q = qubo.q.astype(float)
    diag = np.diag(q)
    x = rng.integers(0, 2, size=(n_samples, n)).astype(float)
    h = x @ q
    d_e0 = (1.0 - 2.0 * x) * (diag + 2.0 * (h - diag * x))
    uphill = d_e0[d_e0 > 0]
    t0 = float(np.mean(uphill)) / np.log(1.0 / initial_acceptance) if uphill.size else 1.0
    t0 = max(t0, t_floor)
    temps = t0 * (t_floor / t0) ** (np.arange(sweeps) / max(sweeps - 1, 1))
    for t in temps:
        for i in range(n):
            xi = x[:, i]
            s = 1.0 - 2.0 * xi
            d_e = s * (diag[i] + 2.0 * (h[:, i] - diag[i] * xi))
            accept = d_e <= 0
            up = ~accept
            if np.any(up):
                accept[up] = rng.random(int(np.sum(up))) < np.exp(-d_e[up] / t)
            if np.any(accept):
                x[accept, i] = 1.0 - xi[accept]
                h[accept] += np.outer(s[accept], q[i])
    return x.astype(int)


def sample_feasible(qubo: QuboProblem, net: RoadNetwork, n_samples: int,
                    rng_seed, n_paths: int | None = None,
                    sweeps: int = 400) -> PathSample:
    """Sample the QUBO, keep exact zero-energy states, decode to simple paths.

    Decoded arc sets are reduced to their shortest contained path (dropping
    stray cycles), deduplicated, ordered by free-flow length, and truncated
    to the ``n_paths`` shortest when given.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) \
        else np.random.default_rng(rng_seed)
    states = anneal_qubo(qubo, n_samples, rng, sweeps=sweeps)
    residual = states @ qubo.a.T - qubo.b
    feasible = states[~np.any(residual, axis=1)]
    if feasible.shape[0] == 0:
        raise NoFeasibleSampleError(
            f"no feasible sample for node {qubo.target} in {n_samples} reads")
    found = {}
    for row in feasible:
        arc_set = frozenset(np.flatnonzero(row[:qubo.n_arc_vars]).tolist())
        if arc_set not in found:
            found[arc_set] = extract_simple_path(arc_set, qubo.target, net)
    return _finish_sample(net, qubo.target, found.values(), n_paths)


def _finish_sample(net, k, paths, n_paths):
    distinct = sorted(
        set(paths),
        key=lambda p: (sum(net.free_flow[i] for i in p), path_nodes(net, p, k)),
    )
    if n_paths is not None:
        distinct = distinct[:n_paths]
    return PathSample(source=k, paths=tuple(distinct))


def extract_simple_path(arc_set, k: int, net: RoadNetwork) -> tuple[int, ...]:
    """Shortest free-flow path from k to an exit using only the selected arcs.

    Flow-balance solutions may carry disjoint cycles; the restricted shortest
    path strips them.
    """
    arc_set = set(arc_set)
    dist = {k: 0.0}
    pred: dict[int, int] = {}
    heap = [(0.0, k)]
    exits = set(net.exit_nodes)
    seen = set()
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
            if idx not in arc_set:
                continue
            u = net.arcs[idx][1]
            nd = d + net.free_flow[idx]
            if nd < dist.get(u, np.inf):
                dist[u] = nd
                pred[u] = idx
                heapq.heappush(heap, (nd, u))
    raise NoPathError(f"no path in selection from node {k} to an exit")


# --- Yen's k shortest loopless paths --------------------------------------


def _dijkstra_to_exits(net: RoadNetwork, source: int, banned_arcs: set[int],
                       banned_nodes: set[int]):
    """Shortest free-flow path from source to the nearest exit, avoiding the
    banned arcs/nodes; ties resolve by smallest node id via heap order."""
    exits = set(net.exit_nodes)
    dist = {source: 0.0}
    pred: dict[int, int] = {}
    heap = [(0.0, source)]
    seen = set()
    while heap:
        d, v = heapq.heappop(heap)
        if v in seen:
            continue
        seen.add(v)
        if v in exits:
            path = []
            while v != source:
                idx = pred[v]
                path.append(idx)
                v = net.arcs[idx][0]
            return d, tuple(reversed(path))
        for idx in net.out_arcs(v):
            if idx in banned_arcs:
                continue
            u = net.arcs[idx][1]
            if u in banned_nodes:
                continue
            nd = d + net.free_flow[idx]
            if nd < dist.get(u, np.inf):
                dist[u] = nd
                pred[u] = idx
                heapq.heappush(heap, (nd, u))
    return None


def path_nodes(net: RoadNetwork, arcs: tuple[int, ...], source: int) -> tuple[int, ...]:
    nodes = [source]
    for idx in arcs:
        nodes.append(net.arcs[idx][1])
    return tuple(nodes)


def path_length(net: RoadNetwork, arcs) -> float:
    return float(sum(net.free_flow[i] for i in arcs))


def yen_k_shortest(net: RoadNetwork, k: int, count: int) -> PathSample:
    """K shortest loopless paths from k to the exit set, by free-flow time.

    Returns fewer than ``count`` paths when the graph admits fewer; raises
    NoPathError when there is none at all.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    first = _dijkstra_to_exits(net, k, set(), set())
    if first is None:
        raise NoPathError(f"node {k} is disconnected from the exits")
    accepted = [first[1]]
    accepted_keys = {path_nodes(net, first[1], k)}
    candidates: list[tuple[float, tuple[int, ...], tuple[int, ...]]] = []
    in_candidates = set()
    while len(accepted) < count:
        prev = accepted[-1]
        prev_nodes = path_nodes(net, prev, k)
        for spur_pos in range(len(prev)):
            spur_node = prev_nodes[spur_pos]
            root = prev[:spur_pos]
            banned_arcs = {
                p[spur_pos]
                for p in accepted
                if len(p) > spur_pos and p[:spur_pos] == root
            }
            banned_nodes = set(prev_nodes[:spur_pos])
            spur = _dijkstra_to_exits(net, spur_node, banned_arcs, banned_nodes)
            if spur is None:
                continue
            arcs = root + spur[1]
            key = path_nodes(net, arcs, k)
            if key in accepted_keys or key in in_candidates:
                continue
            heapq.heappush(candidates, (path_length(net, arcs), key, arcs))
            in_candidates.add(key)
        if not candidates:
            break
        _, key, arcs = heapq.heappop(candidates)
        in_candidates.discard(key)
        accepted.append(arcs)
        accepted_keys.add(key)
    return PathSample(source=k, paths=tuple(accepted))


def all_simple_paths(net: RoadNetwork, k: int, cap: int | None = None) -> PathSample:
    """Every simple path from k to an exit (DFS), sorted by free-flow length.

    Exhaustive; only sensible on small graphs and as a test oracle.
    """
    exits = set(net.exit_nodes)
    found: list[tuple[int, ...]] = []
    path: list[int] = []
    visited = {k}

    def walk(v):
        if v in exits:
            found.append(tuple(path))
            if cap is not None and len(found) > cap:
                raise PathCountExceeded(f"more than {cap} simple paths from node {k}")
            return
        for idx in net.out_arcs(v):
            u = net.arcs[idx][1]
            if u in visited:
                continue
            visited.add(u)
            path.append(idx)
            walk(u)
            path.pop()
            visited.discard(u)

    walk(k)
    return _finish_sample(net, k, found, None)


def sample_paths(net: RoadNetwork, k: int, backend: str, n_paths: int,
                 n_samples: int = 10000, rng_seed=0, sweeps: int = 400,
                 forbid_cycles: bool = True) -> PathSample:
    """One entry point for both backends; SA falls back to Yen's when it
    cannot produce a single feasible read."""
    if backend == "yens":
        return yen_k_shortest(net, k, n_paths)
    if backend == "sa":
        qubo = build_path_qubo(net, k, forbid_cycles=forbid_cycles)
        try:
            return sample_feasible(qubo, net, n_samples, rng_seed,
                                   n_paths=n_paths, sweeps=sweeps)
        except NoFeasibleSampleError:
            return yen_k_shortest(net, k, n_paths)
    raise ValueError(f"unknown path backend {backend!r}")


# --- path cache ------------------------------------------------------------


def save_path_samples(samples: dict[int, PathSample], net: RoadNetwork, path) -> None:
    """Persist sampled paths (as node sequences) so expensive sampling runs can
    be reused across solver configurations."""
    doc = {
        str(k): [list(path_nodes(net, p, k)) for p in s.paths]
        for k, s in sorted(samples.items())
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=0)
        fh.write("\n")


def load_path_samples(path, net: RoadNetwork) -> dict[int, PathSample]:
    with open(path) as fh:
        doc = json.load(fh)
    out = {}
    for key, node_lists in doc.items():
        k = int(key)
        arcs = tuple(
            tuple(net.arc_index(seq[i], seq[i + 1]) for i in range(len(seq) - 1))
            for seq in node_lists
        )
        out[k] = PathSample(source=k, paths=arcs)
    return out
