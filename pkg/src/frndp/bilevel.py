"""Nested augmentation: an outer walk over reservations whose evaluator is an
inner augmentation walk over integral evacuee flows, plus a final exact
equilibrium refinement.

The inner level minimizes the Beckmann objective with unit steps along a
partial basis of same-source path differences, warm-started from the
incumbent design's flows; only the sources stranded on newly closed arcs are
re-seeded.  Optionally the inner walk stops once a full pass over the basis
improves the objective by less than a relative tolerance, and demands can be
normalized (max demand 100, capacities scaled by the same factor) before
walking.  Whatever the setting, every per-seed local optimum is re-evaluated
with the exact solver on the original network, and the best refined value is
the reported objective.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .equilibrium import (
    FlowAssignment,
    beckmann_objective,
    solve_ue,
    total_evac_time,
)
from .graver import GraverSet, conformal_filter, lattice_from_differences
from .network import (
    EffectiveNetwork,
    FrDesign,
    RoadNetwork,
    apply_reservation,
)
from .paths import PathSample, sample_paths
from .walks import EvaluationError, WalkResult, build_outer_basis, build_seeds, outer_walk

BPR_POW_COEFF = 0.15 / 5.0  # alpha / (beta + 1)


class NoOpenPathError(EvaluationError):
    """Every sampled path of some source is blocked by the candidate design."""


@dataclass(frozen=True)
class GagaConfig:
    """Knobs for one nested-solver run; defaults follow the experiment setup."""

    n_paths: int = 25
    n_samples: int = 10000
    m: int = 10
    inner_tolerance: float | None = None
    normalized: bool = False
    path_backend: str = "sa"          # "sa" | "yens"
    rng_seed: int = 0
    time_budget: float | None = None
    sa_sweeps: int = 400
    forbid_cycles: bool = True
    refine_rel_tol: float = 1e-3

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.m < 1:
            raise ValueError("M must be >= 1")
        if self.inner_tolerance is not None and not 0 < self.inner_tolerance < 1:
            raise ValueError("inner_tolerance must lie in (0, 1)")
        if self.path_backend not in ("sa", "yens"):
            raise ValueError(f"unknown path backend {self.path_backend!r}")

    @property
    def setting_name(self) -> str:
        if self.normalized:
            return "Normalized, Tol=1e-3" if self.inner_tolerance else "Normalized"
        return "Unnormalized, Tol = 1e-3" if self.inner_tolerance else "Unnormalized"


@dataclass
class GagaTiming:
    paths_s: float = 0.0
    graver_s: float = 0.0
    walk_s: float = 0.0
    refine_s: float = 0.0
    inner_walk_s: float = 0.0   # time inside the inner flow walks (subset of walk_s)


@dataclass
class SeedOutcome:
    seed_index: int
    walk: WalkResult | None
    refined_objective: float | None
    failure: str | None = None


@dataclass
class GagaResult:
    best_design: FrDesign
    gaga_only_objective: float
    gaga_leblanc_objective: float
    per_seed: tuple[SeedOutcome, ...]
    timing: GagaTiming
    seeds_completed: int
    partial: bool
    scale: float


def normalize_demands(net: RoadNetwork) -> tuple[RoadNetwork, float]:
    """Scale so the maximum node demand is 100; capacities shrink by the same
    factor, preserving every flow/capacity ratio up to demand rounding."""
    max_d = max(net.demand.values(), default=0)
    if max_d <= 0:
        raise ValueError("network has no demand to normalize")
    scale = 100.0 / max_d
    scaled = RoadNetwork(
        nodes=net.nodes,
        arcs=net.arcs,
        capacity=net.capacity * scale,
        free_flow=net.free_flow,
        lanes=net.lanes,
        demand={v: int(round(scale * d)) for v, d in net.demand.items()},
        fr_nodes=net.fr_nodes,
        exit_nodes=net.exit_nodes,
        coords=net.coords,
    )
    return scaled, scale


def build_inner_basis(net: RoadNetwork, evac_paths: dict[int, PathSample]) -> GraverSet:
    """Same-source evacuee path differences (cross-source ones are not kernel
    vectors), pooled over sources and conformally filtered once."""
    pool = []
    n = net.n_arcs
    for k in sorted(evac_paths):
        vecs = []
        for p in evac_paths[k].paths:
            v = np.zeros(n, dtype=int)
            v[list(p)] = 1
            vecs.append(tuple(v))
        pool.extend(lattice_from_differences(vecs))
    return conformal_filter(pool)


def build_inner_seed(evac_paths: dict[int, PathSample], demands: dict[int, int],
                     rng_seed, closed: np.ndarray | None = None,
                     n_arcs: int | None = None) -> FlowAssignment:
    """Integral starting flows: each evacuee rides one independently sampled
    path; conservation holds by construction.  Paths touching closed arcs are
    filtered out first."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) \
        else np.random.default_rng(rng_seed)
    if n_arcs is None:
        n_arcs = int(max(max(p) for s in evac_paths.values() for p in s.paths)) + 1
    by_source = {}
    for k in sorted(demands):
        d = demands[k]
        if d <= 0:
            continue
        open_paths = [
            p for p in evac_paths[k].paths
            if closed is None or not any(closed[i] for i in p)
        ]
        if not open_paths:
            raise NoOpenPathError(f"no open path for source {k}")
        f = np.zeros(n_arcs, dtype=np.int64)
        picks = rng.integers(len(open_paths), size=d)
        counts = np.bincount(picks, minlength=len(open_paths))
        for p, c in zip(open_paths, counts):
            if c:
                f[list(p)] += int(c)
        by_source[k] = f
    agg = sum(by_source.values(), np.zeros(n_arcs, dtype=np.int64))
    return FlowAssignment(arc_flow=agg, by_source=by_source)


@dataclass
class InnerResult:
    flows: FlowAssignment
    beckmann: float
    accepted_steps: int
    sweeps: int
    hit_sweep_cap: bool = False


def inner_gama_ue(net: EffectiveNetwork, basis: GraverSet, start: FlowAssignment,
                  tolerance: float | None = None,
                  max_sweeps: int = 10000) -> InnerResult:
    """Integral descent of the Beckmann objective along the inner basis.

    Unit steps; a step must be absorbable by a single source (one evacuee
    reroutes at a time) and may not touch closed arcs.  Without a tolerance
    the walk stops when a full pass over the directions accepts nothing; with
    one, it also stops when a pass improves the objective by a relative
    amount below the tolerance.
    """
    by_source = {k: np.array(f, dtype=np.int64) for k, f in start.by_source.items()}
    n = net.n_arcs
    x = sum(by_source.values(), np.zeros(n, dtype=np.int64))
    sources = sorted(by_source)
    open_cap = np.where(net.closed, 1.0, net.capacity)

    usable = []
    for vec in basis.vectors:
        arr = np.array(vec, dtype=np.int64)
        supp = np.flatnonzero(arr)
        if np.any(net.closed[supp]):
            continue
        t_s = net.free_flow[supp]
        k_s = BPR_POW_COEFF * t_s / open_cap[supp] ** 4
        usable.append((supp, arr[supp], t_s, k_s))

    def section(vals, t_s, k_s):
        # Beckmann restricted to the arcs of one direction
        f = vals.astype(float)
        return float(t_s @ f + k_s @ f ** 5)

    def descend(supp, gs, t_s, k_s):
        """Unit steps along gs while the objective improves; the per-arc terms
        are convex in the step count, so the stopping point is the integer
        minimizer of the section, reached in one batch.  Each unit must be
        absorbed by a single source (taken in sorted order, greedily)."""
        neg = gs < 0
        if np.any(neg):
            t_max = int(np.min(x[supp][neg] // -gs[neg]))
        else:
            t_max = int(sum(d for d in (net.base.demand.get(s, 0) for s in sources)))
        if t_max <= 0:
            return 0, 0.0
        base_val = section(x[supp], t_s, k_s)

        def improves(t):
            # marginal gain of the t-th unit step; non-decreasing in t
            return section(x[supp] + t * gs, t_s, k_s) < \
                section(x[supp] + (t - 1) * gs, t_s, k_s) - 1e-12

        if not improves(1):
            return 0, 0.0
        lo, hi = 1, t_max
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if improves(mid):
                lo = mid
            else:
                hi = mid - 1
        t_star = lo
        applied = 0
        for k in sources:
            if applied >= t_star:
                break
            fk = by_source[k][supp]
            if np.any(neg):
                cap_k = int(np.min(fk[neg] // -gs[neg]))
            else:
                cap_k = t_star - applied
            take = min(cap_k, t_star - applied)
            if take > 0:
                by_source[k][supp] += take * gs
                applied += take
        if applied == 0:
            return 0, 0.0
        delta = section(x[supp] + applied * gs, t_s, k_s) - base_val
        x[supp] += applied * gs
        return applied, delta

    obj = beckmann_objective(x.astype(float), net)
    accepted = 0
    sweeps = 0
    hit_cap = False
    while True:
        if sweeps >= max_sweeps:
            hit_cap = True
            break
        sweeps += 1
        pass_start = obj
        any_accept = False
        for supp, gs, t_s, k_s in usable:
            for step in (gs, -gs):
                steps_taken, delta = descend(supp, step, t_s, k_s)
                if steps_taken:
                    obj += delta
                    accepted += steps_taken
                    any_accept = True
        if not any_accept:
            break
        if tolerance is not None:
            rel = (pass_start - obj) / max(pass_start, 1e-12)
            if rel < tolerance:
                break
    flows = FlowAssignment(arc_flow=x, by_source=by_source)
    return InnerResult(
        flows=flows,
        beckmann=beckmann_objective(x.astype(float), net),
        accepted_steps=accepted,
        sweeps=sweeps,
        hit_sweep_cap=hit_cap,
    )


class _NestedEvaluator:
    """Design -> total evacuation time via the inner walk.

    Warm starts track the walk's incumbent: because the outer walk accepts
    exactly the evaluations that beat its current objective, the evaluator
    adopts a candidate's flows as incumbent whenever its value improves on
    the best seen in this walk.  A cache keyed by the reserved-arc tuple is
    shared across seeds (identical reservations see identical capacities).
    """

    def __init__(self, net: RoadNetwork, evac_paths, inner_basis, tolerance,
                 rng, cache):
        self.net = net
        self.evac_paths = evac_paths
        self.inner_basis = inner_basis
        self.tolerance = tolerance
        self.rng = rng
        self.cache = cache
        self.demands = {v: d for v, d in net.demand.items() if d > 0}
        self.best_value = np.inf
        self.incumbent_flows: dict[int, np.ndarray] | None = None
        self.inner_steps = 0
        self.inner_sweeps = 0
        self.inner_time = 0.0

    def _start_flows(self, eff: EffectiveNetwork) -> FlowAssignment:
        by_source = {}
        reseed = []
        for k in sorted(self.demands):
            f = None if self.incumbent_flows is None else self.incumbent_flows.get(k)
            if f is not None and not np.any(f[eff.closed] > 0):
                by_source[k] = np.array(f)
            else:
                reseed.append(k)
        if reseed:
            fresh = build_inner_seed(
                {k: self.evac_paths[k] for k in reseed},
                {k: self.demands[k] for k in reseed},
                self.rng, closed=eff.closed, n_arcs=self.net.n_arcs)
            by_source.update(fresh.by_source)
        agg = sum(by_source.values(), np.zeros(self.net.n_arcs, dtype=np.int64))
        return FlowAssignment(arc_flow=agg, by_source=by_source)

    def __call__(self, design: FrDesign) -> float:
        key = design.reserved
        hit = self.cache.get(key)
        if hit is not None:
            value, flows = hit
        else:
            eff = apply_reservation(self.net, design)
            start = self._start_flows(eff)
            t0 = time.perf_counter()
            inner = inner_gama_ue(eff, self.inner_basis, start,
                                  tolerance=self.tolerance)
            self.inner_time += time.perf_counter() - t0
            self.inner_steps += inner.accepted_steps
            self.inner_sweeps += inner.sweeps
            value = total_evac_time(inner.flows.arc_flow.astype(float), eff)
            flows = inner.flows.by_source
            self.cache[key] = (value, flows)
        if value < self.best_value:
            self.best_value = value
            self.incumbent_flows = {k: np.array(f) for k, f in flows.items()}
        return value


def run_gaga(net: RoadNetwork, config: GagaConfig) -> GagaResult:
    """Full pipeline: sample paths, build both bases, walk every seed with the
    nested evaluator, then refine each local optimum with the exact solver on
    the original network and report the best refined value."""
    timing = GagaTiming()

    t0 = time.perf_counter()
    fr_paths = {}
    for k in net.fr_nodes:
        fr_paths[k] = sample_paths(
            net, k, config.path_backend, config.n_paths,
            n_samples=config.n_samples,
            rng_seed=np.random.default_rng(np.random.SeedSequence((config.rng_seed, 1, k))),
            sweeps=config.sa_sweeps, forbid_cycles=config.forbid_cycles)
    evac_paths = {}
    for k in net.source_nodes:
        evac_paths[k] = sample_paths(
            net, k, config.path_backend, config.n_paths,
            n_samples=config.n_samples,
            rng_seed=np.random.default_rng(np.random.SeedSequence((config.rng_seed, 2, k))),
            sweeps=config.sa_sweeps, forbid_cycles=config.forbid_cycles)
    timing.paths_s = time.perf_counter() - t0

    work_net, scale = (net, 1.0)
    if config.normalized:
        work_net, scale = normalize_demands(net)

    t0 = time.perf_counter()
    outer_basis = build_outer_basis(net, fr_paths)
    inner_basis = build_inner_basis(net, evac_paths)
    timing.graver_s = time.perf_counter() - t0

    seeds = build_seeds(
        fr_paths, config.m,
        np.random.default_rng(np.random.SeedSequence((config.rng_seed, 3))))

    t0 = time.perf_counter()
    cache: dict = {}
    walk_results: list[WalkResult | None] = []
    failures: dict[int, str] = {}
    partial = False
    for idx, seed in enumerate(seeds):
        remaining = None
        if config.time_budget is not None:
            remaining = config.time_budget - (time.perf_counter() - t0)
            if remaining <= 0:
                partial = True
                walk_results.extend([None] * (len(seeds) - idx))
                break
        evaluator = _NestedEvaluator(
            work_net, evac_paths, inner_basis, config.inner_tolerance,
            np.random.default_rng(np.random.SeedSequence((config.rng_seed, 4, idx))),
            cache)
        try:
            res = outer_walk(net, seed, outer_basis, evaluator,
                             time_budget=remaining)
        except (EvaluationError,) as exc:
            failures[idx] = str(exc)
            walk_results.append(None)
            continue
        walk_results.append(res)
        timing.inner_walk_s += evaluator.inner_time
        if res.partial:
            partial = True
    timing.walk_s = time.perf_counter() - t0
    if not any(r is not None for r in walk_results):
        raise EvaluationError("every seed failed to evaluate")

    t0 = time.perf_counter()
    refined_cache: dict = {}
    outcomes = []
    for idx, res in enumerate(walk_results):
        if res is None:
            outcomes.append(SeedOutcome(idx, None, None, failures.get(idx)))
            continue
        key = res.design.reserved
        if key not in refined_cache:
            eff = apply_reservation(net, res.design)
            refined_cache[key] = solve_ue(eff, rel_tol=config.refine_rel_tol).total_time
        outcomes.append(SeedOutcome(idx, res, refined_cache[key]))
    timing.refine_s = time.perf_counter() - t0

    done = [o for o in outcomes if o.refined_objective is not None]
    best = min(done, key=lambda o: (o.refined_objective, o.walk.design.reserved))
    completed = sum(1 for o in done if not o.walk.partial)
    return GagaResult(
        best_design=best.walk.design,
        gaga_only_objective=best.walk.objective / scale,
        gaga_leblanc_objective=best.refined_objective,
        per_seed=tuple(outcomes),
        timing=timing,
        seeds_completed=completed,
        partial=partial,
        scale=scale,
    )
