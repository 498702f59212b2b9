"""Multi-seed augmentation over lane-reservation designs (the outer level).

Designs live in the concatenated per-target arc space: one 0/1 block per
FR-demand node, each block a unit path toward the exits.  Directions come
from a partial Graver basis built out of same-target path differences,
embedded block-wise and pooled.  A walk applies first-improvement steps of
size one (both signs), rescanning from the start of the direction list after
every accepted step, and stops when no direction improves.

Candidate steps are screened before evaluation: binary bounds plus the
per-target integer flow-balance check.  Evaluator failures (for instance a
reservation that disconnects the evacuees) reject the candidate, they do not
abort the walk.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .equilibrium import DisconnectedSourceError
from .graver import GraverSet, conformal_filter, lattice_from_differences
from .network import FrDesign, RoadNetwork, flow_balance_matrix
from .paths import PathSample


class EvaluationError(RuntimeError):
    """Design evaluator could not produce an objective; candidate is rejected."""


@dataclass(frozen=True)
class StepRecord:
    action: str               # "accept" | "reject-worse" | "reject-infeasible" | "reject-error"
    direction: tuple[int, ...]
    objective: float | None
    elapsed: float


@dataclass
class WalkResult:
    design: FrDesign
    objective: float
    accepted_steps: int
    evaluations: int
    wall_time: float
    steps: tuple[StepRecord, ...]
    partial: bool = False


def build_outer_basis(net: RoadNetwork, fr_paths: dict[int, PathSample]) -> GraverSet:
    """Partial basis over the concatenated design space.

    Same-target path differences are kernel vectors of the balance system;
    they are embedded in that target's block, pooled over targets, and
    conformally filtered once.
    """
    targets = tuple(sorted(fr_paths))
    n = net.n_arcs
    pool = []
    for pos, k in enumerate(targets):
        vecs = []
        for p in fr_paths[k].paths:
            v = np.zeros(n, dtype=int)
            v[list(p)] = 1
            vecs.append(tuple(v))
        for d in lattice_from_differences(vecs):
            full = [0] * (n * len(targets))
            full[pos * n:(pos + 1) * n] = list(d)
            pool.append(tuple(full))
    return conformal_filter(pool)


def build_seeds(fr_paths: dict[int, PathSample], m: int, rng_seed) -> list[FrDesign]:
    """M designs, each combining one randomly chosen sampled path per target."""
    if m < 1:
        raise ValueError("M must be >= 1")
    for k, sample in fr_paths.items():
        if not sample.paths:
            raise ValueError(f"no paths for node {k}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) \
        else np.random.default_rng(rng_seed)
    targets = sorted(fr_paths)
    seeds = []
    for _ in range(m):
        choice = {k: fr_paths[k].paths[int(rng.integers(len(fr_paths[k].paths)))]
                  for k in targets}
        seeds.append(FrDesign.from_paths(choice))
    return seeds


def _concat_design(net: RoadNetwork, design: FrDesign) -> np.ndarray:
    return np.concatenate([design.target_vector(net, k) for k in design.targets])


def _design_from_concat(net: RoadNetwork, targets, y: np.ndarray) -> FrDesign:
    n = net.n_arcs
    paths = {
        k: tuple(int(i) for i in np.flatnonzero(y[pos * n:(pos + 1) * n]))
        for pos, k in enumerate(targets)
    }
    return FrDesign.from_paths(paths)


def outer_walk(net: RoadNetwork, seed: FrDesign, basis: GraverSet, evaluate,
               time_budget: float | None = None) -> WalkResult:
    """Augment one seed to a local optimum of the partial basis.

    ``evaluate`` maps FrDesign -> objective (lower is better) and may raise
    EvaluationError / DisconnectedSourceError to veto a candidate.  The seed
    itself must evaluate.  Objectives along the walk strictly decrease.
    """
    t_start = time.perf_counter()
    bal, rows = flow_balance_matrix(net)
    row_of = {v: r for r, v in enumerate(rows)}
    targets = seed.targets
    n = net.n_arcs
    y = _concat_design(net, seed)
    obj = evaluate(seed)
    evaluations = 1
    accepted = 0
    steps: list[StepRecord] = []
    partial = False

    def feasible(cand: np.ndarray, blocks) -> bool:
        if cand.min() < 0 or cand.max() > 1:
            return False
        for pos in blocks:
            k = targets[pos]
            rhs = np.zeros(len(rows), dtype=int)
            rhs[row_of[k]] = 1
            if not np.array_equal(bal @ cand[pos * n:(pos + 1) * n], rhs):
                return False
        return True

    def log(action, direction, value):
        steps.append(StepRecord(action, direction, value,
                                time.perf_counter() - t_start))

    improved = True
    while improved:
        improved = False
        for vec in basis.vectors:
            if improved:
                break
            arr = np.array(vec, dtype=int)
            blocks = sorted({int(i) // n for i in np.flatnonzero(arr)})
            for sgn in (1, -1):
                if time_budget is not None and \
                        time.perf_counter() - t_start > time_budget:
                    partial = True
                    improved = False
                    break
                g = sgn * arr
                cand = y + g
                if not feasible(cand, blocks):
                    log("reject-infeasible", tuple(g), None)
                    continue
                design = _design_from_concat(net, targets, cand)
                try:
                    value = evaluate(design)
                except (EvaluationError, DisconnectedSourceError):
                    evaluations += 1
                    log("reject-error", tuple(g), None)
                    continue
                evaluations += 1
                if value < obj:
                    y = cand
                    obj = value
                    accepted += 1
                    log("accept", tuple(g), value)
                    improved = True
                    break
                log("reject-worse", tuple(g), value)
            if partial:
                break
        if partial:
            break
    return WalkResult(
        design=_design_from_concat(net, targets, y),
        objective=obj,
        accepted_steps=accepted,
        evaluations=evaluations,
        wall_time=time.perf_counter() - t_start,
        steps=tuple(steps),
        partial=partial,
    )


@dataclass
class MultiSeedResult:
    best: WalkResult
    per_seed: tuple[WalkResult | None, ...]
    failures: dict[int, str]
    seeds_completed: int
    partial: bool


def multi_seed_solve(net: RoadNetwork, seeds, basis: GraverSet, evaluate,
                     time_budget: float | None = None) -> MultiSeedResult:
    """Run the walk from every seed; incumbent is the minimum objective.

    Per-seed evaluator failures are recorded and skipped.  When a wall-clock
    budget runs out, walks already finished are kept and the result is
    flagged partial.  The incumbent does not depend on seed order (ties break
    on the reserved-arc tuple).
    """
    if not seeds:
        raise ValueError("need at least one seed")
    t_start = time.perf_counter()
    results: list[WalkResult | None] = []
    failures: dict[int, str] = {}
    partial = False
    for idx, seed in enumerate(seeds):
        remaining = None
        if time_budget is not None:
            remaining = time_budget - (time.perf_counter() - t_start)
            if remaining <= 0:
                partial = True
                results.extend([None] * (len(seeds) - idx))
                break
        try:
            res = outer_walk(net, seed, basis, evaluate, time_budget=remaining)
        except (EvaluationError, DisconnectedSourceError) as exc:
            failures[idx] = str(exc)
            results.append(None)
            continue
        results.append(res)
        if res.partial:
            partial = True
    done = [r for r in results if r is not None]
    if not done:
        raise EvaluationError("every seed failed to evaluate")
    best = min(done, key=lambda r: (r.objective, r.design.reserved))
    completed = sum(1 for r in done if not r.partial)
    return MultiSeedResult(
        best=best,
        per_seed=tuple(results),
        failures=failures,
        seeds_completed=completed,
        partial=partial,
    )
