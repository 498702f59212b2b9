import numpy as np
import pytest

from frndp import (
    EvaluationError,
    FrDesign,
    RoadNetwork,
    apply_reservation,
    build_outer_basis,
    build_seeds,
    multi_seed_solve,
    outer_walk,
    solve_ue,
    yen_k_shortest,
)
from conftest import N4_DESIGNS, N4_KERNEL, N4_TOTALS


def _fr_paths(n4):
    return {0: yen_k_shortest(n4, 0, 4)}


def _ue_evaluator(n4, log=None):
    def evaluate(design):
        if log is not None:
            log.append(design)
        return solve_ue(apply_reservation(n4, design)).total_time
    return evaluate


def test_outer_basis_matches_kernel(n4):
    basis = build_outer_basis(n4, _fr_paths(n4))
    assert set(basis.vectors) == N4_KERNEL    # single target: block = arc space


def test_build_seeds_single_path_choice(n4):
    paths = _fr_paths(n4)
    for seed in range(16):
        designs = build_seeds(paths, 1, seed)
        assert len(designs) == 1
        assert designs[0].is_feasible(n4)
    # some seed picks the direct route
    picks = {build_seeds(paths, 1, s)[0].reserved for s in range(16)}
    assert (2,) in picks


def test_build_seeds_shared_arc():
    # two targets funnel through the same final arc (2, 3)
    net = RoadNetwork(
        nodes=(0, 1, 2, 3), arcs=((0, 2), (1, 2), (2, 3)),
        capacity=np.ones(3) * 10, free_flow=np.ones(3),
        lanes=np.ones(3, dtype=int), demand={0: 5, 1: 5, 2: 0, 3: 0},
        fr_nodes=(0, 1), exit_nodes=(3,))
    paths = {k: yen_k_shortest(net, k, 2) for k in (0, 1)}
    design = build_seeds(paths, 1, 0)[0]
    assert design.reserved == (0, 1, 2)       # arc (2,3) reserved once
    assert 2 in design.arcs_for(0) and 2 in design.arcs_for(1)


def test_build_seeds_validation(n4):
    with pytest.raises(ValueError, match="M must be"):
        build_seeds(_fr_paths(n4), 0, 0)
    from frndp import PathSample
    with pytest.raises(ValueError, match="no paths"):
        build_seeds({0: PathSample(0, ())}, 1, 0)


def test_walk_reaches_optimum_from_direct_route(n4):
    basis = build_outer_basis(n4, _fr_paths(n4))
    log = []
    res = outer_walk(n4, N4_DESIGNS["3-0"], basis, _ue_evaluator(n4, log))
    assert res.design.reserved == (0, 4)
    assert res.objective == pytest.approx(N4_TOTALS["3-1-0"], rel=0.01)
    accepts = [s for s in res.steps if s.action == "accept"]
    assert len(accepts) == res.accepted_steps == 1
    assert accepts[0].direction == (1, 0, -1, 0, 1, 0)
    # every candidate that was priced satisfied the balance system
    assert all(d.is_feasible(n4) for d in log)


def test_walk_fixed_point(n4):
    basis = build_outer_basis(n4, _fr_paths(n4))
    res = outer_walk(n4, N4_DESIGNS["3-1-0"], basis, _ue_evaluator(n4))
    assert res.accepted_steps == 0
    assert res.design.reserved == (0, 4)


def test_walk_objective_strictly_decreasing(n4):
    basis = build_outer_basis(n4, _fr_paths(n4))
    res = outer_walk(n4, N4_DESIGNS["3-2-1-0"], basis, _ue_evaluator(n4))
    values = [s.objective for s in res.steps if s.action == "accept"]
    assert all(b < a for a, b in zip(values, values[1:]))
    assert res.design.reserved == (0, 4)


def test_walk_matches_enumeration_minimum(n4):
    from frndp import enumerate_designs
    table = enumerate_designs(n4)
    best = min(obj for _, obj in table)
    basis = build_outer_basis(n4, _fr_paths(n4))
    for name in N4_DESIGNS:
        res = outer_walk(n4, N4_DESIGNS[name], basis, _ue_evaluator(n4))
        assert res.objective == pytest.approx(best, rel=1e-9)


def test_multi_seed_reduces_to_single_walk(n4):
    basis = build_outer_basis(n4, _fr_paths(n4))
    seed = N4_DESIGNS["3-0"]
    single = outer_walk(n4, seed, basis, _ue_evaluator(n4))
    multi = multi_seed_solve(n4, [seed], basis, _ue_evaluator(n4))
    assert multi.best.design == single.design
    assert multi.best.objective == single.objective
    assert multi.seeds_completed == 1


def test_multi_seed_incumbent(n4):
    basis = build_outer_basis(n4, _fr_paths(n4))
    seeds = [N4_DESIGNS[name] for name in sorted(N4_DESIGNS)]
    evaluate = _ue_evaluator(n4)
    res = multi_seed_solve(n4, seeds, basis, evaluate)
    assert res.best.objective == pytest.approx(N4_TOTALS["3-1-0"], rel=0.01)
    assert res.best.objective <= min(evaluate(s) for s in seeds) + 1e-9
    # incumbent does not depend on the processing order
    rev = multi_seed_solve(n4, seeds[::-1], basis, evaluate)
    assert rev.best.design == res.best.design
    assert rev.best.objective == res.best.objective


def test_multi_seed_records_failures(n4):
    basis = build_outer_basis(n4, _fr_paths(n4))

    calls = {"n": 0}

    def flaky(design):
        calls["n"] += 1
        if design.reserved == (1, 5):
            raise EvaluationError("vetoed")
        return solve_ue(apply_reservation(n4, design)).total_time

    seeds = [N4_DESIGNS["3-2-0"], N4_DESIGNS["3-0"]]
    res = multi_seed_solve(n4, seeds, basis, flaky)
    assert 0 in res.failures                  # first seed itself failed
    assert res.best.design.reserved == (0, 4)


def test_multi_seed_requires_seeds(n4):
    basis = build_outer_basis(n4, _fr_paths(n4))
    with pytest.raises(ValueError):
        multi_seed_solve(n4, [], basis, _ue_evaluator(n4))
