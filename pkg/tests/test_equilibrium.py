import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from frndp import (
    apply_reservation,
    beckmann_objective,
    bpr_time,
    decompose_paths,
    empty_design,
    generate_random_instance,
    link_times,
    solve_so,
    solve_ue,
    total_evac_time,
    wardrop_gaps,
)
from frndp.equilibrium import DisconnectedSourceError, FlowAssignment
from conftest import N4_DESIGNS, N4_TOTALS, two_route_network


def _eff(n4, name):
    return apply_reservation(n4, N4_DESIGNS[name])


def test_bpr_free_flow():
    assert bpr_time(0.0, 2.5, 40.0) == 2.5


def test_bpr_reference_values():
    # direct-route arc and the two-arc route of the fixture's best design
    assert bpr_time(61, 1.0, 35) == pytest.approx(2.38, abs=0.005)
    assert bpr_time(39, 1.0, 30) + bpr_time(39, 1.0, 45) == pytest.approx(2.51, abs=0.005)


def test_bpr_closed_arc_rejected():
    with pytest.raises(ValueError, match="closed"):
        bpr_time(1.0, 1.0, 0.0)


def test_beckmann_zero_flow(n4):
    eff = apply_reservation(n4, empty_design(n4))
    assert beckmann_objective(np.zeros(6), eff) == 0.0


def test_beckmann_at_capacity():
    net = two_route_network()
    eff = apply_reservation(net, empty_design(net))
    x = np.array([30.0, 0.0])
    # integral of T(1 + .15 (v/c)^4) from 0 to c is 1.03 * T * c
    assert beckmann_objective(x, eff) == pytest.approx(1.03 * 30.0)


def test_beckmann_matches_quadrature(n4):
    eff = _eff(n4, "3-1-0")
    x = np.array([0.0, 39.0, 61.0, 0.0, 0.0, 39.0])
    expected = 0.0
    for idx in eff.open_arcs():
        t, c = eff.free_flow[idx], eff.capacity[idx]
        val, _ = quad(lambda v: t * (1 + 0.15 * (v / c) ** 4), 0, x[idx])
        expected += val
    assert beckmann_objective(x, eff) == pytest.approx(expected, rel=1e-9)


def test_ue_flows_near_reference(n4):
    res = solve_ue(_eff(n4, "3-1-0"), rel_tol=1e-3)
    assert res.converged
    assert np.all(np.abs(res.flows.arc_flow - [0, 39, 61, 0, 0, 39]) <= 2.0)
    assert res.total_time == pytest.approx(N4_TOTALS["3-1-0"], rel=0.01)


def test_ue_single_route(n4):
    res = solve_ue(_eff(n4, "3-2-1-0"), rel_tol=1e-3)
    assert res.flows.arc_flow.tolist() == [0, 0, 100, 0, 0, 0]
    assert res.total_time == pytest.approx(N4_TOTALS["3-2-1-0"], rel=0.01)
    assert res.iterations == 0


def test_ue_zero_demand(n4):
    quiet = generate_random_instance(4, 0.9, 1)
    quiet = type(quiet)(
        nodes=quiet.nodes, arcs=quiet.arcs, capacity=quiet.capacity,
        free_flow=quiet.free_flow, lanes=quiet.lanes,
        demand={v: 0 for v in quiet.nodes}, fr_nodes=quiet.fr_nodes,
        exit_nodes=quiet.exit_nodes, coords=quiet.coords)
    res = solve_ue(apply_reservation(quiet, empty_design(quiet)))
    assert res.total_time == 0.0
    assert res.iterations == 0
    assert res.converged


def test_ue_disconnected_source_raises(n4):
    # reserving every arc out of node 0 leaves no evacuation route
    from frndp import FrDesign
    eff = apply_reservation(n4, FrDesign((0,), ((0, 4),), reserved=(0, 1, 2, 4)))
    with pytest.raises(DisconnectedSourceError):
        solve_ue(eff)


def test_two_route_analytic_equilibrium():
    net = two_route_network(60)
    eff = apply_reservation(net, empty_design(net))
    t1 = lambda x: 1.0 * (1 + 0.15 * (x / 30.0) ** 4)
    t2 = lambda x: 1.3 * (1 + 0.15 * (x / 20.0) ** 4)
    x_star = brentq(lambda x: t1(x) - t2(60 - x), 0.0, 60.0, xtol=1e-12)
    res = solve_ue(eff, rel_tol=1e-10, max_iter=5000)
    assert abs(res.flows.arc_flow[0] - x_star) / x_star < 1e-4
    # equal path costs at equilibrium
    assert t1(res.flows.arc_flow[0]) == pytest.approx(t2(res.flows.arc_flow[1]), rel=1e-3)


def test_total_time_examples(n4):
    eff = _eff(n4, "3-1-0")
    x = np.array([0.0, 39.0, 61.0, 0.0, 0.0, 39.0])
    assert total_evac_time(x, eff) == pytest.approx(243.43, abs=0.5)
    eff = _eff(n4, "3-0")
    x = np.array([42.0, 58.0, 0.0, 14.0, 28.0, 72.0])
    assert total_evac_time(x, eff) == pytest.approx(507.56, abs=0.5)
    assert total_evac_time(np.zeros(6), eff) == 0.0


def test_so_lower_bounds_ue(n4):
    eff = _eff(n4, "3-0")
    ue = solve_ue(eff, rel_tol=1e-3)
    so = solve_so(eff, rel_tol=1e-3)
    assert so.total_time <= N4_TOTALS["3-0"] * 1.01
    assert so.total_time <= ue.total_time + 1e-6


def test_so_equals_ue_on_single_route(n4):
    eff = _eff(n4, "3-2-1-0")
    assert solve_so(eff).total_time == pytest.approx(solve_ue(eff).total_time)


def test_objective_traces_monotone(n4):
    effs = [_eff(n4, name) for name in N4_DESIGNS]
    for seed in range(3):
        net = generate_random_instance(10, 0.5, seed)
        effs.append(apply_reservation(net, empty_design(net)))
    for eff in effs:
        for solver in (solve_ue, solve_so):
            trace = solver(eff).objective_trace
            assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))


def test_conservation_residuals(n4):
    for name in N4_DESIGNS:
        eff = _eff(n4, name)
        res = solve_ue(eff)
        for v, r in res.flows.conservation_residuals(eff).items():
            assert abs(r) <= 1e-6 * max(n4.demand.get(v, 0), 1)


def test_warm_start_projection(n4):
    cold_open = solve_ue(_eff(n4, "3-0"))
    eff = _eff(n4, "3-1-0")          # closes arcs that carried flow
    warm = solve_ue(eff, warm_start=cold_open.flows)
    assert not np.any(warm.flows.arc_flow[eff.closed] > 0)
    for v, r in warm.flows.conservation_residuals(eff).items():
        assert abs(r) <= 1e-6 * max(n4.demand.get(v, 0), 1)
    cold = solve_ue(eff)
    assert warm.total_time == pytest.approx(cold.total_time, rel=0.02)


def test_decomposition_and_wardrop(n4):
    eff = _eff(n4, "3-0")
    res = solve_ue(eff, rel_tol=0.0, max_iter=20000)
    paths = decompose_paths(eff, res.flows)[0]
    assert sum(a for _, a in paths) == pytest.approx(100.0)
    for arcs, _ in paths:
        assert n4.arcs[arcs[-1]][1] in n4.exit_nodes
    gaps = wardrop_gaps(eff, res)
    assert max(gaps.values()) <= 0.05


def test_bad_warm_start_falls_back(n4):
    # a warm start missing sources is re-routed, not trusted
    eff = _eff(n4, "3-1-0")
    bogus = FlowAssignment(np.zeros(6), {})
    res = solve_ue(eff, warm_start=bogus)
    assert res.total_time == pytest.approx(N4_TOTALS["3-1-0"], rel=0.01)
