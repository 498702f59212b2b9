"""User equilibrium vs system optimum on a random instance.

Generates a 10-node network, solves both assignment problems, decomposes the
equilibrium into per-source paths, and reports how even the used-path times
are (the selfish-routing signature).
"""

import numpy as np

from frndp import (
    apply_reservation,
    decompose_paths,
    empty_design,
    generate_random_instance,
    link_times,
    solve_so,
    solve_ue,
    wardrop_gaps,
)
from frndp.paths import path_nodes

net = generate_random_instance(10, 0.5, rng_seed=7)
print(f"{len(net.nodes)} nodes, {net.n_arcs} arcs, "
      f"{sum(net.demand.values())} evacuating vehicles, exits {net.exit_nodes}")

eff = apply_reservation(net, empty_design(net))
ue = solve_ue(eff, rel_tol=0.0, max_iter=20000)
so = solve_so(eff)
print(f"\nuser equilibrium total time : {ue.total_time:12.1f}  "
      f"({ue.iterations} iterations)")
print(f"system optimal total time   : {so.total_time:12.1f}")
print(f"price of anarchy            : {ue.total_time / so.total_time:12.4f}")

times = link_times(eff, ue.flows.arc_flow)
print("\nbusiest arcs (flow / capacity):")
order = np.argsort(-ue.flows.arc_flow / eff.capacity)[:5]
for idx in order:
    i, j = net.arcs[idx]
    print(f"  ({i:2d},{j:2d})  flow {ue.flows.arc_flow[idx]:7.1f}  "
          f"cap {eff.capacity[idx]:6.1f}  time {times[idx]:9.2f}")

print("\nper-source path split (first three sources):")
decomposition = decompose_paths(eff, ue.flows)
for s in list(decomposition)[:3]:
    for arcs, amount in decomposition[s]:
        if amount < 1e-3 * net.demand[s]:
            continue
        t = sum(times[i] for i in arcs)
        print(f"  source {s}: {amount:7.1f} veh on {path_nodes(net, arcs, s)} "
              f" time {t:8.2f}")
gaps = wardrop_gaps(eff, ue)
print(f"\nworst used-path excess over the shortest: "
      f"{100 * max(gaps.values()):.2f}%")
