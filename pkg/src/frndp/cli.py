"""Experiment driver: instance generation, solver runs, results tables, traces.

Every run writes, under the output directory: the resolved configuration
(JSON), a ``results.csv`` with one row per reported objective, and a trace
file (per-seed walk progress for the nested solver, incumbent updates for
branch-and-bound, arc flows for a plain equilibrium solve).  Identical specs
with the same seed reproduce identical CSVs apart from the wall-clock
columns.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import asdict, dataclass
from itertools import product
from pathlib import Path

from .bilevel import GagaConfig, run_gaga
from .bnb import bnb_solve
from .equilibrium import DisconnectedSourceError, link_times, solve_ue
from .network import (
    FrDesign,
    GenerationError,
    InstanceFormatError,
    RoadNetwork,
    apply_reservation,
    empty_design,
    generate_random_instance,
    load_instance,
    save_instance,
)
from .paths import NoPathError, PathCountExceeded, all_simple_paths

RESULT_COLUMNS = (
    "instance", "solver", "setting", "objective_gaga_only", "objective_final",
    "time_paths_s", "time_graver_s", "time_walk_s", "time_leblanc_s",
    "seeds_completed",
)


class DesignCountExceeded(RuntimeError):
    """More feasible designs than the enumeration cap allows."""


def enumerate_designs(net: RoadNetwork, cap: int = 10000,
                      rel_tol: float = 1e-3) -> list[tuple[FrDesign, float]]:
    """Exhaustive ground truth: every combination of one simple entry path per
    FR-demand node, priced by a cold equilibrium solve.

    Designs that disconnect the evacuees get objective +inf.  Raises
    DesignCountExceeded when the combination count passes ``cap``.
    """
    per_target = {}
    for k in net.fr_nodes:
        try:
            sample = all_simple_paths(net, k, cap=cap)
        except PathCountExceeded as exc:
            raise DesignCountExceeded(str(exc)) from exc
        if not sample.paths:
            raise NoPathError(f"FR node {k} cannot reach an exit")
        per_target[k] = sample.paths
    targets = sorted(per_target)
    count = math.prod(len(per_target[k]) for k in targets)
    if count > cap:
        raise DesignCountExceeded(f"{count} feasible designs exceed cap {cap}")
    out = []
    for combo in product(*(per_target[k] for k in targets)):
        design = FrDesign.from_paths(dict(zip(targets, combo)))
        eff = apply_reservation(net, design)
        try:
            obj = solve_ue(eff, rel_tol=rel_tol).total_time
        except DisconnectedSourceError:
            obj = math.inf
        out.append((design, obj))
    return out


@dataclass
class ExperimentSpec:
    solver: str                       # gaga | bnb | enumerate | ue-only
    out_dir: str
    instance_path: str | None = None
    gen_n: int | None = None
    gen_p: float | None = None
    seed: int = 0
    n_fr: int | None = None
    gaga: GagaConfig | None = None
    time_limit: float | None = None
    use_bounds: bool = False
    enum_cap: int = 10000

    def __post_init__(self):
        if self.solver not in ("gaga", "bnb", "enumerate", "ue-only"):
            raise ValueError(f"unknown solver {self.solver!r}")
        file_given = self.instance_path is not None
        gen_given = self.gen_n is not None or self.gen_p is not None
        if file_given == gen_given:
            raise ValueError("give exactly one of --instance or (--n, --p)")
        if gen_given and (self.gen_n is None or self.gen_p is None):
            raise ValueError("generator needs both --n and --p")


def _load_or_generate(spec: ExperimentSpec) -> tuple[RoadNetwork, str]:
    if spec.instance_path is not None:
        return load_instance(spec.instance_path), Path(spec.instance_path).stem
    net = generate_random_instance(spec.gen_n, spec.gen_p, spec.seed, n_fr=spec.n_fr)
    return net, f"n{spec.gen_n}-p{spec.gen_p}-s{spec.seed}"


def _write_results(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row.get(c, "") for c in RESULT_COLUMNS})


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return "inf"
    return f"{x:.6f}"


def run_experiment(spec: ExperimentSpec) -> int:
    """Run one solver invocation and write its artifacts; returns exit status."""
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        net, instance_id = _load_or_generate(spec)
    except (InstanceFormatError, GenerationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if spec.instance_path is None:
        save_instance(net, out / f"{instance_id}.json")

    resolved = {
        "spec": {k: v for k, v in asdict(spec).items() if k != "gaga"},
        "gaga": None if spec.gaga is None else asdict(spec.gaga),
        "instance": instance_id,
    }
    with open(out / "resolved_config.json", "w") as fh:
        json.dump(resolved, fh, indent=1, default=str)
        fh.write("\n")

    rows: list[dict] = []
    try:
        if spec.solver == "gaga":
            cfg = spec.gaga if spec.gaga is not None else GagaConfig(rng_seed=spec.seed)
            result = run_gaga(net, cfg)
            rows.append({
                "instance": instance_id,
                "solver": "gaga",
                "setting": cfg.setting_name,
                "objective_gaga_only": _fmt(result.gaga_only_objective),
                "objective_final": _fmt(result.gaga_leblanc_objective),
                "time_paths_s": f"{result.timing.paths_s:.3f}",
                "time_graver_s": f"{result.timing.graver_s:.3f}",
                "time_walk_s": f"{result.timing.walk_s:.3f}",
                "time_leblanc_s": f"{result.timing.refine_s:.3f}",
                "seeds_completed": result.seeds_completed,
            })
            with open(out / "seed_trace.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["seed", "step", "objective", "wall_time_s"])
                for outcome in result.per_seed:
                    if outcome.walk is None:
                        continue
                    step = 0
                    for rec in outcome.walk.steps:
                        if rec.action == "accept":
                            step += 1
                            writer.writerow([outcome.seed_index, step,
                                             _fmt(rec.objective), f"{rec.elapsed:.4f}"])
        elif spec.solver == "bnb":
            limit = spec.time_limit if spec.time_limit is not None else 600.0
            result = bnb_solve(net, time_limit=limit, use_bounds=spec.use_bounds)
            if result.incumbent is None:
                print("error: no incumbent within the time limit", file=sys.stderr)
                return 3
            rows.append({
                "instance": instance_id,
                "solver": "bnb",
                "setting": "BB",
                "objective_gaga_only": "",
                "objective_final": _fmt(result.objective),
                "time_walk_s": f"{result.wall_time:.3f}",
                "seeds_completed": result.nodes_explored,
            })
            with open(out / "incumbent_trace.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["wall_time_s", "objective", "nodes_explored"])
                for wall, obj, nodes in result.trace:
                    writer.writerow([f"{wall:.4f}", _fmt(obj), nodes])
        elif spec.solver == "enumerate":
            table = enumerate_designs(net, cap=spec.enum_cap)
            for design, obj in table:
                rows.append({
                    "instance": instance_id,
                    "solver": "enumerate",
                    "setting": ",".join(str(a) for a in design.reserved),
                    "objective_gaga_only": "",
                    "objective_final": _fmt(obj),
                })
        else:  # ue-only
            eff = apply_reservation(net, empty_design(net))
            t0 = time.perf_counter()
            result = solve_ue(eff)
            elapsed = time.perf_counter() - t0
            rows.append({
                "instance": instance_id,
                "solver": "ue-only",
                "setting": "UE",
                "objective_gaga_only": "",
                "objective_final": _fmt(result.total_time),
                "time_leblanc_s": f"{elapsed:.3f}",
            })
            times = link_times(eff, result.flows.arc_flow)
            with open(out / "flows.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["from", "to", "flow", "time"])
                for idx, (i, j) in enumerate(net.arcs):
                    writer.writerow([i, j, _fmt(float(result.flows.arc_flow[idx])),
                                     _fmt(float(times[idx]))])
    except (DisconnectedSourceError, NoPathError, DesignCountExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    _write_results(out / "results.csv", rows)
    for row in rows:
        print(f"{row['instance']} {row['solver']} [{row['setting']}] "
              f"objective={row['objective_final']}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frndp",
        description="Lane-reservation network design experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a random instance file")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--p", type=float, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--n-fr", type=int, default=None)
    gen.add_argument("--out", required=True)

    solve = sub.add_parser("solve", help="run a solver on an instance")
    solve.add_argument("solver", choices=["gaga", "bnb", "enumerate", "ue-only"])
    solve.add_argument("--instance", default=None)
    solve.add_argument("--n", type=int, default=None)
    solve.add_argument("--p", type=float, default=None)
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--n-fr", type=int, default=None)
    solve.add_argument("--n-paths", type=int, default=25)
    solve.add_argument("--n-samples", type=int, default=10000)
    solve.add_argument("--m", type=int, default=10)
    solve.add_argument("--path-backend", choices=["sa", "yens"], default="sa")
    solve.add_argument("--inner-tol", type=float, default=None)
    solve.add_argument("--normalize", action="store_true")
    solve.add_argument("--sa-sweeps", type=int, default=400)
    solve.add_argument("--time-limit", type=float, default=None)
    solve.add_argument("--use-bounds", action="store_true")
    solve.add_argument("--enum-cap", type=int, default=10000)
    solve.add_argument("--out-dir", default="results")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "generate":
        try:
            net = generate_random_instance(args.n, args.p, args.seed, n_fr=args.n_fr)
        except (ValueError, GenerationError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        save_instance(net, args.out)
        print(f"wrote {args.out}: {len(net.nodes)} nodes, {net.n_arcs} arcs, "
              f"{len(net.exit_nodes)} exits")
        return 0

    gaga_cfg = None
    if args.solver == "gaga":
        gaga_cfg = GagaConfig(
            n_paths=args.n_paths,
            n_samples=args.n_samples,
            m=args.m,
            inner_tolerance=args.inner_tol,
            normalized=args.normalize,
            path_backend=args.path_backend,
            rng_seed=args.seed,
            time_budget=args.time_limit,
            sa_sweeps=args.sa_sweeps,
        )
    try:
        spec = ExperimentSpec(
            solver=args.solver,
            out_dir=args.out_dir,
            instance_path=args.instance,
            gen_n=args.n,
            gen_p=args.p,
            seed=args.seed,
            n_fr=args.n_fr,
            gaga=gaga_cfg,
            time_limit=args.time_limit,
            use_bounds=args.use_bounds,
            enum_cap=args.enum_cap,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run_experiment(spec)


if __name__ == "__main__":
    sys.exit(main())
