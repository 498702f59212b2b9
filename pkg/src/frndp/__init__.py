"""Lane-reservation network design for first responders.

Pick road lanes to reserve so every FR-demand node connects to an entry
point while the public's total evacuation time under selfish routing stays
minimal.  The package provides the network model, a Frank-Wolfe user
equilibrium / system optimum solver, feasible-path sampling (penalty QUBO +
simulated annealing, or Yen's k-shortest paths), partial Graver bases from
solution differences, the nested bi-level augmentation heuristic, and a
branch-and-bound baseline.
"""

from .bilevel import (
    GagaConfig,
    GagaResult,
    InnerResult,
    NoOpenPathError,
    build_inner_basis,
    build_inner_seed,
    inner_gama_ue,
    normalize_demands,
    run_gaga,
)
from .bnb import (
    BnbNode,
    BnbResult,
    bnb_solve,
    primal_heuristic,
    select_branch_link,
    so_dual_bound,
)
from .cli import DesignCountExceeded, ExperimentSpec, enumerate_designs, run_experiment
from .equilibrium import (
    DisconnectedSourceError,
    FlowAssignment,
    UeResult,
    beckmann_objective,
    bpr_time,
    decompose_paths,
    link_times,
    solve_so,
    solve_ue,
    solve_ue_for_design,
    total_evac_time,
    wardrop_gaps,
)
from .graver import (
    GraverSet,
    augment,
    conformal_filter,
    integer_kernel_basis,
    is_conformal,
    lattice_from_differences,
    load_graver,
    pottier_graver,
    save_graver,
    sign_canonical,
)
from .network import (
    EffectiveNetwork,
    FrDesign,
    GenerationError,
    InstanceFormatError,
    RoadNetwork,
    apply_reservation,
    empty_design,
    flow_balance_matrix,
    four_node_network,
    generate_random_instance,
    load_instance,
    save_instance,
)
from .paths import (
    NoFeasibleSampleError,
    NoPathError,
    PathSample,
    QuboProblem,
    all_simple_paths,
    build_path_qubo,
    extract_simple_path,
    load_path_samples,
    sample_feasible,
    sample_paths,
    save_path_samples,
    yen_k_shortest,
)
from .walks import (
    EvaluationError,
    MultiSeedResult,
    WalkResult,
    build_outer_basis,
    build_seeds,
    multi_seed_solve,
    outer_walk,
)

__version__ = "0.1.0"
