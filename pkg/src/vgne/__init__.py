"""Variational equilibrium seeking for aggregative games with affine coupling.

Full-information and fully-distributed primal-dual iterations, online
tracking for drifting games, and a peer-to-peer energy market benchmark.
"""

from .distributed import (
    AgentState,
    NetworkState,
    compact_step,
    distributed_init,
    distributed_round,
    invariance_check,
    lyapunov,
    measure_eta,
    run_rounds,
    tune_alpha,
)
from .exceptions import (
    ContractViolation,
    DegenerateGame,
    DivergenceError,
    InadmissibleStep,
    MetricConstructionError,
    NoStableStep,
    NotStronglyMonotone,
)
from .full import SolverConfig, SolveResult, pd_step, semidecentralized_round, solve
from .game import (
    Game,
    GameConstants,
    PrimalDualPoint,
    aggregate,
    estimate_constants,
    extended_block,
    pseudo_gradient,
    residual,
)
from .graphs import (
    CommGraph,
    GraphSchedule,
    alternating_matchings,
    complete_graph,
    metropolis_weights,
    ring_graph,
)
from .metric import (
    Metric,
    admissible_window,
    build_metric,
    contraction_factor,
    default_step,
    kkt_apply,
    solve_affine_kkt,
)
from .online import (
    GameSequence,
    measure_drift,
    online_distributed_step,
    online_full_step,
    tracking_bound_distributed,
    tracking_bound_full,
)

__version__ = "0.1.0"
