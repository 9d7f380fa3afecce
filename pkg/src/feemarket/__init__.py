"""feemarket: numerical laboratory for a decentralized record-keeping
fee market with difficulty-driven throughput adjustment.

Submodules
----------
numerics   root finding, quadrature, log-derivatives
demand     wait times, fee bids, average-fee curve and its elasticity
supply     miner production, free entry, difficulty
dynamics   update rules, trajectories, shock elasticities, welfare
queue_mc   discrete-event Monte Carlo validation of the wait-time formula
cli        scenario files and command-line experiments
"""

from .numerics import (ConvergenceError, EvaluationError, Tolerance,
                       DEFAULT_TOL, integrate, log_derivative, solve_alpha)
from .demand import (CongestionOverflowError, CongestionPoint, FeeSchedule,
                     WaitCostDistribution, epsilon, epsilon_bar, fee,
                     fee_schedule, psi, psi_via_fees, wait_time)
from .supply import (MarketParams, SupplyState, best_response_pool_size,
                     difficulty, equilibrium_miners, hash_rate)
from .dynamics import (MarketState, ShockResult, Trajectory, UpdateRule,
                       make_state, pegged_target_difficulty, shock_elasticity,
                       simulate, step, welfare)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError", "EvaluationError", "Tolerance", "DEFAULT_TOL",
    "integrate", "log_derivative", "solve_alpha",
    "CongestionOverflowError", "CongestionPoint", "FeeSchedule",
    "WaitCostDistribution", "epsilon", "epsilon_bar", "fee", "fee_schedule",
    "psi", "psi_via_fees", "wait_time",
    "MarketParams", "SupplyState", "best_response_pool_size", "difficulty",
    "equilibrium_miners", "hash_rate",
    "MarketState", "ShockResult", "Trajectory", "UpdateRule", "make_state",
    "pegged_target_difficulty", "shock_elasticity", "simulate", "step",
    "welfare",
    "__version__",
]
