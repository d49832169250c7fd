"""Discrete-time simulation and rate control for a shared entanglement
generation switch: max-weight resource scheduling, queue-identified price
updates, a static allocation oracle, and the experiment runner."""

from .engine import ScenarioEvent, SlotMetrics, SlotState, ensemble, run, sample_sessions, step
from .errors import ConfigError, ConvergenceError, DimensionError, EgsError
from .model import (
    CapacityVerdict,
    EgsConfig,
    SessionId,
    SessionTable,
    capacity_check,
    default_lam_min,
    feasible_rate_region_clamp,
    lambda_egs,
    slater_check,
    total_service_rate,
)
from .numopt import NumProblem, NumSolution, dual_objective, solve_dual, verify_kkt
from .rcp import (
    LogUtility,
    PriceVector,
    UtilityFunction,
    central_price_update,
    check_step_size_bound,
    node_price_update,
    rate_update,
    session_price,
)
from .scheduler import Schedule, brute_force_schedule, max_weight_schedule
from .traffic import DemandBatch, RngStream, TrafficStreams, draw_demands, draw_successes

__version__ = "0.1.0"
