"""Whittle index computation and two-timescale Q-learning for restless bandits."""

__version__ = "0.1.0"

from .exceptions import (
    ContractError,
    ConvergenceError,
    DivergenceError,
    NonIndexableError,
    ValidationError,
)
from .learner import LearnerState, Observation, QWhittleLearner
from .model import ArmModel, BanditInstance, SimState, circulant_arm, restart_arm, step, validate
from .oracle import (
    IndexTable,
    OracleSolution,
    WhittleIndexSolver,
    rvi_solve,
    scaling_check,
    scan_indexability,
    whittle_index,
    whittle_indices,
)
from .policy import PolicyConfig, WhittleIndexPolicy, select_actions
from .schedules import StepSchedule, a_of, b_of

__all__ = [
    "ArmModel",
    "BanditInstance",
    "ContractError",
    "ConvergenceError",
    "DivergenceError",
    "IndexTable",
    "LearnerState",
    "NonIndexableError",
    "Observation",
    "OracleSolution",
    "PolicyConfig",
    "QWhittleLearner",
    "SimState",
    "StepSchedule",
    "ValidationError",
    "WhittleIndexPolicy",
    "WhittleIndexSolver",
    "a_of",
    "b_of",
    "circulant_arm",
    "restart_arm",
    "rvi_solve",
    "scaling_check",
    "scan_indexability",
    "select_actions",
    "step",
    "validate",
    "whittle_index",
    "whittle_indices",
]
