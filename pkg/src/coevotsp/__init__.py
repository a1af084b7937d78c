"""Coevolutionary training of parallel TSP solver portfolios against
adversarial instance populations.

Public surface: instance substrate (`instances`), parameterized chained
local-search solver (`solver`), exact optimum oracle and excess metric
(`oracle`), applicability measurement (`perf`), the coevolutionary
training loop (`coevo`), the two-stage greedy baseline (`baseline`),
post-run reports (`reports`), and the command-line harness (`cli`).
"""

from .coevo import (
    CycleMemory,
    CycleRecord,
    EvolveAlgParams,
    EvolveInsParams,
    Member,
    RunConfig,
    RunResult,
    run_liangyi,
)
from .errors import (
    CapacityError,
    IntegrityError,
    ParseError,
    StructuralError,
    ValidationError,
)
from .instances import InstanceSpace, TspInstance, gen_random_instance
from .oracle import ExactOracle, brute_force_opt, held_karp_opt, peo
from .perf import EvalStore, MetricSpec, PerformanceMatrix
from .solver import Budget, SolverConfig, Tour, solve

__all__ = [
    "Budget",
    "CapacityError",
    "CycleMemory",
    "CycleRecord",
    "EvalStore",
    "EvolveAlgParams",
    "EvolveInsParams",
    "ExactOracle",
    "InstanceSpace",
    "IntegrityError",
    "Member",
    "MetricSpec",
    "ParseError",
    "PerformanceMatrix",
    "RunConfig",
    "RunResult",
    "SolverConfig",
    "StructuralError",
    "Tour",
    "TspInstance",
    "ValidationError",
    "brute_force_opt",
    "gen_random_instance",
    "held_karp_opt",
    "peo",
    "run_liangyi",
    "solve",
]
