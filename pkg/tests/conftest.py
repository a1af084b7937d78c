"""Shared fixtures: jit warm-up, a shared exact oracle, and small helpers."""

import numpy as np
import pytest

from coevotsp.instances import InstanceSpace, TspInstance, gen_random_instance
from coevotsp.oracle import ExactOracle
from coevotsp.solver import Budget, SolverConfig, solve


def make_instance(rng: np.random.Generator, n: int = 6, grid: int = 1000,
                  id: str = "") -> TspInstance:
    return gen_random_instance(InstanceSpace(n, grid), rng, id)


@pytest.fixture(scope="session")
def warm():
    """Compile the jitted kernels once so timed tests measure work, not
    compilation."""
    rng = np.random.default_rng(0)
    ins = make_instance(rng, n=6)
    solve(SolverConfig(0, 0, 0, 0, 0), ins, 0, Budget(steps=2))
    oracle = ExactOracle()
    oracle.optimum(ins)
    return True


@pytest.fixture(scope="session")
def shared_oracle(warm) -> ExactOracle:
    """One memoizing oracle for the whole session; optima are pure
    functions of instance content, so sharing never leaks state."""
    return ExactOracle()
