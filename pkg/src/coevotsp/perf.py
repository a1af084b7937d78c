"""Performance measurement: the applicability metric, its aggregation to
portfolios and instance sets, and performance-matrix bookkeeping.

A single algorithm scores 1 on an instance iff its best tour within the
budget is within ``theta`` percent of the exact optimum, else 0. A
portfolio scores the max over its members (all members run in parallel),
and a portfolio's score on an instance set is the aggregate (mean by
default) of its per-instance scores.

All (config, instance) evaluations are memoized: the training loop
re-reads historical results constantly and re-tests survivors, and the
cache makes those re-tests free.
"""

from __future__ import annotations

import csv
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import StructuralError
from .instances import TspInstance
from .oracle import ExactOracle, peo
from .solver import Budget, SolverConfig, solve


@dataclass(frozen=True)
class MetricSpec:
    """Evaluation tunables: budget, applicability threshold, solver seed."""

    budget: Budget = Budget()
    theta: float = 0.05  # percent
    solver_seed: int = 0

    def __post_init__(self):
        if self.theta <= 0:
            raise StructuralError("theta must be positive")


@dataclass(frozen=True)
class EvalResult:
    perf: float
    tour_length: float
    peo: float


class EvalStore:
    """Compute-once cache of per-(config, instance) evaluations."""

    def __init__(self):
        self._cache: dict[tuple, EvalResult] = {}
        self._lock = threading.Lock()
        self.requests = 0    # cells asked for (paper-style accounting)
        self.solver_runs = 0  # actual solver invocations (cache misses)

    def evaluate(self, cfg: SolverConfig, ins: TspInstance,
                 spec: MetricSpec, oracle: ExactOracle) -> EvalResult:
        key = (cfg.genes, ins.content_key, spec.budget.key,
               spec.solver_seed, spec.theta)
        with self._lock:
            self.requests += 1
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        opt = oracle.optimum(ins)
        tour = solve(cfg, ins, spec.solver_seed, spec.budget)
        excess = peo(tour.length, opt)
        res = EvalResult(1.0 if excess <= spec.theta else 0.0,
                         tour.length, excess)
        with self._lock:
            if key not in self._cache:
                self._cache[key] = res
                self.solver_runs += 1
        return res


def perf_alg_instance(cfg: SolverConfig, ins: TspInstance, spec: MetricSpec,
                      oracle: ExactOracle, store: EvalStore) -> float:
    """1 if the configured solver is applicable to the instance, else 0."""
    return store.evaluate(cfg, ins, spec, oracle).perf


def perf_ap_instance(ap: list[SolverConfig], ins: TspInstance,
                     spec: MetricSpec, oracle: ExactOracle,
                     store: EvalStore) -> float:
    """Portfolio performance on one instance: best member performance."""
    if not ap:
        raise StructuralError("empty portfolio")
    return max(perf_alg_instance(cfg, ins, spec, oracle, store) for cfg in ap)


AGGREGATORS = {"mean": lambda values: float(np.mean(values))}


def perf_ap_set(ap: list[SolverConfig], ip: list[TspInstance],
                spec: MetricSpec, oracle: ExactOracle, store: EvalStore,
                aggr: str = "mean") -> float:
    """Aggregate portfolio performance over an instance set."""
    if not ip:
        raise StructuralError("empty instance set")
    values = [perf_ap_instance(ap, ins, spec, oracle, store) for ins in ip]
    return AGGREGATORS[aggr](values)


@dataclass
class PerformanceMatrix:
    """Per-(algorithm, instance) performance values.

    Rows are algorithm ids, columns instance ids; every entry is present.
    """

    row_ids: list[str]
    col_ids: list[str]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.row_ids), len(self.col_ids)):
            raise StructuralError(
                f"matrix shape {self.values.shape} does not match "
                f"{len(self.row_ids)} rows x {len(self.col_ids)} cols"
            )

    def row(self, row_id: str) -> np.ndarray:
        return self.values[self.row_ids.index(row_id)]

    def col_max(self) -> np.ndarray:
        if not self.row_ids:
            raise StructuralError("matrix has no rows")
        return self.values.max(axis=0)

    def set_perf(self, aggr: str = "mean") -> float:
        """P of the whole portfolio on the whole set (mean of column maxima)."""
        return AGGREGATORS[aggr](self.col_max())

    def without_row(self, row_id: str) -> "PerformanceMatrix":
        i = self.row_ids.index(row_id)
        return PerformanceMatrix(
            self.row_ids[:i] + self.row_ids[i + 1:],
            list(self.col_ids),
            np.delete(self.values, i, axis=0),
        )

    def select_rows(self, row_ids: list[str]) -> "PerformanceMatrix":
        idx = [self.row_ids.index(r) for r in row_ids]
        return PerformanceMatrix(list(row_ids), list(self.col_ids),
                                 self.values[idx])

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["algorithm_id"] + list(self.col_ids))
            for rid, row in zip(self.row_ids, self.values):
                w.writerow([rid] + [repr(float(v)) for v in row])


def concat_rows(m: PerformanceMatrix, m_new: PerformanceMatrix
                ) -> PerformanceMatrix:
    """Vertical concatenation (append algorithm rows)."""
    if not m_new.row_ids:
        return m
    if m.col_ids != m_new.col_ids:
        raise StructuralError("row concat: column ids differ")
    return PerformanceMatrix(
        m.row_ids + m_new.row_ids, list(m.col_ids),
        np.vstack([m.values, m_new.values]),
    )


def concat_cols(m: PerformanceMatrix, m_off: PerformanceMatrix
                ) -> PerformanceMatrix:
    """Horizontal concatenation (append instance columns)."""
    if not m_off.col_ids:
        return m
    if m.row_ids != m_off.row_ids:
        raise StructuralError("column concat: row ids differ")
    return PerformanceMatrix(
        list(m.row_ids), m.col_ids + m_off.col_ids,
        np.hstack([m.values, m_off.values]),
    )


def evaluate_matrix(ap: list[tuple[str, SolverConfig]],
                    ip: list[TspInstance], spec: MetricSpec,
                    oracle: ExactOracle, store: EvalStore,
                    workers: int = 1) -> PerformanceMatrix:
    """Fill the full performance matrix; cell order never affects values."""
    row_ids = [rid for rid, _ in ap]
    col_ids = [ins.id for ins in ip]
    values = np.zeros((len(ap), len(ip)))
    cells = [(i, j) for i in range(len(ap)) for j in range(len(ip))]

    def fill(cell):
        i, j = cell
        values[i, j] = perf_alg_instance(ap[i][1], ip[j], spec, oracle, store)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, cells))
    else:
        for cell in cells:
            fill(cell)
    return PerformanceMatrix(row_ids, col_ids, values)
