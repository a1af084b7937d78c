"""Two-stage comparator portfolio: configuration search on a fixed
training set plus greedy portfolio construction.

The builder repeatedly searches the configuration space for the config
whose addition raises the portfolio's applicability on the training set
the most, and adds it. The search spends a hard per-iteration budget of
(config, instance) evaluations. Equal-budget comparisons against the
coevolutionary trainer are made in distinct solver runs: a memoized
re-read of a previously computed cell costs no solver time, so neither
side is charged for it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import StructuralError
from .instances import TspInstance
from .oracle import ExactOracle
from .perf import EvalStore, MetricSpec
from .solver import (
    GENE_SIZES,
    SolverConfig,
    random_config,
)

STRATEGIES = ("random_search", "local_search_on_genes")


@dataclass(frozen=True)
class BaselineConfig:
    """Tunables of the two-stage baseline."""

    training_set: tuple[TspInstance, ...]
    size: int = 4
    eval_budget: int = 2000   # evaluation requests per greedy iteration
    strategy: str = "random_search"

    def __post_init__(self):
        if not self.training_set:
            raise StructuralError("baseline training set is empty")
        if self.size < 1:
            raise StructuralError("portfolio size must be >= 1")
        if self.eval_budget <= 0:
            raise StructuralError("evaluation budget must be positive")
        if self.strategy not in STRATEGIES:
            raise StructuralError(
                f"unknown strategy {self.strategy!r}; expected one of "
                f"{STRATEGIES}"
            )


@dataclass
class BaselineResult:
    """Greedy construction output plus its audit trail."""

    portfolio: list[SolverConfig]
    # applicability of the growing portfolio after each addition
    perf_curve: list[float]
    evaluations: int  # evaluation requests actually spent


def _row(cfg: SolverConfig, train: tuple[TspInstance, ...], spec: MetricSpec,
         oracle: ExactOracle, store: EvalStore) -> np.ndarray:
    return np.array([store.evaluate(cfg, ins, spec, oracle).perf
                     for ins in train])


@dataclass
class _Scored:
    cfg: SolverConfig
    gain: float
    solo: float
    row: np.ndarray


def _score(row: np.ndarray, coverage: np.ndarray) -> tuple[float, float]:
    gain = float(np.mean(np.maximum(coverage, row)) - np.mean(coverage))
    return gain, float(np.mean(row))


def _better(a: _Scored, b: _Scored | None) -> bool:
    """Greedy preference: marginal gain, then solo applicability, then
    lexicographically smaller gene tuple."""
    if b is None:
        return True
    return (a.gain, a.solo, tuple(-g for g in a.cfg.genes)) > (
        b.gain, b.solo, tuple(-g for g in b.cfg.genes))


def _gene_neighbors(cfg: SolverConfig) -> list[SolverConfig]:
    """All configs differing from ``cfg`` in exactly one gene."""
    out = []
    for gi, size in enumerate(GENE_SIZES):
        for v in range(size):
            if v == cfg.genes[gi]:
                continue
            genes = list(cfg.genes)
            genes[gi] = v
            out.append(SolverConfig.from_genes(genes))
    return out


def build_portfolio(bc: BaselineConfig, spec: MetricSpec,
                    oracle: ExactOracle, rng: np.random.Generator,
                    store: EvalStore | None = None) -> BaselineResult:
    """Greedily build a portfolio of ``bc.size`` configurations.

    Each iteration searches the configuration space (by the configured
    strategy) for the candidate with the largest marginal applicability
    gain over the current portfolio on the training set, spending at
    most ``bc.eval_budget`` evaluation requests, and adds the winner.
    The portfolio's training applicability is nondecreasing across
    iterations by construction (coverage is a running maximum).
    """
    store = store if store is not None else EvalStore()
    train = bc.training_set
    cost = len(train)  # evaluation requests per candidate
    if bc.eval_budget < cost:
        raise StructuralError(
            f"per-iteration budget {bc.eval_budget} cannot pay for a single "
            f"candidate ({cost} evaluations on the training set)"
        )
    portfolio: list[SolverConfig] = []
    coverage = np.zeros(len(train))
    curve: list[float] = []
    start_requests = store.requests

    for _ in range(bc.size):
        spent = 0
        best: _Scored | None = None

        def consider(cfg: SolverConfig) -> _Scored:
            nonlocal spent, best
            row = _row(cfg, train, spec, oracle, store)
            spent += cost
            gain, solo = _score(row, coverage)
            scored = _Scored(cfg, gain, solo, row)
            if _better(scored, best):
                best = scored
            return scored

        if bc.strategy == "random_search":
            while spent + cost <= bc.eval_budget:
                consider(random_config(rng))
        else:  # local_search_on_genes
            while spent + cost <= bc.eval_budget:
                current = consider(random_config(rng))
                improved = True
                while improved and spent + cost <= bc.eval_budget:
                    improved = False
                    for nb in _gene_neighbors(current.cfg):
                        if spent + cost > bc.eval_budget:
                            break
                        cand = consider(nb)
                        if (cand.gain, cand.solo) > (current.gain,
                                                     current.solo):
                            current = cand
                            improved = True
        portfolio.append(best.cfg)
        coverage = np.maximum(coverage, best.row)
        curve.append(float(np.mean(coverage)))

    return BaselineResult(portfolio, curve,
                          store.requests - start_requests)


# ---------------------------------------------------------------------------
# Comparison report

@dataclass(frozen=True)
class PortfolioScore:
    method: str
    applicability: float
    mean_peo: float


def score_portfolio(method: str, ap: list[SolverConfig],
                    test_set: list[TspInstance], spec: MetricSpec,
                    oracle: ExactOracle, store: EvalStore) -> PortfolioScore:
    """Applicability and mean best-member excess-over-optimum on a set."""
    if not ap:
        raise StructuralError("empty portfolio")
    if not test_set:
        raise StructuralError("empty test set")
    perfs = []
    peos = []
    for ins in test_set:
        results = [store.evaluate(cfg, ins, spec, oracle) for cfg in ap]
        perfs.append(max(r.perf for r in results))
        peos.append(min(r.peo for r in results))
    return PortfolioScore(method, float(np.mean(perfs)), float(np.mean(peos)))


@dataclass
class ComparisonRow:
    seed: int
    method: str
    applicability: float
    mean_peo: float
    evaluations: int


COMPARISON_COLUMNS = ("seed", "method", "applicability", "mean_peo",
                      "evaluations")


def compare_runs(trained_ap: list[SolverConfig],
                 baseline_ap: list[SolverConfig],
                 test_set: list[TspInstance], spec: MetricSpec,
                 oracle: ExactOracle, store: EvalStore | None = None,
                 seed: int = 0,
                 trained_evals: int = 0, baseline_evals: int = 0
                 ) -> list[ComparisonRow]:
    """Score both portfolios on a shared test set (one paired comparison)."""
    store = store if store is not None else EvalStore()
    rows = []
    for method, ap, evals in (("liangyi", trained_ap, trained_evals),
                              ("baseline", baseline_ap, baseline_evals)):
        s = score_portfolio(method, ap, test_set, spec, oracle, store)
        rows.append(ComparisonRow(seed, method, s.applicability, s.mean_peo,
                                  evals))
    return rows


def write_comparison_csv(rows: list[ComparisonRow], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(COMPARISON_COLUMNS)
        for r in rows:
            w.writerow([r.seed, r.method, repr(r.applicability),
                        repr(r.mean_peo), r.evaluations])
