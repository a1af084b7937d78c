"""Post-run reports: pure views over a completed run's artifacts.

Three reports mirror the training-verification protocol:

* training dynamics — the portfolio's performance on the instance set at
  the three logged checkpoints of every cycle;
* retention — performances of each portfolio generation on each earlier
  cycle's instance set, plus drop/improvement ratios quantifying how
  much of every cycle's gain later cycles keep;
* test curve — each portfolio generation's applicability on a held-out
  instance set.

Every CSV is recomputable from the run's persisted artifacts (event log
and checkpoint); the optional figures are renderings of the same CSV
data, never a separate computation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coevo import CycleMemory, Member, RunConfig, initial_portfolio
from .errors import StructuralError
from .instances import TspInstance
from .oracle import ExactOracle
from .perf import EvalStore, MetricSpec, evaluate_matrix

CHECKPOINT_ORDER = ("begin", "middle", "end")


# ---------------------------------------------------------------------------
# Training dynamics

def training_dynamics_rows(events: list[dict]) -> list[dict]:
    """The (cycle, point, perf) checkpoint rows, in log order."""
    rows = [
        {"cycle": e["cycle"], "point": e["point"], "perf": e["perf"]}
        for e in events if e.get("kind") == "checkpoint"
    ]
    if not rows:
        raise StructuralError("event log contains no checkpoints")
    return rows


def write_training_dynamics_csv(events: list[dict], path: str | Path) -> None:
    rows = training_dynamics_rows(events)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["cycle", "point", "perf"])
        for r in rows:
            w.writerow([r["cycle"], r["point"], repr(r["perf"])])


# ---------------------------------------------------------------------------
# Portfolio generations

def portfolio_generations(rc: RunConfig, memory: CycleMemory
                          ) -> list[tuple[str, list[Member]]]:
    """Labeled portfolio generations: the initial portfolio, then each
    cycle's final portfolio (generation k+1 ends cycle k)."""
    gens = [("AP1", initial_portfolio(rc))]
    for c in memory.cycles():
        gens.append((f"AP{c + 1}", list(memory.get(c).members)))
    return gens


# ---------------------------------------------------------------------------
# Retention

@dataclass
class RetentionTable:
    """P(generation j, instance set of cycle k) for j > k's start.

    ``values[j_idx][k_idx]`` is the applicability of generation ``ap_labels
    [j_idx]`` on cycle ``k_idx + 1``'s instance set, or NaN where the
    generation predates the set (upper triangle), mirroring the
    lower-triangular layout of per-cycle retention tables.
    """

    ap_labels: list[str]
    ip_labels: list[str]
    values: np.ndarray


def retention_table(rc: RunConfig, memory: CycleMemory, oracle: ExactOracle,
                    store: EvalStore, workers: int = 1) -> RetentionTable:
    gens = portfolio_generations(rc, memory)
    cycles = memory.cycles()
    values = np.full((len(gens), len(cycles)), np.nan)
    for k_idx, c in enumerate(cycles):
        ip = list(memory.get(c).instances)
        for j_idx, (_, members) in enumerate(gens):
            if j_idx < k_idx:  # generation predates the instance set
                continue
            m = evaluate_matrix(
                [(f"{mm.id}@{j_idx}", mm.cfg) for mm in members], ip,
                rc.metric, oracle, store, workers)
            values[j_idx, k_idx] = m.set_perf()
    return RetentionTable([g[0] for g in gens],
                          [f"IP{c}" for c in cycles], values)


def write_retention_csv(table: RetentionTable, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["portfolio"] + table.ip_labels)
        for label, row in zip(table.ap_labels, table.values):
            w.writerow([label] + ["" if math.isnan(v) else repr(float(v))
                                  for v in row])


def retention_ratios(table: RetentionTable) -> list[dict]:
    """Drop/improvement ratios per instance set.

    For cycle k's set: the improvement is the gain of generation k+1
    over generation k on it; each later generation's drop from
    generation k+1's level is expressed as a fraction of that
    improvement. A nonpositive improvement yields an infinite ratio
    (reported as such, never silently skipped).
    """
    rows = []
    for k_idx, ip_label in enumerate(table.ip_labels):
        col = table.values[:, k_idx]
        improvement = col[k_idx + 1] - col[k_idx]
        for j_idx in range(k_idx + 2, len(table.ap_labels)):
            drop = col[k_idx + 1] - col[j_idx]
            ratio = drop / improvement if improvement > 0 else math.inf
            rows.append({
                "ip": ip_label, "ap": table.ap_labels[j_idx],
                "improvement": float(improvement), "drop": float(drop),
                "ratio": float(ratio),
            })
    return rows


def write_retention_ratios_csv(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["ip", "ap", "improvement", "drop", "ratio"])
        for r in rows:
            w.writerow([r["ip"], r["ap"], repr(r["improvement"]),
                        repr(r["drop"]), repr(r["ratio"])])


# ---------------------------------------------------------------------------
# Held-out test curve

def test_curve(rc: RunConfig, memory: CycleMemory,
               test_set: list[TspInstance], oracle: ExactOracle,
               store: EvalStore, workers: int = 1) -> list[dict]:
    """Applicability of every portfolio generation on a held-out set."""
    if not test_set:
        raise StructuralError("empty test set")
    rows = []
    for j_idx, (label, members) in enumerate(
            portfolio_generations(rc, memory)):
        m = evaluate_matrix(
            [(f"{mm.id}@{j_idx}", mm.cfg) for mm in members], test_set,
            rc.metric, oracle, store, workers)
        rows.append({"portfolio": label, "applicability": m.set_perf()})
    return rows


def write_test_curve_csv(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["portfolio", "applicability"])
        for r in rows:
            w.writerow([r["portfolio"], repr(r["applicability"])])


# ---------------------------------------------------------------------------
# Figures (renderings of the CSV data)

def _use_agg():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_training_dynamics(events: list[dict], path: str | Path) -> None:
    plt = _use_agg()
    rows = training_dynamics_rows(events)
    xs = list(range(len(rows)))
    ys = [r["perf"] for r in rows]
    labels = [f"c{r['cycle']} {r['point']}" for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(xs, ys, marker="o")
    ax.set_xticks(xs)
    ax.set_xticklabels(labels, rotation=45, ha="right")
    ax.set_ylabel("portfolio applicability on instance set")
    ax.set_title("Training dynamics (per-cycle checkpoints)")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_retention(table: RetentionTable, path: str | Path) -> None:
    plt = _use_agg()
    fig, ax = plt.subplots(figsize=(5, 4))
    masked = np.ma.masked_invalid(table.values)
    im = ax.imshow(masked, cmap="viridis", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(len(table.ip_labels)))
    ax.set_xticklabels(table.ip_labels)
    ax.set_yticks(range(len(table.ap_labels)))
    ax.set_yticklabels(table.ap_labels)
    for j in range(table.values.shape[0]):
        for k in range(table.values.shape[1]):
            v = table.values[j, k]
            if not math.isnan(v):
                ax.text(k, j, f"{v:.2f}", ha="center", va="center",
                        color="white")
    fig.colorbar(im, ax=ax, label="applicability")
    ax.set_title("Retention: portfolio generations on past instance sets")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_test_curve(rows: list[dict], path: str | Path) -> None:
    plt = _use_agg()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([r["portfolio"] for r in rows],
            [r["applicability"] for r in rows], marker="o")
    ax.set_ylabel("applicability on held-out set")
    ax.set_title("Cross-cycle test performance")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
