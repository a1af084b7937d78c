"""Competitive coevolution of a solver portfolio against an instance
population.

The training loop alternates two phases per cycle:

* the algorithm phase improves a fixed-size portfolio (AP) on the current
  instance set (IP) by steady-state evolution — one offspring per
  generation, then removal of the member with the lowest fitness, where
  fitness blends the member's current marginal contribution with its
  historical contributions on past instance sets;
* the instance phase then evolves the instance set to be hard for the
  improved portfolio: offspring instances join the pool and the
  instances the portfolio handles best are discarded.

A cross-cycle memory stores each cycle's final portfolio, its
performance matrix, and the instance set, both for the historical
fitness terms and for post-run reporting. Everything is deterministic
for a fixed master seed; the event log carries no timestamps, so two
identical runs produce byte-identical logs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IntegrityError, ParseError, StructuralError
from .instances import (
    InstanceSpace,
    TspInstance,
    crossover_instances,
    gen_random_instance,
    mutate_instance,
)
from .oracle import ExactOracle
from .perf import (
    EvalStore,
    MetricSpec,
    PerformanceMatrix,
    concat_rows,
    evaluate_matrix,
    perf_ap_instance,
)
from .seeding import (
    STREAM_EVOLVE_ALG,
    STREAM_EVOLVE_INS,
    STREAM_INIT_AP,
    STREAM_INIT_IP,
    substream,
)
from .solver import Budget, SolverConfig, make_offspring_config, random_config


# ---------------------------------------------------------------------------
# Populations and memory

@dataclass(frozen=True)
class Member:
    """A portfolio member: config plus identity and birth cycle."""

    id: str
    cfg: SolverConfig
    birth: int  # cycle in which the member was created; age in cycle k is k - birth


@dataclass(frozen=True)
class CycleRecord:
    """Final state of one completed algorithm phase."""

    cycle: int
    members: tuple[Member, ...]
    matrix: PerformanceMatrix
    instances: tuple[TspInstance, ...]

    def __post_init__(self):
        if list(self.matrix.row_ids) != [m.id for m in self.members]:
            raise StructuralError(
                f"cycle {self.cycle}: matrix rows do not match member ids"
            )
        if list(self.matrix.col_ids) != [i.id for i in self.instances]:
            raise StructuralError(
                f"cycle {self.cycle}: matrix columns do not match instance ids"
            )


class CycleMemory:
    """Per-cycle records of (final AP, performance matrix, instance set)."""

    def __init__(self):
        self._records: dict[int, CycleRecord] = {}

    def add(self, rec: CycleRecord) -> None:
        if rec.cycle in self._records:
            raise IntegrityError(f"cycle {rec.cycle} recorded twice")
        self._records[rec.cycle] = rec

    def get(self, cycle: int) -> CycleRecord:
        rec = self._records.get(cycle)
        if rec is None:
            raise IntegrityError(f"no record for cycle {cycle}")
        return rec

    def cycles(self) -> list[int]:
        return sorted(self._records)

    def rows_for(self, cycle: int, member_ids: list[str]) -> PerformanceMatrix:
        """Rows recorded in the given cycle for the given members.

        Every id is cross-checked against the stored matrix; asking for a
        member that was not in that cycle's final portfolio is an
        integrity error, never a silent zero row.
        """
        rec = self.get(cycle)
        missing = [m for m in member_ids if m not in rec.matrix.row_ids]
        if missing:
            raise IntegrityError(
                f"cycle {cycle} has no rows for members {missing}"
            )
        return rec.matrix.select_rows(member_ids)


# ---------------------------------------------------------------------------
# Run configuration

@dataclass(frozen=True)
class EvolveAlgParams:
    generations: int = 80
    cro_alg: float = 0.6
    mu_alg: float = 0.6
    alpha: float = 2.0  # weight of a sole member's contribution
    beta: float = 2.0   # weight of historical contributions

    def __post_init__(self):
        if self.generations < 0:
            raise StructuralError("generations must be >= 0")
        for name in ("cro_alg", "mu_alg"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise StructuralError(f"{name}={v} outside [0, 1]")
        if self.alpha <= 0:
            raise StructuralError("alpha must be positive")
        if self.beta < 0:
            raise StructuralError("beta must be nonnegative")


@dataclass(frozen=True)
class EvolveInsParams:
    generations: int = 10
    cro_ins: float = 1.0
    mu_ins: float = 0.8
    res: float = 0.3          # fraction of the population replaced per generation
    tournament_size: int = 2

    def __post_init__(self):
        if self.generations < 0:
            raise StructuralError("generations must be >= 0")
        for name in ("cro_ins", "mu_ins"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise StructuralError(f"{name}={v} outside [0, 1]")
        if not 0.0 < self.res <= 1.0:
            raise StructuralError(f"res={self.res} outside (0, 1]")
        if self.tournament_size < 1:
            raise StructuralError("tournament size must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    """All tunables of one training run."""

    n_ap: int = 4
    n_ip: int = 20
    cycles: int = 3
    alg: EvolveAlgParams = field(default_factory=EvolveAlgParams)
    ins: EvolveInsParams = field(default_factory=EvolveInsParams)
    metric: MetricSpec = field(default_factory=MetricSpec)
    space: InstanceSpace = field(default_factory=lambda: InstanceSpace(14, 10**6))
    master_seed: int = 0

    def __post_init__(self):
        if self.n_ap < 2:
            raise StructuralError("need at least 2 portfolio members")
        if self.n_ip < 2:
            raise StructuralError("need at least 2 instances")
        if self.cycles < 0:
            raise StructuralError("cycles must be >= 0")
        n_rep = replacement_count(self.n_ip, self.ins.res)
        if n_rep <= 0 or n_rep % 2 != 0:
            raise StructuralError(
                f"n_ip * res = {self.n_ip * self.ins.res:g} must round to a "
                f"positive even integer (offspring are made in pairs)"
            )


def replacement_count(n_ip: int, res: float) -> int:
    return int(round(n_ip * res))


# ---------------------------------------------------------------------------
# Contribution and fitness

def contribution(matrix: PerformanceMatrix, member_id: str,
                 alpha: float) -> float:
    """Marginal performance contribution of a member within a portfolio.

    For a portfolio of several members: the (absolute) drop in set
    performance when the member's row is removed. For a sole member the
    whole performance would be lost, weighted by ``alpha``.
    """
    if member_id not in matrix.row_ids:
        raise StructuralError(f"member {member_id} not in the portfolio")
    if len(matrix.row_ids) == 1:
        return alpha * abs(matrix.set_perf())
    return abs(matrix.set_perf() - matrix.without_row(member_id).set_perf())


def fitness_alg(member: Member, members: list[Member],
                matrix: PerformanceMatrix, memory: CycleMemory, k: int,
                alpha: float, beta: float) -> float:
    """Fitness of a portfolio member in cycle ``k``.

    Averages the member's contribution on the current instance set with
    its contributions on every past instance set it lived through; each
    past contribution is computed within the *virtual* portfolio — the
    current members that were already alive in that cycle — using the
    rows recorded back then. Historical terms are weighted by ``beta``;
    the denominator counts all k - birth + 1 contributions.
    """
    current = contribution(matrix, member.id, alpha)
    hist = 0.0
    for r in range(member.birth, k):
        virtual_ids = [m.id for m in members if m.birth <= r]
        virtual = memory.rows_for(r, virtual_ids)
        hist += contribution(virtual, member.id, alpha)
    return (beta * hist + current) / (k - member.birth + 1)


def remove_worst(members: list[Member], matrix: PerformanceMatrix,
                 memory: CycleMemory, k: int, alpha: float, beta: float
                 ) -> tuple[list[Member], PerformanceMatrix, str,
                            dict[str, float]]:
    """Drop the member with the lowest fitness (and its matrix row).

    Ties are broken toward the youngest tied member, then the highest
    row index, so members carrying historical coverage are preserved and
    the outcome is deterministic.
    """
    if len(members) < 2:
        raise StructuralError("cannot remove from a portfolio of < 2 members")
    if [m.id for m in members] != list(matrix.row_ids):
        raise StructuralError("member list does not match matrix rows")
    fitness = {
        m.id: fitness_alg(m, members, matrix, memory, k, alpha, beta)
        for m in members
    }
    worst = min(
        range(len(members)),
        key=lambda i: (fitness[members[i].id], -members[i].birth, -i),
    )
    removed = members[worst].id
    survivors = members[:worst] + members[worst + 1:]
    return survivors, matrix.without_row(removed), removed, fitness


# ---------------------------------------------------------------------------
# Algorithm phase

def evolve_alg(members: list[Member], ip: list[TspInstance],
               params: EvolveAlgParams, memory: CycleMemory, k: int,
               metric: MetricSpec, oracle: ExactOracle, store: EvalStore,
               rng: np.random.Generator, next_id, workers: int = 1,
               events: list | None = None
               ) -> tuple[list[Member], PerformanceMatrix]:
    """One algorithm phase: steady-state evolution of the portfolio on a
    fixed instance set, then a memory record of the final state."""
    members = list(members)
    matrix = evaluate_matrix([(m.id, m.cfg) for m in members], ip, metric,
                             oracle, store, workers)
    for gen in range(1, params.generations + 1):
        i, j = rng.choice(len(members), size=2, replace=False)
        child_cfg = make_offspring_config(
            members[i].cfg, members[j].cfg, params.cro_alg, params.mu_alg, rng
        )
        child = Member(next_id(), child_cfg, birth=k)
        row = evaluate_matrix([(child.id, child.cfg)], ip, metric, oracle,
                              store, workers)
        members.append(child)
        matrix = concat_rows(matrix, row)
        members, matrix, removed, fitness = remove_worst(
            members, matrix, memory, k, params.alpha, params.beta
        )
        if events is not None:
            events.append({
                "kind": "alg_gen", "cycle": k, "gen": gen,
                "added": child.id, "removed": removed,
                "fitness": {m: fitness[m] for m in sorted(fitness)},
                "perf": matrix.set_perf(),
            })
    memory.add(CycleRecord(k, tuple(members), matrix, tuple(ip)))
    return members, matrix


# ---------------------------------------------------------------------------
# Instance phase

def fitness_ins(ap: list[SolverConfig], ins: TspInstance, metric: MetricSpec,
                oracle: ExactOracle, store: EvalStore) -> float:
    """Instance fitness: the harder the instance for the portfolio, the
    higher the fitness (negated portfolio performance)."""
    return -perf_ap_instance(ap, ins, metric, oracle, store)


def _tournament(ip: list[TspInstance], fitness: list[float], size: int,
                rng: np.random.Generator) -> TspInstance:
    """Pick ``size`` contestants uniformly (with replacement); the first
    drawn among those with the highest fitness wins."""
    best = int(rng.integers(0, len(ip)))
    for _ in range(size - 1):
        c = int(rng.integers(0, len(ip)))
        if fitness[c] > fitness[best]:
            best = c
    return ip[best]


def evolve_ins(members: list[Member], ip: list[TspInstance],
               params: EvolveInsParams, metric: MetricSpec,
               oracle: ExactOracle, store: EvalStore,
               rng: np.random.Generator, next_id, workers: int = 1,
               events: list | None = None, cycle: int = 0
               ) -> list[TspInstance]:
    """One instance phase: evolve the instance set to be hard for the
    (fixed) portfolio.

    Each generation creates offspring in pairs from tournament-selected
    parents, pools them with the population, and removes the instances
    the portfolio handles best. Removal prefers offspring on ties, so
    an offspring only displaces an incumbent it strictly out-hardens —
    which makes the portfolio's performance on the set nonincreasing
    across generations.
    """
    n_rep = replacement_count(len(ip), params.res)
    if n_rep <= 0 or n_rep % 2 != 0:
        raise StructuralError(
            f"population {len(ip)} with res={params.res} does not give a "
            f"positive even offspring count"
        )
    ip = list(ip)
    ap = [m.cfg for m in members]
    ap_rows = [(m.id, m.cfg) for m in members]

    for gen in range(1, params.generations + 1):
        fitness = [fitness_ins(ap, i, metric, oracle, store) for i in ip]
        offspring: list[TspInstance] = []
        for _ in range(n_rep // 2):
            p1 = _tournament(ip, fitness, params.tournament_size, rng)
            p2 = _tournament(ip, fitness, params.tournament_size, rng)
            c1, c2 = crossover_instances(p1, p2, params.cro_ins, rng)
            offspring.append(mutate_instance(c1, params.mu_ins, rng)
                             .with_id(next_id()))
            offspring.append(mutate_instance(c2, params.mu_ins, rng)
                             .with_id(next_id()))
        # warm the memo cache on the offspring columns (possibly concurrently)
        evaluate_matrix(ap_rows, offspring, metric, oracle, store, workers)
        pool = ip + offspring
        pool_fit = fitness + [
            fitness_ins(ap, o, metric, oracle, store) for o in offspring
        ]
        # remove the n_rep best-handled pool members; on ties the highest
        # pool index goes first, i.e. offspring before incumbents
        doomed = sorted(range(len(pool)),
                        key=lambda i: (pool_fit[i], -i))[:n_rep]
        doomed_set = set(doomed)
        survivors = [pool[i] for i in range(len(pool)) if i not in doomed_set]
        if events is not None:
            events.append({
                "kind": "ins_gen", "cycle": cycle, "gen": gen,
                "offspring": [o.id for o in offspring],
                "removed": [pool[i].id for i in sorted(doomed)],
                "perf": float(np.mean([
                    -fitness_ins(ap, i, metric, oracle, store)
                    for i in survivors
                ])),
            })
        ip = survivors
    return ip


# ---------------------------------------------------------------------------
# Main loop

@dataclass
class RunResult:
    final_ap: list[Member]
    memory: CycleMemory
    events: list[dict]
    oracle: ExactOracle
    store: EvalStore
    ip_final: list[TspInstance]


def initial_portfolio(rc: RunConfig) -> list[Member]:
    """The run's initial random portfolio (reconstructable post hoc: it
    depends only on the master seed, via the init-ap substream)."""
    rng = substream(rc.master_seed, STREAM_INIT_AP)
    return [Member(f"a{i + 1:04d}", random_config(rng), birth=1)
            for i in range(rc.n_ap)]


class _IdCounter:
    def __init__(self, prefix: str, start: int = 0):
        self.prefix = prefix
        self.count = start

    def __call__(self) -> str:
        self.count += 1
        return f"{self.prefix}{self.count:04d}"


def run_liangyi(rc: RunConfig, workers: int = 1,
                checkpoint_path: str | Path | None = None,
                oracle: ExactOracle | None = None) -> RunResult:
    """Run the full coevolution: alternate algorithm and instance phases
    for ``rc.cycles`` cycles and return the final portfolio.

    The event log records the portfolio's performance on the instance
    set at three checkpoints per cycle: before the algorithm phase,
    after it, and after the instance phase. The final cycle's instance
    phase still runs (and is logged) even though its output no longer
    trains anything.
    """
    oracle = oracle or ExactOracle()
    store = EvalStore()
    memory = CycleMemory()
    events: list[dict] = []

    init_ip_rng = substream(rc.master_seed, STREAM_INIT_IP)
    alg_rng = substream(rc.master_seed, STREAM_EVOLVE_ALG)
    ins_rng = substream(rc.master_seed, STREAM_EVOLVE_INS)
    next_member_id = _IdCounter("a", rc.n_ap)
    next_instance_id = _IdCounter("i")

    members = initial_portfolio(rc)
    ip = [gen_random_instance(rc.space, init_ip_rng, next_instance_id())
          for _ in range(rc.n_ip)]

    def set_perf(ms, insts):
        return evaluate_matrix([(m.id, m.cfg) for m in ms], insts, rc.metric,
                               oracle, store, workers).set_perf()

    for k in range(1, rc.cycles + 1):
        events.append({"kind": "checkpoint", "cycle": k, "point": "begin",
                       "perf": set_perf(members, ip)})
        members, matrix = evolve_alg(
            members, ip, rc.alg, memory, k, rc.metric, oracle, store,
            alg_rng, next_member_id, workers, events,
        )
        events.append({"kind": "checkpoint", "cycle": k, "point": "middle",
                       "perf": matrix.set_perf()})
        ip = evolve_ins(
            members, ip, rc.ins, rc.metric, oracle, store,
            ins_rng, next_instance_id, workers, events, cycle=k,
        )
        events.append({"kind": "checkpoint", "cycle": k, "point": "end",
                       "perf": set_perf(members, ip)})
        if checkpoint_path is not None:
            save_checkpoint(
                checkpoint_path, rc, k, members, ip, memory, events,
                next_member_id.count, next_instance_id.count,
                alg_rng, ins_rng,
            )
    return RunResult(members, memory, events, oracle, store, ip)


def resume_liangyi(checkpoint_path: str | Path, workers: int = 1,
                   oracle: ExactOracle | None = None) -> RunResult:
    """Continue a checkpointed run through its remaining cycles.

    Solver evaluations are recomputed (they are cheap and memoized); the
    populations, memory, counters and generator states come from the
    checkpoint, so the completed run's event log matches an uninterrupted
    run byte for byte.
    """
    (rc, done, members, ip, memory, events,
     member_count, instance_count, alg_rng, ins_rng) = load_checkpoint(
        checkpoint_path)
    oracle = oracle or ExactOracle()
    store = EvalStore()
    next_member_id = _IdCounter("a", member_count)
    next_instance_id = _IdCounter("i", instance_count)

    def set_perf(ms, insts):
        return evaluate_matrix([(m.id, m.cfg) for m in ms], insts, rc.metric,
                               oracle, store, workers).set_perf()

    for k in range(done + 1, rc.cycles + 1):
        events.append({"kind": "checkpoint", "cycle": k, "point": "begin",
                       "perf": set_perf(members, ip)})
        members, matrix = evolve_alg(
            members, ip, rc.alg, memory, k, rc.metric, oracle, store,
            alg_rng, next_member_id, workers, events,
        )
        events.append({"kind": "checkpoint", "cycle": k, "point": "middle",
                       "perf": matrix.set_perf()})
        ip = evolve_ins(
            members, ip, rc.ins, rc.metric, oracle, store,
            ins_rng, next_instance_id, workers, events, cycle=k,
        )
        events.append({"kind": "checkpoint", "cycle": k, "point": "end",
                       "perf": set_perf(members, ip)})
        save_checkpoint(
            checkpoint_path, rc, k, members, ip, memory, events,
            next_member_id.count, next_instance_id.count, alg_rng, ins_rng,
        )
    return RunResult(members, memory, events, oracle, store, ip)


# ---------------------------------------------------------------------------
# Serialization (checkpoints, config round-trips)

def runconfig_to_dict(rc: RunConfig) -> dict:
    return {
        "n_ap": rc.n_ap, "n_ip": rc.n_ip, "cycles": rc.cycles,
        "alg": {
            "generations": rc.alg.generations, "cro_alg": rc.alg.cro_alg,
            "mu_alg": rc.alg.mu_alg, "alpha": rc.alg.alpha,
            "beta": rc.alg.beta,
        },
        "ins": {
            "generations": rc.ins.generations, "cro_ins": rc.ins.cro_ins,
            "mu_ins": rc.ins.mu_ins, "res": rc.ins.res,
            "tournament_size": rc.ins.tournament_size,
        },
        "metric": {
            "budget": {"mode": rc.metric.budget.mode,
                       "steps": rc.metric.budget.steps,
                       "seconds": rc.metric.budget.seconds},
            "theta": rc.metric.theta,
            "solver_seed": rc.metric.solver_seed,
        },
        "space": {"n": rc.space.n, "grid": rc.space.grid},
        "master_seed": rc.master_seed,
    }


def runconfig_from_dict(doc: dict) -> RunConfig:
    unknown = set(doc) - {"alg", "ins", "metric", "space", "n_ap", "n_ip",
                          "cycles", "master_seed"}
    if unknown:
        raise ParseError(f"unknown run-config keys: {sorted(unknown)}")
    try:
        # assemble every field before constructing, so cross-field
        # validation sees the final combination, never a half-default one
        fields = {k: doc[k] for k in ("n_ap", "n_ip", "cycles", "master_seed")
                  if k in doc}
        if "alg" in doc:
            fields["alg"] = EvolveAlgParams(**doc["alg"])
        if "ins" in doc:
            fields["ins"] = EvolveInsParams(**doc["ins"])
        if "metric" in doc:
            m = dict(doc["metric"])
            budget = Budget(**m.pop("budget")) if "budget" in m else Budget()
            fields["metric"] = MetricSpec(budget=budget, **m)
        if "space" in doc:
            fields["space"] = InstanceSpace(**doc["space"])
        return RunConfig(**fields)
    except TypeError as e:
        raise ParseError(f"bad run-config field: {e}")


def _member_to_dict(m: Member) -> dict:
    return {"id": m.id, "genes": list(m.cfg.genes), "birth": m.birth}


def _member_from_dict(d: dict) -> Member:
    return Member(d["id"], SolverConfig.from_genes(d["genes"]), d["birth"])


def _instance_to_dict(i: TspInstance) -> dict:
    return {"id": i.id, "n": i.n, "grid": i.grid,
            "cities": [list(c) for c in i.cities]}


def _instance_from_dict(d: dict) -> TspInstance:
    return TspInstance(d["id"], d["n"], d["grid"],
                       tuple((int(x), int(y)) for x, y in d["cities"]))


def _matrix_to_dict(m: PerformanceMatrix) -> dict:
    return {"rows": list(m.row_ids), "cols": list(m.col_ids),
            "values": m.values.tolist()}


def _matrix_from_dict(d: dict) -> PerformanceMatrix:
    return PerformanceMatrix(list(d["rows"]), list(d["cols"]),
                             np.array(d["values"], dtype=np.float64))


def save_checkpoint(path: str | Path, rc: RunConfig, cycles_done: int,
                    members: list[Member], ip: list[TspInstance],
                    memory: CycleMemory, events: list[dict],
                    member_count: int, instance_count: int,
                    alg_rng: np.random.Generator,
                    ins_rng: np.random.Generator) -> None:
    doc = {
        "run_config": runconfig_to_dict(rc),
        "cycles_done": cycles_done,
        "members": [_member_to_dict(m) for m in members],
        "ip": [_instance_to_dict(i) for i in ip],
        "memory": [
            {
                "cycle": r.cycle,
                "members": [_member_to_dict(m) for m in r.members],
                "matrix": _matrix_to_dict(r.matrix),
                "instances": [_instance_to_dict(i) for i in r.instances],
            }
            for r in (memory.get(c) for c in memory.cycles())
        ],
        "events": events,
        "member_count": member_count,
        "instance_count": instance_count,
        "alg_rng_state": alg_rng.bit_generator.state,
        "ins_rng_state": ins_rng.bit_generator.state,
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc, sort_keys=True))
    tmp.replace(path)


def load_checkpoint(path: str | Path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}")
    rc = runconfig_from_dict(doc["run_config"])
    members = [_member_from_dict(d) for d in doc["members"]]
    ip = [_instance_from_dict(d) for d in doc["ip"]]
    memory = CycleMemory()
    for r in doc["memory"]:
        memory.add(CycleRecord(
            r["cycle"],
            tuple(_member_from_dict(m) for m in r["members"]),
            _matrix_from_dict(r["matrix"]),
            tuple(_instance_from_dict(i) for i in r["instances"]),
        ))
    alg_rng = substream(rc.master_seed, STREAM_EVOLVE_ALG)
    alg_rng.bit_generator.state = doc["alg_rng_state"]
    ins_rng = substream(rc.master_seed, STREAM_EVOLVE_INS)
    ins_rng.bit_generator.state = doc["ins_rng_state"]
    return (rc, doc["cycles_done"], members, ip, memory, doc["events"],
            doc["member_count"], doc["instance_count"], alg_rng, ins_rng)


def write_event_log(events: list[dict], path: str | Path) -> None:
    """One JSON object per line, keys sorted; no timestamps, so identical
    runs yield byte-identical logs."""
    with open(path, "w") as f:
        for e in events:
            f.write(json.dumps(e, sort_keys=True) + "\n")
