"""The coevolutionary training loop: contribution/fitness, member removal,
the instance phase, cross-cycle memory, and run-level contracts."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coevotsp.coevo import (
    CycleMemory,
    CycleRecord,
    EvolveAlgParams,
    EvolveInsParams,
    Member,
    RunConfig,
    contribution,
    evolve_ins,
    fitness_alg,
    fitness_ins,
    initial_portfolio,
    load_checkpoint,
    remove_worst,
    replacement_count,
    resume_liangyi,
    run_liangyi,
    runconfig_from_dict,
    runconfig_to_dict,
    save_checkpoint,
    write_event_log,
)
from coevotsp.errors import IntegrityError, ParseError, StructuralError
from coevotsp.instances import InstanceSpace, gen_random_instance
from coevotsp.perf import EvalStore, MetricSpec, PerformanceMatrix
from coevotsp.solver import Budget, SolverConfig, random_config

from .duals import (
    cheap_instance,
    contribution_dual,
    fitness_alg_dual,
    random_memory_fixture,
    set_perf_dual,
)

seeds = st.integers(0, 2**32 - 1)


def tiny_run_config(seed=0, cycles=2):
    """A seconds-scale run: small instances, short phases."""
    return RunConfig(
        n_ap=3, n_ip=6, cycles=cycles,
        alg=EvolveAlgParams(generations=4),
        ins=EvolveInsParams(generations=2, res=1 / 3),
        metric=MetricSpec(budget=Budget(steps=6)),
        space=InstanceSpace(6, 1000),
        master_seed=seed,
    )


# ---------------------------------------------------------------------------
# Configuration validation

def test_replacement_count_must_be_positive_even():
    assert replacement_count(20, 0.3) == 6
    with pytest.raises(StructuralError):
        RunConfig(n_ip=10, ins=EvolveInsParams(res=0.3))  # rounds to 3, odd
    with pytest.raises(StructuralError):
        RunConfig(n_ip=4, ins=EvolveInsParams(res=0.1))  # rounds to 0


def test_param_validation():
    with pytest.raises(StructuralError):
        EvolveAlgParams(alpha=0.0)
    with pytest.raises(StructuralError):
        EvolveAlgParams(beta=-1.0)
    with pytest.raises(StructuralError):
        EvolveAlgParams(mu_alg=1.5)
    with pytest.raises(StructuralError):
        EvolveInsParams(res=0.0)
    with pytest.raises(StructuralError):
        EvolveInsParams(tournament_size=0)


def test_runconfig_dict_round_trip():
    rc = tiny_run_config(seed=5)
    assert runconfig_from_dict(runconfig_to_dict(rc)) == rc
    with pytest.raises(ParseError):
        runconfig_from_dict({"surprise": 1})


# ---------------------------------------------------------------------------
# Contribution

@settings(max_examples=1000, deadline=None)
@given(seed=seeds, alpha=st.floats(0.1, 5.0))
def test_contribution_nonnegative_and_matches_dual(seed, alpha):
    rng = np.random.default_rng(seed)
    r, c = int(rng.integers(1, 6)), int(rng.integers(1, 10))
    values = rng.integers(0, 2, size=(r, c)).astype(float)
    ids = [f"a{i}" for i in range(r)]
    m = PerformanceMatrix(ids, [f"i{j}" for j in range(c)], values)
    member = ids[int(rng.integers(0, r))]
    got = contribution(m, member, alpha)
    assert got >= 0.0
    assert got == pytest.approx(
        contribution_dual(ids, values.tolist(), member, alpha), abs=1e-12)


def test_contribution_of_sole_member_scales_whole_performance():
    m = PerformanceMatrix(["a"], ["i0", "i1", "i2", "i3", "i4"],
                          np.array([[1.0, 1.0, 1.0, 0.0, 0.0]]))
    assert contribution(m, "a", 2.0) == pytest.approx(1.2)


def test_contribution_zero_for_redundant_member():
    # identical rows: removing either changes nothing
    values = np.array([[1.0, 0.0, 1.0], [1.0, 0.0, 1.0]])
    m = PerformanceMatrix(["a", "b"], ["i0", "i1", "i2"], values)
    assert contribution(m, "a", 2.0) == 0.0
    assert contribution(m, "b", 2.0) == 0.0


@settings(max_examples=1000, deadline=None)
@given(seed=seeds)
def test_contribution_zero_for_dominated_member(seed):
    # a row pointwise covered by the max of the others adds nothing
    rng = np.random.default_rng(seed)
    r, c = int(rng.integers(2, 6)), int(rng.integers(1, 10))
    values = rng.integers(0, 2, size=(r, c)).astype(float)
    others = np.delete(values, 0, axis=0).max(axis=0)
    values[0] = np.minimum(values[0], others)  # force domination
    m = PerformanceMatrix([f"a{i}" for i in range(r)],
                          [f"i{j}" for j in range(c)], values)
    assert contribution(m, "a0", 2.0) == 0.0


def test_contribution_requires_membership():
    m = PerformanceMatrix(["a"], ["i"], np.array([[1.0]]))
    with pytest.raises(StructuralError):
        contribution(m, "ghost", 1.0)


# ---------------------------------------------------------------------------
# Member fitness with history

def test_fitness_without_history_is_current_contribution():
    values = np.array([[1.0, 0.0], [0.0, 1.0]])
    m = PerformanceMatrix(["a", "b"], ["i0", "i1"], values)
    members = [Member("a", SolverConfig(0, 0, 0, 0, 0), birth=1),
               Member("b", SolverConfig(1, 0, 0, 0, 0), birth=1)]
    got = fitness_alg(members[0], members, m, CycleMemory(), 1, 2.0, 2.0)
    assert got == pytest.approx(contribution(m, "a", 2.0), abs=1e-12)


def test_fitness_history_arithmetic():
    # two historical contributions of 0.5 each, current 0.5, weight 2,
    # three terms -> (2 * 1.0 + 0.5) / 3
    cfg = SolverConfig(0, 0, 0, 0, 0)
    veteran = Member("v", cfg, birth=1)
    memory = CycleMemory()
    for r in (1, 2):
        inst = (cheap_instance(f"h{r}a"), cheap_instance(f"h{r}b"))
        matrix = PerformanceMatrix(["v"], [i.id for i in inst],
                                   np.array([[1.0, 0.0]]))
        memory.add(CycleRecord(r, (veteran,), matrix, inst))
    current = PerformanceMatrix(
        ["v", "y"], ["c0", "c1"], np.array([[1.0, 0.0], [0.0, 0.0]]))
    members = [veteran, Member("y", cfg, birth=3)]
    got = fitness_alg(veteran, members, current, memory, 3, alpha=2.0,
                      beta=2.0)
    # history: sole member both cycles -> alpha * 0.5 = 1.0 per cycle
    assert got == pytest.approx((2.0 * 2.0 + 0.5) / 3, abs=1e-12)


@settings(max_examples=1000, deadline=None)
@given(seed=seeds, alpha=st.floats(0.5, 4.0), beta=st.floats(0.0, 4.0))
def test_fitness_matches_dual_on_random_memory(seed, alpha, beta):
    rng = np.random.default_rng(seed)
    members, current, memory, history, k = random_memory_fixture(rng)
    member = members[int(rng.integers(0, len(members)))]
    got = fitness_alg(member, members, current, memory, k, alpha, beta)
    want = fitness_alg_dual(
        member.id, member.birth, [(m.id, m.birth) for m in members],
        list(current.row_ids), current.values.tolist(), history, k,
        alpha, beta)
    assert got == pytest.approx(want, abs=1e-12)


def test_fitness_missing_memory_is_integrity_error():
    cfg = SolverConfig(0, 0, 0, 0, 0)
    veteran = Member("v", cfg, birth=1)
    current = PerformanceMatrix(["v"], ["c0"], np.array([[1.0]]))
    with pytest.raises(IntegrityError):
        fitness_alg(veteran, [veteran], current, CycleMemory(), 2, 2.0, 2.0)


def test_memory_alignment_checks():
    memory = CycleMemory()
    cfg = SolverConfig(0, 0, 0, 0, 0)
    inst = (cheap_instance("x0"),)
    rec = CycleRecord(1, (Member("a", cfg, 1),),
                      PerformanceMatrix(["a"], ["x0"], np.array([[1.0]])),
                      inst)
    memory.add(rec)
    with pytest.raises(IntegrityError):
        memory.add(rec)  # same cycle twice
    with pytest.raises(IntegrityError):
        memory.rows_for(1, ["ghost"])  # unknown member, never a zero row
    with pytest.raises(IntegrityError):
        memory.get(9)
    with pytest.raises(StructuralError):
        CycleRecord(1, (Member("a", cfg, 1),),
                    PerformanceMatrix(["b"], ["x0"], np.array([[1.0]])),
                    inst)  # rows mislabeled


# ---------------------------------------------------------------------------
# Member removal

@settings(max_examples=1000, deadline=None)
@given(seed=seeds)
def test_remove_worst_minimality(seed):
    rng = np.random.default_rng(seed)
    members, matrix, memory, _history, k = random_memory_fixture(rng)
    survivors, trimmed, removed, fitness = remove_worst(
        members, matrix, memory, k, alpha=2.0, beta=2.0)
    assert len(survivors) == len(members) - 1
    assert removed not in [m.id for m in survivors]
    assert trimmed.row_ids == [m.id for m in survivors]
    assert all(fitness[removed] <= fitness[m.id] + 1e-15 for m in survivors)


def test_remove_worst_tie_breaks_toward_youngest_then_highest_index():
    cfg = SolverConfig(0, 0, 0, 0, 0)
    # identical rows make every contribution 0: a four-way tie
    values = np.ones((4, 2))
    matrix = PerformanceMatrix(["a", "b", "c", "d"], ["i0", "i1"], values)
    members = [Member("a", cfg, 1), Member("b", cfg, 2),
               Member("c", cfg, 2), Member("d", cfg, 1)]
    memory = CycleMemory()
    inst = (cheap_instance("i0"), cheap_instance("i1"))
    memory.add(CycleRecord(1, (members[0], members[3]),
                           PerformanceMatrix(["a", "d"], ["i0", "i1"],
                                             np.ones((2, 2))), inst))
    _, _, removed, _ = remove_worst(members, matrix, memory, 2, 2.0, 2.0)
    assert removed == "c"  # youngest (birth 2) with the highest row index


def test_remove_worst_preconditions():
    cfg = SolverConfig(0, 0, 0, 0, 0)
    solo = [Member("a", cfg, 1)]
    m1 = PerformanceMatrix(["a"], ["i"], np.array([[1.0]]))
    with pytest.raises(StructuralError):
        remove_worst(solo, m1, CycleMemory(), 1, 2.0, 2.0)
    pair = [Member("a", cfg, 1), Member("b", cfg, 1)]
    wrong = PerformanceMatrix(["b", "a"], ["i"], np.array([[1.0], [0.0]]))
    with pytest.raises(StructuralError):
        remove_worst(pair, wrong, CycleMemory(), 1, 2.0, 2.0)


# ---------------------------------------------------------------------------
# Instance phase

def test_fitness_ins_is_negated_portfolio_performance(shared_oracle):
    store = EvalStore()
    spec = MetricSpec(budget=Budget(steps=8))
    rng = np.random.default_rng(0)
    ap = [random_config(rng) for _ in range(3)]
    ins = gen_random_instance(InstanceSpace(6, 1000), rng, "f0")
    got = fitness_ins(ap, ins, spec, shared_oracle, store)
    assert got in (-1.0, 0.0)
    from coevotsp.perf import perf_ap_instance
    assert got == -perf_ap_instance(ap, ins, spec, shared_oracle, store)


def test_evolve_ins_clone_offspring_cannot_displace_incumbents(shared_oracle):
    # crossover off + mutation off makes every offspring a clone of its
    # parent; with a budget generous enough that every incumbent ties,
    # ties are resolved against offspring, so the set is unchanged
    rng = np.random.default_rng(1)
    space = InstanceSpace(6, 1000)
    members = [Member(f"a{i}", random_config(rng), 1) for i in range(3)]
    ip = [gen_random_instance(space, rng, f"i{j}") for j in range(6)]
    spec = MetricSpec(budget=Budget(steps=60))
    store = EvalStore()
    fits = {fitness_ins([m.cfg for m in members], i, spec, shared_oracle,
                        store) for i in ip}
    assert len(fits) == 1  # precondition: an all-tied population
    params = EvolveInsParams(generations=3, cro_ins=0.0, mu_ins=0.0,
                             res=1 / 3)
    counter = iter(range(100))
    out = evolve_ins(members, ip, params, spec, shared_oracle, store,
                     np.random.default_rng(2), lambda: f"o{next(counter)}")
    assert [i.id for i in out] == [i.id for i in ip]


def test_evolve_ins_keeps_population_size_and_degrades_perf(shared_oracle):
    rng = np.random.default_rng(3)
    space = InstanceSpace(6, 1000)
    members = [Member(f"a{i}", random_config(rng), 1) for i in range(3)]
    ip = [gen_random_instance(space, rng, f"i{j}") for j in range(6)]
    events = []
    counter = iter(range(1000))
    out = evolve_ins(members, ip, EvolveInsParams(generations=4, res=1 / 3),
                     MetricSpec(budget=Budget(steps=6)), shared_oracle,
                     EvalStore(), np.random.default_rng(4),
                     lambda: f"o{next(counter)}", events=events, cycle=1)
    assert len(out) == len(ip)
    perfs = [e["perf"] for e in events if e["kind"] == "ins_gen"]
    assert len(perfs) == 4
    assert all(b <= a + 1e-12 for a, b in zip(perfs, perfs[1:]))


# ---------------------------------------------------------------------------
# Full runs (tiny scale)

@pytest.fixture(scope="module")
def tiny_run(shared_oracle):
    return run_liangyi(tiny_run_config(), oracle=shared_oracle)


def test_run_sizes_and_memory(tiny_run):
    rc = tiny_run_config()
    assert len(tiny_run.final_ap) == rc.n_ap
    assert len(tiny_run.ip_final) == rc.n_ip
    assert tiny_run.memory.cycles() == [1, 2]
    for c in tiny_run.memory.cycles():
        rec = tiny_run.memory.get(c)
        assert len(rec.members) == rc.n_ap
        assert len(rec.instances) == rc.n_ip
        assert rec.matrix.values.shape == (rc.n_ap, rc.n_ip)
        assert set(rec.matrix.values.ravel()) <= {0.0, 1.0}


def test_run_checkpoints_and_event_structure(tiny_run):
    checkpoints = [e for e in tiny_run.events if e["kind"] == "checkpoint"]
    assert [(e["cycle"], e["point"]) for e in checkpoints] == [
        (c, p) for c in (1, 2) for p in ("begin", "middle", "end")
    ]
    alg_gens = [e for e in tiny_run.events if e["kind"] == "alg_gen"]
    assert len(alg_gens) == 2 * 4  # cycles x generations
    ins_gens = [e for e in tiny_run.events if e["kind"] == "ins_gen"]
    assert len(ins_gens) == 2 * 2


def test_run_instance_phase_monotone_within_cycles(tiny_run):
    for cycle in (1, 2):
        perfs = [e["perf"] for e in tiny_run.events
                 if e["kind"] == "ins_gen" and e["cycle"] == cycle]
        assert all(b <= a + 1e-12 for a, b in zip(perfs, perfs[1:]))


def test_run_deterministic(tiny_run, shared_oracle, tmp_path):
    again = run_liangyi(tiny_run_config(), oracle=shared_oracle)
    assert again.events == tiny_run.events
    assert [m.id for m in again.final_ap] == [m.id for m in tiny_run.final_ap]
    assert [m.cfg for m in again.final_ap] == [m.cfg for m in tiny_run.final_ap]
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_event_log(tiny_run.events, p1)
    write_event_log(again.events, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_run_zero_cycles_returns_initial_portfolio(shared_oracle):
    rc = tiny_run_config(cycles=0)
    res = run_liangyi(rc, oracle=shared_oracle)
    assert [m.cfg for m in res.final_ap] == [
        m.cfg for m in initial_portfolio(rc)]
    assert res.events == []


def test_workers_do_not_change_results(tiny_run, shared_oracle):
    parallel = run_liangyi(tiny_run_config(), workers=8, oracle=shared_oracle)
    assert parallel.events == tiny_run.events


def test_checkpoint_resume_matches_uninterrupted(tiny_run, shared_oracle,
                                                 tmp_path):
    # checkpoint after cycle 1, resume, and compare to the straight run
    rc_short = tiny_run_config(cycles=1)
    rc_full = tiny_run_config(cycles=2)
    path = tmp_path / "ckpt.json"
    run_liangyi(rc_short, checkpoint_path=path, oracle=shared_oracle)
    # patch the stored cycle target up to the full run's
    (rc, done, members, ip, memory, events, mc, ic, alg_rng,
     ins_rng) = load_checkpoint(path)
    save_checkpoint(path, rc_full, done, members, ip, memory, events, mc, ic,
                    alg_rng, ins_rng)
    resumed = resume_liangyi(path, oracle=shared_oracle)
    assert resumed.events == tiny_run.events
    assert [m.cfg for m in resumed.final_ap] == [
        m.cfg for m in tiny_run.final_ap]


def test_checkpoint_round_trip(tmp_path, shared_oracle):
    rc = tiny_run_config()
    path = tmp_path / "ck.json"
    res = run_liangyi(rc, checkpoint_path=path, oracle=shared_oracle)
    (rc2, done, members, ip, memory, events, *_rest) = load_checkpoint(path)
    assert rc2 == rc and done == rc.cycles
    assert [m.cfg for m in members] == [m.cfg for m in res.final_ap]
    assert [i.id for i in ip] == [i.id for i in res.ip_final]
    assert events == res.events
    assert memory.cycles() == res.memory.cycles()
    for c in memory.cycles():
        assert np.array_equal(memory.get(c).matrix.values,
                              res.memory.get(c).matrix.values)
