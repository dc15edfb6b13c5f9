import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import SPACE, crossover_table, random_replay_case, random_table
from meshtune.errors import ConfigError, ContractViolation, DataError, TrialError
from meshtune.evaluators import ReplayEvaluator
from meshtune.schedule import build_schedule, cohort_sizes, equivalent_rs_budget, schedule_budget
from meshtune.space import Configuration, id_sort_key
from meshtune.tuners import (OracleBundle, PassthroughBundle, run_mesh, run_random_search, run_successive_halving,
                             top_k, trace_from_log)


def mk(ids):
    return [Configuration(i, {}) for i in ids]


# --- top_k --------------------------------------------------------------------

def test_top_k_examples():
    cs = mk(["0:0", "0:1", "0:2"])
    assert [c.id for c in top_k(cs, [.3, .1, .2], 1)] == ["0:1"]
    assert [c.id for c in top_k(mk(["0:5", "0:2", "0:9"]), [.1, .2, .2], 2)] == ["0:5", "0:2"]
    assert [c.id for c in top_k(mk(["0:10", "0:9"]), [.2, .2], 1)] == ["0:9"]
    assert [c.id for c in top_k(cs, [np.nan, .5, .1], 3)] == ["0:2", "0:1", "0:0"]
    with pytest.raises(ContractViolation):
        top_k(cs, [.1, .2, .3], 4)
    with pytest.raises(ContractViolation):
        top_k(cs, [.1, .2], 1)
    with pytest.raises(ContractViolation):
        top_k(cs, [.1, .2, .3], 0)


def test_top_k_against_sort_oracle():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        m = int(rng.integers(1, 30))
        ids = [f"{rng.integers(0, 3)}:{j}" for j in rng.permutation(m)]
        scores = (np.round(rng.random(m) * 5) / 5).tolist()
        k = int(rng.integers(1, m + 1))
        oracle = sorted(range(m), key=lambda j: (scores[j], tuple(int(x) for x in ids[j].split(":"))))[:k]
        assert [c.id for c in top_k(mk(ids), scores, k)] == [ids[j] for j in oracle]


# --- crafted crossover example ----------------------------------------------

def test_sh_on_crossover_table_drops_eventual_winners():
    table, sched = crossover_table()
    res = run_successive_halving(ReplayEvaluator(table), SPACE, 4, sched, seed=0)
    assert res.elimination_trace == [["0:0", "0:1"], ["0:1"]]
    assert res.final_round_best == pytest.approx(.4)
    assert res.best_config.id == "0:0" and res.best_loss == pytest.approx(.1)  # lowest loss seen anywhere
    assert res.best_resource == 16


def test_mesh_oracle_on_crossover_table_keeps_winners():
    table, sched = crossover_table()
    res = run_mesh(ReplayEvaluator(table), SPACE, 4, sched, OracleBundle(table), None, seed=0)
    assert res.elimination_trace == [["0:2", "0:3"], ["0:2"]]
    assert res.final_round_best == pytest.approx(.1)
    assert res.best_loss == pytest.approx(.1) and res.best_config.id == "0:2"


def test_consistent_ranking_sh_finds_best():
    rng = np.random.default_rng(3)
    sched = build_schedule(16, 128, 2)
    table = random_table("cons", sched, 16, rng, ties=False)
    final = rng.random(16)
    for (cid, (c, _)), f in zip(list(table.entries.items()), final):
        table.entries[cid] = (c, {r: f + 1.0 / r for r in sched.resources})
    res = run_successive_halving(ReplayEvaluator(table), SPACE, 16, sched, seed=0)
    assert res.best_loss == pytest.approx(final.min() + 1 / 128)
    ranking = sorted(table.final_losses(), key=table.final_losses().get)
    for survivors in res.elimination_trace:
        assert survivors == ranking[:len(survivors)]


# --- random search ----------------------------------------------------------

def test_rs_single_and_seven():
    rng = np.random.default_rng(1)
    sched = build_schedule(16, 64, 2)
    table = random_table("rs", sched, 20, rng)
    ev = ReplayEvaluator(table)
    one = run_random_search(ev, SPACE, 1, 64, seed=4)
    assert one.best_loss == table.loss(one.best_config.id, 64)
    seven = run_random_search(ReplayEvaluator(table), SPACE, 7, 64, seed=4)
    sampled = [c.id for c in ReplayEvaluator(table).sample_configurations(SPACE, 7, 4)]
    assert seven.best_loss == min(table.loss(i, 64) for i in sampled)
    assert sorted(seven.elimination_trace[0]) == sorted(sampled)
    again = run_random_search(ReplayEvaluator(table), SPACE, 7, 64, seed=4)
    assert again.summary() == seven.summary() and again.run_log == seven.run_log
    with pytest.raises(ContractViolation):
        run_random_search(ev, SPACE, 0, 64, seed=0)


# --- structural properties --------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6))
def test_survivor_counts_follow_cohort_sizes(seed):
    table, sched, n = random_replay_case(seed)
    res = run_successive_halving(ReplayEvaluator(table), SPACE, n, sched, seed=seed)
    sizes = cohort_sizes(n, sched)
    expected = sizes[1:] + [max(1, int(sizes[-1] // sched.eta))]
    assert [len(t) for t in res.elimination_trace] == expected
    assert res.resource_spent == schedule_budget(n, sched)
    assert trace_from_log(res.run_log) == res.elimination_trace
    assert res.best_loss == min(v for t in res.trials for v in t.losses.values())


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6))
def test_passthrough_mesh_reduces_to_sh(seed):
    table, sched, n = random_replay_case(seed)
    sh = run_successive_halving(ReplayEvaluator(table), SPACE, n, sched, seed=seed)
    mesh = run_mesh(ReplayEvaluator(table), SPACE, n, sched, PassthroughBundle(), None, seed=seed)
    assert mesh.elimination_trace == sh.elimination_trace
    assert mesh.best_loss == sh.best_loss and mesh.resource_spent == sh.resource_spent
    assert trace_from_log(mesh.run_log) == mesh.elimination_trace


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 8))
def test_results_independent_of_worker_count(seed, workers):
    table, sched, n = random_replay_case(seed)
    a = run_successive_halving(ReplayEvaluator(table), SPACE, n, sched, seed=seed)
    b = run_successive_halving(ReplayEvaluator(table), SPACE, n, sched, seed=seed, workers=workers)
    assert a.run_log == b.run_log and a.summary() == b.summary()


def test_single_survivor_when_n_is_power():
    rng = np.random.default_rng(2)
    sched = build_schedule(4, 32, 2)
    res = run_successive_halving(ReplayEvaluator(random_table("p", sched, 8, rng)), SPACE, 8, sched, seed=0)
    assert len(res.elimination_trace[-1]) == 1


def test_single_round_mesh_is_random_search_over_n():
    rng = np.random.default_rng(5)
    sched = build_schedule(16, 16, 2)
    table = random_table("s0", sched, 12, rng)
    mesh = run_mesh(ReplayEvaluator(table), SPACE, 9, sched, OracleBundle(table), None, seed=7)
    rs = run_random_search(ReplayEvaluator(table), SPACE, 9, 16, seed=7)
    assert mesh.best_loss == rs.best_loss and mesh.resource_spent == rs.resource_spent == 9 * 16


def test_mesh_requires_bundle_and_checks_width():
    table, sched = crossover_table()
    with pytest.raises(ConfigError):
        run_mesh(ReplayEvaluator(table), SPACE, 4, sched, None, None, seed=0)

    class WrongShape(PassthroughBundle):
        def predict_round(self, i, mf, space, configs, histories):
            return np.zeros(len(configs) + 1)

    with pytest.raises(ContractViolation, match="round 0"):
        run_mesh(ReplayEvaluator(table), SPACE, 4, sched, WrongShape(), None, seed=0)


def test_evaluator_errors_carry_config_id():
    table, sched = crossover_table()

    class Broken(ReplayEvaluator):
        def evaluate(self, config, resource):
            if config.id == "0:2":
                raise DataError("disk on fire")
            return super().evaluate(config, resource)

    with pytest.raises(TrialError, match="0:2") as info:
        run_successive_halving(Broken(table), SPACE, 4, sched, seed=0)
    assert info.value.exit_code == DataError.exit_code


@pytest.mark.parametrize("n", [2 ** k for k in range(0, 9)])
def test_budget_parity_powers_of_two(n):
    rng = np.random.default_rng(n)
    for s in range(0, int(np.log2(n)) + 1):
        sched = build_schedule(4, 4 * 2 ** s, 2)
        table = random_table("bp", sched, n, rng)
        total = schedule_budget(n, sched)
        for run in (lambda ev: run_successive_halving(ev, SPACE, n, sched, seed=1),
                    lambda ev: run_mesh(ev, SPACE, n, sched, OracleBundle(table), None, seed=1)):
            ev = ReplayEvaluator(table)
            res = run(ev)
            assert res.resource_spent == ev.resource_charged == total
        k = equivalent_rs_budget(n, sched)
        ev = ReplayEvaluator(table)
        res = run_random_search(ev, SPACE, k, sched.resources[-1], seed=1)
        assert res.resource_spent == ev.resource_charged <= total


def test_run_log_records_predictions_only_for_mesh():
    table, sched = crossover_table()
    sh = run_successive_halving(ReplayEvaluator(table), SPACE, 4, sched, seed=0)
    mesh = run_mesh(ReplayEvaluator(table), SPACE, 4, sched, OracleBundle(table), None, seed=0)
    assert all(r["predicted"] is None for r in sh.run_log)
    assert all(r["predicted"] is not None for r in mesh.run_log)
    assert set(sh.run_log[0]) == {"round", "config_id", "resource", "loss", "predicted", "survived"}
    assert sorted({r["config_id"] for r in sh.run_log}, key=id_sort_key) == ["0:0", "0:1", "0:2", "0:3"]
