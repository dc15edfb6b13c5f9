"""Random replay tables and small fixtures shared by the tuner and acceptance tests."""
import numpy as np

from meshtune.evaluators import LossCurveTable
from meshtune.schedule import ResourceSchedule, build_schedule
from meshtune.space import Configuration, sample_configurations, xgboost_space

SPACE = xgboost_space()


def random_replay_case(seed: int, monotone: bool = False):
    """A random (table, schedule, n) with n <= 64 and eta in {2, 3}."""
    rng = np.random.default_rng(seed)
    eta = int(rng.choice([2, 3]))
    s_max = int(rng.integers(0, 4 if eta == 2 else 3))
    r_min = int(rng.integers(1, 20))
    sched = build_schedule(r_min, r_min * eta ** s_max + int(rng.integers(0, r_min)), eta)
    n = int(rng.integers(eta ** sched.s_max, 65))
    m = n + int(rng.integers(0, 20))
    table = random_table(f"rt{seed}", sched, m, rng, monotone)
    return table, sched, n


def random_table(dataset_id: str, sched: ResourceSchedule, m: int, rng, monotone: bool = False,
                 ties: bool = True) -> LossCurveTable:
    configs = sample_configurations(SPACE, m, int(rng.integers(0, 2**31)))
    L = rng.random((m, sched.n_rounds))
    if ties:  # coarse grid so equal losses occur and the tie rule is exercised
        L = np.round(L * 20) / 20
    if monotone:
        L = np.minimum.accumulate(L, axis=1)
    table = LossCurveTable(dataset_id, sched.resources, header={"metafeatures": [0.0] * 15})
    for c, row in zip(configs, L):
        table.add(c, dict(zip(sched.resources, row.tolist())))
    return table


def crossover_table() -> tuple[LossCurveTable, ResourceSchedule]:
    """Four configs whose round-0 order is the reverse of what matters at r_max."""
    sched = build_schedule(16, 32, 2)
    table = LossCurveTable("cross4", sched.resources, header={"metafeatures": [0.0] * 15})
    r0, rmax = [.1, .2, .3, .4], [.5, .4, .1, .2]
    for j in range(4):
        c = Configuration(f"0:{j}", {"lambda": 1.0, "colsample_bytree": 1.0, "max_depth": 3 + j,
                                     "learning_rate": 0.1})
        table.add(c, {16: r0[j], 32: rmax[j]})
    return table, sched
