import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from meshtune.errors import ConfigError, ContractViolation
from meshtune.schedule import (build_schedule, cohort_sizes, equivalent_rs_budget, schedule_budget)
from meshtune.space import (HyperparamSpace, ParamDef, id_sort_key, load_space, sample_configurations,
                            xgboost_space)


@pytest.mark.parametrize("r_min, r_max, eta, s_max, resources", [
    (16, 1024, 2, 6, [16, 32, 64, 128, 256, 512, 1024]),
    (16, 16, 2, 0, [16]),
    (16, 100, 2, 2, [16, 32, 64]),
    (1, 81, 3, 4, [1, 3, 9, 27, 81]),
])
def test_build_schedule(r_min, r_max, eta, s_max, resources):
    sched = build_schedule(r_min, r_max, eta)
    assert sched.s_max == s_max
    assert sched.resources == resources
    assert sched.resources[-1] <= r_max


@pytest.mark.parametrize("args, field", [
    ((0, 10, 2), "r_min"),
    ((16, 8, 2), "r_max"),
    ((16, 64, 1), "eta"),
])
def test_build_schedule_rejects_bad_bounds(args, field):
    with pytest.raises(ConfigError, match=field):
        build_schedule(*args)


def test_cohort_sizes():
    assert cohort_sizes(64, build_schedule(16, 1024, 2)) == [64, 32, 16, 8, 4, 2, 1]
    assert cohort_sizes(1, build_schedule(16, 16, 2)) == [1]
    with pytest.raises(ContractViolation):
        cohort_sizes(63, build_schedule(16, 1024, 2))


def test_equivalent_rs_budget():
    assert equivalent_rs_budget(64, build_schedule(16, 1024, 2)) == 7
    assert equivalent_rs_budget(1, build_schedule(16, 16, 2)) == 1
    # (8*16 + 4*32 + 2*64) / 64 = 6
    assert equivalent_rs_budget(8, build_schedule(16, 64, 2)) == 6


@pytest.mark.parametrize("eta", [2, 3])
def test_budget_accounting_exhaustive(eta):
    for s in range(0, 5):
        sched = build_schedule(4, 4 * eta ** s, eta)
        for n in range(eta ** s, 4097):
            sizes = cohort_sizes(n, sched)
            assert all(a >= b for a, b in zip(sizes, sizes[1:])) and sizes[-1] >= 1
            total = schedule_budget(n, sched)
            bound = n * sched.r_min * (sched.s_max + 1)
            assert total <= bound
            if n == eta ** round(math.log(n, eta)):
                assert total == bound


def test_degenerate_param_is_pinned():
    space = HyperparamSpace((ParamDef("k", "integer", 3, 3),))
    assert {c["k"] for c in sample_configurations(space, 50, 0)} == {3}


def test_uniform_mean_and_determinism():
    space = HyperparamSpace((ParamDef("x", "continuous", 0.0, 1.0),))
    a = sample_configurations(space, 10_000, 7)
    assert abs(np.mean([c["x"] for c in a]) - 0.5) < 0.02
    b = sample_configurations(space, 10_000, 7)
    assert [c.values for c in a] == [c.values for c in b]
    assert [c.id for c in a] == [c.id for c in b]


def test_samples_are_prefix_stable():
    space = xgboost_space()
    big = sample_configurations(space, 64, 3)
    small = sample_configurations(space, 7, 3)
    assert [c.values for c in small] == [c.values for c in big[:7]]


def test_log_scale_is_log_uniform():
    space = HyperparamSpace((ParamDef("lr", "continuous", 1e-3, 0.5, "log"),))
    v = np.log([c["lr"] for c in sample_configurations(space, 100_000, 1)])
    u = (v - math.log(1e-3)) / (math.log(0.5) - math.log(1e-3))
    assert stats.kstest(u, "uniform").statistic < 0.02


def test_integer_param_covers_range_uniformly():
    space = HyperparamSpace((ParamDef("d", "integer", 2, 12),))
    vals = [c["d"] for c in sample_configurations(space, 22_000, 0)]
    counts = np.bincount(vals, minlength=13)[2:]
    assert set(vals) == set(range(2, 13))
    assert counts.min() > 1700 and counts.max() < 2300


@st.composite
def spaces(draw):
    params = []
    for j in range(draw(st.integers(1, 5))):
        kind = draw(st.sampled_from(["continuous", "integer"]))
        scale = draw(st.sampled_from(["linear", "log"]))
        lo = draw(st.integers(1, 50)) if kind == "integer" else draw(st.floats(1e-4, 10))
        width = draw(st.integers(0, 100)) if kind == "integer" else draw(st.floats(0, 100))
        params.append(ParamDef(f"p{j}", kind, float(lo), float(lo + width), scale))
    return HyperparamSpace(tuple(params))


@settings(max_examples=100, deadline=None)
@given(spaces(), st.integers(1, 40), st.integers(0, 2**31))
def test_sampled_configs_satisfy_space(space, n, seed):
    configs = sample_configurations(space, n, seed)
    assert len(configs) == n and len({c.id for c in configs}) == n
    for c in configs:
        space.validate(c.values)
        for p in space.params:
            if p.kind == "integer":
                assert isinstance(c[p.name], int)


@pytest.mark.parametrize("kwargs", [
    dict(name="x", lower=2.0, upper=1.0),
    dict(name="x", lower=0.0, upper=1.0, scale="log"),
    dict(name="x", kind="integer", lower=0.5, upper=3.0),
    dict(name="1x"),
    dict(name="x", kind="categorical"),
])
def test_paramdef_validation(kwargs):
    with pytest.raises(ConfigError):
        ParamDef(**kwargs)


def test_duplicate_names_rejected():
    with pytest.raises(ConfigError):
        HyperparamSpace((ParamDef("a"), ParamDef("a")))


def test_space_json_roundtrip(tmp_path):
    doc = {"params": [{"name": "lambda", "kind": "continuous", "lower": 1e-3, "upper": 1e2, "scale": "log"},
                      {"name": "max_depth", "kind": "integer", "lower": 2, "upper": 12, "scale": "linear"}]}
    path = tmp_path / "space.json"
    path.write_text(json.dumps(doc))
    space = load_space(path)
    assert space.names == ["lambda", "max_depth"]
    assert space.to_dict() == {"params": [{**p, "lower": float(p["lower"]), "upper": float(p["upper"])}
                                          for p in doc["params"]]}


def test_id_sort_key_is_numeric_aware():
    ids = ["0:10", "0:9", "1:0", "0:2"]
    assert sorted(ids, key=id_sort_key) == ["0:2", "0:9", "0:10", "1:0"]
