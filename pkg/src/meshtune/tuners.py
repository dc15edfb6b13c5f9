"""Random search, successive halving and meta-learned successive halving (MeSH).

All three share sampling, budget accounting and the run-log format. SH and
MeSH run the same halving loop and differ only in the score used to rank
survivors: SH ranks by the loss observed at the current resource, MeSH by a
per-round meta-model's prediction of the loss at the maximal resource.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np

from .errors import ConfigError, ContractViolation, MeshTuneError, TrialError
from .evaluators import DEFAULT_PATIENCE, Evaluator, LossCurveTable
from .schedule import ResourceSchedule, TrialRecord, cohort_sizes
from .space import Configuration, HyperparamSpace, id_sort_key


@dataclass
class TuneResult:
    tuner: str
    best_config: Configuration
    best_loss: float
    best_resource: int
    trials: list[TrialRecord]
    resource_spent: int
    elimination_trace: list[list[str]] = field(default_factory=list)
    run_log: list[dict] = field(default_factory=list)

    @property
    def final_round_best(self) -> float:
        """Lowest loss among evaluations at the largest resource any trial reached."""
        top = max(r for t in self.trials for r in t.resources.values())
        return min(t.losses[i] for t in self.trials for i, r in t.resources.items() if r == top)

    def summary(self) -> dict:
        return {"tuner": self.tuner, "best_config": self.best_config.to_dict(),
                "best_loss": self.best_loss, "best_resource": self.best_resource,
                "resource_spent": self.resource_spent,
                "elimination_trace": self.elimination_trace}


class Bundle(Protocol):
    """Anything that scores survivors by predicted final-round loss."""

    def check(self, sched: ResourceSchedule) -> None: ...

    def predict_round(self, round_index: int, dataset_mf: Optional[np.ndarray], space: HyperparamSpace,
                      configs: Sequence[Configuration], histories: Sequence[Sequence[float]]) -> np.ndarray: ...


class PassthroughBundle:
    """Predicts the most recently observed loss; MeSH with it is exactly SH."""

    landmarks = "inclusive"

    def check(self, sched: ResourceSchedule) -> None:
        pass

    def predict_round(self, round_index, dataset_mf, space, configs, histories):
        return np.array([h[round_index] for h in histories], dtype=float)


class OracleBundle:
    """Predicts the true final-round loss by looking it up in a loss-curve table."""

    landmarks = "none"

    def __init__(self, table: LossCurveTable):
        self.final = table.final_losses()

    def check(self, sched: ResourceSchedule) -> None:
        pass

    def predict_round(self, round_index, dataset_mf, space, configs, histories):
        return np.array([self.final[c.id] for c in configs], dtype=float)


def top_k(configs: Sequence[Configuration], scores: Sequence[float], k: int) -> list[Configuration]:
    """The ``k`` configs with the smallest scores; ties go to the lower config id, NaN ranks last."""
    if len(configs) != len(scores):
        raise ContractViolation(f"{len(configs)} configs but {len(scores)} scores")
    if not 1 <= k <= len(configs):
        raise ContractViolation(f"k={k} must be in [1, {len(configs)}]")
    order = sorted(range(len(configs)),
                   key=lambda j: (math.isnan(scores[j]), scores[j] if not math.isnan(scores[j]) else 0.0,
                                  id_sort_key(configs[j].id)))
    return [configs[j] for j in order[:k]]


def _map(fn, items: Sequence, workers: int) -> list:
    def call(item):
        try:
            return fn(item)
        except MeshTuneError as exc:
            if isinstance(exc, TrialError):
                raise
            raise TrialError(item.id, exc) from exc
        except Exception as exc:  # evaluator bugs or numerical failures still name the trial
            raise TrialError(item.id, exc) from exc

    if workers <= 1 or len(items) <= 1:
        return [call(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(call, items))


def _pick_best(trials: Sequence[TrialRecord]) -> tuple[TrialRecord, int]:
    # equal losses prefer the larger resource, then the lower config id
    best = None
    for t in trials:
        for i, loss in t.losses.items():
            key = (loss, -t.resources[i], id_sort_key(t.config.id))
            if best is None or key < best[0]:
                best = (key, t, i)
    return best[1], best[2]


def _result(tuner: str, trials: list[TrialRecord], spent: int, trace, run_log) -> TuneResult:
    t, i = _pick_best(trials)
    return TuneResult(tuner, t.config, t.losses[i], t.resources[i], trials, spent, trace, run_log)


def run_random_search(evaluator: Evaluator, space: HyperparamSpace, k: int, r_max: int, seed: int,
                      patience: int = DEFAULT_PATIENCE, early_stopping: bool = True,
                      workers: int = 1) -> TuneResult:
    """Evaluate ``k`` sampled configurations at the maximal resource."""
    if k < 1:
        raise ContractViolation(f"k must be >= 1, got {k}")
    configs = evaluator.sample_configurations(space, k, seed)

    def run(c: Configuration) -> tuple[float, int]:
        if early_stopping:
            return evaluator.early_stopped_best(c, r_max, patience)
        return evaluator.evaluate(c, r_max), r_max

    outcomes = _map(run, configs, workers)
    trials, run_log, spent = [], [], 0
    for c, (loss, reached) in zip(configs, outcomes):
        t = TrialRecord(evaluator.dataset_id, c)
        t.record(0, reached, loss)
        if reached < r_max:
            t.stopped_early_at = reached
        trials.append(t)
        spent += reached
        run_log.append({"round": 0, "config_id": c.id, "resource": reached, "loss": loss,
                        "predicted": None, "survived": True})
    ranked = top_k(configs, [loss for loss, _ in outcomes], len(configs))
    return _result("rs", trials, spent, [[c.id for c in ranked]], run_log)


def _halving(name: str, evaluator: Evaluator, space: HyperparamSpace, n: int, sched: ResourceSchedule,
             seed: int, bundle: Optional[Bundle], dataset_mf: Optional[np.ndarray],
             workers: int) -> TuneResult:
    sizes = cohort_sizes(n, sched)
    configs = evaluator.sample_configurations(space, n, seed)
    records = {c.id: TrialRecord(evaluator.dataset_id, c) for c in configs}
    survivors = list(configs)
    trace, run_log, spent = [], [], 0
    for rnd in sched.rounds:
        i, r = rnd.index, rnd.resource
        losses = _map(lambda c: evaluator.evaluate(c, r), survivors, workers)
        for c, loss in zip(survivors, losses):
            records[c.id].record(i, r, loss)
        spent += r * len(survivors)
        if bundle is None:
            scores = np.asarray(losses, dtype=float)
        else:
            histories = [records[c.id].history() for c in survivors]
            scores = np.asarray(bundle.predict_round(i, dataset_mf, space, survivors, histories), dtype=float)
            if scores.shape != (len(survivors),):
                raise ContractViolation(f"round {i}: bundle returned {scores.shape} scores "
                                        f"for {len(survivors)} configs")
            for c, s in zip(survivors, scores):
                records[c.id].predicted[i] = float(s)
        keep = sizes[i + 1] if i < sched.s_max else max(1, int(math.floor(len(survivors) / sched.eta + 1e-9)))
        kept = top_k(survivors, scores.tolist(), keep)
        kept_ids = {c.id for c in kept}
        for c, loss, s in zip(survivors, losses, scores):
            run_log.append({"round": i, "config_id": c.id, "resource": r, "loss": loss,
                            "predicted": None if bundle is None else float(s),
                            "survived": c.id in kept_ids})
        trace.append([c.id for c in kept])
        survivors = kept
    return _result(name, list(records.values()), spent, trace, run_log)


def run_successive_halving(evaluator: Evaluator, space: HyperparamSpace, n: int, sched: ResourceSchedule,
                           seed: int, workers: int = 1) -> TuneResult:
    return _halving("sh", evaluator, space, n, sched, seed, None, None, workers)


def run_mesh(evaluator: Evaluator, space: HyperparamSpace, n: int, sched: ResourceSchedule,
             bundle: Bundle, dataset_mf: Optional[np.ndarray], seed: int, workers: int = 1,
             name: str = "mesh") -> TuneResult:
    if bundle is None:
        raise ConfigError("MeSH needs a meta-model bundle")
    bundle.check(sched)
    return _halving(name, evaluator, space, n, sched, seed, bundle, dataset_mf, workers)


def trace_from_log(run_log: Sequence[dict]) -> list[list[str]]:
    """Rebuild the elimination trace (survivors per round, best first) from a run log."""
    rounds: dict[int, list[dict]] = {}
    for rec in run_log:
        rounds.setdefault(rec["round"], []).append(rec)
    trace = []
    for i in sorted(rounds):
        kept = [rec for rec in rounds[i] if rec["survived"]]
        score = (lambda rec: rec["loss"]) if kept and kept[0]["predicted"] is None else (lambda rec: rec["predicted"])
        kept.sort(key=lambda rec: (score(rec), id_sort_key(rec["config_id"])))
        trace.append([rec["config_id"] for rec in kept])
    return trace
