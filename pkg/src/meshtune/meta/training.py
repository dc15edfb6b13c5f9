"""Offline phase: per-round meta-regressors tuned by dataset-grouped cross-validation."""
from __future__ import annotations

import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from ..errors import ConfigError, ContractViolation, DataError
from ..schedule import ResourceSchedule
from ..space import Configuration, HyperparamSpace
from .dataset import MetaDataset, assemble_features, n_landmarks
from .features import FEATURE_SET_VERSION
from .regressors import Standardizer, make_regressor

log = logging.getLogger(__name__)

GRIDS: dict[str, list[dict]] = {
    "knn": [{"k": k} for k in (1, 3, 5, 11, 25)],
    "gbdt": [{"max_depth": d, "n_trees": n, "learning_rate": lr}
             for d, n, lr in itertools.product((3, 5), (100, 300), (0.05, 0.1))],
    # fixed defaults, no search
    "mlp": [{"hidden": [64, 64], "epochs": 200, "batch_size": 256, "step_size": 1e-3}],
}


class FoldError(DataError):
    pass


@dataclass
class MetaModel:
    kind: str
    round: int
    params: dict
    standardizer: Standardizer
    regressor: object
    n_features: int
    cv_mse: Optional[float] = None

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ContractViolation(f"round {self.round}: meta-model expects width {self.n_features}, "
                                    f"got {X.shape[1]}")
        return self.regressor.predict(self.standardizer.transform(X))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "round": self.round, "params": self.params,
                "n_features": self.n_features, "cv_mse": self.cv_mse,
                "standardization": self.standardizer.to_dict(),
                "model": self.regressor.state_dict()}

    @classmethod
    def from_dict(cls, doc: dict) -> "MetaModel":
        reg = make_regressor(doc["kind"], doc["params"])
        reg.load_state(doc["model"])
        return cls(doc["kind"], int(doc["round"]), doc["params"], Standardizer.from_dict(doc["standardization"]),
                   reg, int(doc["n_features"]), doc.get("cv_mse"))


def fit_meta_model(kind: str, params: dict, X: np.ndarray, y: np.ndarray, round_index: int) -> MetaModel:
    std = Standardizer().fit(X)
    reg = make_regressor(kind, params).fit(std.transform(X), y)
    return MetaModel(kind, round_index, dict(params), std, reg, X.shape[1])


@dataclass
class MetaModelBundle:
    """Meta-models M_0..M_s and the recipe for assembling their inputs."""

    kind: str
    models: list[MetaModel]
    landmarks: str = "previous"
    provenance: list[str] = field(default_factory=list)
    excluded: list[str] = field(default_factory=list)
    schedule: dict = field(default_factory=dict)
    feature_set: str = FEATURE_SET_VERSION
    metadata: dict = field(default_factory=dict)

    def check(self, sched: ResourceSchedule) -> None:
        if len(self.models) < sched.n_rounds:
            raise ConfigError(f"bundle has {len(self.models)} meta-models but the schedule has "
                              f"{sched.n_rounds} rounds; missing M_{len(self.models)}")
        if self.schedule and [self.schedule.get(k) for k in ("r_min", "r_max", "eta")] != \
                [sched.r_min, sched.r_max, sched.eta]:
            raise ConfigError(f"bundle schedule {self.schedule} differs from {sched.to_dict()}")

    def predict_round(self, round_index: int, dataset_mf: Optional[np.ndarray], space: HyperparamSpace,
                      configs: Sequence[Configuration], histories: Sequence[Sequence[float]]) -> np.ndarray:
        if round_index >= len(self.models):
            raise ConfigError(f"no meta-model for round {round_index}")
        if dataset_mf is None:
            raise ConfigError("MeSH needs dataset meta-features for the target dataset")
        X = np.vstack([assemble_features(dataset_mf, space.encode(c.values), h, round_index, self.landmarks)
                       for c, h in zip(configs, histories)])
        return self.models[round_index].predict(X)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "landmarks": self.landmarks, "feature_set": self.feature_set,
                "provenance": self.provenance, "excluded": self.excluded, "schedule": self.schedule,
                "metadata": self.metadata, "rounds": [m.to_dict() for m in self.models]}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "MetaModelBundle":
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"bundle file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bundle file {path} is not valid JSON") from exc
        if doc.get("feature_set") != FEATURE_SET_VERSION:
            raise ConfigError(f"bundle feature set {doc.get('feature_set')!r} != {FEATURE_SET_VERSION!r}")
        return cls(doc["kind"], [MetaModel.from_dict(m) for m in doc["rounds"]], doc["landmarks"],
                   list(doc["provenance"]), list(doc.get("excluded", [])), doc.get("schedule", {}),
                   doc["feature_set"], doc.get("metadata", {}))


def grouped_folds(groups: np.ndarray, folds: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """K folds that never split one dataset's examples between training and validation."""
    ids = sorted(set(groups.tolist()))
    if len(ids) < folds:
        raise FoldError(f"{len(ids)} distinct datasets cannot fill {folds} folds")
    order = np.random.default_rng(seed).permutation(len(ids))
    fold_of = {ids[j]: pos % folds for pos, j in enumerate(order)}
    assign = np.array([fold_of[g] for g in groups.tolist()])
    return [(np.nonzero(assign != f)[0], np.nonzero(assign == f)[0]) for f in range(folds)]


def cv_mse(kind: str, params: dict, X: np.ndarray, y: np.ndarray,
           splits: list[tuple[np.ndarray, np.ndarray]]) -> float:
    """Example-weighted validation MSE over grouped folds."""
    return grid_cv_mse(kind, [params], X, y, splits)[0]


def grid_cv_mse(kind: str, grid: list[dict], X: np.ndarray, y: np.ndarray,
                splits: list[tuple[np.ndarray, np.ndarray]]) -> list[float]:
    """CV MSE for every grid point.

    GBDT grid points that differ only in ``n_trees`` share one fit per fold
    and are scored on staged predictions, which equal separately fitted models.
    """
    sq = np.zeros(len(grid))
    count = sum(len(va) for _, va in splits)
    groups: dict[str, list[int]] = {}
    for j, p in enumerate(grid):
        key = json.dumps({k: v for k, v in p.items() if not (kind == "gbdt" and k == "n_trees")}, sort_keys=True)
        groups.setdefault(key, []).append(j)
    for tr, va in splits:
        for members in groups.values():
            if kind == "gbdt":
                stages = {int(grid[j].get("n_trees", 100)) for j in members}
                params = {**grid[members[0]], "n_trees": max(stages)}
                m = fit_meta_model(kind, params, X[tr], y[tr], -1)
                staged = m.regressor.staged_predict(m.standardizer.transform(X[va]), stages)
                for j in members:
                    sq[j] += float(np.sum((staged[int(grid[j].get("n_trees", 100))] - y[va]) ** 2))
            else:
                for j in members:
                    m = fit_meta_model(kind, grid[j], X[tr], y[tr], -1)
                    sq[j] += float(np.sum((m.predict(X[va]) - y[va]) ** 2))
    return (sq / count).tolist()


def _train_round(md: MetaDataset, i: int, kind: str, exclude: set, folds: int, seed: int,
                 grid: list[dict]) -> MetaModel:
    X, y, g = md.arrays(i, exclude)
    if len(y) == 0:
        raise DataError(f"round {i}: no meta-examples left after exclusion")
    if kind == "mlp":
        params = {**grid[0], "seed": seed}
        model = fit_meta_model(kind, params, X, y, i)
        log.info("round %d: mlp trained with fixed defaults on %d examples", i, len(y))
        return model
    splits = grouped_folds(g, folds, seed + i)
    scores = grid_cv_mse(kind, grid, X, y, splits)
    best = int(np.argmin(scores))
    model = fit_meta_model(kind, grid[best], X, y, i)
    model.cv_mse = scores[best]
    log.info("round %d: %s best %s cv_mse=%.6g", i, kind, grid[best], scores[best])
    return model


def train_meta_models(md: MetaDataset, kind: str, exclude_dataset: str | Iterable[str] | None = None,
                      folds: int = 3, seed: int = 0, grid: Optional[list[dict]] = None,
                      workers: int = 1) -> MetaModelBundle:
    """Fit M_0..M_s, tuning each round's hyperparameters by grouped k-fold CV MSE.

    Examples from ``exclude_dataset`` never reach training or validation folds.
    The MLP is trained with its fixed defaults and no search.
    """
    if kind not in GRIDS:
        raise ConfigError(f"unknown meta-regressor kind {kind!r}; expected one of {sorted(GRIDS)}")
    if folds < 2:
        raise ConfigError(f"folds must be >= 2, got {folds}")
    if exclude_dataset is None:
        exclude = set()
    elif isinstance(exclude_dataset, str):
        exclude = {exclude_dataset}
    else:
        exclude = set(exclude_dataset)
    grid = grid or GRIDS[kind]

    def fit(i: int) -> MetaModel:
        return _train_round(md, i, kind, exclude, folds, seed, grid)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            models = list(pool.map(fit, range(md.n_rounds)))
    else:
        models = [fit(i) for i in range(md.n_rounds)]
    provenance = [d for d in md.provenance if d not in exclude]
    return MetaModelBundle(kind, models, md.landmarks, provenance, sorted(exclude), dict(md.schedule),
                           md.feature_set, {"folds": folds, "seed": seed, "grid": grid})


def offline_mse_report(bundle, held_out: MetaDataset) -> list[dict]:
    """Held-out MSE of each M_i on round-i examples (plot-ready rows)."""
    rows = []
    for i in range(held_out.n_rounds):
        X, y, _ = held_out.arrays(i)
        if len(y) == 0:
            rows.append({"round": i, "n": 0, "mse": math.nan})
            continue
        pred = bundle.models[i].predict(X)
        rows.append({"round": i, "n": int(len(y)), "mse": float(np.mean((pred - y) ** 2))})
    return rows
