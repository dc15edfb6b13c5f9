"""Per-round meta-datasets built from loss-curve tables."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from ..errors import ConfigError, DataError
from ..evaluators import LossCurveTable
from ..schedule import ResourceSchedule
from ..space import HyperparamSpace
from .features import FEATURE_SET_VERSION, METAFEATURE_NAMES, N_METAFEATURES

LANDMARK_RECIPES = ("previous", "inclusive")


def n_landmarks(round_index: int, landmarks: str) -> int:
    if landmarks == "previous":
        return round_index
    if landmarks == "inclusive":
        return round_index + 1
    raise ConfigError(f"landmark recipe must be one of {LANDMARK_RECIPES}, got {landmarks!r}")


def column_names(space: HyperparamSpace, round_index: int, landmarks: str = "previous") -> list[str]:
    cfg = [f"cfg_{'log_' if p.scale == 'log' else ''}{p.name}" for p in space.params]
    return [*METAFEATURE_NAMES, *cfg, *(f"loss_r{j}" for j in range(n_landmarks(round_index, landmarks)))]


def assemble_features(dataset_mf: np.ndarray, config_mf: np.ndarray, history: Sequence[float],
                      round_index: int, landmarks: str = "previous") -> np.ndarray:
    """Dataset meta-features, then configuration meta-features, then landmark losses."""
    k = n_landmarks(round_index, landmarks)
    if len(history) < k:
        raise ConfigError(f"round {round_index} needs {k} landmark losses, have {len(history)}")
    return np.concatenate([np.asarray(dataset_mf, dtype=float), config_mf, np.asarray(history[:k], dtype=float)])


@dataclass
class MetaExample:
    features: np.ndarray
    target: float
    dataset_id: str
    config_id: str
    round: int


@dataclass
class MetaDataset:
    rounds: list[list[MetaExample]]
    provenance: list[str]
    schedule: dict
    space: HyperparamSpace
    landmarks: str = "previous"
    feature_set: str = FEATURE_SET_VERSION
    columns: list[list[str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.columns:
            self.columns = [column_names(self.space, i, self.landmarks) for i in range(len(self.rounds))]

    @property
    def n_rounds(self) -> int:
        return len(self.rounds)

    def arrays(self, round_index: int, exclude: Iterable[str] = ()) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(X, y, dataset ids) for one round, with excluded datasets removed."""
        excl = set(exclude)
        rows = [e for e in self.rounds[round_index] if e.dataset_id not in excl]
        width = len(self.columns[round_index])
        if not rows:
            return np.empty((0, width)), np.empty(0), np.empty(0, dtype=object)
        X = np.vstack([e.features for e in rows])
        y = np.array([e.target for e in rows])
        g = np.array([e.dataset_id for e in rows], dtype=object)
        return X, y, g

    def subset(self, dataset_ids: Iterable[str]) -> "MetaDataset":
        keep = set(dataset_ids)
        return MetaDataset([[e for e in r if e.dataset_id in keep] for r in self.rounds],
                           [d for d in self.provenance if d in keep], self.schedule, self.space,
                           self.landmarks, self.feature_set, self.columns)

    def header(self) -> dict:
        return {"feature_set": self.feature_set, "schedule": self.schedule, "space": self.space.to_dict(),
                "landmarks": self.landmarks, "provenance": self.provenance, "columns": self.columns}

    def to_jsonl(self, path: str | Path, extra_header: Optional[dict] = None) -> None:
        with Path(path).open("w") as fh:
            head = {**self.header(), **(extra_header or {})}
            fh.write(json.dumps({"header": head}, sort_keys=True) + "\n")
            for r in self.rounds:
                for e in r:
                    fh.write(json.dumps({"dataset_id": e.dataset_id, "config_id": e.config_id, "round": e.round,
                                         "features": e.features.tolist(), "target": e.target}) + "\n")

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "MetaDataset":
        try:
            lines = Path(path).read_text().splitlines()
            head = json.loads(lines[0])["header"]
        except FileNotFoundError as exc:
            raise DataError(f"meta-dataset not found: {path}") from exc
        except (IndexError, KeyError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: missing or malformed header record") from exc
        if head.get("feature_set") != FEATURE_SET_VERSION:
            raise DataError(f"{path}: feature set {head.get('feature_set')!r} != {FEATURE_SET_VERSION!r}")
        columns = head["columns"]
        rounds: list[list[MetaExample]] = [[] for _ in columns]
        for s in lines[1:]:
            if not s.strip():
                continue
            rec = json.loads(s)
            i = int(rec["round"])
            x = np.asarray(rec["features"], dtype=float)
            if len(x) != len(columns[i]):
                raise DataError(f"{path}: round-{i} example has width {len(x)}, header says {len(columns[i])}")
            rounds[i].append(MetaExample(x, float(rec["target"]), str(rec["dataset_id"]), str(rec["config_id"]), i))
        return cls(rounds, list(head["provenance"]), head["schedule"],
                   HyperparamSpace.from_dict(head["space"]), head["landmarks"], head["feature_set"], columns)


def build_metadataset(tables: Sequence[LossCurveTable], space: HyperparamSpace, sched: ResourceSchedule,
                      landmarks: str = "previous") -> MetaDataset:
    """One example per (dataset, configuration, round); the target is the loss at the last level."""
    levels = sched.resources
    rounds: list[list[MetaExample]] = [[] for _ in levels]
    provenance = []
    for table in tables:
        if list(table.levels) != levels:
            raise DataError(f"table {table.dataset_id}: levels {table.levels} do not match schedule {levels}")
        mf = table.metafeatures
        if mf is None or mf.shape != (N_METAFEATURES,):
            raise DataError(f"table {table.dataset_id}: header lacks the {N_METAFEATURES} dataset meta-features")
        if table.dataset_id in provenance:
            raise DataError(f"dataset id {table.dataset_id} appears in more than one table")
        provenance.append(table.dataset_id)
        for cid, (config, losses) in table.entries.items():
            cmf = space.encode(config.values)
            curve = [losses[r] for r in levels]
            target = curve[-1]
            for i in range(len(levels)):
                x = assemble_features(mf, cmf, curve, i, landmarks)
                rounds[i].append(MetaExample(x, target, table.dataset_id, cid, i))
    return MetaDataset(rounds, provenance, sched.to_dict(), space, landmarks)
