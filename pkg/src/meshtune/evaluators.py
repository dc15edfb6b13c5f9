"""Train-and-score backends behind one evaluator contract.

An evaluator is bound to one dataset and keeps per-configuration state so a
configuration evaluated at increasing resources trains only once overall.
Every call is charged to ``resource_charged`` so tuners can be audited for
budget parity.
"""
from __future__ import annotations

import json
import logging
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

import numpy as np

from .data import Dataset
from .errors import ContractViolation, DataError
from .gbdt import Booster, logistic_loss
from .space import Configuration, HyperparamSpace, id_sort_key, sample_configurations

__all__ = [
    "logistic_loss", "LossCurveTable", "Evaluator", "GbdtEvaluator", "ReplayEvaluator",
    "UnknownConfigError", "DEFAULT_PATIENCE",
]

log = logging.getLogger(__name__)

DEFAULT_PATIENCE = 50


class UnknownConfigError(DataError, LookupError):
    pass


@dataclass
class LossCurveTable:
    """Validation losses of many configurations at every schedule level on one dataset."""

    dataset_id: str
    levels: list[int]
    entries: dict[str, tuple[Configuration, dict[int, float]]] = field(default_factory=dict)
    header: dict[str, Any] = field(default_factory=dict)

    def add(self, config: Configuration, losses: Mapping[int, float]) -> None:
        losses = {int(r): float(v) for r, v in losses.items()}
        missing = set(self.levels) - set(losses)
        if missing:
            raise DataError(f"table {self.dataset_id}: config {config.id} misses levels {sorted(missing)}")
        bad = [r for r, v in losses.items() if not math.isfinite(v)]
        if bad:
            raise DataError(f"table {self.dataset_id}: config {config.id} has non-finite loss at {bad}")
        self.entries[config.id] = (config, losses)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def config_ids(self) -> list[str]:
        return list(self.entries)

    @property
    def metafeatures(self) -> Optional[np.ndarray]:
        mf = self.header.get("metafeatures")
        return None if mf is None else np.asarray(mf, dtype=float)

    def loss(self, config_id: str, resource: int) -> float:
        try:
            return self.entries[config_id][1][resource]
        except KeyError:
            if config_id not in self.entries:
                raise UnknownConfigError(f"config {config_id} not in table {self.dataset_id}") from None
            raise DataError(f"table {self.dataset_id} has no loss at resource {resource}") from None

    def final_losses(self) -> dict[str, float]:
        r_max = max(self.levels)
        return {cid: losses[r_max] for cid, (_, losses) in self.entries.items()}

    def matrix(self) -> np.ndarray:
        """Losses as an (n_configs, n_levels) array in entry order."""
        return np.array([[losses[r] for r in self.levels] for _, losses in self.entries.values()])

    def to_jsonl(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w") as fh:
            head = {"dataset_id": self.dataset_id, "levels": self.levels, **self.header}
            fh.write(json.dumps({"header": head}, sort_keys=True) + "\n")
            for cid, (config, losses) in self.entries.items():
                rec = {"config_id": cid, "values": dict(config.values),
                       "losses": {str(r): losses[r] for r in self.levels}}
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    @classmethod
    def from_jsonl(cls, path: str | Path, levels: Optional[Iterable[int]] = None) -> "LossCurveTable":
        path = Path(path)
        try:
            lines = [json.loads(s) for s in path.read_text().splitlines() if s.strip()]
        except FileNotFoundError as exc:
            raise DataError(f"loss-curve table not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON line ({exc})") from exc
        header = {}
        if lines and "header" in lines[0]:
            header = dict(lines.pop(0)["header"])
        dataset_id = str(header.pop("dataset_id", path.stem))
        lv = header.pop("levels", None)
        if levels is not None:
            lv = list(levels)
        if lv is None:
            lv = sorted({int(k) for rec in lines for k in rec["losses"]})
        table = cls(dataset_id, [int(r) for r in lv], header=header)
        for rec in lines:
            try:
                config = Configuration(str(rec["config_id"]), dict(rec.get("values", {})))
                table.add(config, {int(k): v for k, v in rec["losses"].items()})
            except (KeyError, TypeError, ValueError) as exc:
                if isinstance(exc, DataError):
                    raise
                raise DataError(f"{path}: malformed record {rec!r}") from exc
        return table


class Evaluator:
    """Common bookkeeping: charged resource, worker-safe counters."""

    dataset_id: str = ""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.resource_charged = 0
        self.evaluations = 0

    def _charge(self, resource: int) -> None:
        with self._lock:
            self.resource_charged += int(resource)
            self.evaluations += 1

    def sample_configurations(self, space: HyperparamSpace, n: int, seed: int) -> list[Configuration]:
        return sample_configurations(space, n, seed)

    def dataset_metafeatures(self) -> Optional[np.ndarray]:
        return None

    def evaluate(self, config: Configuration, resource: int) -> float:
        raise NotImplementedError

    def early_stopped_best(self, config: Configuration, r_max: int,
                           patience: int = DEFAULT_PATIENCE) -> tuple[float, int]:
        raise NotImplementedError


class GbdtEvaluator(Evaluator):
    """Trains the native GBDT with boosting rounds as the resource.

    With ``early_stopping`` on, :meth:`evaluate` stops a configuration after
    ``patience`` rounds without validation improvement and reports the best
    loss seen so far.
    """

    def __init__(self, dataset: Dataset, early_stopping: bool = False,
                 patience: int = DEFAULT_PATIENCE, min_child_weight: float = 1.0):
        super().__init__()
        if patience < 1:
            raise ContractViolation(f"patience must be >= 1, got {patience}")
        self.dataset = dataset
        self.dataset_id = dataset.id
        self.early_stopping = early_stopping
        self.patience = patience
        self.min_child_weight = min_child_weight
        self._boosters: dict[str, Booster] = {}
        self._mf: Optional[np.ndarray] = None

    @property
    def tree_fits(self) -> int:
        return sum(b.tree_fits for b in self._boosters.values())

    def dataset_metafeatures(self) -> np.ndarray:
        if self._mf is None:
            from .meta.features import compute_dataset_metafeatures
            self._mf = compute_dataset_metafeatures(self.dataset)
        return self._mf

    def booster(self, config: Configuration) -> Booster:
        with self._lock:
            b = self._boosters.get(config.id)
            if b is None:
                b = self._boosters[config.id] = Booster(self.dataset, config,
                                                        min_child_weight=self.min_child_weight)
        return b

    @staticmethod
    def _run_with_patience(b: Booster, target: int, patience: int) -> tuple[float, int]:
        """Walk rounds 1..target, training as needed; stop after ``patience`` non-improving rounds."""
        best, best_round = math.inf, 0
        for r in range(1, target + 1):
            if r > b.rounds:
                b.step()
            loss = b.val_losses[r]
            if loss < best:
                best, best_round = loss, r
            elif r - best_round >= patience:
                return best, r
        return best, target

    def evaluate(self, config: Configuration, resource: int) -> float:
        b = self.booster(config)
        if not self.early_stopping or resource == 0:
            b.train_to(resource)
            self._charge(resource)
            return b.val_losses[resource]
        best, reached = self._run_with_patience(b, resource, self.patience)
        self._charge(reached)
        return best

    def early_stopped_best(self, config: Configuration, r_max: int,
                           patience: int = DEFAULT_PATIENCE) -> tuple[float, int]:
        if patience < 1:
            raise ContractViolation(f"patience must be >= 1, got {patience}")
        b = self.booster(config)
        best, reached = self._run_with_patience(b, r_max, patience)
        self._charge(reached)
        return best, reached


class ReplayEvaluator(Evaluator):
    """Looks losses up in a :class:`LossCurveTable`; sampling draws table entries."""

    def __init__(self, table: LossCurveTable):
        super().__init__()
        self.table = table
        self.dataset_id = table.dataset_id

    def sample_configurations(self, space: HyperparamSpace, n: int, seed: int) -> list[Configuration]:
        if n > len(self.table):
            raise ContractViolation(f"cannot sample {n} configs from a table of {len(self.table)}")
        ids = sorted(self.table.config_ids, key=id_sort_key)
        pick = np.random.default_rng(seed).permutation(len(ids))[:n]
        return [self.table.entries[ids[i]][0] for i in pick]

    def dataset_metafeatures(self) -> Optional[np.ndarray]:
        return self.table.metafeatures

    def evaluate(self, config: Configuration, resource: int) -> float:
        loss = self.table.loss(config.id, resource)
        self._charge(resource)
        return loss

    def early_stopped_best(self, config: Configuration, r_max: int,
                           patience: int = DEFAULT_PATIENCE) -> tuple[float, int]:
        loss = self.table.loss(config.id, r_max)
        self._charge(r_max)
        return loss, r_max
