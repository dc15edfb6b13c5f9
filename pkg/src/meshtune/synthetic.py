"""Synthetic binary-classification tasks and a surrogate loss-curve family.

The surrogate stands in for a large offline sweep: for any configuration it
returns a deterministic, non-increasing validation-loss curve over the
schedule levels. ``severity`` controls crossover. At 0, rankings barely change
with resource. At the default of 2, the configurations that look best at small resource
(high learning rate) end up worse at full resource; round-0 Spearman
against the final ranking is typically near -0.75.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import Dataset, random_split
from .evaluators import LossCurveTable
from .gbdt import stream_key
from .schedule import ResourceSchedule
from .space import Configuration, HyperparamSpace, xgboost_space


def make_binary_dataset(dataset_id: str, seed: int, n_rows: Optional[int] = None, n_cols: Optional[int] = None,
                        signal: Optional[float] = None, flip: Optional[float] = None,
                        val_fraction: float = 0.3) -> Dataset:
    """Logistic-model labels on mixed Gaussian / skewed features, with label noise."""
    rng = np.random.default_rng(seed)
    n_rows = int(rng.integers(150, 501)) if n_rows is None else n_rows
    n_cols = int(rng.integers(3, 17)) if n_cols is None else n_cols
    signal = float(rng.uniform(0.5, 3.0)) if signal is None else signal
    flip = float(rng.uniform(0.0, 0.2)) if flip is None else flip
    Z = rng.normal(size=(n_rows, n_cols))
    skewed = rng.random(n_cols) < 0.3
    X = np.where(skewed, np.exp(0.5 * Z), Z) * rng.uniform(0.5, 3.0, n_cols) + rng.normal(0, 2, n_cols)
    w = rng.normal(size=n_cols) * (rng.random(n_cols) < 0.7)
    if not w.any():
        w[0] = 1.0
    logits = signal * (Z @ w) / np.linalg.norm(w) + rng.uniform(-1.0, 1.0)
    y = (rng.random(n_rows) < 1 / (1 + np.exp(-logits))).astype(float)
    y = np.where(rng.random(n_rows) < flip, 1 - y, y)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    train, val = random_split(n_rows, val_fraction, seed)
    return Dataset(dataset_id, X, y, train, val)


def _decay(s_max: int, ratio: float = 0.5) -> np.ndarray:
    """Weights 1 = w_0 > w_1 > ... > w_s = 0, shrinking at least geometrically."""
    if s_max == 0:
        return np.zeros(1)
    p = ratio ** np.arange(s_max + 1)
    return (p - p[-1]) / (1 - p[-1])


@dataclass
class SurrogateTask:
    dataset: Dataset
    severity: float = 2.0
    seed: int = 0
    space: HyperparamSpace = field(default_factory=xgboost_space)

    def __post_init__(self) -> None:
        from .meta.features import compute_dataset_metafeatures
        self.metafeatures = compute_dataset_metafeatures(self.dataset)
        entropy, corr = self.metafeatures[13], self.metafeatures[10]
        self.base_loss = 0.05 + 0.8 * entropy * (1 - min(0.8, 1.5 * corr))
        enc = [(p.name, p.lower, p.upper, p.scale) for p in self.space.params]
        lo = np.array([np.log(a) if s == "log" else a for _, a, _, s in enc])
        hi = np.array([np.log(b) if s == "log" else b for _, _, b, s in enc])
        self._lo, self._span = lo, np.where(hi > lo, hi - lo, 1.0)
        self._index = {name: j for j, (name, *_) in enumerate(enc)}

    @property
    def id(self) -> str:
        return self.dataset.id

    def _unit(self, config: Configuration) -> dict[str, float]:
        u = (self.space.encode(config.values) - self._lo) / self._span
        return {name: float(u[j]) for name, j in self._index.items()}

    def final_loss(self, config: Configuration) -> float:
        return self.curve(config, 0)[-1]

    def curve(self, config: Configuration, s_max: int) -> list[float]:
        u = self._unit(config)
        rng = np.random.default_rng([self.seed, stream_key(self.dataset.id), stream_key(config.id)])
        eps, nu = rng.normal(), rng.uniform(-1, 1)
        z = rng.uniform(-1, 1, size=64)
        shape = (u["learning_rate"] ** 2 + 0.4 * (u["max_depth"] - 0.4) ** 2
                 + 0.3 * (1 - u["colsample_bytree"]) ** 2 + 0.2 * (u["lambda"] - 0.6) ** 2)
        final = self.base_loss + 0.25 * shape + 0.01 * eps
        gap = (0.03 + self.severity * 0.45 * (1 - u["learning_rate"]) ** 1.5) * (1 + 0.3 * nu)
        w = _decay(s_max)
        curve = final + gap * w * (1 + 0.3 * z[: s_max + 1])
        return np.minimum.accumulate(curve).tolist()

    def curve_table(self, configs: Sequence[Configuration], sched: ResourceSchedule,
                    header: Optional[dict] = None) -> LossCurveTable:
        head = {"metafeatures": self.metafeatures.tolist(), "source": "surrogate",
                "severity": self.severity, "schedule": sched.to_dict(), **(header or {})}
        table = LossCurveTable(self.id, sched.resources, header=head)
        for c in configs:
            table.add(c, dict(zip(sched.resources, self.curve(c, sched.s_max))))
        return table


def make_task_family(count: int, seed: int, severity: float = 2.0, prefix: str = "synth",
                     space: Optional[HyperparamSpace] = None) -> list[SurrogateTask]:
    space = space or xgboost_space()
    return [SurrogateTask(make_binary_dataset(f"{prefix}-{seed}-{k}", seed * 100_003 + k),
                          severity, seed, space)
            for k in range(count)]
