"""Search-space definition and uniform configuration sampling."""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError

KINDS = ("continuous", "integer")
SCALES = ("linear", "log")


@dataclass(frozen=True)
class ParamDef:
    name: str
    kind: str = "continuous"
    lower: float = 0.0
    upper: float = 1.0
    scale: str = "linear"

    def __post_init__(self) -> None:
        if not self.name or not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", self.name):
            raise ConfigError(f"param name {self.name!r} is not an identifier")
        if self.kind not in KINDS:
            raise ConfigError(f"param {self.name}: kind must be one of {KINDS}, got {self.kind!r}")
        if self.scale not in SCALES:
            raise ConfigError(f"param {self.name}: scale must be one of {SCALES}, got {self.scale!r}")
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ConfigError(f"param {self.name}: bounds must be finite")
        # lower == upper is accepted as a pinned parameter
        if self.lower > self.upper:
            raise ConfigError(f"param {self.name}: lower {self.lower} > upper {self.upper}")
        if self.scale == "log" and self.lower <= 0:
            raise ConfigError(f"param {self.name}: log scale needs lower > 0")
        if self.kind == "integer" and (self.lower != int(self.lower) or self.upper != int(self.upper)):
            raise ConfigError(f"param {self.name}: integer kind needs integer bounds")

    def from_unit(self, u: np.ndarray) -> np.ndarray:
        """Map uniform draws on [0, 1) to parameter values."""
        lo, hi = float(self.lower), float(self.upper)
        if self.kind == "integer":
            if self.scale == "log":
                v = np.floor(np.exp(np.log(lo) + u * (np.log(hi + 1) - np.log(lo))))
            else:
                v = np.floor(lo + u * (hi - lo + 1))
            return np.clip(v, lo, hi)
        if self.scale == "log":
            return np.clip(np.exp(np.log(lo) + u * (np.log(hi) - np.log(lo))), lo, hi)
        return lo + u * (hi - lo)

    def contains(self, value: Any) -> bool:
        if self.kind == "integer" and value != int(value):
            return False
        return self.lower <= value <= self.upper

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "lower": self.lower,
                "upper": self.upper, "scale": self.scale}


@dataclass(frozen=True)
class HyperparamSpace:
    params: tuple[ParamDef, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", tuple(self.params))
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate parameter names in {names}")
        if not names:
            raise ConfigError("search space has no parameters")

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    def __len__(self) -> int:
        return len(self.params)

    def validate(self, values: Mapping[str, Any]) -> None:
        if set(values) != set(self.names):
            raise ConfigError(f"configuration keys {sorted(values)} do not match space {self.names}")
        for p in self.params:
            if not p.contains(values[p.name]):
                raise ConfigError(f"value {values[p.name]!r} outside {p.name} bounds")

    def encode(self, values: Mapping[str, Any]) -> np.ndarray:
        """Configuration meta-features: values in space order, log-transformed on log scales."""
        out = np.empty(len(self.params))
        for j, p in enumerate(self.params):
            v = float(values[p.name])
            out[j] = math.log(v) if p.scale == "log" else v
        return out

    def to_dict(self) -> dict:
        return {"params": [p.to_dict() for p in self.params]}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "HyperparamSpace":
        try:
            params = [ParamDef(name=d["name"], kind=d.get("kind", "continuous"),
                               lower=float(d["lower"]), upper=float(d["upper"]),
                               scale=d.get("scale", "linear"))
                      for d in doc["params"]]
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed search space document: {exc}") from exc
        return cls(tuple(params))


def load_space(path: str | Path) -> HyperparamSpace:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"search space file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"search space file {path} is not valid JSON: {exc}") from exc
    return HyperparamSpace.from_dict(doc)


def xgboost_space() -> HyperparamSpace:
    """Default GBDT space; the number of boosting rounds is the resource, not a parameter."""
    return HyperparamSpace((
        ParamDef("lambda", "continuous", 1e-3, 1e2, "log"),
        ParamDef("colsample_bytree", "continuous", 0.3, 1.0, "linear"),
        ParamDef("max_depth", "integer", 2, 12, "linear"),
        ParamDef("learning_rate", "continuous", 1e-3, 0.5, "log"),
    ))


def config_id(seed: int, index: int) -> str:
    return f"{seed}:{index}"


def id_sort_key(cid: str) -> tuple:
    """Natural ordering for config ids so that "0:9" sorts before "0:10"."""
    parts = re.split(r"(\d+)", str(cid))
    return tuple((0, int(s), "") if s.isdigit() else (1, 0, s) for s in parts if s)


@dataclass(frozen=True)
class Configuration:
    id: str
    values: Mapping[str, Any] = field(hash=False)

    def __getitem__(self, name: str) -> Any:
        return self.values[name]

    def to_dict(self) -> dict:
        return {"config_id": self.id, "values": dict(self.values)}


def sample_configurations(space: HyperparamSpace, n: int, seed: int) -> list[Configuration]:
    """Draw ``n`` configurations independently and uniformly on each parameter's scale.

    Draws come from one stream filled row by row, so the first ``k`` of ``n``
    samples equal the ``k`` samples drawn with the same seed. Tuners rely on
    this to share candidates between methods within a repetition.
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    u = np.random.default_rng(seed).random((n, len(space)))
    cols = [p.from_unit(u[:, j]) for j, p in enumerate(space.params)]
    configs = []
    for i in range(n):
        values = {}
        for p, col in zip(space.params, cols):
            values[p.name] = int(col[i]) if p.kind == "integer" else float(col[i])
        configs.append(Configuration(config_id(seed, i), values))
    return configs


def configs_from_records(records: Iterable[Mapping[str, Any]]) -> list[Configuration]:
    return [Configuration(str(r["config_id"]), dict(r["values"])) for r in records]


def ensure_unique_ids(configs: Sequence[Configuration]) -> None:
    ids = [c.id for c in configs]
    if len(set(ids)) != len(ids):
        raise ConfigError("configuration ids are not unique")
